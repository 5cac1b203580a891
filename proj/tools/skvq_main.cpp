// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#include "skvq/cli.hpp"

int main(int argc, char** argv) { return skvq::run_cli(argc, argv); }
