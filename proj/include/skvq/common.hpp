// Copyright (C) 2026 the skvq authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace skvq {

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

[[noreturn]] inline void fail(const std::string& msg) { throw Error(msg); }

} // namespace skvq

#define SKVQ_REQUIRE(cond, msg)        \
    do {                               \
        if (!(cond)) ::skvq::fail(msg); \
    } while (0)
