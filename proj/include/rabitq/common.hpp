// Copyright 2026-present the rabitq-cpp project
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace rabitq {

// Error taxonomy. Bad call arguments raise std::invalid_argument (or
// dim_error when the problem is specifically mismatched dimensionality, so
// the CLI can map it to its own exit code). Anything wrong with bytes on
// disk raises io_error (can't open/read/write) or format_error (opened fine,
// contents are not what they claim to be).

class io_error : public std::runtime_error {
public:
    explicit io_error(const std::string& what) : std::runtime_error(what) {}
};

enum class format_fault {
    bad_magic,
    bad_version,
    bad_header,
    truncated,
    checksum_mismatch,
};

class format_error : public std::runtime_error {
public:
    format_error(format_fault fault, const std::string& what)
        : std::runtime_error(what), fault_(fault) {}

    format_fault
    fault() const noexcept {
        return fault_;
    }

private:
    format_fault fault_;
};

class dim_error : public std::invalid_argument {
public:
    explicit dim_error(const std::string& what) : std::invalid_argument(what) {}
};

// FNV-1a, 64-bit. Used as the trailing integrity checksum of serialized
// indexes; not cryptographic, just enough to catch truncation and bit rot.
class Fnv1a64 {
public:
    void
    update(const void* data, std::size_t len) noexcept {
        const auto* p = static_cast<const unsigned char*>(data);
        std::uint64_t h = hash_;
        for (std::size_t i = 0; i < len; ++i) {
            h ^= p[i];
            h *= 0x100000001B3ULL;
        }
        hash_ = h;
    }

    std::uint64_t
    digest() const noexcept {
        return hash_;
    }

private:
    std::uint64_t hash_ = 0xCBF29CE484222325ULL;
};

}  // namespace rabitq
