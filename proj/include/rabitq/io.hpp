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

#include <cstdint>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "rabitq/common.hpp"

namespace rabitq {

// fvecs/ivecs: per record a little-endian int32 dimension, then that many
// 4-byte values (float32 or int32). Every record must agree on the dimension.

template <typename T>
struct Dataset {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::vector<T> values;  // n x dim row-major

    std::span<const T>
    row(std::size_t i) const {
        return {values.data() + i * dim, dim};
    }
};

using FloatDataset = Dataset<float>;
using IntDataset = Dataset<std::int32_t>;

namespace detail {

template <typename T>
Dataset<T>
read_vecs(const std::string& path) {
    static_assert(sizeof(T) == 4);
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw io_error("cannot open for reading: " + path);
    }
    Dataset<T> out;
    std::uint64_t offset = 0;
    for (;;) {
        std::int32_t d = 0;
        in.read(reinterpret_cast<char*>(&d), sizeof(d));
        if (in.gcount() == 0 && in.eof()) {
            break;
        }
        if (in.gcount() != sizeof(d)) {
            throw format_error(format_fault::truncated,
                               path + ": record header cut short at byte " +
                                   std::to_string(offset));
        }
        if (d <= 0) {
            throw format_error(format_fault::bad_header,
                               path + ": nonpositive dimension " + std::to_string(d) +
                                   " at byte " + std::to_string(offset));
        }
        if (out.n == 0) {
            out.dim = static_cast<std::size_t>(d);
        } else if (static_cast<std::size_t>(d) != out.dim) {
            throw format_error(format_fault::bad_header,
                               path + ": dimension changed from " +
                                   std::to_string(out.dim) + " to " + std::to_string(d) +
                                   " at byte " + std::to_string(offset));
        }
        offset += sizeof(d);
        out.values.resize(out.values.size() + out.dim);
        char* dst = reinterpret_cast<char*>(out.values.data() + out.n * out.dim);
        in.read(dst, static_cast<std::streamsize>(out.dim * sizeof(T)));
        if (in.gcount() != static_cast<std::streamsize>(out.dim * sizeof(T))) {
            throw format_error(format_fault::truncated,
                               path + ": record payload cut short at byte " +
                                   std::to_string(offset));
        }
        offset += out.dim * sizeof(T);
        ++out.n;
    }
    return out;
}

template <typename T>
void
write_vecs(const std::string& path, const T* data, std::size_t n, std::size_t dim) {
    static_assert(sizeof(T) == 4);
    if (dim == 0 || dim > static_cast<std::size_t>(INT32_MAX)) {
        throw std::invalid_argument("write_vecs: dimension out of range");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw io_error("cannot open for writing: " + path);
    }
    const std::int32_t d = static_cast<std::int32_t>(dim);
    for (std::size_t i = 0; i < n; ++i) {
        out.write(reinterpret_cast<const char*>(&d), sizeof(d));
        out.write(reinterpret_cast<const char*>(data + i * dim),
                  static_cast<std::streamsize>(dim * sizeof(T)));
    }
    out.flush();
    if (!out) {
        throw io_error("write failed: " + path);
    }
}

}  // namespace detail

inline FloatDataset
read_fvecs(const std::string& path) {
    return detail::read_vecs<float>(path);
}

inline IntDataset
read_ivecs(const std::string& path) {
    return detail::read_vecs<std::int32_t>(path);
}

inline void
write_fvecs(const std::string& path, const float* data, std::size_t n, std::size_t dim) {
    detail::write_vecs(path, data, n, dim);
}

inline void
write_ivecs(const std::string& path, const std::int32_t* data, std::size_t n,
            std::size_t dim) {
    detail::write_vecs(path, data, n, dim);
}

}  // namespace rabitq
