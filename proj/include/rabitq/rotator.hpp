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
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rng.hpp"
#include "vec.hpp"

namespace rabitq {

// Code dimensions are multiples of 64 so sign codes fill whole machine words.
inline std::size_t
padded_dim(std::size_t dim) {
    if (dim == 0) {
        throw std::invalid_argument("padded_dim: dimension must be positive");
    }
    return (dim + 63) / 64 * 64;
}

// A vector zero-extended from its original dimension to the next multiple of
// 64. Padding with zeros preserves norms and inner products, so everything
// downstream can work at the padded dimension while exact distances keep
// using the original floats.
struct PaddedVector {
    std::vector<float> values;
    std::uint32_t original_dim = 0;
};

inline PaddedVector
pad(std::span<const float> v) {
    PaddedVector out;
    out.original_dim = static_cast<std::uint32_t>(v.size());
    out.values.assign(v.begin(), v.end());
    out.values.resize(padded_dim(v.size()), 0.0f);
    return out;
}

// A uniformly random rotation of R^dim, drawn by orthonormalizing a square
// gaussian matrix with (modified) Gram-Schmidt, row by row. The matrix is
// held in 64-bit floats; its identity is just (dim, seed), which is all that
// serialization stores. Regenerating with the same pair reproduces the same
// matrix bit for bit because every draw comes from SplitMix64.
class Rotator {
public:
    Rotator(std::uint32_t dim, std::uint64_t seed) : dim_(dim), seed_(seed) {
        if (dim == 0) {
            throw std::invalid_argument("Rotator: dimension must be positive");
        }
        rows_.resize(static_cast<std::size_t>(dim) * dim);
        SplitMix64 rng(seed);
        for (std::uint32_t i = 0; i < dim; ++i) {
            double* row = &rows_[static_cast<std::size_t>(i) * dim];
            for (;;) {
                for (std::uint32_t j = 0; j < dim; ++j) {
                    row[j] = rng.next_gaussian();
                }
                for (std::uint32_t j = 0; j < i; ++j) {
                    const double* prev = &rows_[static_cast<std::size_t>(j) * dim];
                    double c = dot({row, dim}, {prev, dim});
                    for (std::uint32_t k = 0; k < dim; ++k) {
                        row[k] -= c * prev[k];
                    }
                }
                double n = std::sqrt(dot({row, dim}, {row, dim}));
                if (n >= kDegenerateRowNorm) {
                    for (std::uint32_t k = 0; k < dim; ++k) {
                        row[k] /= n;
                    }
                    break;
                }
                // A draw that collapsed under projection; take a fresh one.
            }
        }
    }

    std::uint32_t
    dim() const noexcept {
        return dim_;
    }

    std::uint64_t
    seed() const noexcept {
        return seed_;
    }

    // P v
    std::vector<float>
    rotate(std::span<const float> v) const {
        check_dim(v.size());
        std::vector<float> out(dim_);
        for (std::uint32_t i = 0; i < dim_; ++i) {
            const double* row = &rows_[static_cast<std::size_t>(i) * dim_];
            double acc = 0.0;
            for (std::uint32_t j = 0; j < dim_; ++j) {
                acc += row[j] * static_cast<double>(v[j]);
            }
            out[i] = static_cast<float>(acc);
        }
        return out;
    }

    // P^T v, which is P^-1 v since P is orthogonal. Accumulates row-wise so
    // the matrix is streamed in storage order.
    void
    rotate_inverse(std::span<const float> v, std::span<double> out) const {
        check_dim(v.size());
        if (out.size() != dim_) {
            throw std::invalid_argument("Rotator: output size mismatch");
        }
        for (std::uint32_t j = 0; j < dim_; ++j) {
            out[j] = 0.0;
        }
        for (std::uint32_t i = 0; i < dim_; ++i) {
            const double* row = &rows_[static_cast<std::size_t>(i) * dim_];
            double vi = v[i];
            if (vi == 0.0) {
                continue;
            }
            for (std::uint32_t j = 0; j < dim_; ++j) {
                out[j] += vi * row[j];
            }
        }
    }

    std::vector<float>
    rotate_inverse(std::span<const float> v) const {
        std::vector<double> tmp(dim_);
        rotate_inverse(v, tmp);
        return std::vector<float>(tmp.begin(), tmp.end());
    }

    // Row-major matrix, for tests and debugging.
    const std::vector<double>&
    matrix() const noexcept {
        return rows_;
    }

private:
    static constexpr double kDegenerateRowNorm = 1e-12;

    void
    check_dim(std::size_t n) const {
        if (n != dim_) {
            throw std::invalid_argument("Rotator: vector has dimension " + std::to_string(n) +
                                        ", rotator expects " + std::to_string(dim_));
        }
    }

    std::uint32_t dim_;
    std::uint64_t seed_;
    std::vector<double> rows_;
};

inline Rotator
sample_orthogonal(std::uint32_t dim, std::uint64_t seed) {
    return Rotator(dim, seed);
}

}  // namespace rabitq
