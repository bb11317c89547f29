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

#include <bit>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "common.hpp"
#include "rotator.hpp"

namespace rabitq {

// Residuals shorter than this count as sitting on the centroid; they carry no
// direction to quantize and are flagged degenerate instead.
constexpr double kDegenerateResidual = 1e-9;

// Unit-norm tolerance for quantizer inputs.
constexpr double kUnitNormTolerance = 1e-5;

// One sign bit per (rotated) dimension, packed LSB-first into 64-bit words.
// Bits beyond dim stay zero; popcounts and bitwise kernels rely on that.
class BitCode {
public:
    BitCode() = default;

    explicit BitCode(std::uint32_t dim)
        : dim_(dim), words_((dim + 63) / 64, 0) {
        if (dim == 0) {
            throw std::invalid_argument("BitCode: dimension must be positive");
        }
    }

    std::uint32_t
    dim() const noexcept {
        return dim_;
    }

    bool
    bit(std::uint32_t i) const noexcept {
        return (words_[i >> 6] >> (i & 63)) & 1u;
    }

    void
    set_bit(std::uint32_t i) noexcept {
        words_[i >> 6] |= std::uint64_t(1) << (i & 63);
    }

    std::uint32_t
    popcount() const noexcept {
        std::uint32_t n = 0;
        for (std::uint64_t w : words_) {
            n += static_cast<std::uint32_t>(std::popcount(w));
        }
        return n;
    }

    std::span<const std::uint64_t>
    words() const noexcept {
        return words_;
    }

    std::span<std::uint64_t>
    words() noexcept {
        return words_;
    }

private:
    std::uint32_t dim_ = 0;
    std::vector<std::uint64_t> words_;
};

// Everything the estimator needs about a quantized vector besides its code.
struct VectorMeta {
    float dist_to_centroid = 0.0f;  // |o_r - c|
    float ip_quantized = 1.0f;      // <reconstructed code, unit residual>
    std::uint32_t code_popcount = 0;
    bool degenerate = false;
};

struct Normalized {
    std::vector<float> unit;  // zero vector when degenerate
    float distance = 0.0f;
    bool degenerate = false;
};

namespace detail {

inline void
check_finite(std::span<const float> v, const char* what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!std::isfinite(v[i])) {
            throw std::invalid_argument(std::string(what) + ": non-finite value at index " +
                                        std::to_string(i));
        }
    }
}

struct SignCode {
    BitCode code;
    double l1 = 0.0;
};

// Sign pattern of w, one bit per coordinate. Zero (either sign of it) keeps
// the positive side, so the code is a total function of the input.
inline SignCode
sign_code(std::span<const double> w) {
    SignCode out;
    out.code = BitCode(static_cast<std::uint32_t>(w.size()));
    for (std::uint32_t i = 0; i < w.size(); ++i) {
        if (w[i] >= 0.0) {
            out.code.set_bit(i);
            out.l1 += w[i];
        } else {
            out.l1 -= w[i];
        }
    }
    return out;
}

}  // namespace detail

// (raw - centroid) scaled to unit length, plus the length itself. The unit
// residual is what gets quantized; the length is kept so distances can be
// reassembled later.
inline Normalized
normalize(std::span<const float> raw, std::span<const float> centroid) {
    if (raw.size() != centroid.size()) {
        throw dim_error("normalize: vector has dimension " + std::to_string(raw.size()) +
                        ", centroid has " + std::to_string(centroid.size()));
    }
    if (raw.empty()) {
        throw std::invalid_argument("normalize: empty input");
    }
    detail::check_finite(raw, "normalize");
    detail::check_finite(centroid, "normalize");
    Normalized out;
    out.unit.resize(raw.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        double d = static_cast<double>(raw[i]) - static_cast<double>(centroid[i]);
        out.unit[i] = static_cast<float>(d);
        acc += d * d;
    }
    double dist = std::sqrt(acc);
    out.distance = static_cast<float>(dist);
    if (dist < kDegenerateResidual) {
        out.degenerate = true;
        std::fill(out.unit.begin(), out.unit.end(), 0.0f);
        out.distance = 0.0f;
        return out;
    }
    for (auto& x : out.unit) {
        x = static_cast<float>(x / dist);
    }
    return out;
}

struct QuantizeResult {
    BitCode code;
    double ip_quantized = 0.0;  // <obar, o>, in [0, 1]
};

// Nearest codebook entry to the unit vector o, where the codebook is the set
// of 2^dim sign patterns scaled to unit norm and then rotated by P. Finding
// the nearest entry reduces to taking signs of P^-1 o coordinate by
// coordinate; a zero coordinate keeps the positive sign. The inner product
// between o and its reconstructed entry falls out of the same pass as the
// l1 norm of P^-1 o divided by sqrt(dim).
inline QuantizeResult
quantize(std::span<const float> unit, const Rotator& rot) {
    if (unit.size() != rot.dim()) {
        throw dim_error("quantize: vector has dimension " + std::to_string(unit.size()) +
                        ", rotator expects " + std::to_string(rot.dim()));
    }
    double n = norm(unit);
    if (std::abs(n - 1.0) > kUnitNormTolerance) {
        throw std::invalid_argument("quantize: input norm " + std::to_string(n) +
                                    " is not unit");
    }
    std::vector<double> w(rot.dim());
    rot.rotate_inverse(unit, w);
    auto sc = detail::sign_code(w);
    QuantizeResult out;
    out.code = std::move(sc.code);
    out.ip_quantized = sc.l1 / std::sqrt(static_cast<double>(rot.dim()));
    return out;
}

// The codebook entry a code stands for, before rotation: entries are
// (2 b - 1)/sqrt(dim) per coordinate.
inline std::vector<float>
reconstruct(const BitCode& code) {
    std::vector<float> out(code.dim());
    float scale = 1.0f / std::sqrt(static_cast<float>(code.dim()));
    for (std::uint32_t i = 0; i < code.dim(); ++i) {
        out[i] = code.bit(i) ? scale : -scale;
    }
    return out;
}

// Codes and metadata for one cluster's worth of vectors, stored row-major
// (words_per_code words per vector).
struct ClusterCodes {
    std::uint32_t dim_pad = 0;
    std::size_t count = 0;
    std::vector<std::uint64_t> words;
    std::vector<VectorMeta> metas;

    std::size_t
    words_per_code() const noexcept {
        return dim_pad / 64;
    }

    std::span<const std::uint64_t>
    code(std::size_t i) const noexcept {
        return {words.data() + i * words_per_code(), words_per_code()};
    }
};

// Quantizes n vectors (contiguous, n x dim row-major) against one shared
// centroid. Vectors that sit on the centroid are flagged degenerate and get
// an all-zero code that the estimator never consults. Errors from individual
// vectors are rethrown with the offending index attached.
inline ClusterCodes
quantize_dataset(const float* data, std::size_t n, std::size_t dim,
                 std::span<const float> centroid, const Rotator& rot) {
    if (dim == 0 || dim != centroid.size()) {
        throw dim_error("quantize_dataset: dimension mismatch");
    }
    if (padded_dim(dim) != rot.dim()) {
        throw dim_error("quantize_dataset: rotator dimension " + std::to_string(rot.dim()) +
                        " does not match padded dimension " + std::to_string(padded_dim(dim)));
    }
    ClusterCodes out;
    out.dim_pad = rot.dim();
    out.count = n;
    out.words.assign(n * (rot.dim() / 64), 0);
    out.metas.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            auto nr = normalize({data + i * dim, dim}, centroid);
            VectorMeta meta;
            meta.dist_to_centroid = nr.distance;
            meta.degenerate = nr.degenerate;
            if (nr.degenerate) {
                meta.ip_quantized = 1.0f;
                meta.code_popcount = 0;
            } else {
                auto q = quantize(pad(nr.unit).values, rot);
                meta.ip_quantized = static_cast<float>(q.ip_quantized);
                meta.code_popcount = q.code.popcount();
                auto src = q.code.words();
                std::copy(src.begin(), src.end(),
                          out.words.begin() + i * out.words_per_code());
            }
            out.metas[i] = meta;
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("quantize_dataset: vector " + std::to_string(i) + ": " +
                                        e.what());
        }
    }
    return out;
}

}  // namespace rabitq
