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
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "quantizer.hpp"
#include "rng.hpp"
#include "rotator.hpp"
#include "vec.hpp"

namespace rabitq {

// Defaults for the two estimator knobs: the confidence multiplier of the
// error bound and the per-coordinate bit width of query quantization.
constexpr float kDefaultEpsilon0 = 1.9f;
constexpr std::uint32_t kDefaultBq = 4;

// ip_quantized at or below this is treated as carrying no information; the
// error bound degenerates to +inf and the vector is always re-ranked.
constexpr double kMinIpQuantized = 1e-6;

// A query quantized against one cluster: the unit residual
// q' = (P^-1 q_r - P^-1 c)/|q_r - c| rounded to B_q-bit levels, plus the bit
// planes of those levels so inner products against sign codes reduce to
// AND + popcount. Immutable once built; shared freely across scans.
struct QuantizedQuery {
    std::uint32_t dim_pad = 0;
    std::uint32_t bq = 0;
    float delta = 0.0f;
    float v_l = 0.0f;
    std::uint32_t sum_qu = 0;
    float dist_to_centroid = 0.0f;  // 0 means the query sits on the centroid
    std::vector<std::uint8_t> qu;
    // bq bit planes, each dim_pad/64 words; plane j holds bit j of every level.
    std::vector<std::uint64_t> planes;

    std::size_t
    words_per_plane() const noexcept {
        return (dim_pad + 63) / 64;
    }

    std::span<const std::uint64_t>
    plane(std::uint32_t j) const noexcept {
        return {planes.data() + j * words_per_plane(), words_per_plane()};
    }

    bool
    sentinel() const noexcept {
        return dist_to_centroid == 0.0f;
    }
};

struct ScalarQuantized {
    std::vector<std::uint8_t> qu;
    float delta = 0.0f;
    float v_l = 0.0f;
};

// Uniform scalar quantization with randomized rounding: level boundaries are
// crossed with probability equal to the fractional position, which makes the
// reconstruction delta*qu[i] + v_l unbiased for q_rot[i] coordinate by
// coordinate. A flat input (delta = 0) maps to level 0 everywhere and
// reconstructs exactly.
inline ScalarQuantized
randomized_scalar_quantize(std::span<const float> q_rot, std::uint32_t bq, SplitMix64& rng) {
    if (bq < 1 || bq > 8) {
        throw std::invalid_argument("randomized_scalar_quantize: B_q " + std::to_string(bq) +
                                    " out of range [1, 8]");
    }
    if (q_rot.empty()) {
        throw std::invalid_argument("randomized_scalar_quantize: empty input");
    }
    detail::check_finite(q_rot, "randomized_scalar_quantize");
    float lo = q_rot[0], hi = q_rot[0];
    for (float v : q_rot) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const std::uint32_t levels = (1u << bq) - 1;
    ScalarQuantized out;
    out.v_l = lo;
    out.delta = (hi - lo) / static_cast<float>(levels);
    out.qu.resize(q_rot.size());
    if (out.delta == 0.0f) {
        return out;  // qu already zero-filled
    }
    for (std::size_t i = 0; i < q_rot.size(); ++i) {
        double pos = (static_cast<double>(q_rot[i]) - out.v_l) / out.delta + rng.next_double();
        auto level = static_cast<std::uint32_t>(pos);
        // pos < 2^bq by construction; the min is belt and braces against the
        // division landing a hair above (2^bq - 1) in float arithmetic.
        out.qu[i] = static_cast<std::uint8_t>(std::min(level, levels));
    }
    return out;
}

namespace detail {

inline std::vector<std::uint64_t>
build_bit_planes(std::span<const std::uint8_t> qu, std::uint32_t bq) {
    const std::size_t words = (qu.size() + 63) / 64;
    std::vector<std::uint64_t> planes(bq * words, 0);
    for (std::size_t i = 0; i < qu.size(); ++i) {
        std::uint8_t level = qu[i];
        for (std::uint32_t j = 0; j < bq; ++j) {
            if ((level >> j) & 1) {
                planes[j * words + (i >> 6)] |= std::uint64_t(1) << (i & 63);
            }
        }
    }
    return planes;
}

}  // namespace detail

// Builds the per-cluster query state. The rotation is applied once per query
// by the caller; this subtracts the cluster's rotated centroid and rescales,
// which equals rotating the residual directly because rotation and padding
// are linear. A query sitting on the centroid yields a sentinel (distance 0)
// whose estimates are exact without touching any code.
inline QuantizedQuery
prepare_query(std::span<const float> q_raw, std::span<const float> centroid,
              std::span<const float> rotated_centroid, std::span<const float> rotated_query,
              std::uint32_t bq, SplitMix64& rng) {
    if (q_raw.size() != centroid.size()) {
        throw dim_error("prepare_query: query has dimension " + std::to_string(q_raw.size()) +
                        ", centroid has " + std::to_string(centroid.size()));
    }
    if (rotated_query.size() != rotated_centroid.size() ||
        rotated_query.size() != padded_dim(q_raw.size())) {
        throw dim_error("prepare_query: rotated inputs do not match the padded dimension");
    }
    detail::check_finite(q_raw, "prepare_query");
    QuantizedQuery qq;
    qq.dim_pad = static_cast<std::uint32_t>(rotated_query.size());
    qq.bq = bq;
    double dist = std::sqrt(l2_sq(q_raw, centroid));
    if (dist < kDegenerateResidual) {
        qq.dist_to_centroid = 0.0f;
        qq.qu.assign(qq.dim_pad, 0);
        qq.planes.assign(static_cast<std::size_t>(bq) * qq.words_per_plane(), 0);
        return qq;
    }
    qq.dist_to_centroid = static_cast<float>(dist);
    std::vector<float> q_prime(qq.dim_pad);
    for (std::uint32_t i = 0; i < qq.dim_pad; ++i) {
        q_prime[i] = static_cast<float>(
            (static_cast<double>(rotated_query[i]) - rotated_centroid[i]) / dist);
    }
    auto sq = randomized_scalar_quantize(q_prime, bq, rng);
    qq.delta = sq.delta;
    qq.v_l = sq.v_l;
    qq.qu = std::move(sq.qu);
    std::uint32_t sum = 0;
    for (std::uint8_t u : qq.qu) {
        sum += u;
    }
    qq.sum_qu = sum;
    qq.planes = detail::build_bit_planes(qq.qu, bq);
    return qq;
}

// <xbar, qbar> recovered from the integer plane sums: with xbar the code's
// +-1/sqrt(D) entries and qbar = delta*qu + v_l, expanding the product gives
//   (2 delta/sqrt(D)) * sum_j 2^j popcount(code AND plane_j)
// + (2 v_l  /sqrt(D)) * popcount(code)
// - (  delta/sqrt(D)) * sum(qu)  -  sqrt(D) * v_l.
inline double
ip_from_raw(std::uint32_t raw, std::uint32_t code_popcount, const QuantizedQuery& qq) {
    double rd = std::sqrt(static_cast<double>(qq.dim_pad));
    double delta = qq.delta, vl = qq.v_l;
    return (2.0 * delta / rd) * raw + (2.0 * vl / rd) * code_popcount -
           (delta / rd) * qq.sum_qu - rd * vl;
}

struct IpResult {
    std::uint32_t raw = 0;  // sum_j 2^j popcount(code AND plane_j), exact
    double ip = 0.0;        // <xbar, qbar>
};

inline IpResult
ip_code_query(std::span<const std::uint64_t> code, const QuantizedQuery& qq) {
    if (code.size() != qq.words_per_plane()) {
        throw dim_error("ip_code_query: code has " + std::to_string(code.size() * 64) +
                        " bits, query expects " + std::to_string(qq.dim_pad));
    }
    IpResult out;
    std::uint32_t pop = 0;
    for (std::size_t w = 0; w < code.size(); ++w) {
        pop += static_cast<std::uint32_t>(std::popcount(code[w]));
    }
    for (std::uint32_t j = 0; j < qq.bq; ++j) {
        auto plane = qq.plane(j);
        std::uint32_t cnt = 0;
        for (std::size_t w = 0; w < code.size(); ++w) {
            cnt += static_cast<std::uint32_t>(std::popcount(code[w] & plane[w]));
        }
        out.raw += cnt << j;
    }
    out.ip = ip_from_raw(out.raw, pop, qq);
    return out;
}

// Half-width of the confidence interval around est_ip. Shrinks like
// 1/sqrt(D-1) and vanishes when the code reconstructs its vector exactly.
// +inf comes back in two cases: an explicitly infinite epsilon0 (the
// "re-rank everything" sentinel) and an ip_quantized too small to divide by.
inline double
error_half_width(double ip_quantized, std::uint32_t dim_pad, double eps0) {
    if (dim_pad < 2) {
        throw std::invalid_argument("error_half_width: dimension must be at least 2");
    }
    if (eps0 < 0.0 || std::isnan(eps0)) {
        throw std::invalid_argument("error_half_width: epsilon0 must be nonnegative");
    }
    if (std::isinf(eps0)) {
        return std::numeric_limits<double>::infinity();
    }
    if (ip_quantized <= kMinIpQuantized) {
        return std::numeric_limits<double>::infinity();
    }
    double t = std::min(ip_quantized, 1.0);
    double coef = std::sqrt(std::max(0.0, 1.0 - t * t)) / t;
    return coef * eps0 / std::sqrt(static_cast<double>(dim_pad) - 1.0);
}

struct DistanceEstimate {
    double est_sq_dist = 0.0;
    double lower_bound_sq_dist = 0.0;
    double est_ip = 0.0;  // estimate of <o, q> between the unit residuals
};

// Assembles the squared-distance estimate from an already-computed raw plane
// sum (the batch kernel produces those 32 at a time). The two degenerate
// cases are exact: a vector on the centroid is at distance |q_r - c| from
// the query, and a sentinel query is at distance |o_r - c| from everything.
inline DistanceEstimate
estimate_from_raw(const VectorMeta& meta, const QuantizedQuery& qq, std::uint32_t raw,
                  double eps0) {
    DistanceEstimate out;
    double dq = qq.dist_to_centroid;
    if (meta.degenerate) {
        out.est_sq_dist = out.lower_bound_sq_dist = dq * dq;
        return out;
    }
    double dv = meta.dist_to_centroid;
    if (qq.sentinel()) {
        out.est_sq_dist = out.lower_bound_sq_dist = dv * dv;
        return out;
    }
    double ipq = meta.ip_quantized;
    if (ipq > kMinIpQuantized) {
        out.est_ip = ip_from_raw(raw, meta.code_popcount, qq) / ipq;
    }
    double cross = 2.0 * dv * dq;
    // Clamping at zero keeps the estimate above the (also clamped) lower
    // bound; a negative squared distance carries no more information anyway.
    out.est_sq_dist = std::max(0.0, dv * dv + dq * dq - cross * out.est_ip);
    double half = error_half_width(ipq, qq.dim_pad, eps0);
    if (std::isinf(half)) {
        out.lower_bound_sq_dist = 0.0;
    } else {
        out.lower_bound_sq_dist =
            std::max(0.0, dv * dv + dq * dq - cross * (out.est_ip + half));
    }
    return out;
}

inline DistanceEstimate
estimate_distance(const VectorMeta& meta, const QuantizedQuery& qq,
                  std::span<const std::uint64_t> code, double eps0) {
    std::uint32_t raw = 0;
    if (!meta.degenerate && !qq.sentinel()) {
        raw = ip_code_query(code, qq).raw;
    }
    return estimate_from_raw(meta, qq, raw, eps0);
}

}  // namespace rabitq
