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
#include <limits>
#include <stdexcept>
#include <vector>

#include "rabitq/rng.hpp"
#include "rabitq/vec.hpp"

namespace rabitq {

// Lloyd iterations are fixed rather than convergence-tested so a build is a
// pure function of (data, k, seed).
inline constexpr std::uint32_t kKmeansIterations = 25;

struct KmeansResult {
    std::uint32_t k = 0;
    std::uint32_t dim = 0;
    std::vector<float> centroids;            // k rows of dim floats
    std::vector<std::uint32_t> assignments;  // one centroid index per point
};

namespace detail {

inline double
sq_dist_raw(const float* a, const float* b, std::size_t dim) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dim; ++i) {
        double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

// D^2-weighted seeding. Already-chosen points carry weight zero, so with
// distinct inputs no point is picked twice.
inline std::vector<float>
kmeans_pp_seed(const float* data, std::size_t n, std::size_t dim, std::uint32_t k,
               SplitMix64& rng) {
    std::vector<float> centroids(std::size_t{k} * dim);
    std::vector<double> d2(n, std::numeric_limits<double>::max());
    std::size_t first = static_cast<std::size_t>(rng.next_below(n));
    std::copy(data + first * dim, data + (first + 1) * dim, centroids.begin());
    for (std::uint32_t j = 1; j <= k; ++j) {
        const float* last = centroids.data() + std::size_t{j - 1} * dim;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            double d = sq_dist_raw(data + i * dim, last, dim);
            if (d < d2[i]) {
                d2[i] = d;
            }
            total += d2[i];
        }
        if (j == k) {
            break;
        }
        std::size_t pick = 0;
        if (total > 0.0) {
            double r = rng.next_double() * total;
            double acc = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        } else {
            // All remaining mass is zero (duplicate-only data); any point do.
            pick = static_cast<std::size_t>(rng.next_below(n));
        }
        std::copy(data + pick * dim, data + (pick + 1) * dim,
                  centroids.begin() + std::size_t{j} * dim);
    }
    return centroids;
}

}  // namespace detail

inline KmeansResult
kmeans(const float* data, std::size_t n, std::size_t dim, std::uint32_t k,
       std::uint64_t seed) {
    if (data == nullptr || n == 0 || dim == 0) {
        throw std::invalid_argument("kmeans: empty input");
    }
    if (k == 0 || k > n) {
        throw std::invalid_argument("kmeans: k must be in [1, n]");
    }
    SplitMix64 rng(seed);
    KmeansResult out;
    out.k = k;
    out.dim = static_cast<std::uint32_t>(dim);
    out.centroids = detail::kmeans_pp_seed(data, n, dim, k, rng);
    out.assignments.assign(n, 0);

    std::vector<double> centroid_sq(k);
    std::vector<double> sums(std::size_t{k} * dim);
    std::vector<std::size_t> counts(k);

    auto assign_all = [&] {
        for (std::uint32_t j = 0; j < k; ++j) {
            const float* c = out.centroids.data() + std::size_t{j} * dim;
            double acc = 0.0;
            for (std::size_t t = 0; t < dim; ++t) {
                acc += static_cast<double>(c[t]) * c[t];
            }
            centroid_sq[j] = acc;
        }
        for (std::size_t i = 0; i < n; ++i) {
            const float* x = data + i * dim;
            // argmin over j of |c_j|^2 - 2<x, c_j>; |x|^2 is constant in j.
            double best = std::numeric_limits<double>::max();
            std::uint32_t best_j = 0;
            for (std::uint32_t j = 0; j < k; ++j) {
                const float* c = out.centroids.data() + std::size_t{j} * dim;
                double ip = 0.0;
                for (std::size_t t = 0; t < dim; ++t) {
                    ip += static_cast<double>(x[t]) * c[t];
                }
                double score = centroid_sq[j] - 2.0 * ip;
                if (score < best) {
                    best = score;
                    best_j = j;
                }
            }
            out.assignments[i] = best_j;
        }
    };

    auto update_centroids = [&] {
        std::fill(sums.begin(), sums.end(), 0.0);
        std::fill(counts.begin(), counts.end(), std::size_t{0});
        for (std::size_t i = 0; i < n; ++i) {
            double* s = sums.data() + std::size_t{out.assignments[i]} * dim;
            const float* x = data + i * dim;
            for (std::size_t t = 0; t < dim; ++t) {
                s[t] += x[t];
            }
            ++counts[out.assignments[i]];
        }
        for (std::uint32_t j = 0; j < k; ++j) {
            if (counts[j] == 0) {
                continue;  // repaired below
            }
            float* c = out.centroids.data() + std::size_t{j} * dim;
            for (std::size_t t = 0; t < dim; ++t) {
                c[t] = static_cast<float>(sums[std::size_t{j} * dim + t] / counts[j]);
            }
        }
    };

    // An empty cluster adopts the farthest point of the currently largest
    // cluster; the next assignment pass rebalances around it.
    auto repair_empty = [&] {
        for (std::uint32_t e = 0; e < k; ++e) {
            if (counts[e] != 0) {
                continue;
            }
            std::uint32_t largest = 0;
            for (std::uint32_t j = 1; j < k; ++j) {
                if (counts[j] > counts[largest]) {
                    largest = j;
                }
            }
            if (counts[largest] <= 1) {
                continue;  // nothing left to split
            }
            const float* c = out.centroids.data() + std::size_t{largest} * dim;
            double far_d = -1.0;
            std::size_t far_i = 0;
            for (std::size_t i = 0; i < n; ++i) {
                if (out.assignments[i] != largest) {
                    continue;
                }
                double d = detail::sq_dist_raw(data + i * dim, c, dim);
                if (d > far_d) {
                    far_d = d;
                    far_i = i;
                }
            }
            std::copy(data + far_i * dim, data + (far_i + 1) * dim,
                      out.centroids.begin() + std::size_t{e} * dim);
            out.assignments[far_i] = e;
            --counts[largest];
            ++counts[e];
        }
    };

    assign_all();
    for (std::uint32_t it = 0; it < kKmeansIterations; ++it) {
        update_centroids();
        repair_empty();
        assign_all();
    }
    return out;
}

inline KmeansResult
kmeans(std::span<const float> data, std::size_t dim, std::uint32_t k,
       std::uint64_t seed) {
    if (dim == 0 || data.size() % dim != 0) {
        throw std::invalid_argument("kmeans: data size is not a multiple of dim");
    }
    return kmeans(data.data(), data.size() / dim, dim, k, seed);
}

}  // namespace rabitq
