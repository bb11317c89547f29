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

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "rabitq/common.hpp"
#include "rabitq/rng.hpp"
#include "rabitq/rotator.hpp"
#include "rabitq/stats.hpp"

namespace rabitq {

namespace detail {

// Writes one uniformly random unit vector at out[0..dim).
inline void
fill_unit_direction(float* out, std::size_t dim, SplitMix64& rng) {
    double n2 = 0.0;
    std::vector<double> g(dim);
    do {
        n2 = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            g[i] = rng.next_gaussian();
            n2 += g[i] * g[i];
        }
    } while (n2 == 0.0);
    double inv = 1.0 / std::sqrt(n2);
    for (std::size_t i = 0; i < dim; ++i) {
        out[i] = static_cast<float>(g[i] * inv);
    }
}

}  // namespace detail

// n points drawn uniformly from the unit sphere, row-major n x dim.
inline std::vector<float>
sphere_uniform(std::size_t n, std::size_t dim, std::uint64_t seed) {
    if (n == 0 || dim == 0) {
        throw std::invalid_argument("sphere_uniform: n and dim must be positive");
    }
    std::vector<float> out(n * dim);
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < n; ++i) {
        detail::fill_unit_direction(out.data() + i * dim, dim, rng);
    }
    return out;
}

struct BlobData {
    std::size_t n = 0;
    std::size_t dim = 0;
    std::size_t n_blobs = 0;
    std::vector<float> data;     // n x dim, blob b owns rows [b*n/k, (b+1)*n/k)
    std::vector<float> centers;  // n_blobs x dim
};

// Isotropic gaussian clusters around well-separated random centers. Blob
// membership is contiguous in row order so tests can reason about it.
inline BlobData
gaussian_blobs(std::size_t n, std::size_t dim, std::size_t n_blobs,
               double center_sigma, double blob_sigma, std::uint64_t seed) {
    if (n == 0 || dim == 0 || n_blobs == 0 || n_blobs > n) {
        throw std::invalid_argument("gaussian_blobs: need 1 <= n_blobs <= n");
    }
    BlobData out;
    out.n = n;
    out.dim = dim;
    out.n_blobs = n_blobs;
    out.centers.resize(n_blobs * dim);
    out.data.resize(n * dim);
    SplitMix64 rng(seed);
    for (std::size_t b = 0; b < n_blobs; ++b) {
        for (std::size_t d = 0; d < dim; ++d) {
            out.centers[b * dim + d] =
                static_cast<float>(center_sigma * rng.next_gaussian());
        }
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t b = i * n_blobs / n;
        const float* c = out.centers.data() + b * dim;
        float* row = out.data.data() + i * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            row[d] = c[d] + static_cast<float>(blob_sigma * rng.next_gaussian());
        }
    }
    return out;
}

struct PlantedData {
    std::size_t n = 0;            // n_queries * m_per_query
    std::size_t dim = 0;
    std::size_t n_queries = 0;
    std::size_t m_per_query = 0;
    double delta = 0.0;           // squared-distance gap between adjacent ranks
    std::vector<float> data;      // query q owns rows [q*m, (q+1)*m)
    std::vector<float> queries;   // n_queries x dim
};

// Neighborhood population with planted, exactly known distance structure.
//
// Each query sits at a random location far from every other neighborhood, and
// its m points are placed at radii r_j with r_j^2 = 1 + j * delta along
// independent uniform directions, so the true squared distances from the
// query are the exact arithmetic ladder 1, 1 + delta, 1 + 2*delta, ...
//
// delta is solved so that the ladder step near rank k_ref is beta standard
// deviations of the quantized estimator's error for this geometry: the error
// sd of an estimated squared distance is about 2 * d(o,q) * d(q,c) * sigma,
// sigma = sqrt(1 - t^2) / (t * sqrt(D - 1)) with t the expected cosine
// between a vector and its code. Smaller beta packs ranks tighter and makes
// retrieval strictly harder.
inline PlantedData
planted_neighborhoods(std::size_t n_queries, std::size_t m_per_query,
                      std::size_t dim, std::size_t k_ref, double beta,
                      std::uint64_t seed) {
    if (n_queries == 0 || m_per_query < 2 || dim == 0) {
        throw std::invalid_argument(
            "planted_neighborhoods: need queries and at least two points each");
    }
    if (k_ref < 1 || k_ref > m_per_query || beta <= 0.0) {
        throw std::invalid_argument(
            "planted_neighborhoods: need 1 <= k_ref <= m_per_query and beta > 0");
    }
    const double dim_pad = static_cast<double>(padded_dim(dim));
    const double t = gamma_expectation(static_cast<std::uint32_t>(padded_dim(dim)));
    const double sigma = std::sqrt(1.0 - t * t) / (t * std::sqrt(dim_pad - 1.0));
    const double m = static_cast<double>(m_per_query);

    // Fixed point for delta: the cluster centroid lands near the query, so the
    // query-to-centroid distance d_q itself shrinks with delta.
    double delta = 0.01;
    for (int it = 0; it < 64; ++it) {
        double mean_sq = 1.0 + delta * (m - 1.0) / 2.0;
        double d_q = std::sqrt(mean_sq / m);
        double s_ref = std::sqrt(1.0 + delta * (static_cast<double>(k_ref) - 1.0));
        delta = beta * 2.0 * s_ref * d_q * sigma;
    }

    PlantedData out;
    out.n = n_queries * m_per_query;
    out.dim = dim;
    out.n_queries = n_queries;
    out.m_per_query = m_per_query;
    out.delta = delta;
    out.queries.resize(n_queries * dim);
    out.data.resize(out.n * dim);

    const double center_sigma = 40.0;
    SplitMix64 rng(seed);
    std::vector<float> dir(dim);
    for (std::size_t q = 0; q < n_queries; ++q) {
        float* query = out.queries.data() + q * dim;
        for (std::size_t d = 0; d < dim; ++d) {
            query[d] = static_cast<float>(center_sigma * rng.next_gaussian());
        }
        for (std::size_t j = 0; j < m_per_query; ++j) {
            detail::fill_unit_direction(dir.data(), dim, rng);
            double r = std::sqrt(1.0 + delta * static_cast<double>(j));
            float* row = out.data.data() + (q * m_per_query + j) * dim;
            for (std::size_t d = 0; d < dim; ++d) {
                row[d] = query[d] + static_cast<float>(r * dir[d]);
            }
        }
    }
    return out;
}

}  // namespace rabitq
