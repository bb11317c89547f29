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

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <unordered_set>
#include <vector>

#include "rabitq/quantizer.hpp"

namespace rabitq {

struct ErrorStats {
    double avg_rel_error = 0.0;
    double max_rel_error = 0.0;
    std::size_t n = 0;
};

inline ErrorStats
relative_error_stats(std::span<const double> estimates, std::span<const double> truths) {
    if (estimates.size() != truths.size() || estimates.empty()) {
        throw std::invalid_argument("relative_error_stats: need matching nonempty inputs");
    }
    ErrorStats out;
    out.n = truths.size();
    double sum = 0.0;
    for (std::size_t i = 0; i < truths.size(); ++i) {
        if (!(truths[i] > 0.0)) {
            throw std::invalid_argument(
                "relative_error_stats: true values must be positive");
        }
        double rel = std::abs(estimates[i] - truths[i]) / truths[i];
        sum += rel;
        out.max_rel_error = std::max(out.max_rel_error, rel);
    }
    out.avg_rel_error = sum / static_cast<double>(out.n);
    return out;
}

// Fraction of the true top-K ids that the result lists, averaged over queries.
inline double
recall_at_k(const std::vector<std::vector<std::uint32_t>>& results,
            const std::vector<std::vector<std::uint32_t>>& groundtruth,
            std::uint32_t k) {
    if (results.empty() || results.size() != groundtruth.size() || k == 0) {
        throw std::invalid_argument("recall_at_k: need matching nonempty query sets");
    }
    double total = 0.0;
    for (std::size_t q = 0; q < results.size(); ++q) {
        if (groundtruth[q].size() < k) {
            throw std::invalid_argument("recall_at_k: ground truth has fewer than K ids");
        }
        std::unordered_set<std::uint32_t> got(results[q].begin(), results[q].end());
        std::size_t hits = 0;
        for (std::uint32_t i = 0; i < k; ++i) {
            hits += got.count(groundtruth[q][i]);
        }
        total += static_cast<double>(hits) / k;
    }
    return total / static_cast<double>(results.size());
}

// Mean over ranks of result distance over true distance at the same rank,
// averaged over queries. Both lists sorted ascending; a 0/0 rank counts as 1.
inline double
average_distance_ratio(const std::vector<std::vector<double>>& result_dists,
                       const std::vector<std::vector<double>>& groundtruth_dists,
                       std::uint32_t k) {
    if (result_dists.empty() || result_dists.size() != groundtruth_dists.size() ||
        k == 0) {
        throw std::invalid_argument(
            "average_distance_ratio: need matching nonempty query sets");
    }
    double total = 0.0;
    for (std::size_t q = 0; q < result_dists.size(); ++q) {
        if (result_dists[q].size() < k || groundtruth_dists[q].size() < k) {
            throw std::invalid_argument(
                "average_distance_ratio: need at least K distances per query");
        }
        double acc = 0.0;
        for (std::uint32_t i = 0; i < k; ++i) {
            double res = result_dists[q][i];
            double gt = groundtruth_dists[q][i];
            if (gt == 0.0 && res == 0.0) {
                acc += 1.0;
            } else if (gt <= 0.0) {
                throw std::invalid_argument(
                    "average_distance_ratio: true distances must be positive");
            } else {
                acc += res / gt;
            }
        }
        total += acc / k;
    }
    return total / static_cast<double>(result_dists.size());
}

// Per-bit-position entropy of a code population, averaged over positions.
class BitEntropyAccumulator {
  public:
    void
    add(std::span<const std::uint64_t> words, std::size_t count, std::uint32_t dim_pad) {
        if (dim_pad == 0 || dim_pad % 64 != 0 ||
            words.size() != count * (dim_pad / 64)) {
            throw dim_error("bit_entropy: words do not tile into codes");
        }
        if (ones_.empty()) {
            dim_pad_ = dim_pad;
            ones_.assign(dim_pad, 0);
        } else if (dim_pad != dim_pad_) {
            throw dim_error("bit_entropy: codes disagree on dimension");
        }
        const std::size_t wpc = dim_pad / 64;
        for (std::size_t i = 0; i < count; ++i) {
            for (std::uint32_t b = 0; b < dim_pad; ++b) {
                ones_[b] += (words[i * wpc + (b >> 6)] >> (b & 63)) & 1u;
            }
        }
        total_ += count;
    }

    void
    add(const ClusterCodes& codes) {
        add(codes.words, codes.count, codes.dim_pad);
    }

    double
    mean_entropy() const {
        if (total_ == 0) {
            throw std::invalid_argument("bit_entropy: no codes accumulated");
        }
        double acc = 0.0;
        for (auto c : ones_) {
            double p = static_cast<double>(c) / static_cast<double>(total_);
            double h = 0.0;
            if (p > 0.0 && p < 1.0) {
                h = -p * std::log2(p) - (1.0 - p) * std::log2(1.0 - p);
            }
            acc += h;
        }
        return acc / static_cast<double>(ones_.size());
    }

  private:
    std::uint32_t dim_pad_ = 0;
    std::vector<std::size_t> ones_;
    std::size_t total_ = 0;
};

inline double
bit_entropy(const ClusterCodes& codes) {
    BitEntropyAccumulator acc;
    acc.add(codes);
    return acc.mean_entropy();
}

struct RegressionFit {
    double slope = 0.0;
    double intercept = 0.0;
    std::size_t n = 0;
};

// Ordinary least squares of y on x.
inline RegressionFit
fit_line(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw std::invalid_argument("fit_line: need at least two paired points");
    }
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
    }
    if (sxx <= 0.0) {
        throw std::invalid_argument("fit_line: x values are all identical");
    }
    RegressionFit out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    out.n = x.size();
    return out;
}

}  // namespace rabitq
