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
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "rabitq/estimator.hpp"
#include "rabitq/ivf.hpp"
#include "rabitq/metrics.hpp"
#include "rabitq/quantizer.hpp"
#include "rabitq/rng.hpp"
#include "rabitq/rotator.hpp"
#include "rabitq/stats.hpp"
#include "rabitq/synthetic.hpp"
#include "rabitq/vec.hpp"

namespace rabitq {

// Which inner-product estimate feeds the regression study. The biased fixture
// skips the division by <obar, o> on purpose: it demonstrates the systematic
// shrinkage (slope near 0.8 instead of 1) that the correction removes. The
// oracle short-circuits estimation entirely and regresses truth on truth.
enum class EstimatorKind {
    unbiased,
    biased_fixture,
    oracle,
};

struct UnbiasednessResult {
    RegressionFit fit;
    double max_truth = 0.0;  // normalizer applied to both axes
};

namespace detail {

// <xbar, v> for a sign code against an arbitrary real vector: sum of v over
// set bits minus sum over clear bits, scaled by 1/sqrt(dim).
inline double
signed_sum(std::span<const std::uint64_t> words, std::span<const double> v) {
    double picked = 0.0, total = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        total += v[i];
        if ((words[i >> 6] >> (i & 63)) & 1u) {
            picked += v[i];
        }
    }
    return (2.0 * picked - total) / std::sqrt(static_cast<double>(v.size()));
}

}  // namespace detail

// Regresses estimated squared distances on true ones over fresh random
// rotations, vectors and queries on the unit sphere around a zero centroid.
// Both axes are scaled by the largest true distance, so an unbiased estimator
// reads as slope 1, intercept 0 regardless of dimension.
inline UnbiasednessResult
verify_unbiasedness(std::size_t n_pairs, std::size_t dim, std::uint64_t seed,
                    EstimatorKind kind, std::uint32_t bq = kDefaultBq) {
    if (n_pairs < 2 || dim == 0) {
        throw std::invalid_argument("verify_unbiasedness: need dim > 0 and >= 2 pairs");
    }
    // Pairs come in batches sharing one rotation: quantizing the batch costs
    // one matrix apply per vector, and distinct batches keep the rotation
    // itself randomized across the study.
    constexpr std::size_t kVecsPerBatch = 250;
    constexpr std::size_t kQueriesPerBatch = 125;
    const auto dim_pad = static_cast<std::uint32_t>(padded_dim(dim));
    const std::vector<float> centroid(dim_pad, 0.0f);

    std::vector<double> truths, ests;
    truths.reserve(n_pairs);
    ests.reserve(n_pairs);
    for (std::size_t batch = 0; truths.size() < n_pairs; ++batch) {
        SplitMix64 ctl = SplitMix64::stream(seed, batch);
        Rotator rot(dim_pad, ctl.next_u64());
        auto data = sphere_uniform(kVecsPerBatch, dim, ctl.next_u64());
        auto queries = sphere_uniform(kQueriesPerBatch, dim, ctl.next_u64());
        SplitMix64 prep(ctl.next_u64());
        auto codes = quantize_dataset(data.data(), kVecsPerBatch, dim,
                                      {centroid.data(), dim}, rot);
        for (std::size_t qi = 0; qi < kQueriesPerBatch && truths.size() < n_pairs;
             ++qi) {
            auto q_pad = pad({queries.data() + qi * dim, dim});
            auto rq = rot.rotate_inverse(q_pad.values);
            auto qq = prepare_query(q_pad.values, centroid, centroid, rq, bq, prep);
            for (std::size_t vi = 0; vi < kVecsPerBatch && truths.size() < n_pairs;
                 ++vi) {
                double truth =
                    l2_sq({data.data() + vi * dim, dim}, {queries.data() + qi * dim, dim});
                const auto& meta = codes.metas[vi];
                double est = 0.0;
                switch (kind) {
                case EstimatorKind::unbiased:
                    est = estimate_from_raw(meta, qq, ip_code_query(codes.code(vi), qq).raw,
                                            kDefaultEpsilon0)
                              .est_sq_dist;
                    break;
                case EstimatorKind::biased_fixture: {
                    double ip = ip_code_query(codes.code(vi), qq).ip;
                    double dv = meta.dist_to_centroid, dq = qq.dist_to_centroid;
                    est = dv * dv + dq * dq - 2.0 * dv * dq * ip;
                    break;
                }
                case EstimatorKind::oracle:
                    est = truth;
                    break;
                }
                truths.push_back(truth);
                ests.push_back(est);
            }
        }
    }

    UnbiasednessResult out;
    out.max_truth = *std::max_element(truths.begin(), truths.end());
    if (out.max_truth <= 0.0) {
        throw std::invalid_argument("verify_unbiasedness: degenerate sample");
    }
    for (std::size_t i = 0; i < truths.size(); ++i) {
        truths[i] /= out.max_truth;
        ests[i] /= out.max_truth;
    }
    out.fit = fit_line(truths, ests);
    return out;
}

struct IpErrorStudy {
    double mean_abs_error = 0.0;  // mean |est_ip - <o,q>| over unit-sphere pairs
    std::size_t n = 0;
};

// Measures the inner-product estimator's raw error magnitude; halving it when
// the dimension quadruples is the 1/sqrt(D) contraction the bound relies on.
inline IpErrorStudy
mean_ip_error(std::size_t n_pairs, std::size_t dim, std::uint64_t seed,
              std::uint32_t bq = kDefaultBq) {
    if (n_pairs == 0 || dim == 0) {
        throw std::invalid_argument("mean_ip_error: need dim > 0 and pairs > 0");
    }
    constexpr std::size_t kVecsPerBatch = 300;
    constexpr std::size_t kQueriesPerBatch = 30;
    const auto dim_pad = static_cast<std::uint32_t>(padded_dim(dim));
    const std::vector<float> centroid(dim_pad, 0.0f);

    double acc = 0.0;
    std::size_t done = 0;
    for (std::size_t batch = 0; done < n_pairs; ++batch) {
        SplitMix64 ctl = SplitMix64::stream(seed, batch);
        Rotator rot(dim_pad, ctl.next_u64());
        auto data = sphere_uniform(kVecsPerBatch, dim, ctl.next_u64());
        auto queries = sphere_uniform(kQueriesPerBatch, dim, ctl.next_u64());
        SplitMix64 prep(ctl.next_u64());
        auto codes = quantize_dataset(data.data(), kVecsPerBatch, dim,
                                      {centroid.data(), dim}, rot);
        for (std::size_t qi = 0; qi < kQueriesPerBatch && done < n_pairs; ++qi) {
            auto q_pad = pad({queries.data() + qi * dim, dim});
            auto rq = rot.rotate_inverse(q_pad.values);
            auto qq = prepare_query(q_pad.values, centroid, centroid, rq, bq, prep);
            for (std::size_t vi = 0; vi < kVecsPerBatch && done < n_pairs; ++vi) {
                auto est = estimate_from_raw(codes.metas[vi], qq,
                                             ip_code_query(codes.code(vi), qq).raw,
                                             kDefaultEpsilon0);
                double truth = dot({data.data() + vi * dim, dim},
                                   {queries.data() + qi * dim, dim});
                acc += std::abs(est.est_ip - truth);
                ++done;
            }
        }
    }
    return {acc / static_cast<double>(done), done};
}

struct ConcentrationReport {
    std::size_t n = 0;
    double mean_ip = 0.0;        // sample mean of <obar, o>
    double std_ip = 0.0;
    double analytic_mean = 0.0;  // gamma_expectation at the padded dimension
    double mean_e1 = 0.0;        // sample mean of <obar, e1>
    double ks = 0.0;             // normalized <obar, e1> against the sphere law
    double ks_critical = 0.0;    // 1% level for this sample size
};

// Fixes one (o, q) pair and resamples the rotation n times. Checks the two
// distributional claims behind the error bound: <obar, o> concentrates at the
// analytic expectation, and <obar, e1> / sqrt(1 - <obar, o>^2) along the
// in-plane direction e1 orthogonal to o follows the one-coordinate sphere
// distribution in dimension dim_pad - 1.
inline ConcentrationReport
verify_concentration(std::span<const float> o, std::span<const float> q,
                     std::size_t n_samples, std::uint64_t seed) {
    if (o.size() != q.size() || o.empty()) {
        throw std::invalid_argument("verify_concentration: o and q must match");
    }
    if (n_samples < 2) {
        throw std::invalid_argument("verify_concentration: need at least 2 samples");
    }
    auto o_pad = pad(o);
    auto q_pad = pad(q);
    const auto dim_pad = static_cast<std::uint32_t>(o_pad.values.size());
    double on = norm(o_pad.values);
    if (on <= 0.0) {
        throw std::invalid_argument("verify_concentration: o is zero");
    }
    std::vector<float> ov(dim_pad), e1(dim_pad);
    for (std::uint32_t i = 0; i < dim_pad; ++i) {
        ov[i] = static_cast<float>(o_pad.values[i] / on);
    }
    double proj = dot({q_pad.values.data(), dim_pad}, {ov.data(), dim_pad});
    double rn2 = 0.0;
    for (std::uint32_t i = 0; i < dim_pad; ++i) {
        double r = q_pad.values[i] - proj * ov[i];
        e1[i] = static_cast<float>(r);
        rn2 += r * r;
    }
    double rn = std::sqrt(rn2);
    if (rn < 1e-9 * norm(q_pad.values) || rn == 0.0) {
        throw std::invalid_argument("verify_concentration: o and q are collinear");
    }
    for (auto& x : e1) {
        x = static_cast<float>(x / rn);
    }

    std::vector<double> ts(n_samples), x1s(n_samples), ys;
    ys.reserve(n_samples);
    std::vector<double> wo(dim_pad), we(dim_pad);
    for (std::size_t r = 0; r < n_samples; ++r) {
        Rotator rot(dim_pad, SplitMix64::stream(seed, r).next_u64());
        rot.rotate_inverse(ov, wo);
        rot.rotate_inverse(e1, we);
        double l1 = 0.0, x1 = 0.0;
        for (std::uint32_t i = 0; i < dim_pad; ++i) {
            if (wo[i] >= 0.0) {
                l1 += wo[i];
                x1 += we[i];
            } else {
                l1 -= wo[i];
                x1 -= we[i];
            }
        }
        double rd = std::sqrt(static_cast<double>(dim_pad));
        ts[r] = l1 / rd;
        x1s[r] = x1 / rd;
        double denom = 1.0 - ts[r] * ts[r];
        if (denom > 0.0) {
            ys.push_back(x1s[r] / std::sqrt(denom));
        }
    }

    ConcentrationReport rep;
    rep.n = n_samples;
    rep.analytic_mean = gamma_expectation(dim_pad);
    rep.mean_ip = std::accumulate(ts.begin(), ts.end(), 0.0) / n_samples;
    double var = 0.0;
    for (double t : ts) {
        var += (t - rep.mean_ip) * (t - rep.mean_ip);
    }
    rep.std_ip = std::sqrt(var / (n_samples - 1));
    rep.mean_e1 = std::accumulate(x1s.begin(), x1s.end(), 0.0) / n_samples;
    rep.ks = ks_statistic_coordinate(ys, dim_pad - 1);
    rep.ks_critical = ks_critical_1pct(ys.size());
    return rep;
}

// Convenience form that draws the fixed pair itself.
inline ConcentrationReport
verify_concentration(std::size_t dim, std::size_t n_samples, std::uint64_t seed) {
    if (dim == 0) {
        throw std::invalid_argument("verify_concentration: dimension must be positive");
    }
    auto pair = sphere_uniform(2, dim, SplitMix64::stream(seed, 0x706169).next_u64());
    return verify_concentration({pair.data(), dim}, {pair.data() + dim, dim},
                                n_samples, seed);
}

struct SweepPoint {
    double epsilon0 = 0.0;
    double recall = 0.0;       // recall@K against exact top-K over the whole set
    double nn_rate = 0.0;      // fraction of queries whose true NN is returned
    double avg_reranks = 0.0;  // exact distance computations per query
};

struct EpsilonSweepResult {
    std::uint32_t k = 0;
    std::uint32_t n_probe = 0;
    std::vector<SweepPoint> points;
};

// Exact top-K ids (and optionally distances) per query by brute force.
inline std::vector<std::vector<std::uint32_t>>
brute_force_topk(const float* data, std::size_t n, std::size_t dim,
                 const float* queries, std::size_t nq, std::uint32_t k,
                 std::vector<std::vector<double>>* dists_out = nullptr) {
    if (n == 0 || dim == 0 || nq == 0 || k == 0 || k > n) {
        throw std::invalid_argument("brute_force_topk: need 1 <= k <= n and data");
    }
    std::vector<std::vector<std::uint32_t>> out(nq);
    if (dists_out) {
        dists_out->assign(nq, {});
    }
    std::vector<std::pair<double, std::uint32_t>> cand(n);
    for (std::size_t qi = 0; qi < nq; ++qi) {
        std::span<const float> q{queries + qi * dim, dim};
        for (std::size_t i = 0; i < n; ++i) {
            cand[i] = {l2_sq({data + i * dim, dim}, q), static_cast<std::uint32_t>(i)};
        }
        std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
        out[qi].resize(k);
        for (std::uint32_t i = 0; i < k; ++i) {
            out[qi][i] = cand[i].second;
        }
        if (dists_out) {
            (*dists_out)[qi].resize(k);
            for (std::uint32_t i = 0; i < k; ++i) {
                (*dists_out)[qi][i] = cand[i].first;
            }
        }
    }
    return out;
}

// Builds one index and sweeps the error-bound multiplier over a grid, holding
// everything else fixed. Query-side randomization reuses the same stream per
// query at every grid point, so recall differences come from the bound alone.
inline EpsilonSweepResult
sweep_epsilon0(const float* data, std::size_t n, std::size_t dim,
               const float* queries, std::size_t nq, std::uint32_t n_clusters,
               std::uint32_t n_probe, std::uint32_t k, std::span<const double> grid,
               std::uint64_t seed) {
    if (grid.empty()) {
        throw std::invalid_argument("sweep_epsilon0: empty grid");
    }
    auto index = build_index(data, n, dim, n_clusters, seed);
    auto gt = brute_force_topk(data, n, dim, queries, nq, k);

    EpsilonSweepResult out;
    out.k = k;
    out.n_probe = n_probe;
    for (double eps : grid) {
        std::vector<std::vector<std::uint32_t>> results(nq);
        double nn_hits = 0.0, reranks = 0.0;
        for (std::size_t qi = 0; qi < nq; ++qi) {
            SplitMix64 rng = SplitMix64::stream(seed ^ 0x9E3779B9UL, qi);
            auto res = index.search({queries + qi * dim, dim}, n_probe, k, rng, eps);
            results[qi] = std::move(res.ids);
            reranks += static_cast<double>(res.stats.exact_reranks);
            nn_hits += std::find(results[qi].begin(), results[qi].end(), gt[qi][0]) !=
                               results[qi].end()
                           ? 1.0
                           : 0.0;
        }
        SweepPoint p;
        p.epsilon0 = eps;
        p.recall = recall_at_k(results, gt, k);
        p.nn_rate = nn_hits / static_cast<double>(nq);
        p.avg_reranks = reranks / static_cast<double>(nq);
        out.points.push_back(p);
    }
    return out;
}

struct BqSweepPoint {
    std::uint32_t bq = 0;
    double avg_rel_error = 0.0;
    double max_rel_error = 0.0;
};

struct BqSweepResult {
    std::vector<BqSweepPoint> points;   // bq = 1..8 in order
    double oracle_avg_rel_error = 0.0;  // unquantized query, same pairs
};

// Average relative error of squared-distance estimates as a function of the
// query's bit width, on a shared set of (vector, query) pairs quantized
// against the dataset mean. The oracle row keeps the query in floats, so it
// isolates the part of the error budget that query quantization adds.
inline BqSweepResult
sweep_bq(const float* data, std::size_t n, std::size_t dim, const float* queries,
         std::size_t nq, std::size_t n_pairs, std::uint64_t seed) {
    if (n == 0 || dim == 0 || nq == 0 || n_pairs == 0) {
        throw std::invalid_argument("sweep_bq: need data, queries and pairs");
    }
    const auto dim_pad = static_cast<std::uint32_t>(padded_dim(dim));
    std::vector<float> centroid(dim, 0.0f);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t d = 0; d < dim; ++d) {
            centroid[d] += data[i * dim + d];
        }
    }
    for (auto& c : centroid) {
        c /= static_cast<float>(n);
    }

    SplitMix64 ctl = SplitMix64::stream(seed, 0);
    Rotator rot(dim_pad, ctl.next_u64());
    auto codes = quantize_dataset(data, n, dim, centroid, rot);
    auto rc = rot.rotate_inverse(pad(centroid).values);

    // Pairs with exactly zero true distance carry no relative error; redraw.
    std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
    std::vector<double> truths;
    pairs.reserve(n_pairs);
    while (pairs.size() < n_pairs) {
        auto vi = static_cast<std::uint32_t>(ctl.next_below(n));
        auto qi = static_cast<std::uint32_t>(ctl.next_below(nq));
        double truth = l2_sq({data + vi * dim, dim}, {queries + qi * dim, dim});
        if (truth > 0.0 && !codes.metas[vi].degenerate) {
            pairs.emplace_back(vi, qi);
            truths.push_back(truth);
        }
    }

    // Group per query so each rotation and oracle residual is built once.
    std::vector<std::vector<std::size_t>> by_query(nq);
    for (std::size_t p = 0; p < pairs.size(); ++p) {
        by_query[pairs[p].second].push_back(p);
    }

    std::vector<std::vector<double>> ests(8, std::vector<double>(n_pairs));
    std::vector<double> oracle_rel(n_pairs);
    for (std::uint32_t qi = 0; qi < nq; ++qi) {
        if (by_query[qi].empty()) {
            continue;
        }
        auto q_pad = pad({queries + qi * dim, dim});
        auto rq = rot.rotate_inverse(q_pad.values);
        double dq = std::sqrt(l2_sq({queries + qi * dim, dim}, centroid));
        std::vector<double> q_prime(dim_pad, 0.0);
        if (dq > 0.0) {
            for (std::uint32_t i = 0; i < dim_pad; ++i) {
                q_prime[i] = (static_cast<double>(rq[i]) - rc[i]) / dq;
            }
        }
        SplitMix64 qrng = SplitMix64::stream(seed ^ 0xB0B5, qi);
        for (std::uint32_t bq = 1; bq <= 8; ++bq) {
            SplitMix64 prep = qrng;  // same uniforms at every width
            auto qq = prepare_query({queries + qi * dim, dim}, centroid, rc, rq, bq,
                                    prep);
            for (std::size_t p : by_query[qi]) {
                auto raw = ip_code_query(codes.code(pairs[p].first), qq).raw;
                ests[bq - 1][p] =
                    estimate_from_raw(codes.metas[pairs[p].first], qq, raw,
                                      kDefaultEpsilon0)
                        .est_sq_dist;
            }
        }
        for (std::size_t p : by_query[qi]) {
            const auto& meta = codes.metas[pairs[p].first];
            double ip = detail::signed_sum(codes.code(pairs[p].first), q_prime) /
                        meta.ip_quantized;
            double dv = meta.dist_to_centroid;
            double est = std::max(0.0, dv * dv + dq * dq - 2.0 * dv * dq * ip);
            oracle_rel[p] = std::abs(est - truths[p]) / truths[p];
        }
    }

    BqSweepResult out;
    for (std::uint32_t bq = 1; bq <= 8; ++bq) {
        auto stats = relative_error_stats(ests[bq - 1], truths);
        out.points.push_back({bq, stats.avg_rel_error, stats.max_rel_error});
    }
    out.oracle_avg_rel_error =
        std::accumulate(oracle_rel.begin(), oracle_rel.end(), 0.0) /
        static_cast<double>(n_pairs);
    return out;
}

}  // namespace rabitq
