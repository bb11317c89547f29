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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <vector>

#include "rabitq/experiments.hpp"
#include "rabitq/metrics.hpp"
#include "rabitq/stats.hpp"
#include "rabitq/synthetic.hpp"

namespace rabitq {
namespace {

TEST_CASE("relative error stats match hand values") {
    std::vector<double> est{1.1};
    std::vector<double> truth{1.0};
    auto s = relative_error_stats(est, truth);
    CHECK(s.avg_rel_error == Catch::Approx(0.1).margin(1e-12));
    CHECK(s.max_rel_error == Catch::Approx(0.1).margin(1e-12));
    CHECK(s.n == 1);

    std::vector<double> est2{1.1, 0.8};
    std::vector<double> truth2{1.0, 1.0};
    auto s2 = relative_error_stats(est2, truth2);
    CHECK(s2.avg_rel_error == Catch::Approx(0.15).margin(1e-12));
    CHECK(s2.max_rel_error == Catch::Approx(0.2).margin(1e-12));
}

TEST_CASE("relative error stats reject bad inputs") {
    std::vector<double> a{1.0};
    std::vector<double> zero{0.0};
    std::vector<double> neg{-1.0};
    std::vector<double> empty;
    std::vector<double> two{1.0, 2.0};
    CHECK_THROWS_AS(relative_error_stats(a, zero), std::invalid_argument);
    CHECK_THROWS_AS(relative_error_stats(a, neg), std::invalid_argument);
    CHECK_THROWS_AS(relative_error_stats(empty, empty), std::invalid_argument);
    CHECK_THROWS_AS(relative_error_stats(a, two), std::invalid_argument);
}

TEST_CASE("recall counts overlap with the true top K") {
    std::vector<std::vector<std::uint32_t>> res{{1, 2, 3, 4}};
    std::vector<std::vector<std::uint32_t>> gt{{1, 2, 5, 6}};
    CHECK(recall_at_k(res, gt, 4) == Catch::Approx(0.5).margin(1e-12));
    CHECK(recall_at_k(gt, gt, 4) == 1.0);

    // Order inside the lists must not matter.
    std::vector<std::vector<std::uint32_t>> shuffled{{4, 3, 2, 1}};
    std::vector<std::vector<std::uint32_t>> gt2{{1, 2, 3, 4}};
    CHECK(recall_at_k(shuffled, gt2, 4) == 1.0);

    CHECK_THROWS_AS(recall_at_k(res, gt, 0), std::invalid_argument);
    CHECK_THROWS_AS(recall_at_k(res, gt, 5), std::invalid_argument);
    std::vector<std::vector<std::uint32_t>> empty;
    CHECK_THROWS_AS(recall_at_k(empty, empty, 1), std::invalid_argument);
}

TEST_CASE("average distance ratio compares rank by rank") {
    std::vector<std::vector<double>> res{{2.0, 4.0}};
    std::vector<std::vector<double>> gt{{1.0, 2.0}};
    CHECK(average_distance_ratio(res, gt, 2) == Catch::Approx(2.0).margin(1e-12));
    CHECK(average_distance_ratio(gt, gt, 2) == Catch::Approx(1.0).margin(1e-12));

    // An exact hit at distance zero counts as ratio one, not zero over zero.
    std::vector<std::vector<double>> rz{{0.0, 3.0}};
    std::vector<std::vector<double>> gz{{0.0, 2.0}};
    CHECK(average_distance_ratio(rz, gz, 2) == Catch::Approx(1.25).margin(1e-12));

    std::vector<std::vector<double>> bad{{1.0, 1.0}};
    CHECK_THROWS_AS(average_distance_ratio(bad, gz, 2), std::invalid_argument);
    CHECK_THROWS_AS(average_distance_ratio(res, gt, 3), std::invalid_argument);
}

TEST_CASE("bit entropy hits both extremes") {
    // Two copies of one arbitrary code: every position is constant.
    ClusterCodes same;
    same.dim_pad = 64;
    same.count = 2;
    same.words = {0x0123456789ABCDEFull, 0x0123456789ABCDEFull};
    CHECK(bit_entropy(same) == 0.0);

    // A code and its complement: every position is a fair coin.
    ClusterCodes half;
    half.dim_pad = 64;
    half.count = 2;
    half.words = {0x0123456789ABCDEFull, ~0x0123456789ABCDEFull};
    CHECK(bit_entropy(half) == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("bit entropy accumulates across clusters and checks shapes") {
    ClusterCodes a;
    a.dim_pad = 64;
    a.count = 1;
    a.words = {0ull};
    ClusterCodes b;
    b.dim_pad = 64;
    b.count = 1;
    b.words = {~0ull};
    BitEntropyAccumulator acc;
    acc.add(a);
    acc.add(b);
    CHECK(acc.mean_entropy() == Catch::Approx(1.0).margin(1e-12));

    ClusterCodes wrong;
    wrong.dim_pad = 128;
    wrong.count = 1;
    wrong.words = {0ull, 0ull};
    CHECK_THROWS_AS(acc.add(wrong), dim_error);

    ClusterCodes torn;
    torn.dim_pad = 64;
    torn.count = 2;
    torn.words = {0ull};  // one word short
    BitEntropyAccumulator acc2;
    CHECK_THROWS_AS(acc2.add(torn), dim_error);

    BitEntropyAccumulator untouched;
    CHECK_THROWS_AS(untouched.mean_entropy(), std::invalid_argument);
}

TEST_CASE("least squares recovers an exact line") {
    std::vector<double> x{0.0, 1.0, 2.0, 3.0};
    std::vector<double> y{1.0, 3.0, 5.0, 7.0};
    auto fit = fit_line(x, y);
    CHECK(fit.slope == Catch::Approx(2.0).margin(1e-12));
    CHECK(fit.intercept == Catch::Approx(1.0).margin(1e-12));
    CHECK(fit.n == 4);

    std::vector<double> flat{1.0, 1.0, 1.0};
    std::vector<double> any{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(fit_line(flat, any), std::invalid_argument);
    std::vector<double> one{1.0};
    CHECK_THROWS_AS(fit_line(one, one), std::invalid_argument);
}

TEST_CASE("expected code alignment matches closed forms") {
    // At dimension 2 the expectation is 2*sqrt(2)/pi; at 3 it is sqrt(3)/2.
    CHECK(gamma_expectation(2) ==
          Catch::Approx(2.0 * std::numbers::sqrt2 / std::numbers::pi).margin(1e-12));
    CHECK(gamma_expectation(3) ==
          Catch::Approx(std::sqrt(3.0) / 2.0).margin(1e-12));

    // Large dimensions sit in a narrow band just above sqrt(2/pi): the value
    // runs from 0.800 down to 0.798 (at three decimals) as D grows to 1e6.
    const double floor = std::sqrt(2.0 / std::numbers::pi);
    for (std::uint32_t d : {100u, 10000u, 1000000u}) {
        double g = gamma_expectation(d);
        CHECK(g > 0.7975);
        CHECK(g < 0.8005);
        CHECK(g > floor);
    }
    CHECK(gamma_expectation(128) > gamma_expectation(1024));
    CHECK_THROWS_AS(gamma_expectation(1), std::invalid_argument);
}

TEST_CASE("coordinate density matches closed forms and integrates to one") {
    // Dimension 3 projects to the uniform density 1/2; dimension 4 to a
    // semicircle scaled by 2/pi.
    CHECK(coordinate_density(3, 0.3) == Catch::Approx(0.5).margin(1e-12));
    CHECK(coordinate_density(3, -0.9) == Catch::Approx(0.5).margin(1e-12));
    CHECK(coordinate_density(4, 0.0) ==
          Catch::Approx(2.0 / std::numbers::pi).margin(1e-12));
    CHECK(coordinate_density(4, 0.6) ==
          Catch::Approx(2.0 / std::numbers::pi * 0.8).margin(1e-12));

    CHECK(coordinate_density(8, 0.25) == coordinate_density(8, -0.25));
    CHECK(coordinate_density(8, 1.0) == 0.0);
    CHECK(coordinate_density(8, -1.5) == 0.0);

    for (std::uint32_t d : {3u, 4u, 8u, 127u}) {
        auto f = [d](double x) { return coordinate_density(d, x); };
        CHECK(detail::integrate(f, -1.0, 1.0) == Catch::Approx(1.0).margin(1e-8));
    }
    CHECK_THROWS_AS(coordinate_density(1, 0.0), std::invalid_argument);
}

TEST_CASE("coordinate cdf matches closed forms") {
    for (double x : {-0.8, -0.3, 0.0, 0.4, 0.95}) {
        CHECK(coordinate_cdf(3, x) == Catch::Approx((x + 1.0) / 2.0).margin(1e-9));
        // At dimension 5 the density is (3/4)(1 - x^2).
        double expect5 = 0.5 + 0.75 * x - 0.25 * x * x * x;
        CHECK(coordinate_cdf(5, x) == Catch::Approx(expect5).margin(1e-9));
    }
    CHECK(coordinate_cdf(127, 0.0) == Catch::Approx(0.5).margin(1e-9));
    CHECK(coordinate_cdf(8, -1.0) == 0.0);
    CHECK(coordinate_cdf(8, 1.0) == 1.0);
    CHECK(coordinate_cdf(8, -2.0) == 0.0);
    CHECK(coordinate_cdf(8, 0.5) > coordinate_cdf(8, 0.2));
    CHECK_THROWS_AS(coordinate_cdf(2, 0.0), std::invalid_argument);
}

TEST_CASE("ks statistic matches a hand-computed staircase") {
    std::vector<double> s{0.25, 0.75};
    auto identity = [](double x) { return x; };
    CHECK(ks_statistic(s, identity) == Catch::Approx(0.25).margin(1e-12));

    // Asymmetric sample: the sup gap sits below the first point.
    std::vector<double> t{0.9, 0.95};
    CHECK(ks_statistic(t, identity) == Catch::Approx(0.9).margin(1e-12));

    std::vector<double> empty;
    CHECK_THROWS_AS(ks_statistic(empty, identity), std::invalid_argument);
}

TEST_CASE("coordinate ks agrees with the generic form") {
    auto data = sphere_uniform(300, 10, 77);
    std::vector<double> first(300);
    for (std::size_t i = 0; i < 300; ++i) {
        first[i] = data[i * 10];
    }
    double a = ks_statistic_coordinate(first, 10);
    double b = ks_statistic(first, [](double x) { return coordinate_cdf(10, x); });
    CHECK(a == Catch::Approx(b).margin(1e-9));
}

TEST_CASE("ks accepts the matching law and rejects a wrong one") {
    const std::size_t n = 2000;
    auto data = sphere_uniform(n, 64, 2024);
    std::vector<double> first(n);
    for (std::size_t i = 0; i < n; ++i) {
        first[i] = data[i * 64];
    }
    double crit = ks_critical_1pct(n);
    CHECK(ks_statistic_coordinate(first, 64) < crit);
    // The same sample is far too concentrated for dimension 8.
    CHECK(ks_statistic_coordinate(first, 8) > 3.0 * crit);
}

TEST_CASE("ks critical value at one percent") {
    CHECK(ks_critical_1pct(10000) == Catch::Approx(0.0163).margin(1e-12));
    CHECK_THROWS_AS(ks_critical_1pct(0), std::invalid_argument);
}

TEST_CASE("sphere sampler yields unit rows deterministically") {
    auto a = sphere_uniform(50, 24, 5);
    auto b = sphere_uniform(50, 24, 5);
    auto c = sphere_uniform(50, 24, 6);
    CHECK(a == b);
    CHECK(a != c);
    for (std::size_t i = 0; i < 50; ++i) {
        CHECK(norm({a.data() + i * 24, 24}) == Catch::Approx(1.0).margin(1e-5));
    }
    CHECK_THROWS_AS(sphere_uniform(0, 24, 5), std::invalid_argument);
    CHECK_THROWS_AS(sphere_uniform(5, 0, 5), std::invalid_argument);
}

TEST_CASE("gaussian blobs stay near their own centers") {
    auto blobs = gaussian_blobs(200, 16, 8, 40.0, 1.0, 11);
    REQUIRE(blobs.data.size() == 200u * 16u);
    REQUIRE(blobs.centers.size() == 8u * 16u);
    for (std::size_t i = 0; i < blobs.n; ++i) {
        std::size_t own = i * blobs.n_blobs / blobs.n;
        double down = l2_sq({blobs.data.data() + i * 16, 16},
                            {blobs.centers.data() + own * 16, 16});
        for (std::size_t b = 0; b < blobs.n_blobs; ++b) {
            if (b != own) {
                double other = l2_sq({blobs.data.data() + i * 16, 16},
                                     {blobs.centers.data() + b * 16, 16});
                CHECK(down < other);
            }
        }
    }
    CHECK(gaussian_blobs(200, 16, 8, 40.0, 1.0, 11).data == blobs.data);
    CHECK_THROWS_AS(gaussian_blobs(4, 16, 5, 40.0, 1.0, 11), std::invalid_argument);
    CHECK_THROWS_AS(gaussian_blobs(4, 16, 0, 40.0, 1.0, 11), std::invalid_argument);
}

TEST_CASE("planted neighborhoods carry an exact distance ladder") {
    const std::size_t nq = 12, m = 40, dim = 48;
    auto pl = planted_neighborhoods(nq, m, dim, 20, 0.45, 99);
    REQUIRE(pl.n == nq * m);
    REQUIRE(pl.data.size() == nq * m * dim);
    REQUIRE(pl.queries.size() == nq * dim);
    CHECK(pl.delta > 1e-4);
    CHECK(pl.delta < 0.1);

    for (std::size_t q = 0; q < nq; ++q) {
        std::span<const float> query{pl.queries.data() + q * dim, dim};
        for (std::size_t j = 0; j < m; ++j) {
            double d = l2_sq({pl.data.data() + (q * m + j) * dim, dim}, query);
            double want = 1.0 + pl.delta * static_cast<double>(j);
            // Coordinates near 100 in float32 leave rounding of order 1e-3.
            CHECK(d == Catch::Approx(want).margin(5e-3));
        }
    }

    // Other neighborhoods live at center-scale distances, far beyond the
    // ladder's top rung.
    std::span<const float> q0{pl.queries.data(), dim};
    for (std::size_t j = 0; j < m; ++j) {
        double d = l2_sq({pl.data.data() + (m + j) * dim, dim}, q0);
        CHECK(d > 100.0);
    }

    CHECK_THROWS_AS(planted_neighborhoods(2, 1, dim, 1, 0.45, 1), std::invalid_argument);
    CHECK_THROWS_AS(planted_neighborhoods(2, 10, dim, 11, 0.45, 1),
                    std::invalid_argument);
    CHECK_THROWS_AS(planted_neighborhoods(2, 10, dim, 5, 0.0, 1), std::invalid_argument);
}

TEST_CASE("oracle regression is exactly the identity") {
    auto r = verify_unbiasedness(5000, 32, 7, EstimatorKind::oracle);
    CHECK(r.fit.slope == Catch::Approx(1.0).margin(1e-9));
    CHECK(r.fit.intercept == Catch::Approx(0.0).margin(1e-9));
    CHECK(r.fit.n == 5000);
    CHECK(r.max_truth > 0.0);
}

TEST_CASE("estimator regression is unbiased, fixture is shrunk") {
    auto un = verify_unbiasedness(62500, 128, 21, EstimatorKind::unbiased);
    CHECK(un.fit.slope > 0.97);
    CHECK(un.fit.slope < 1.03);
    CHECK(std::abs(un.fit.intercept) < 0.02);

    // Skipping the <obar, o> correction shrinks estimates toward the centroid
    // by exactly that factor, about 0.8 at this dimension.
    auto bi = verify_unbiasedness(62500, 128, 21, EstimatorKind::biased_fixture);
    CHECK(bi.fit.slope > 0.75);
    CHECK(bi.fit.slope < 0.85);

    CHECK_THROWS_AS(verify_unbiasedness(1, 128, 21, EstimatorKind::unbiased),
                    std::invalid_argument);
}

TEST_CASE("inner product error contracts like one over root dim") {
    auto lo = mean_ip_error(18000, 128, 13);
    auto hi = mean_ip_error(18000, 512, 13);
    CHECK(lo.n == 18000);
    // Error sd is about sqrt(1-t^2)/(t sqrt(D-1)): near 0.066 at 128.
    CHECK(lo.mean_abs_error > 0.02);
    CHECK(lo.mean_abs_error < 0.12);
    // Quadrupling the dimension should halve the error.
    CHECK(hi.mean_abs_error / lo.mean_abs_error > 0.35);
    CHECK(hi.mean_abs_error / lo.mean_abs_error < 0.65);
    CHECK_THROWS_AS(mean_ip_error(0, 128, 13), std::invalid_argument);
}

TEST_CASE("rotation resampling concentrates where the formula says") {
    auto rep = verify_concentration(128, 1500, 31);
    CHECK(rep.n == 1500);
    CHECK(rep.analytic_mean == Catch::Approx(gamma_expectation(128)).margin(1e-12));
    CHECK(std::abs(rep.mean_ip - rep.analytic_mean) < 0.01);
    CHECK(rep.std_ip > 0.0);
    CHECK(rep.std_ip < 0.1);
    CHECK(std::abs(rep.mean_e1) < 0.01);
    CHECK(rep.ks < rep.ks_critical);
}

TEST_CASE("concentration rejects collinear pairs") {
    std::vector<float> o(64, 0.0f);
    o[0] = 1.0f;
    std::vector<float> q(64, 0.0f);
    q[0] = -2.0f;
    CHECK_THROWS_AS(verify_concentration(o, q, 10, 1), std::invalid_argument);
    q[0] = 0.5f;
    CHECK_THROWS_AS(verify_concentration(o, q, 1, 1), std::invalid_argument);
    std::vector<float> zero(64, 0.0f);
    CHECK_THROWS_AS(verify_concentration(zero, q, 10, 1), std::invalid_argument);
}

TEST_CASE("brute force top k on a hand example") {
    std::vector<float> data{0.0f, 0.0f, 1.0f, 0.0f, 3.0f, 0.0f};
    std::vector<float> query{0.9f, 0.0f};
    std::vector<std::vector<double>> dists;
    auto ids = brute_force_topk(data.data(), 3, 2, query.data(), 1, 2, &dists);
    REQUIRE(ids.size() == 1);
    CHECK(ids[0] == std::vector<std::uint32_t>{1, 0});
    CHECK(dists[0][0] == Catch::Approx(0.01).margin(1e-6));
    CHECK(dists[0][1] == Catch::Approx(0.81).margin(1e-6));
    CHECK_THROWS_AS(brute_force_topk(data.data(), 3, 2, query.data(), 1, 4, nullptr),
                    std::invalid_argument);
}

TEST_CASE("epsilon sweep tightens recall as the bound widens") {
    auto blobs = gaussian_blobs(2000, 32, 16, 60.0, 1.0, 17);
    const std::size_t nq = 20;
    // Queries are dataset rows, one per blob, so ground truth is unambiguous.
    std::vector<float> queries;
    for (std::size_t i = 0; i < nq; ++i) {
        std::size_t row = i * blobs.n / nq;
        queries.insert(queries.end(), blobs.data.begin() + row * 32,
                       blobs.data.begin() + (row + 1) * 32);
    }
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> grid{0.0, 1.9, inf};
    auto sweep = sweep_epsilon0(blobs.data.data(), 2000, 32, queries.data(), nq, 16,
                                16, 10, grid, 23);
    REQUIRE(sweep.points.size() == 3);
    CHECK(sweep.k == 10);
    CHECK(sweep.n_probe == 16);
    CHECK(sweep.points[0].epsilon0 == 0.0);
    // Probing everything with an infinite bound is exact search.
    CHECK(sweep.points[2].recall == 1.0);
    CHECK(sweep.points[2].nn_rate == 1.0);
    CHECK(sweep.points[2].avg_reranks == Catch::Approx(2000.0));
    CHECK(sweep.points[0].recall <= sweep.points[1].recall);
    CHECK(sweep.points[1].recall <= sweep.points[2].recall);
    CHECK(sweep.points[1].recall >= 0.9);
    CHECK(sweep.points[0].avg_reranks <= sweep.points[1].avg_reranks);
    CHECK(sweep.points[1].avg_reranks <= sweep.points[2].avg_reranks);

    CHECK_THROWS_AS(sweep_epsilon0(blobs.data.data(), 2000, 32, queries.data(), nq,
                                   16, 16, 10, {}, 23),
                    std::invalid_argument);
}

TEST_CASE("query width sweep orders the error budget") {
    auto data = sphere_uniform(400, 64, 41);
    auto queries = sphere_uniform(50, 64, 42);
    auto sweep = sweep_bq(data.data(), 400, 64, queries.data(), 50, 4000, 43);
    REQUIRE(sweep.points.size() == 8);
    for (std::uint32_t b = 1; b <= 8; ++b) {
        CHECK(sweep.points[b - 1].bq == b);
        CHECK(sweep.points[b - 1].avg_rel_error > 0.0);
        CHECK(sweep.points[b - 1].max_rel_error >= sweep.points[b - 1].avg_rel_error);
    }
    // One-bit queries are far noisier than four-bit ones; four bits already
    // sit within a whisker of eight bits and of the unquantized oracle.
    CHECK(sweep.points[0].avg_rel_error > 1.5 * sweep.points[3].avg_rel_error);
    CHECK(std::abs(sweep.points[3].avg_rel_error - sweep.points[7].avg_rel_error) <
          0.2 * sweep.points[7].avg_rel_error);
    CHECK(sweep.oracle_avg_rel_error > 0.0);
    CHECK(sweep.points[3].avg_rel_error < 1.2 * sweep.oracle_avg_rel_error);
    CHECK(sweep.points[7].avg_rel_error < 1.1 * sweep.oracle_avg_rel_error);

    CHECK_THROWS_AS(sweep_bq(data.data(), 0, 64, queries.data(), 50, 100, 43),
                    std::invalid_argument);
}

}  // namespace
}  // namespace rabitq
