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
#include <cstdint>
#include <vector>

#include "rabitq/rng.hpp"
#include "rabitq/rotator.hpp"
#include "rabitq/vec.hpp"

namespace {

// Reference transpose-multiply, written independently of Rotator's
// row-streaming loop: walks columns and accumulates in long double.
std::vector<float>
transpose_multiply_oracle(const std::vector<double>& m, std::size_t dim,
                          const std::vector<float>& v) {
    std::vector<float> out(dim);
    for (std::size_t j = 0; j < dim; ++j) {
        long double acc = 0.0L;
        for (std::size_t i = 0; i < dim; ++i) {
            acc += static_cast<long double>(m[i * dim + j]) * v[i];
        }
        out[j] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float>
multiply_oracle(const std::vector<double>& m, std::size_t dim, const std::vector<float>& v) {
    std::vector<float> out(dim);
    for (std::size_t i = 0; i < dim; ++i) {
        long double acc = 0.0L;
        for (std::size_t j = 0; j < dim; ++j) {
            acc += static_cast<long double>(m[i * dim + j]) * v[j];
        }
        out[i] = static_cast<float>(acc);
    }
    return out;
}

std::vector<float>
random_unit_vector(std::size_t dim, rabitq::SplitMix64& rng) {
    std::vector<float> v(dim);
    for (auto& x : v) {
        x = static_cast<float>(rng.next_gaussian());
    }
    double n = rabitq::norm(v);
    for (auto& x : v) {
        x = static_cast<float>(x / n);
    }
    return v;
}

}  // namespace

TEST_CASE("padded_dim rounds up to multiples of 64") {
    CHECK(rabitq::padded_dim(1) == 64);
    CHECK(rabitq::padded_dim(63) == 64);
    CHECK(rabitq::padded_dim(64) == 64);
    CHECK(rabitq::padded_dim(65) == 128);
    CHECK(rabitq::padded_dim(150) == 192);
    CHECK(rabitq::padded_dim(4096) == 4096);
    CHECK_THROWS_AS(rabitq::padded_dim(0), std::invalid_argument);
}

TEST_CASE("pad zero-extends and keeps the original dimension") {
    std::vector<float> v{1.0f, -2.0f, 3.5f};
    auto p = rabitq::pad(v);
    REQUIRE(p.values.size() == 64);
    CHECK(p.original_dim == 3);
    CHECK(p.values[0] == 1.0f);
    CHECK(p.values[1] == -2.0f);
    CHECK(p.values[2] == 3.5f);
    for (std::size_t i = 3; i < p.values.size(); ++i) {
        CHECK(p.values[i] == 0.0f);
    }
    // Norm is untouched by padding.
    CHECK(rabitq::norm_sq(p.values) == Catch::Approx(rabitq::norm_sq(v)));
    CHECK_THROWS_AS(rabitq::pad(std::span<const float>{}), std::invalid_argument);
}

TEST_CASE("SplitMix64 streams are reproducible") {
    rabitq::SplitMix64 a(123), b(123), c(124);
    bool all_equal = true;
    bool any_diff = false;
    for (int i = 0; i < 1000; ++i) {
        auto x = a.next_u64();
        all_equal = all_equal && (x == b.next_u64());
        any_diff = any_diff || (x != c.next_u64());
    }
    CHECK(all_equal);
    CHECK(any_diff);
}

TEST_CASE("SplitMix64 uniform doubles have the right moments and range") {
    rabitq::SplitMix64 rng(2024);
    const int n = 200000;
    double sum = 0, sum2 = 0, mn = 1.0, mx = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = rng.next_double();
        sum += u;
        sum2 += u * u;
        mn = std::min(mn, u);
        mx = std::max(mx, u);
    }
    double mean = sum / n;
    double var = sum2 / n - mean * mean;
    // 5-sigma tolerances for n = 2e5 draws: sd(mean) = 1/sqrt(12 n).
    CHECK(std::abs(mean - 0.5) < 0.00323);
    CHECK(std::abs(var - 1.0 / 12.0) < 0.001);
    CHECK(mn >= 0.0);
    CHECK(mx < 1.0);
}

TEST_CASE("Box-Muller gaussians have normal moments") {
    rabitq::SplitMix64 rng(7);
    const int n = 200000;
    double s1 = 0, s2 = 0, s3 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        double g = rng.next_gaussian();
        s1 += g;
        s2 += g * g;
        s3 += g * g * g;
        s4 += g * g * g * g;
    }
    // 5-sigma tolerances: sd(mean)=1/sqrt(n), sd(m2)=sqrt(2/n),
    // sd(m3)=sqrt(15/n), sd(m4)=sqrt(96/n).
    CHECK(std::abs(s1 / n) < 0.0112);
    CHECK(std::abs(s2 / n - 1.0) < 0.0158);
    CHECK(std::abs(s3 / n) < 0.0433);
    CHECK(std::abs(s4 / n - 3.0) < 0.110);
}

TEST_CASE("derived substreams are decorrelated") {
    auto a = rabitq::SplitMix64::stream(99, 0);
    auto b = rabitq::SplitMix64::stream(99, 1);
    const int n = 100000;
    double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
    for (int i = 0; i < n; ++i) {
        double x = a.next_double(), y = b.next_double();
        sa += x;
        sb += y;
        sab += x * y;
        saa += x * x;
        sbb += y * y;
    }
    double ma = sa / n, mb = sb / n;
    double cov = sab / n - ma * mb;
    double corr = cov / std::sqrt((saa / n - ma * ma) * (sbb / n - mb * mb));
    CHECK(std::abs(corr) < 0.0158);  // 5/sqrt(n)
}

TEST_CASE("rotator regeneration is bit-identical, different seeds differ") {
    rabitq::Rotator a(96, 42), b(96, 42), c(96, 43);
    CHECK(a.matrix() == b.matrix());
    CHECK(a.matrix() != c.matrix());
    CHECK(a.dim() == 96);
    CHECK(a.seed() == 42);
}

TEST_CASE("rotator rows are orthonormal") {
    for (std::uint32_t dim : {1u, 2u, 3u, 64u, 96u, 128u, 256u}) {
        rabitq::Rotator r(dim, 1000 + dim);
        const auto& m = r.matrix();
        double max_dev = 0.0;
        for (std::uint32_t i = 0; i < dim; ++i) {
            for (std::uint32_t j = i; j < dim; ++j) {
                double acc = 0.0;
                for (std::uint32_t k = 0; k < dim; ++k) {
                    acc += m[i * dim + k] * m[j * dim + k];
                }
                double want = (i == j) ? 1.0 : 0.0;
                max_dev = std::max(max_dev, std::abs(acc - want));
            }
        }
        INFO("dim " << dim);
        CHECK(max_dev < 1e-10);
    }
}

TEST_CASE("dim-1 rotator is a sign") {
    for (std::uint64_t seed : {1ull, 2ull, 3ull, 4ull}) {
        rabitq::Rotator r(1, seed);
        double v = r.matrix()[0];
        CHECK((v == 1.0 || v == -1.0));
    }
}

TEST_CASE("rotation preserves norms and inner products, inverse round-trips") {
    const std::uint32_t dim = 128;
    rabitq::Rotator r(dim, 5);
    rabitq::SplitMix64 rng(6);
    for (int t = 0; t < 20; ++t) {
        std::vector<float> u(dim), v(dim);
        for (std::uint32_t i = 0; i < dim; ++i) {
            u[i] = static_cast<float>(rng.next_gaussian());
            v[i] = static_cast<float>(rng.next_gaussian());
        }
        auto ru = r.rotate(u);
        auto rv = r.rotate(v);
        CHECK(rabitq::norm(ru) == Catch::Approx(rabitq::norm(u)).epsilon(1e-6));
        CHECK(rabitq::dot(std::span<const float>(ru), std::span<const float>(rv)) ==
              Catch::Approx(rabitq::dot(std::span<const float>(u), std::span<const float>(v)))
                  .margin(1e-4));
        auto back = r.rotate_inverse(ru);
        for (std::uint32_t i = 0; i < dim; ++i) {
            REQUIRE(back[i] == Catch::Approx(u[i]).margin(1e-4));
        }
    }
}

TEST_CASE("rotate and rotate_inverse match the naive matrix oracles") {
    const std::uint32_t dim = 128;
    rabitq::Rotator r(dim, 17);
    rabitq::SplitMix64 rng(18);
    std::vector<float> v(dim);
    for (auto& x : v) {
        x = static_cast<float>(rng.next_gaussian());
    }
    auto got_fwd = r.rotate(v);
    auto want_fwd = multiply_oracle(r.matrix(), dim, v);
    auto got_inv = r.rotate_inverse(v);
    auto want_inv = transpose_multiply_oracle(r.matrix(), dim, v);
    for (std::uint32_t i = 0; i < dim; ++i) {
        CHECK(got_fwd[i] == Catch::Approx(want_fwd[i]).margin(1e-6));
        CHECK(got_inv[i] == Catch::Approx(want_inv[i]).margin(1e-6));
    }
}

TEST_CASE("rotated fixed vector is uniform on the sphere across seeds") {
    // Sphere-coordinate moments: E[x_i] = 0, E[x_i^2] = 1/D,
    // E[x_i^4] = 3/(D(D+2)), E[x_i^2 x_j^2] = 1/(D(D+2)), and the coordinate
    // sum s = sum_i x_i has variance exactly 1. Tolerances are 5 sigma for
    // R = 1500 independent rotations at D = 16.
    const std::uint32_t dim = 16;
    const int rounds = 1500;
    rabitq::SplitMix64 rng(314);
    auto o = random_unit_vector(dim, rng);
    double sum_s = 0, sum_x0sq = 0, sum_x0x1 = 0;
    for (int t = 0; t < rounds; ++t) {
        rabitq::Rotator r(dim, 90000 + static_cast<std::uint64_t>(t));
        auto x = r.rotate_inverse(o);
        double s = 0;
        for (float c : x) {
            s += c;
        }
        sum_s += s;
        sum_x0sq += static_cast<double>(x[0]) * x[0];
        sum_x0x1 += static_cast<double>(x[0]) * x[1];
    }
    CHECK(std::abs(sum_s / rounds) < 0.13);              // sd(s) = 1
    CHECK(std::abs(sum_x0sq / rounds - 1.0 / dim) < 0.0105);
    CHECK(std::abs(sum_x0x1 / rounds) < 0.0076);
}

TEST_CASE("rotator rejects bad arguments") {
    CHECK_THROWS_AS(rabitq::Rotator(0, 1), std::invalid_argument);
    rabitq::Rotator r(64, 1);
    std::vector<float> wrong(63, 0.0f);
    CHECK_THROWS_AS(r.rotate(wrong), std::invalid_argument);
    CHECK_THROWS_AS(r.rotate_inverse(wrong), std::invalid_argument);
    std::vector<float> ok(64, 0.0f);
    std::vector<double> out(63);
    CHECK_THROWS_AS(r.rotate_inverse(ok, out), std::invalid_argument);
}
