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
#include <functional>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

namespace rabitq {

// E[<obar, o>] for a random D-dimensional rotation:
// sqrt(D/pi) * 2 Gamma(D/2) / ((D-1) Gamma((D-1)/2)), computed in log space.
// Approaches sqrt(2/pi) ~ 0.7979 from above as D grows.
inline double
gamma_expectation(std::uint32_t dim) {
    if (dim < 2) {
        throw std::invalid_argument("gamma_expectation: dimension must be at least 2");
    }
    double d = static_cast<double>(dim);
    double log_ratio = std::lgamma(d / 2.0) - std::lgamma((d - 1.0) / 2.0);
    return std::sqrt(d / std::numbers::pi) * 2.0 / (d - 1.0) * std::exp(log_ratio);
}

// Density of one coordinate of a uniform point on the unit sphere in dim
// dimensions: p(x) = Gamma(dim/2) / (sqrt(pi) Gamma((dim-1)/2)) *
// (1 - x^2)^((dim-3)/2) on [-1, 1].
inline double
coordinate_density(std::uint32_t dim, double x) {
    if (dim < 2) {
        throw std::invalid_argument("coordinate_density: dimension must be at least 2");
    }
    if (x <= -1.0 || x >= 1.0) {
        return 0.0;
    }
    double d = static_cast<double>(dim);
    double log_norm = std::lgamma(d / 2.0) - std::lgamma((d - 1.0) / 2.0) -
                      0.5 * std::log(std::numbers::pi);
    return std::exp(log_norm + (d - 3.0) / 2.0 * std::log1p(-x * x));
}

namespace detail {

inline double
simpson(double a, double fa, double fm, double b, double fb) {
    return (b - a) / 6.0 * (fa + 4.0 * fm + fb);
}

inline double
adaptive_simpson(const std::function<double(double)>& f, double a, double fa,
                 double b, double fb, double m, double fm, double whole, double tol,
                 int depth) {
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = f(lm), frm = f(rm);
    double left = simpson(a, fa, flm, m, fm);
    double right = simpson(m, fm, frm, b, fb);
    double delta = left + right - whole;
    if (depth <= 0 || std::abs(delta) <= 15.0 * tol) {
        return left + right + delta / 15.0;
    }
    return adaptive_simpson(f, a, fa, m, fm, lm, flm, left, tol / 2.0, depth - 1) +
           adaptive_simpson(f, m, fm, b, fb, rm, frm, right, tol / 2.0, depth - 1);
}

inline double
integrate(const std::function<double(double)>& f, double a, double b,
          double tol = 1e-11) {
    if (b <= a) {
        return 0.0;
    }
    double m = 0.5 * (a + b);
    double fa = f(a), fb = f(b), fm = f(m);
    double whole = simpson(a, fa, fm, b, fb);
    return adaptive_simpson(f, a, fa, b, fb, m, fm, whole, tol, 40);
}

}  // namespace detail

// CDF matching coordinate_density, by adaptive quadrature from -1.
inline double
coordinate_cdf(std::uint32_t dim, double x) {
    if (dim < 3) {
        throw std::invalid_argument("coordinate_cdf: dimension must be at least 3");
    }
    if (x <= -1.0) {
        return 0.0;
    }
    if (x >= 1.0) {
        return 1.0;
    }
    auto f = [dim](double t) { return coordinate_density(dim, t); };
    // Integrate the short side and reflect when x is in the right half, so the
    // quadrature never spans the whole support.
    if (x <= 0.0) {
        return detail::integrate(f, -1.0, x);
    }
    return 1.0 - detail::integrate(f, x, 1.0);
}

// Two-sided Kolmogorov-Smirnov statistic of a sample against a continuous CDF.
// Sorts a copy; the CDF is evaluated once per distinct sample point.
inline double
ks_statistic(std::span<const double> samples,
             const std::function<double(double)>& cdf) {
    if (samples.empty()) {
        throw std::invalid_argument("ks_statistic: empty sample");
    }
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    const double n = static_cast<double>(s.size());
    double worst = 0.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double F = cdf(s[i]);
        double lo = static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n;
        worst = std::max({worst, std::abs(F - lo), std::abs(F - hi)});
    }
    return worst;
}

// KS of a sample against the coordinate distribution, using one cumulative
// integration pass over the sorted sample instead of a fresh quadrature per
// point.
inline double
ks_statistic_coordinate(std::span<const double> samples, std::uint32_t dim) {
    if (samples.empty()) {
        throw std::invalid_argument("ks_statistic: empty sample");
    }
    if (dim < 3) {
        throw std::invalid_argument("ks_statistic: dimension must be at least 3");
    }
    std::vector<double> s(samples.begin(), samples.end());
    std::sort(s.begin(), s.end());
    auto f = [dim](double t) { return coordinate_density(dim, t); };
    const double n = static_cast<double>(s.size());
    double worst = 0.0;
    double F = 0.0;
    double prev = -1.0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        double x = std::clamp(s[i], -1.0, 1.0);
        F += detail::integrate(f, prev, x);
        prev = x;
        double lo = static_cast<double>(i) / n;
        double hi = static_cast<double>(i + 1) / n;
        worst = std::max({worst, std::abs(F - lo), std::abs(F - hi)});
    }
    return worst;
}

// Asymptotic two-sided critical value at the 1% significance level.
inline double
ks_critical_1pct(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("ks_critical_1pct: empty sample");
    }
    return 1.63 / std::sqrt(static_cast<double>(n));
}

}  // namespace rabitq
