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
#include <numbers>

namespace rabitq {

// SplitMix64: a 64-bit counter stepped by the golden-gamma increment and
// pushed through an avalanche finalizer. Every random choice in this library
// goes through this generator rather than <random>'s engines/distributions,
// whose streams are not pinned down by the standard and differ between
// standard libraries. Identical seeds therefore give identical indexes and
// identical experiment results everywhere.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

    static std::uint64_t
    mix(std::uint64_t z) noexcept {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t
    next_u64() noexcept {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix(state_);
    }

    // Uniform on [0, 1), 53 random mantissa bits.
    double
    next_double() noexcept {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // Uniform on {0, 1, ..., bound-1}. Plain modulo; the bias is < 2^-32 for
    // every bound this library uses (bounds are small) and keeping it
    // branch-free keeps the stream position predictable.
    std::uint64_t
    next_below(std::uint64_t bound) noexcept {
        return next_u64() % bound;
    }

    // Standard normal via Box-Muller. Deliberately not the ziggurat: the
    // transform uses two uniforms per pair and nothing else, so the mapping
    // from seed to gaussian stream is easy to reproduce in any language.
    double
    next_gaussian() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = next_double();
        double u2 = next_double();
        // 1 - u1 lies in (0, 1], so the log is finite.
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        double theta = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

    // Independent substream for (master seed, stream index). Experiments that
    // run one trial per stream derive trial generators through this instead
    // of reusing one sequential stream, which keeps results independent of
    // scheduling order.
    static SplitMix64
    stream(std::uint64_t master, std::uint64_t stream_index) noexcept {
        return SplitMix64(mix(master + 0x9E3779B97F4A7C15ULL * (stream_index + 1)));
    }

private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace rabitq
