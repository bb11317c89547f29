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

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <span>
#include <stdexcept>
#include <vector>

#include "rabitq/common.hpp"
#include "rabitq/estimator.hpp"
#include "rabitq/quantizer.hpp"

#if defined(__AVX2__) && !defined(RABITQ_FASTSCAN_SCALAR)
#define RABITQ_FASTSCAN_AVX2 1
#include <immintrin.h>
#endif

namespace rabitq {

// Batch kernel: 32 binary codes are scanned at once against per-segment
// lookup tables built from the quantized query. Every value is a small
// exact integer, so batching loses nothing relative to the single-code
// kernel; the two paths must agree bit for bit.

inline constexpr std::uint32_t kBlockSize = 32;
inline constexpr std::uint32_t kMaxBatchDim = 4096;
inline constexpr std::uint32_t kMaxBatchBq = 4;

// The batch path keeps LUT entries in one byte and accumulators in 16
// bits, which caps it at 4-bit query levels and 4096 padded dimensions
// ((4096/4) * 60 = 61440 < 65536). Outside that envelope callers fall
// back to the single-code kernel.
constexpr bool
fastscan_supported(std::uint32_t dim_pad, std::uint32_t bq) {
    return dim_pad % 64 == 0 && dim_pad > 0 && dim_pad <= kMaxBatchDim &&
           bq >= 1 && bq <= kMaxBatchBq;
}

// 32 codes, nibble-interleaved by 4-dimension segment. Segment s owns
// bytes [16s, 16s + 16); byte j of a segment holds code 2j in its low
// nibble and code 2j + 1 in its high nibble, each nibble being dims
// [4s, 4s + 4) LSB-first. Unused tail slots stay zero so they score 0
// against any tables. This layout is frozen: index files store it as is.
struct PackedCodeBlock {
    std::uint32_t dim_pad = 0;
    std::uint32_t count = 0;
    std::array<std::uint32_t, kBlockSize> ids{};
    std::vector<std::uint8_t> bytes;

    std::size_t expected_bytes() const { return std::size_t{4} * dim_pad; }
};

namespace detail {

inline std::uint8_t
code_nibble(std::span<const std::uint64_t> words, std::uint32_t segment) {
    const std::uint32_t bit = segment * 4;
    return static_cast<std::uint8_t>((words[bit >> 6] >> (bit & 63)) & 0xFu);
}

inline void
pack_slot(PackedCodeBlock& block, std::span<const std::uint64_t> words,
          std::uint32_t slot) {
    const std::uint32_t shift = (slot & 1) ? 4 : 0;
    for (std::uint32_t s = 0; s < block.dim_pad / 4; ++s) {
        block.bytes[s * 16 + (slot >> 1)] |=
            static_cast<std::uint8_t>(code_nibble(words, s) << shift);
    }
}

}  // namespace detail

inline PackedCodeBlock
pack_block(std::span<const BitCode> codes, std::span<const std::uint32_t> ids) {
    if (codes.empty() || codes.size() > kBlockSize) {
        throw std::invalid_argument("pack_block: need between 1 and 32 codes");
    }
    if (ids.size() != codes.size()) {
        throw std::invalid_argument("pack_block: ids and codes must pair up");
    }
    const std::uint32_t dim_pad = codes[0].dim();
    for (const auto& c : codes) {
        if (c.dim() != dim_pad) {
            throw dim_error("pack_block: codes disagree on dimension");
        }
    }
    PackedCodeBlock block;
    block.dim_pad = dim_pad;
    block.count = static_cast<std::uint32_t>(codes.size());
    block.bytes.assign(block.expected_bytes(), 0);
    for (std::uint32_t c = 0; c < block.count; ++c) {
        block.ids[c] = ids[c];
        detail::pack_slot(block, codes[c].words(), c);
    }
    return block;
}

// Same packing from contiguous per-code words, count * (dim_pad / 64) of them.
inline PackedCodeBlock
pack_block_words(std::uint32_t dim_pad, std::span<const std::uint64_t> words,
                 std::span<const std::uint32_t> ids) {
    if (ids.empty() || ids.size() > kBlockSize) {
        throw std::invalid_argument("pack_block: need between 1 and 32 codes");
    }
    const std::size_t wpc = dim_pad / 64;
    if (dim_pad % 64 != 0 || words.size() != wpc * ids.size()) {
        throw dim_error("pack_block: words do not tile into codes of dim_pad bits");
    }
    PackedCodeBlock block;
    block.dim_pad = dim_pad;
    block.count = static_cast<std::uint32_t>(ids.size());
    block.bytes.assign(block.expected_bytes(), 0);
    for (std::uint32_t c = 0; c < block.count; ++c) {
        block.ids[c] = ids[c];
        detail::pack_slot(block, words.subspan(c * wpc, wpc), c);
    }
    return block;
}

inline std::vector<BitCode>
unpack_block(const PackedCodeBlock& block) {
    if (block.bytes.size() != block.expected_bytes()) {
        throw std::invalid_argument("unpack_block: byte payload has the wrong size");
    }
    std::vector<BitCode> codes;
    codes.reserve(block.count);
    for (std::uint32_t c = 0; c < block.count; ++c) {
        BitCode code(block.dim_pad);
        const std::uint32_t shift = (c & 1) ? 4 : 0;
        for (std::uint32_t s = 0; s < block.dim_pad / 4; ++s) {
            std::uint8_t nib = (block.bytes[s * 16 + (c >> 1)] >> shift) & 0xFu;
            for (std::uint32_t k = 0; k < 4; ++k) {
                if ((nib >> k) & 1u) {
                    code.set_bit(s * 4 + k);
                }
            }
        }
        codes.push_back(std::move(code));
    }
    return codes;
}

// Per-segment tables: entry t of table s is the dot of bit pattern t with
// levels qu[4s .. 4s+3]. Entries are exact and at most 4 * 15 = 60, so a
// byte-wide mirror of the 16-bit tables feeds the vectorized path losslessly.
struct QueryLuts {
    std::uint32_t dim_pad = 0;
    std::vector<std::uint16_t> tables;
    std::vector<std::uint8_t> tables8;

    std::span<const std::uint16_t> table(std::uint32_t s) const {
        return {tables.data() + std::size_t{16} * s, 16};
    }
};

inline QueryLuts
build_luts(const QuantizedQuery& qq) {
    if (!fastscan_supported(qq.dim_pad, qq.bq)) {
        throw std::invalid_argument(
            "build_luts: batch scanning needs B_q <= 4 and padded dim <= 4096");
    }
    if (qq.qu.size() != qq.dim_pad) {
        throw dim_error("build_luts: query levels do not match dim_pad");
    }
    QueryLuts luts;
    luts.dim_pad = qq.dim_pad;
    const std::uint32_t n_segments = qq.dim_pad / 4;
    luts.tables.assign(std::size_t{16} * n_segments, 0);
    luts.tables8.assign(std::size_t{16} * n_segments, 0);
    for (std::uint32_t s = 0; s < n_segments; ++s) {
        std::uint16_t* t = luts.tables.data() + std::size_t{16} * s;
        for (std::uint32_t pattern = 1; pattern < 16; ++pattern) {
            const std::uint32_t low = pattern & (pattern - 1);
            const std::uint32_t k = std::countr_zero(pattern);
            t[pattern] = static_cast<std::uint16_t>(t[low] + qq.qu[s * 4 + k]);
        }
        for (std::uint32_t pattern = 0; pattern < 16; ++pattern) {
            luts.tables8[std::size_t{16} * s + pattern] =
                static_cast<std::uint8_t>(t[pattern]);
        }
    }
    return luts;
}

// Reference implementation; the contract all other paths must match.
inline std::array<std::uint16_t, kBlockSize>
scan_block_scalar(const PackedCodeBlock& block, const QueryLuts& luts) {
    if (block.dim_pad != luts.dim_pad) {
        throw dim_error("scan_block: block and tables disagree on dimension");
    }
    std::array<std::uint16_t, kBlockSize> acc{};
    const std::uint32_t n_segments = block.dim_pad / 4;
    for (std::uint32_t s = 0; s < n_segments; ++s) {
        const std::uint8_t* bytes = block.bytes.data() + std::size_t{16} * s;
        const std::uint16_t* table = luts.tables.data() + std::size_t{16} * s;
        for (std::uint32_t j = 0; j < 16; ++j) {
            acc[2 * j] = static_cast<std::uint16_t>(acc[2 * j] + table[bytes[j] & 0xFu]);
            acc[2 * j + 1] =
                static_cast<std::uint16_t>(acc[2 * j + 1] + table[bytes[j] >> 4]);
        }
    }
    return acc;
}

#ifdef RABITQ_FASTSCAN_AVX2
inline std::array<std::uint16_t, kBlockSize>
scan_block_avx2(const PackedCodeBlock& block, const QueryLuts& luts) {
    if (block.dim_pad != luts.dim_pad) {
        throw dim_error("scan_block: block and tables disagree on dimension");
    }
    const __m128i nibble_mask = _mm_set1_epi8(0x0F);
    __m256i acc_even = _mm256_setzero_si256();
    __m256i acc_odd = _mm256_setzero_si256();
    const std::uint32_t n_segments = block.dim_pad / 4;
    for (std::uint32_t s = 0; s < n_segments; ++s) {
        const __m128i packed = _mm_loadu_si128(
            reinterpret_cast<const __m128i*>(block.bytes.data() + std::size_t{16} * s));
        const __m128i table = _mm_loadu_si128(
            reinterpret_cast<const __m128i*>(luts.tables8.data() + std::size_t{16} * s));
        const __m128i lo = _mm_and_si128(packed, nibble_mask);
        const __m128i hi = _mm_and_si128(_mm_srli_epi16(packed, 4), nibble_mask);
        // Byte lookups stay exact because entries are <= 60; widening to 16
        // bits before accumulating rules out wrap-around up to dim 4096.
        acc_even = _mm256_add_epi16(acc_even,
                                    _mm256_cvtepu8_epi16(_mm_shuffle_epi8(table, lo)));
        acc_odd = _mm256_add_epi16(acc_odd,
                                   _mm256_cvtepu8_epi16(_mm_shuffle_epi8(table, hi)));
    }
    alignas(32) std::uint16_t even[16], odd[16];
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(even), acc_even);
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(odd), acc_odd);
    std::array<std::uint16_t, kBlockSize> acc{};
    for (std::uint32_t j = 0; j < 16; ++j) {
        acc[2 * j] = even[j];
        acc[2 * j + 1] = odd[j];
    }
    return acc;
}
#endif

inline std::array<std::uint16_t, kBlockSize>
scan_block(const PackedCodeBlock& block, const QueryLuts& luts) {
#ifdef RABITQ_FASTSCAN_AVX2
    return scan_block_avx2(block, luts);
#else
    return scan_block_scalar(block, luts);
#endif
}

}  // namespace rabitq
