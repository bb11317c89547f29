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
#include <cstring>
#include <fstream>
#include <limits>
#include <queue>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "rabitq/common.hpp"
#include "rabitq/estimator.hpp"
#include "rabitq/fastscan.hpp"
#include "rabitq/kmeans.hpp"
#include "rabitq/quantizer.hpp"
#include "rabitq/rng.hpp"
#include "rabitq/rotator.hpp"
#include "rabitq/vec.hpp"

namespace rabitq {

enum class KernelMode { batch, single };

struct SearchStats {
    std::uint64_t codes_scanned = 0;
    std::uint64_t exact_reranks = 0;
    std::uint64_t clusters_probed = 0;
};

struct SearchResult {
    std::vector<std::uint32_t> ids;   // ascending by exact distance
    std::vector<double> sq_dists;
    bool truncated = false;           // fewer than K candidates were available
    SearchStats stats;
};

// Power-of-two cluster count near 4 * sqrt(n); the scale rule used when the
// caller does not pick one.
inline std::uint32_t
default_n_clusters(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("default_n_clusters: empty dataset");
    }
    const double target = 4.0 * std::sqrt(static_cast<double>(n));
    std::uint32_t k = 1;
    while (2.0 * k <= target) {
        k *= 2;
    }
    // k <= target < 2k; round to the nearer of the two in log scale.
    if (static_cast<double>(target) / k > std::sqrt(2.0) && 2ull * k <= n) {
        k *= 2;
    }
    return std::min<std::uint32_t>(k, static_cast<std::uint32_t>(std::min<std::size_t>(
                                          n, std::numeric_limits<std::uint32_t>::max())));
}

class IvfIndex {
  public:
    struct Cluster {
        std::vector<std::uint32_t> ids;
        ClusterCodes codes;                  // codes + metas, storage order
        std::vector<PackedCodeBlock> blocks; // same codes, 32 a block
    };

    IvfIndex(std::uint32_t dim, std::uint32_t n_clusters, std::uint32_t bq,
             float epsilon0, std::uint64_t seed)
        : dim_(dim),
          dim_pad_(padded_dim(dim)),
          n_clusters_(n_clusters),
          bq_(bq),
          epsilon0_(epsilon0),
          seed_(seed),
          rotator_(padded_dim(dim), seed) {}

    std::uint32_t dim() const noexcept { return dim_; }
    std::uint32_t dim_pad() const noexcept { return dim_pad_; }
    std::uint32_t n_clusters() const noexcept { return n_clusters_; }
    std::uint32_t bq() const noexcept { return bq_; }
    float epsilon0() const noexcept { return epsilon0_; }
    std::uint64_t seed() const noexcept { return seed_; }
    std::size_t size() const noexcept { return n_; }
    const Rotator& rotator() const noexcept { return rotator_; }
    const std::vector<Cluster>& clusters() const noexcept { return clusters_; }

    std::span<const float>
    centroid(std::uint32_t j) const {
        return {centroids_.data() + std::size_t{j} * dim_, dim_};
    }

    std::span<const float>
    rotated_centroid(std::uint32_t j) const {
        return {rotated_centroids_.data() + std::size_t{j} * dim_pad_, dim_pad_};
    }

    std::span<const float>
    vector(std::uint32_t id) const {
        return {raw_vectors_.data() + std::size_t{id} * dim_, dim_};
    }

    SearchResult
    search(std::span<const float> query, std::uint32_t n_probe, std::uint32_t k,
           SplitMix64& rng, double eps0, KernelMode mode = KernelMode::batch) const {
        if (query.size() != dim_) {
            throw dim_error("search: query has dimension " +
                            std::to_string(query.size()) + ", index expects " +
                            std::to_string(dim_));
        }
        if (n_probe == 0 || n_probe > n_clusters_) {
            throw std::invalid_argument("search: n_probe must be in [1, n_clusters]");
        }
        if (k == 0) {
            throw std::invalid_argument("search: k must be positive");
        }
        if (mode == KernelMode::batch && !fastscan_supported(dim_pad_, bq_)) {
            throw std::invalid_argument(
                "search: batch kernel needs B_q <= 4 and padded dim <= 4096");
        }
        detail::check_finite(query, "search");

        auto rq = rotator_.rotate_inverse(pad(query).values);

        std::vector<std::pair<double, std::uint32_t>> order(n_clusters_);
        for (std::uint32_t j = 0; j < n_clusters_; ++j) {
            order[j] = {l2_sq(query, centroid(j)), j};
        }
        std::sort(order.begin(), order.end());

        // Exact distances of survivors, worst on top; the re-rank threshold
        // is the pool's worst member once it holds k of them.
        std::priority_queue<std::pair<double, std::uint32_t>> pool;
        SearchResult out;

        auto consider = [&](const VectorMeta& meta, const QuantizedQuery& qq,
                            std::uint32_t raw, std::uint32_t id) {
            auto est = estimate_from_raw(meta, qq, raw, eps0);
            if (pool.size() >= k && est.lower_bound_sq_dist > pool.top().first) {
                return;
            }
            double exact = l2_sq(query, vector(id));
            ++out.stats.exact_reranks;
            pool.emplace(exact, id);
            if (pool.size() > k) {
                pool.pop();
            }
        };

        for (std::uint32_t p = 0; p < n_probe; ++p) {
            const std::uint32_t j = order[p].second;
            const Cluster& cl = clusters_[j];
            ++out.stats.clusters_probed;
            if (cl.ids.empty()) {
                continue;
            }
            auto qq = prepare_query(query, centroid(j), rotated_centroid(j), rq,
                                    bq_, rng);
            out.stats.codes_scanned += cl.ids.size();
            if (mode == KernelMode::batch) {
                auto luts = build_luts(qq);
                for (const auto& block : cl.blocks) {
                    auto raws = scan_block(block, luts);
                    const std::size_t base = &block - cl.blocks.data();
                    for (std::uint32_t s = 0; s < block.count; ++s) {
                        const std::size_t i = base * kBlockSize + s;
                        consider(cl.codes.metas[i], qq, raws[s], block.ids[s]);
                    }
                }
            } else {
                for (std::size_t i = 0; i < cl.ids.size(); ++i) {
                    auto r = ip_code_query(cl.codes.code(i), qq);
                    consider(cl.codes.metas[i], qq, r.raw, cl.ids[i]);
                }
            }
        }

        out.ids.resize(pool.size());
        out.sq_dists.resize(pool.size());
        for (std::size_t i = pool.size(); i-- > 0;) {
            out.ids[i] = pool.top().second;
            out.sq_dists[i] = pool.top().first;
            pool.pop();
        }
        out.truncated = out.ids.size() < k;
        return out;
    }

    SearchResult
    search(std::span<const float> query, std::uint32_t n_probe, std::uint32_t k,
           SplitMix64& rng) const {
        return search(query, n_probe, k, rng, epsilon0_,
                      fastscan_supported(dim_pad_, bq_) ? KernelMode::batch
                                                        : KernelMode::single);
    }

    void save(const std::string& path) const;

  private:
    friend IvfIndex build_index(const float* data, std::size_t n, std::size_t dim,
                                std::uint32_t n_clusters, std::uint64_t seed,
                                std::uint32_t bq, float epsilon0);
    friend IvfIndex load_index(const std::string& path);

    void
    finish_clusters() {
        rotated_centroids_.resize(std::size_t{n_clusters_} * dim_pad_);
        for (std::uint32_t j = 0; j < n_clusters_; ++j) {
            auto rc = rotator_.rotate_inverse(pad(centroid(j)).values);
            std::copy(rc.begin(), rc.end(),
                      rotated_centroids_.begin() + std::size_t{j} * dim_pad_);
        }
        for (auto& cl : clusters_) {
            cl.blocks.clear();
            const std::size_t wpc = cl.codes.words_per_code();
            for (std::size_t b = 0; b * kBlockSize < cl.ids.size(); ++b) {
                const std::size_t lo = b * kBlockSize;
                const std::size_t hi = std::min(cl.ids.size(), lo + kBlockSize);
                cl.blocks.push_back(pack_block_words(
                    dim_pad_,
                    std::span<const std::uint64_t>(cl.codes.words.data() + lo * wpc,
                                                   (hi - lo) * wpc),
                    std::span<const std::uint32_t>(cl.ids.data() + lo, hi - lo)));
            }
        }
    }

    std::uint32_t dim_;
    std::uint32_t dim_pad_;
    std::uint32_t n_clusters_;
    std::uint32_t bq_;
    float epsilon0_;
    std::uint64_t seed_;
    std::size_t n_ = 0;
    Rotator rotator_;
    std::vector<float> centroids_;          // n_clusters x dim
    std::vector<float> rotated_centroids_;  // n_clusters x dim_pad
    std::vector<Cluster> clusters_;
    std::vector<float> raw_vectors_;        // n x dim, id order
};

inline IvfIndex
build_index(const float* data, std::size_t n, std::size_t dim,
            std::uint32_t n_clusters, std::uint64_t seed,
            std::uint32_t bq = kDefaultBq, float epsilon0 = kDefaultEpsilon0) {
    if (data == nullptr || n == 0 || dim == 0) {
        throw std::invalid_argument("build_index: empty dataset");
    }
    if (n_clusters == 0 || n_clusters > n) {
        throw std::invalid_argument("build_index: n_clusters must be in [1, n]");
    }
    if (bq < 1 || bq > 8) {
        throw std::invalid_argument("build_index: B_q must be in [1, 8]");
    }
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < dim; ++t) {
            if (!std::isfinite(data[i * dim + t])) {
                throw std::invalid_argument("build_index: vector " + std::to_string(i) +
                                            ": non-finite value");
            }
        }
    }

    IvfIndex index(static_cast<std::uint32_t>(dim), n_clusters, bq, epsilon0, seed);
    index.n_ = n;
    index.raw_vectors_.assign(data, data + n * dim);

    auto km = kmeans(data, n, dim, n_clusters,
                     SplitMix64::stream(seed, 1).next_u64());
    index.centroids_ = std::move(km.centroids);

    index.clusters_.resize(n_clusters);
    for (std::size_t i = 0; i < n; ++i) {
        index.clusters_[km.assignments[i]].ids.push_back(
            static_cast<std::uint32_t>(i));
    }
    std::vector<float> members;
    for (std::uint32_t j = 0; j < n_clusters; ++j) {
        auto& cl = index.clusters_[j];
        members.resize(cl.ids.size() * dim);
        for (std::size_t i = 0; i < cl.ids.size(); ++i) {
            std::copy(data + std::size_t{cl.ids[i]} * dim,
                      data + (std::size_t{cl.ids[i]} + 1) * dim,
                      members.begin() + i * dim);
        }
        cl.codes = quantize_dataset(members.data(), cl.ids.size(), dim,
                                    index.centroid(j), index.rotator_);
    }
    index.finish_clusters();
    return index;
}

namespace detail {

inline constexpr char kIndexMagic[4] = {'R', 'B', 'Q', '1'};
inline constexpr std::uint32_t kIndexVersion = 1;

class ChecksumWriter {
  public:
    explicit ChecksumWriter(const std::string& path)
        : out_(path, std::ios::binary) {
        if (!out_) {
            throw io_error("cannot open for writing: " + path);
        }
    }

    void
    bytes(const void* p, std::size_t size) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(size));
        hash_.update(p, size);
    }

    template <typename T>
    void
    put(T v) {
        bytes(&v, sizeof(T));
    }

    void
    finish() {
        std::uint64_t digest = hash_.digest();
        out_.write(reinterpret_cast<const char*>(&digest), sizeof(digest));
        out_.flush();
        if (!out_) {
            throw io_error("write failed");
        }
    }

  private:
    std::ofstream out_;
    Fnv1a64 hash_;
};

class ChecksumReader {
  public:
    explicit ChecksumReader(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) {
            throw io_error("cannot open for reading: " + path);
        }
        in.seekg(0, std::ios::end);
        buf_.resize(static_cast<std::size_t>(in.tellg()));
        in.seekg(0);
        in.read(reinterpret_cast<char*>(buf_.data()),
                static_cast<std::streamsize>(buf_.size()));
        if (!in) {
            throw io_error("read failed: " + path);
        }
        if (buf_.size() < sizeof(std::uint64_t)) {
            throw format_error(format_fault::truncated, "file shorter than a checksum");
        }
        payload_ = buf_.size() - sizeof(std::uint64_t);
    }

    void
    bytes(void* p, std::size_t size) {
        if (pos_ + size > payload_) {
            throw format_error(format_fault::truncated,
                               "record at byte " + std::to_string(pos_) +
                                   " runs past the end of the file");
        }
        std::memcpy(p, buf_.data() + pos_, size);
        pos_ += size;
    }

    template <typename T>
    T
    get() {
        T v;
        bytes(&v, sizeof(T));
        return v;
    }

    void
    verify_checksum() const {
        Fnv1a64 hash;
        hash.update(buf_.data(), payload_);
        std::uint64_t stored;
        std::memcpy(&stored, buf_.data() + payload_, sizeof(stored));
        if (hash.digest() != stored) {
            throw format_error(format_fault::checksum_mismatch,
                               "stored checksum does not match file contents");
        }
    }

  private:
    std::vector<std::uint8_t> buf_;
    std::size_t payload_ = 0;
    std::size_t pos_ = 0;
};

}  // namespace detail

inline void
IvfIndex::save(const std::string& path) const {
    detail::ChecksumWriter w(path);
    w.bytes(detail::kIndexMagic, sizeof(detail::kIndexMagic));
    w.put<std::uint32_t>(detail::kIndexVersion);
    w.put<std::uint32_t>(dim_);
    w.put<std::uint32_t>(dim_pad_);
    w.put<std::uint32_t>(n_clusters_);
    w.put<std::uint32_t>(bq_);
    w.put<float>(epsilon0_);
    w.put<std::uint64_t>(seed_);
    w.put<std::uint64_t>(n_);
    w.bytes(centroids_.data(), centroids_.size() * sizeof(float));
    for (const auto& cl : clusters_) {
        w.put<std::uint64_t>(cl.ids.size());
        w.bytes(cl.ids.data(), cl.ids.size() * sizeof(std::uint32_t));
        for (const auto& m : cl.codes.metas) {
            w.put<float>(m.dist_to_centroid);
            w.put<float>(m.ip_quantized);
            w.put<std::uint32_t>(m.code_popcount);
            w.put<std::uint8_t>(m.degenerate ? 1 : 0);
        }
        for (const auto& block : cl.blocks) {
            w.bytes(block.bytes.data(), block.bytes.size());
        }
    }
    w.bytes(raw_vectors_.data(), raw_vectors_.size() * sizeof(float));
    w.finish();
}

inline IvfIndex
load_index(const std::string& path) {
    detail::ChecksumReader r(path);
    char magic[4];
    r.bytes(magic, sizeof(magic));
    if (std::memcmp(magic, detail::kIndexMagic, sizeof(magic)) != 0) {
        throw format_error(format_fault::bad_magic, "not an index file");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != detail::kIndexVersion) {
        throw format_error(format_fault::bad_version,
                           "unsupported index version " + std::to_string(version));
    }
    const auto dim = r.get<std::uint32_t>();
    const auto dim_pad = r.get<std::uint32_t>();
    const auto n_clusters = r.get<std::uint32_t>();
    const auto bq = r.get<std::uint32_t>();
    const auto epsilon0 = r.get<float>();
    const auto seed = r.get<std::uint64_t>();
    const auto n = r.get<std::uint64_t>();
    if (dim == 0 || n_clusters == 0 || bq < 1 || bq > 8 ||
        dim_pad != padded_dim(dim) || n == 0 ||
        !(epsilon0 >= 0.0f) || n_clusters > n) {
        throw format_error(format_fault::bad_header, "header fields are inconsistent");
    }

    IvfIndex index(dim, n_clusters, bq, epsilon0, seed);
    index.n_ = n;
    index.centroids_.resize(std::size_t{n_clusters} * dim);
    r.bytes(index.centroids_.data(), index.centroids_.size() * sizeof(float));

    const std::size_t wpc = dim_pad / 64;
    index.clusters_.resize(n_clusters);
    std::uint64_t total = 0;
    for (auto& cl : index.clusters_) {
        const auto count = r.get<std::uint64_t>();
        if (count > n || total + count > n) {
            throw format_error(format_fault::bad_header,
                               "cluster sizes exceed the dataset size");
        }
        total += count;
        cl.ids.resize(count);
        r.bytes(cl.ids.data(), count * sizeof(std::uint32_t));
        for (auto id : cl.ids) {
            if (id >= n) {
                throw format_error(format_fault::bad_header, "vector id out of range");
            }
        }
        cl.codes.dim_pad = dim_pad;
        cl.codes.count = count;
        cl.codes.metas.resize(count);
        for (auto& m : cl.codes.metas) {
            m.dist_to_centroid = r.get<float>();
            m.ip_quantized = r.get<float>();
            m.code_popcount = r.get<std::uint32_t>();
            m.degenerate = r.get<std::uint8_t>() != 0;
        }
        cl.codes.words.assign(count * wpc, 0);
        for (std::size_t b = 0; b * kBlockSize < count; ++b) {
            PackedCodeBlock block;
            block.dim_pad = dim_pad;
            const std::size_t lo = b * kBlockSize;
            block.count = static_cast<std::uint32_t>(
                std::min<std::size_t>(kBlockSize, count - lo));
            block.bytes.resize(block.expected_bytes());
            r.bytes(block.bytes.data(), block.bytes.size());
            for (std::uint32_t s = 0; s < block.count; ++s) {
                block.ids[s] = cl.ids[lo + s];
            }
            auto codes = unpack_block(block);
            for (std::uint32_t s = 0; s < block.count; ++s) {
                auto words = codes[s].words();
                std::copy(words.begin(), words.end(),
                          cl.codes.words.begin() + (lo + s) * wpc);
            }
            cl.blocks.push_back(std::move(block));
        }
    }
    if (total != n) {
        throw format_error(format_fault::bad_header,
                           "cluster sizes do not sum to the dataset size");
    }
    index.raw_vectors_.resize(std::size_t{n} * dim);
    r.bytes(index.raw_vectors_.data(), index.raw_vectors_.size() * sizeof(float));
    r.verify_checksum();

    index.rotated_centroids_.resize(std::size_t{n_clusters} * dim_pad);
    for (std::uint32_t j = 0; j < n_clusters; ++j) {
        auto rc = index.rotator_.rotate_inverse(pad(index.centroid(j)).values);
        std::copy(rc.begin(), rc.end(),
                  index.rotated_centroids_.begin() + std::size_t{j} * dim_pad);
    }
    return index;
}

}  // namespace rabitq
