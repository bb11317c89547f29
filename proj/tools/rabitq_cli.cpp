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

#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "rabitq/experiments.hpp"
#include "rabitq/io.hpp"
#include "rabitq/ivf.hpp"
#include "rabitq/metrics.hpp"
#include "rabitq/parallel.hpp"
#include "rabitq/synthetic.hpp"

namespace {

using namespace rabitq;

// Exit codes, one per failure category, so scripts can branch on them.
constexpr int kExitOk = 0;
constexpr int kExitError = 1;      // unexpected
constexpr int kExitUsage = 2;      // bad flags or bad argument ranges
constexpr int kExitMissing = 3;    // file cannot be opened or written
constexpr int kExitMalformed = 4;  // file opened but contents are broken
constexpr int kExitDim = 5;        // inputs disagree on dimensionality
constexpr int kExitVersion = 6;    // index format version unsupported
constexpr int kExitChecksum = 7;   // index checksum mismatch

// Line-delimited key=value records, appended to a file or stdout.
class RecordSink {
  public:
    explicit RecordSink(const std::string& path) {
        if (!path.empty()) {
            file_.open(path, std::ios::app);
            if (!file_) {
                throw io_error("cannot open output file " + path);
            }
        }
    }

    std::ostream&
    line() {
        return file_.is_open() ? file_ : std::cout;
    }

  private:
    std::ofstream file_;
};

std::string
fmt(double v) {
    std::ostringstream ss;
    ss.precision(10);
    ss << v;
    return ss.str();
}

struct BuildArgs {
    std::string data, out;
    std::uint32_t clusters = 0;  // 0 means pick from the dataset size
    std::uint64_t seed = 42;
    std::uint32_t bq = kDefaultBq;
    double epsilon0 = kDefaultEpsilon0;
};

int
run_build(const BuildArgs& a) {
    auto data = read_fvecs(a.data);
    std::uint32_t clusters = a.clusters != 0
                                 ? a.clusters
                                 : default_n_clusters(data.n);
    auto index = build_index(data.values.data(), data.n, data.dim, clusters, a.seed,
                             a.bq, static_cast<float>(a.epsilon0));
    index.save(a.out);
    std::cout << "metric=build n=" << data.n << " dim=" << data.dim
              << " clusters=" << clusters << " seed=" << a.seed << " bq=" << a.bq
              << " epsilon0=" << fmt(a.epsilon0) << " out=" << a.out << "\n";
    return kExitOk;
}

struct QueryArgs {
    std::string index, queries, gt, out, kernel = "auto";
    std::uint32_t nprobe = 16;
    std::uint32_t k = 100;
    double epsilon0 = std::numeric_limits<double>::quiet_NaN();  // NaN: use index's
    unsigned threads = 1;
    std::uint64_t seed = 42;
};

int
run_query(const QueryArgs& a) {
    auto index = load_index(a.index);
    auto queries = read_fvecs(a.queries);
    if (queries.n == 0) {
        throw std::invalid_argument("query file holds no vectors");
    }
    if (queries.dim != index.dim()) {
        throw dim_error("queries have dimension " + std::to_string(queries.dim) +
                        ", index expects " + std::to_string(index.dim()));
    }
    double eps = std::isnan(a.epsilon0) ? index.epsilon0() : a.epsilon0;
    KernelMode mode;
    if (a.kernel == "batch") {
        mode = KernelMode::batch;
    } else if (a.kernel == "single") {
        mode = KernelMode::single;
    } else {
        mode = fastscan_supported(index.dim_pad(), index.bq()) ? KernelMode::batch
                                                               : KernelMode::single;
    }

    std::vector<SearchResult> results(queries.n);
    std::vector<double> micros(queries.n);
    parallel_for(queries.n, a.threads, [&](std::size_t begin, std::size_t end) {
        for (std::size_t qi = begin; qi < end; ++qi) {
            SplitMix64 rng = SplitMix64::stream(a.seed, qi);
            auto t0 = std::chrono::steady_clock::now();
            results[qi] = index.search({queries.row(qi).data(), queries.dim},
                                       a.nprobe, a.k, rng, eps, mode);
            auto t1 = std::chrono::steady_clock::now();
            micros[qi] =
                std::chrono::duration<double, std::micro>(t1 - t0).count();
        }
    });

    RecordSink sink(a.out);
    double total_us = 0.0, reranks = 0.0, scanned = 0.0;
    for (std::size_t qi = 0; qi < queries.n; ++qi) {
        const auto& r = results[qi];
        auto& os = sink.line();
        os << "metric=result query=" << qi << " neighbors=";
        for (std::size_t i = 0; i < r.ids.size(); ++i) {
            os << (i ? "," : "") << r.ids[i] << ':' << fmt(r.sq_dists[i]);
        }
        os << "\n";
        total_us += micros[qi];
        reranks += static_cast<double>(r.stats.exact_reranks);
        scanned += static_cast<double>(r.stats.codes_scanned);
    }

    if (!a.gt.empty()) {
        auto gt = read_ivecs(a.gt);
        if (gt.n != queries.n) {
            throw std::invalid_argument("ground truth has " + std::to_string(gt.n) +
                                        " rows for " + std::to_string(queries.n) +
                                        " queries");
        }
        if (gt.dim < a.k) {
            throw std::invalid_argument("ground truth holds fewer than K ids");
        }
        std::vector<std::vector<std::uint32_t>> res_ids(queries.n), gt_ids(queries.n);
        std::vector<std::vector<double>> res_d(queries.n), gt_d(queries.n);
        for (std::size_t qi = 0; qi < queries.n; ++qi) {
            res_ids[qi] = results[qi].ids;
            res_d[qi] = results[qi].sq_dists;
            for (std::uint32_t i = 0; i < a.k; ++i) {
                auto id = static_cast<std::uint32_t>(gt.row(qi)[i]);
                gt_ids[qi].push_back(id);
                gt_d[qi].push_back(
                    l2_sq({queries.row(qi).data(), queries.dim}, index.vector(id)));
            }
        }
        sink.line() << "metric=recall k=" << a.k << " nprobe=" << a.nprobe
                    << " epsilon0=" << fmt(eps)
                    << " value=" << fmt(recall_at_k(res_ids, gt_ids, a.k)) << "\n";
        bool full = true;
        for (const auto& r : res_d) {
            full = full && r.size() >= a.k;
        }
        if (full) {
            try {
                sink.line() << "metric=avg_distance_ratio k=" << a.k << " value="
                            << fmt(average_distance_ratio(res_d, gt_d, a.k)) << "\n";
            } catch (const std::invalid_argument&) {
                // Zero true distances make the ratio undefined; skip the record.
            }
        }
    }

    auto n = static_cast<double>(queries.n);
    sink.line() << "metric=mean_query_us value=" << fmt(total_us / n)
                << " nprobe=" << a.nprobe << " k=" << a.k << " threads=" << a.threads
                << " kernel=" << a.kernel << "\n";
    sink.line() << "metric=mean_reranks value=" << fmt(reranks / n) << "\n";
    sink.line() << "metric=mean_codes_scanned value=" << fmt(scanned / n) << "\n";
    return kExitOk;
}

struct GroundtruthArgs {
    std::string data, queries, out, dists_out;
    std::uint32_t k = 100;
};

int
run_groundtruth(const GroundtruthArgs& a) {
    auto data = read_fvecs(a.data);
    auto queries = read_fvecs(a.queries);
    if (queries.dim != data.dim) {
        throw dim_error("queries have dimension " + std::to_string(queries.dim) +
                        ", data has " + std::to_string(data.dim));
    }
    std::vector<std::vector<double>> dists;
    auto ids = brute_force_topk(data.values.data(), data.n, data.dim,
                                queries.values.data(), queries.n, a.k,
                                a.dists_out.empty() ? nullptr : &dists);
    std::vector<std::int32_t> flat(queries.n * a.k);
    for (std::size_t qi = 0; qi < queries.n; ++qi) {
        for (std::uint32_t i = 0; i < a.k; ++i) {
            flat[qi * a.k + i] = static_cast<std::int32_t>(ids[qi][i]);
        }
    }
    write_ivecs(a.out, flat.data(), queries.n, a.k);
    if (!a.dists_out.empty()) {
        std::vector<float> fd(queries.n * a.k);
        for (std::size_t qi = 0; qi < queries.n; ++qi) {
            for (std::uint32_t i = 0; i < a.k; ++i) {
                fd[qi * a.k + i] = static_cast<float>(dists[qi][i]);
            }
        }
        write_fvecs(a.dists_out, fd.data(), queries.n, a.k);
    }
    std::cout << "metric=groundtruth queries=" << queries.n << " k=" << a.k
              << " out=" << a.out << "\n";
    return kExitOk;
}

struct SynthArgs {
    std::string kind, out, queries_out;
    std::size_t n = 10000;
    std::size_t dim = 128;
    std::size_t blobs = 64;
    std::size_t m = 150;
    std::size_t nq = 200;
    std::size_t kref = 100;
    double beta = 0.45;
    double center_sigma = 40.0;
    double blob_sigma = 1.0;
    std::uint64_t seed = 42;
};

int
run_synth(const SynthArgs& a) {
    if (a.kind == "sphere") {
        auto data = sphere_uniform(a.n, a.dim, a.seed);
        write_fvecs(a.out, data.data(), a.n, a.dim);
        std::cout << "metric=synth kind=sphere n=" << a.n << " dim=" << a.dim
                  << " out=" << a.out << "\n";
    } else if (a.kind == "blobs") {
        auto data = gaussian_blobs(a.n, a.dim, a.blobs, a.center_sigma, a.blob_sigma,
                                   a.seed);
        write_fvecs(a.out, data.data.data(), a.n, a.dim);
        std::cout << "metric=synth kind=blobs n=" << a.n << " dim=" << a.dim
                  << " blobs=" << a.blobs << " out=" << a.out << "\n";
    } else {  // planted; the flag validator restricts the choices
        if (a.queries_out.empty()) {
            throw std::invalid_argument("planted data needs --queries-out");
        }
        auto pl = planted_neighborhoods(a.nq, a.m, a.dim, a.kref, a.beta, a.seed);
        write_fvecs(a.out, pl.data.data(), pl.n, a.dim);
        write_fvecs(a.queries_out, pl.queries.data(), a.nq, a.dim);
        std::cout << "metric=synth kind=planted n=" << pl.n << " dim=" << a.dim
                  << " queries=" << a.nq << " m=" << a.m << " delta=" << fmt(pl.delta)
                  << " out=" << a.out << "\n";
    }
    return kExitOk;
}

struct VerifyArgs {
    std::string experiment, out;
    std::size_t dim = 128;
    std::size_t samples = 0;  // 0 means the experiment's default
    std::uint64_t seed = 42;
};

int
run_verify(const VerifyArgs& a) {
    RecordSink sink(a.out);
    if (a.experiment == "unbiasedness") {
        std::size_t pairs = a.samples ? a.samples : 200000;
        struct Row {
            const char* name;
            EstimatorKind kind;
        } rows[] = {{"unbiased", EstimatorKind::unbiased},
                    {"biased_fixture", EstimatorKind::biased_fixture},
                    {"oracle", EstimatorKind::oracle}};
        for (const auto& row : rows) {
            auto r = verify_unbiasedness(pairs, a.dim, a.seed, row.kind);
            sink.line() << "metric=unbiasedness kind=" << row.name << " dim=" << a.dim
                        << " pairs=" << r.fit.n << " slope=" << fmt(r.fit.slope)
                        << " intercept=" << fmt(r.fit.intercept) << "\n";
        }
    } else if (a.experiment == "concentration") {
        std::size_t samples = a.samples ? a.samples : 10000;
        auto rep = verify_concentration(a.dim, samples, a.seed);
        sink.line() << "metric=concentration dim=" << a.dim << " samples=" << rep.n
                    << " mean_ip=" << fmt(rep.mean_ip)
                    << " analytic_mean=" << fmt(rep.analytic_mean)
                    << " std_ip=" << fmt(rep.std_ip)
                    << " mean_e1=" << fmt(rep.mean_e1) << " ks=" << fmt(rep.ks)
                    << " ks_critical=" << fmt(rep.ks_critical) << "\n";
    } else if (a.experiment == "epsilon-sweep") {
        std::size_t n = a.samples ? a.samples : 30000;
        std::size_t m = 150;
        std::size_t nq = std::max<std::size_t>(1, n / m);
        auto pl = planted_neighborhoods(nq, m, a.dim, std::min<std::size_t>(100, m),
                                        0.45, a.seed);
        std::uint32_t clusters = default_n_clusters(pl.n);
        std::uint32_t k = static_cast<std::uint32_t>(std::min<std::size_t>(100, m));
        const double inf = std::numeric_limits<double>::infinity();
        std::vector<double> grid{0.0, 0.5, 1.0, 1.5, 1.9, 2.5, 4.0, inf};
        auto sweep = sweep_epsilon0(pl.data.data(), pl.n, a.dim, pl.queries.data(),
                                    nq, clusters, clusters, k, grid, a.seed);
        for (const auto& p : sweep.points) {
            sink.line() << "metric=epsilon_sweep epsilon0=" << fmt(p.epsilon0)
                        << " recall=" << fmt(p.recall)
                        << " nn_rate=" << fmt(p.nn_rate)
                        << " avg_reranks=" << fmt(p.avg_reranks) << " k=" << k
                        << " n=" << pl.n << " queries=" << nq << "\n";
        }
    } else if (a.experiment == "bq-sweep") {
        std::size_t pairs = a.samples ? a.samples : 100000;
        auto data = sphere_uniform(2000, a.dim, SplitMix64::stream(a.seed, 1).next_u64());
        auto queries =
            sphere_uniform(200, a.dim, SplitMix64::stream(a.seed, 2).next_u64());
        auto sweep = sweep_bq(data.data(), 2000, a.dim, queries.data(), 200, pairs,
                              a.seed);
        for (const auto& p : sweep.points) {
            sink.line() << "metric=bq_sweep bq=" << p.bq << " dim=" << a.dim
                        << " pairs=" << pairs
                        << " avg_rel_error=" << fmt(p.avg_rel_error)
                        << " max_rel_error=" << fmt(p.max_rel_error) << "\n";
        }
        sink.line() << "metric=bq_sweep bq=oracle dim=" << a.dim << " pairs=" << pairs
                    << " avg_rel_error=" << fmt(sweep.oracle_avg_rel_error) << "\n";
    } else {  // entropy; the flag validator restricts the choices
        std::size_t n = a.samples ? a.samples : 20000;
        auto blobs = gaussian_blobs(n, a.dim, 64, 40.0, 1.0, a.seed);
        auto index = build_index(blobs.data.data(), n, a.dim, default_n_clusters(n),
                                 a.seed);
        BitEntropyAccumulator acc;
        for (const auto& cl : index.clusters()) {
            if (cl.codes.count > 0) {
                acc.add(cl.codes);
            }
        }
        sink.line() << "metric=bit_entropy dim=" << a.dim << " n=" << n
                    << " clusters=" << index.n_clusters()
                    << " value=" << fmt(acc.mean_entropy()) << "\n";
    }
    return kExitOk;
}

}  // namespace

int
main(int argc, char** argv) {
    CLI::App app{"RaBitQ: binary quantization codes with an IVF index and a "
                 "statistical verification harness"};
    app.require_subcommand(1);

    BuildArgs b;
    auto* build = app.add_subcommand("build", "Cluster a dataset and write an index");
    build->add_option("--data", b.data, "Input fvecs file")->required();
    build->add_option("--out", b.out, "Output index path")->required();
    build->add_option("--clusters", b.clusters, "Cluster count (0 picks ~4*sqrt(n))");
    build->add_option("--seed", b.seed, "Random seed");
    build->add_option("--bq", b.bq, "Query quantization bits")
        ->check(CLI::Range(1, 8));
    build->add_option("--epsilon0", b.epsilon0, "Error bound multiplier")
        ->check(CLI::NonNegativeNumber);

    QueryArgs q;
    auto* query = app.add_subcommand("query", "Search an index and report metrics");
    query->add_option("--index", q.index, "Index path")->required();
    query->add_option("--queries", q.queries, "Query fvecs file")->required();
    query->add_option("--gt", q.gt, "Ground-truth ivecs file (enables recall)");
    query->add_option("--out", q.out, "Record output path (default stdout)");
    query->add_option("--nprobe", q.nprobe, "Clusters to probe")
        ->check(CLI::PositiveNumber);
    query->add_option("--k", q.k, "Neighbors to return")->check(CLI::PositiveNumber);
    query->add_option("--epsilon0", q.epsilon0,
                      "Error bound multiplier (default: the index's)");
    query->add_option("--threads", q.threads, "Worker threads (default 1)");
    query->add_option("--seed", q.seed, "Seed for query-side randomized rounding");
    query->add_option("--kernel", q.kernel, "Scan kernel")
        ->check(CLI::IsMember({"auto", "batch", "single"}));

    GroundtruthArgs g;
    auto* gt = app.add_subcommand("groundtruth", "Exact top-K by brute force");
    gt->add_option("--data", g.data, "Input fvecs file")->required();
    gt->add_option("--queries", g.queries, "Query fvecs file")->required();
    gt->add_option("--out", g.out, "Output ivecs path")->required();
    gt->add_option("--dists-out", g.dists_out, "Optional fvecs of true distances");
    gt->add_option("--k", g.k, "Neighbors per query")->check(CLI::PositiveNumber);

    SynthArgs s;
    auto* synth = app.add_subcommand("synth", "Generate synthetic datasets");
    synth->add_option("--kind", s.kind, "sphere, blobs, or planted")
        ->required()
        ->check(CLI::IsMember({"sphere", "blobs", "planted"}));
    synth->add_option("--out", s.out, "Output fvecs path")->required();
    synth->add_option("--queries-out", s.queries_out,
                      "Query fvecs path (planted only)");
    synth->add_option("--n", s.n, "Vector count")->check(CLI::PositiveNumber);
    synth->add_option("--dim", s.dim, "Dimension")->check(CLI::PositiveNumber);
    synth->add_option("--blobs", s.blobs, "Cluster count for blobs");
    synth->add_option("--nq", s.nq, "Neighborhood count for planted");
    synth->add_option("--m", s.m, "Points per neighborhood for planted");
    synth->add_option("--seed", s.seed, "Random seed");

    VerifyArgs v;
    auto* verify = app.add_subcommand("verify", "Run a verification experiment");
    verify->add_option("--experiment", v.experiment, "Which study to run")
        ->required()
        ->check(CLI::IsMember({"unbiasedness", "concentration", "epsilon-sweep",
                               "bq-sweep", "entropy"}));
    verify->add_option("--dim", v.dim, "Dimension")->check(CLI::PositiveNumber);
    verify->add_option("--samples", v.samples, "Sample count (0: experiment default)");
    verify->add_option("--seed", v.seed, "Random seed");
    verify->add_option("--out", v.out, "Record output path (default stdout)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    try {
        if (build->parsed()) {
            return run_build(b);
        }
        if (query->parsed()) {
            return run_query(q);
        }
        if (gt->parsed()) {
            return run_groundtruth(g);
        }
        if (synth->parsed()) {
            return run_synth(s);
        }
        return run_verify(v);
    } catch (const format_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        switch (e.fault()) {
        case format_fault::bad_version:
            return kExitVersion;
        case format_fault::checksum_mismatch:
            return kExitChecksum;
        default:
            return kExitMalformed;
        }
    } catch (const io_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitMissing;
    } catch (const dim_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitDim;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitError;
    }
}
