#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "hercules/bench.hpp"
#include "hercules/build.hpp"
#include "hercules/errors.hpp"
#include "hercules/persist.hpp"
#include "hercules/query.hpp"

using namespace hercules;

namespace {

enum ExitCode { kOk = 0, kUsage = 1, kIo = 2, kIntegrity = 3 };

// Every flag can also come from HERCULES_<FLAG>, e.g. --leaf-size from
// HERCULES_LEAF_SIZE.
std::string env_name(const std::string& flag) {
  std::string out = "HERCULES_";
  for (char c : flag) out += c == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

template <typename T>
CLI::Option* flag(CLI::App* app, const std::string& name, T& value, const std::string& help) {
  return app->add_option("--" + name, value, help)->envname(env_name(name));
}

std::string answer_json(std::size_t query_id, const ResultSet& r) {
  nlohmann::json j;
  j["query_id"] = query_id;
  auto& nn = j["neighbors"] = nlohmann::json::array();
  for (const auto& e : r.entries()) {
    if (e.pos == kNoPosition) continue;
    nn.push_back({{"pos", e.pos}, {"dist", std::sqrt(e.dist)}});
  }
  return j.dump();
}

std::vector<float> load_queries(const std::string& path, std::size_t n) {
  raw_file_series_count(path, n);  // rejects partial series
  return read_raw_file(path, n);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot create " + path);
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Hercules exact k-NN data-series index"};
  app.require_subcommand(1);

  // generate
  std::size_t gen_count = 0, gen_length = 256;
  std::uint64_t gen_seed = 1;
  std::string gen_out;
  auto* gen = app.add_subcommand("generate", "write a z-normalized random-walk dataset");
  flag(gen, "count", gen_count, "number of series")->required();
  flag(gen, "length", gen_length, "points per series");
  flag(gen, "seed", gen_seed, "generator seed");
  flag(gen, "out", gen_out, "output raw file")->required();

  // workload
  std::string wl_dataset, wl_kind = "noise", wl_out, wl_reduced;
  std::size_t wl_length = 256;
  WorkloadSpec wl_spec;
  auto* wl = app.add_subcommand("workload", "derive a query workload from a dataset");
  flag(wl, "dataset", wl_dataset, "raw dataset file")->required();
  flag(wl, "length", wl_length, "points per series");
  flag(wl, "kind", wl_kind, "noise or ood")->check(CLI::IsMember({"noise", "ood"}));
  flag(wl, "sigma2", wl_spec.sigma2, "noise variance in [0.01, 0.1]");
  flag(wl, "count", wl_spec.count, "number of queries");
  flag(wl, "seed", wl_spec.seed, "generator seed");
  flag(wl, "out", wl_out, "output query file")->required();
  flag(wl, "reduced-dataset", wl_reduced, "ood only: dataset without the held-out series");

  // index
  std::string ix_dataset, ix_out, ix_scratch;
  BuildConfig ix_cfg;
  double ix_buffer_mb = 0.0;
  std::size_t ix_dbsize = 0, ix_write_threads = 0;
  auto* ix = app.add_subcommand("index", "build and write an index");
  flag(ix, "dataset", ix_dataset, "raw dataset file")->required();
  flag(ix, "length", ix_cfg.series_length, "points per series");
  flag(ix, "leaf-size", ix_cfg.leaf_threshold, "leaf threshold tau");
  flag(ix, "buffer-mb", ix_buffer_mb, "HBuffer size in MiB (0: whole dataset)");
  flag(ix, "dbsize", ix_dbsize, "series per double-buffer slot (0: scaled default)");
  flag(ix, "threads", ix_cfg.num_threads, "reader plus insert workers (>= 2)");
  flag(ix, "flush-threshold", ix_cfg.flush_threshold, "full regions that trigger a flush");
  flag(ix, "busy-wait", ix_cfg.busy_wait, "handshake spins before yielding");
  flag(ix, "write-threads", ix_write_threads, "index-writing workers (0: same as --threads)");
  flag(ix, "scratch", ix_scratch, "directory for construction spill files");
  flag(ix, "out", ix_out, "index directory")->required();

  // query and bench share the engine flags
  std::string q_index, q_queries, q_metrics, q_pre_hook;
  QueryConfig q_cfg;
  auto add_engine_flags = [&](CLI::App* c) {
    flag(c, "index", q_index, "index directory")->required();
    flag(c, "queries", q_queries, "raw query file")->required();
    flag(c, "k", q_cfg.k, "neighbors per query");
    flag(c, "lmax", q_cfg.lmax, "leaves visited by the approximate phase");
    flag(c, "eapca-th", q_cfg.eapca_th, "leaf pruning ratio below which to scan");
    flag(c, "sax-th", q_cfg.sax_th, "series pruning ratio below which to scan");
    flag(c, "threads", q_cfg.num_threads, "query worker threads");
  };
  auto* qc = app.add_subcommand("query", "answer exact k-NN queries with an index");
  add_engine_flags(qc);
  flag(qc, "metrics", q_metrics, "write per-query metrics here");
  auto* bc = app.add_subcommand("bench", "run a workload and report per-query and aggregate metrics");
  add_engine_flags(bc);
  flag(bc, "pre-hook", q_pre_hook, "shell command run before the workload (e.g. cache clearing)");

  // scan
  std::string sc_dataset, sc_queries;
  std::size_t sc_length = 256, sc_k = 1, sc_threads = 1;
  auto* sc = app.add_subcommand("scan", "answer queries with the parallel brute-force scan");
  flag(sc, "dataset", sc_dataset, "raw dataset file")->required();
  flag(sc, "queries", sc_queries, "raw query file")->required();
  flag(sc, "length", sc_length, "points per series");
  flag(sc, "k", sc_k, "neighbors per query");
  flag(sc, "threads", sc_threads, "scan worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) {
      generate_random_walk(gen_out, gen_count, gen_length, gen_seed);
    } else if (*wl) {
      wl_spec.kind = wl_kind == "ood" ? WorkloadKind::OutOfDataset : WorkloadKind::Noise;
      std::optional<std::string> reduced;
      if (!wl_reduced.empty()) reduced = wl_reduced;
      generate_workload(wl_dataset, wl_length, wl_spec, wl_out, reduced);
    } else if (*ix) {
      const std::size_t size = raw_file_series_count(ix_dataset, ix_cfg.series_length);
      ix_cfg.db_size = ix_dbsize ? ix_dbsize : BuildConfig::scaled_db_size(size);
      const std::size_t workers = ix_cfg.num_threads > 1 ? ix_cfg.num_threads - 1 : 1;
      ix_cfg.buffer_series = ix_buffer_mb > 0.0
                                 ? BuildConfig::series_for_megabytes(ix_buffer_mb, ix_cfg.series_length)
                                 : size + workers * ix_cfg.db_size;
      if (!ix_scratch.empty()) ix_cfg.scratch_dir = ix_scratch;
      BuiltIndex built = build_index(ix_dataset, ix_cfg);
      write_index(built, ix_out, ix_write_threads ? ix_write_threads : ix_cfg.num_threads);
      nlohmann::json j{{"type", "build"},
                       {"series", built.dataset_size},
                       {"rounds", built.stats.rounds},
                       {"flushes", built.stats.flushes},
                       {"splits", built.stats.splits},
                       {"db_size", built.stats.effective_db_size}};
      std::cout << j.dump() << "\n";
    } else if (*qc) {
      const SearchableIndex index = load_index(q_index);
      const std::size_t n = index.settings().series_length;
      const std::vector<float> queries = load_queries(q_queries, n);
      std::ofstream metrics;
      if (!q_metrics.empty()) metrics = open_out(q_metrics);
      for (std::size_t q = 0; q * n < queries.size(); ++q) {
        const QueryAnswer a = exact_knn(index, SeriesView(queries.data() + q * n, n), q_cfg, q);
        std::cout << answer_json(q, a.results) << "\n";
        if (metrics.is_open()) metrics << metrics_json(a.metrics) << "\n";
      }
    } else if (*bc) {
      const SearchableIndex index = load_index(q_index);
      const std::vector<float> queries = load_queries(q_queries, index.settings().series_length);
      std::function<void()> hook;
      if (!q_pre_hook.empty()) {
        hook = [&] {
          if (std::system(q_pre_hook.c_str()) != 0) throw IoError("pre-hook failed: " + q_pre_hook);
        };
      }
      const BenchReport report = run_benchmark(index, queries, q_cfg, hook);
      for (const QueryMetrics& m : report.per_query) std::cout << metrics_json(m) << "\n";
      if (!report.summary.trimmed) {
        std::cerr << "warning: fewer than 11 queries, aggregate keeps all " << report.summary.used << "\n";
      }
      std::cout << aggregate_json(report.summary) << "\n";
    } else if (*sc) {
      const std::vector<float> queries = load_queries(sc_queries, sc_length);
      for (std::size_t q = 0; q * sc_length < queries.size(); ++q) {
        const ScanAnswer a =
            pscan(sc_dataset, SeriesView(queries.data() + q * sc_length, sc_length), sc_k, sc_threads);
        std::cout << answer_json(q, a.results) << "\n";
      }
    }
  } catch (const IntegrityError& e) {
    std::cerr << "integrity error: " << e.what() << "\n";
    return kIntegrity;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kOk;
}
