#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hercules/query.hpp"
#include "hercules/results.hpp"
#include "hercules/series.hpp"

namespace hercules {

// Seed of the generator stream for item `index` under a run seed. Every
// series (or query) gets its own mt19937_64 seeded this way, so output does
// not depend on generation order.
std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index);

// Cumulative sum of N(0,1) steps, z-normalized.
Series random_walk(std::size_t n, std::uint64_t seed, std::uint64_t index);

void generate_random_walk(const std::string& out_path, std::size_t count, std::size_t n,
                          std::uint64_t seed);

enum class WorkloadKind : std::uint8_t { Noise, OutOfDataset };

struct WorkloadSpec {
  std::size_t count = 100;
  WorkloadKind kind = WorkloadKind::Noise;
  double sigma2 = 0.01;
  std::uint64_t seed = 1;

  void validate() const;
};

struct Workload {
  std::vector<float> queries;                 // count x n
  std::vector<std::uint64_t> sources;         // dataset positions the queries came from
  std::vector<float> reduced_dataset;         // ood only: the dataset minus the held-out series
};

// In-memory form, used by the file-writing wrapper and by tests.
Workload make_workload(const std::vector<float>& dataset, std::size_t n, const WorkloadSpec& spec);

// Writes the query file and, for ood, the reduced dataset (required then).
Workload generate_workload(const std::string& dataset_path, std::size_t n, const WorkloadSpec& spec,
                           const std::string& query_out,
                           const std::optional<std::string>& reduced_out = std::nullopt);

struct ScanAnswer {
  ResultSet results;
  double wall_time = 0.0;
  double input_time = 0.0;
  std::uint64_t bytes_read = 0;
};

// Parallel brute force: a reader thread fills one half of a double buffer
// while the workers scan the other against a shared BSF.
ScanAnswer pscan(const std::string& dataset_path, SeriesView query, std::size_t k,
                 std::size_t num_threads, std::size_t chunk_series = 8192);

// Single-threaded reference over the same file.
ScanAnswer scan_serial(const std::string& dataset_path, SeriesView query, std::size_t k);

struct Aggregate {
  std::size_t used = 0;
  bool trimmed = false;  // false means fewer than 11 queries: all kept
  double wall_time = 0.0;
  double input_time = 0.0;
  double cpu_time = 0.0;
  double fraction_accessed = 0.0;
};

// Means over the queries left after dropping the 5 fastest and 5 slowest
// by wall time, when there are at least 11.
Aggregate aggregate(const std::vector<QueryMetrics>& per_query);

struct BenchReport {
  std::vector<QueryMetrics> per_query;
  std::vector<ResultSet> answers;
  Aggregate summary;
};

BenchReport run_benchmark(const SearchableIndex& index, const std::vector<float>& queries,
                          const QueryConfig& cfg, const std::function<void()>& pre_hook = {});

// One JSON object per line.
std::string metrics_json(const QueryMetrics& m);
std::string aggregate_json(const Aggregate& a);

}  // namespace hercules
