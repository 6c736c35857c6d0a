#include "hercules/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <random>

#include <boost/random/normal_distribution.hpp>
#include <boost/random/uniform_int_distribution.hpp>
#include <json.hpp>

#include "hercules/errors.hpp"
#include "hercules/kernels.hpp"

namespace hercules {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t index) {
  return splitmix64(splitmix64(seed) ^ index);
}

Series random_walk(std::size_t n, std::uint64_t seed, std::uint64_t index) {
  std::mt19937_64 rng(stream_seed(seed, index));
  boost::random::normal_distribution<double> step(0.0, 1.0);
  Series s(n);
  double acc = 0.0;
  for (float& p : s) {
    acc += step(rng);
    p = static_cast<float>(acc);
  }
  return z_normalize(s);
}

void generate_random_walk(const std::string& out_path, std::size_t count, std::size_t n,
                          std::uint64_t seed) {
  if (count == 0 || n == 0) throw ConfigError("count and length must be positive");
  std::vector<float> all;
  all.reserve(count * n);
  for (std::size_t i = 0; i < count; ++i) {
    const Series s = random_walk(n, seed, i);
    all.insert(all.end(), s.begin(), s.end());
  }
  write_raw_file(out_path, all);
}

void WorkloadSpec::validate() const {
  if (count == 0) throw ConfigError("workload count must be positive");
  if (kind == WorkloadKind::Noise && !(sigma2 >= 0.01 && sigma2 <= 0.1)) {
    throw ConfigError("noise variance must lie in [0.01, 0.1]");
  }
}

Workload make_workload(const std::vector<float>& dataset, std::size_t n, const WorkloadSpec& spec) {
  spec.validate();
  const std::size_t size = dataset.size() / n;
  if (size == 0) throw ConfigError("dataset is empty");
  Workload w;
  w.queries.reserve(spec.count * n);

  if (spec.kind == WorkloadKind::Noise) {
    const double sd = std::sqrt(spec.sigma2);
    for (std::size_t q = 0; q < spec.count; ++q) {
      std::mt19937_64 rng(stream_seed(spec.seed, q));
      boost::random::uniform_int_distribution<std::uint64_t> pick(0, size - 1);
      boost::random::normal_distribution<double> noise(0.0, sd);
      const std::uint64_t src = pick(rng);
      Series s(dataset.begin() + static_cast<std::ptrdiff_t>(src * n),
               dataset.begin() + static_cast<std::ptrdiff_t>((src + 1) * n));
      for (float& p : s) p = static_cast<float>(p + noise(rng));
      const Series z = z_normalize(s);
      w.queries.insert(w.queries.end(), z.begin(), z.end());
      w.sources.push_back(src);
    }
    return w;
  }

  if (spec.count >= size) {
    throw ConfigError("cannot hold out " + std::to_string(spec.count) + " of " +
                      std::to_string(size) + " series");
  }
  // Partial Fisher-Yates over positions: the first `count` are held out.
  std::vector<std::uint64_t> perm(size);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(stream_seed(spec.seed, 0));
  for (std::size_t i = 0; i < spec.count; ++i) {
    boost::random::uniform_int_distribution<std::uint64_t> pick(i, size - 1);
    std::swap(perm[i], perm[pick(rng)]);
  }
  std::vector<bool> held(size, false);
  for (std::size_t i = 0; i < spec.count; ++i) {
    const std::uint64_t src = perm[i];
    held[src] = true;
    w.sources.push_back(src);
    w.queries.insert(w.queries.end(), dataset.begin() + static_cast<std::ptrdiff_t>(src * n),
                     dataset.begin() + static_cast<std::ptrdiff_t>((src + 1) * n));
  }
  w.reduced_dataset.reserve((size - spec.count) * n);
  for (std::size_t i = 0; i < size; ++i) {
    if (held[i]) continue;
    w.reduced_dataset.insert(w.reduced_dataset.end(), dataset.begin() + static_cast<std::ptrdiff_t>(i * n),
                             dataset.begin() + static_cast<std::ptrdiff_t>((i + 1) * n));
  }
  return w;
}

Workload generate_workload(const std::string& dataset_path, std::size_t n, const WorkloadSpec& spec,
                           const std::string& query_out, const std::optional<std::string>& reduced_out) {
  spec.validate();
  if (spec.kind == WorkloadKind::OutOfDataset && !reduced_out) {
    throw ConfigError("an ood workload needs a reduced dataset path");
  }
  const std::vector<float> dataset = read_raw_file(dataset_path, n);
  Workload w = make_workload(dataset, n, spec);
  write_raw_file(query_out, w.queries);
  if (spec.kind == WorkloadKind::OutOfDataset) write_raw_file(*reduced_out, w.reduced_dataset);
  return w;
}

ScanAnswer pscan(const std::string& dataset_path, SeriesView query, std::size_t k,
                 std::size_t num_threads, std::size_t chunk_series) {
  if (num_threads == 0 || chunk_series == 0) throw ConfigError("pscan needs threads and a chunk size");
  const std::size_t n = query.size();
  const std::size_t total = raw_file_series_count(dataset_path, n);
  const RawSeriesFile file(dataset_path, n);
  ScanAnswer ans{ResultSet(k)};
  ConcurrentResults shared(ans.results);
  const auto t0 = Clock::now();

  std::vector<float> buf[2] = {std::vector<float>(chunk_series * n), std::vector<float>(chunk_series * n)};
  auto load = [&](std::size_t first, int slot) {
    const std::size_t count = std::min(chunk_series, total - first);
    const auto r0 = Clock::now();
    const std::size_t bytes = file.read(first, count, buf[slot].data());
    return std::pair{bytes, seconds_since(r0)};
  };

  if (total > 0) {
    auto [b, t] = load(0, 0);
    ans.bytes_read += b;
    ans.input_time += t;
  }
  int slot = 0;
  for (std::size_t first = 0; first < total; first += chunk_series) {
    const std::size_t next = first + chunk_series;
    std::future<std::pair<std::size_t, double>> pending;
    if (next < total) pending = std::async(std::launch::async, load, next, 1 - slot);
    const std::size_t count = std::min(chunk_series, total - first);
    knn_scan_omp(query, buf[slot].data(), count, first, shared, static_cast<int>(num_threads));
    if (pending.valid()) {
      auto [b, t] = pending.get();
      ans.bytes_read += b;
      ans.input_time += t;
    }
    slot = 1 - slot;
  }
  ans.wall_time = seconds_since(t0);
  return ans;
}

ScanAnswer scan_serial(const std::string& dataset_path, SeriesView query, std::size_t k) {
  const std::size_t n = query.size();
  const auto t0 = Clock::now();
  const std::vector<float> data = read_raw_file(dataset_path, n);
  ScanAnswer ans{ResultSet(k)};
  ans.input_time = seconds_since(t0);
  ans.bytes_read = data.size() * sizeof(float);
  knn_scan_serial(query, data.data(), data.size() / n, 0, ans.results);
  ans.wall_time = seconds_since(t0);
  return ans;
}

Aggregate aggregate(const std::vector<QueryMetrics>& per_query) {
  Aggregate a;
  std::vector<const QueryMetrics*> kept;
  for (const QueryMetrics& m : per_query) kept.push_back(&m);
  if (kept.size() >= 11) {
    std::stable_sort(kept.begin(), kept.end(),
                     [](const QueryMetrics* x, const QueryMetrics* y) { return x->wall_time < y->wall_time; });
    kept = std::vector<const QueryMetrics*>(kept.begin() + 5, kept.end() - 5);
    a.trimmed = true;
  }
  a.used = kept.size();
  if (kept.empty()) return a;
  for (const QueryMetrics* m : kept) {
    a.wall_time += m->wall_time;
    a.input_time += m->input_time;
    a.cpu_time += m->cpu_time();
    a.fraction_accessed += m->fraction_accessed;
  }
  const auto c = static_cast<double>(kept.size());
  a.wall_time /= c;
  a.input_time /= c;
  a.cpu_time /= c;
  a.fraction_accessed /= c;
  return a;
}

BenchReport run_benchmark(const SearchableIndex& index, const std::vector<float>& queries,
                          const QueryConfig& cfg, const std::function<void()>& pre_hook) {
  const std::size_t n = index.settings().series_length;
  if (queries.size() % n != 0) {
    throw ConfigError("query file does not hold whole series of length " + std::to_string(n));
  }
  if (pre_hook) pre_hook();
  BenchReport report;
  const std::size_t count = queries.size() / n;
  for (std::size_t q = 0; q < count; ++q) {
    QueryAnswer a = exact_knn(index, SeriesView(queries.data() + q * n, n), cfg, q);
    report.per_query.push_back(a.metrics);
    report.answers.push_back(std::move(a.results));
  }
  report.summary = aggregate(report.per_query);
  return report;
}

std::string metrics_json(const QueryMetrics& m) {
  nlohmann::json j;
  j["type"] = "query";
  j["query_id"] = m.query_id;
  j["k"] = m.k;
  j["phase"] = to_string(m.phase);
  j["eapca_pr"] = m.eapca_pr;
  j["sax_pr"] = m.sax_pr;
  j["bytes_read"] = m.bytes_read;
  j["fraction_data_accessed"] = m.fraction_accessed;
  j["approx_leaves"] = m.approx_leaves;
  j["candidate_leaves"] = m.candidate_leaves;
  j["candidate_series"] = m.candidate_series;
  j["wall_time"] = m.wall_time;
  j["input_time"] = m.input_time;
  j["cpu_time"] = m.cpu_time();
  return j.dump();
}

std::string aggregate_json(const Aggregate& a) {
  nlohmann::json j;
  j["type"] = "aggregate";
  j["queries_used"] = a.used;
  j["trimmed"] = a.trimmed;
  j["wall_time"] = a.wall_time;
  j["input_time"] = a.input_time;
  j["cpu_time"] = a.cpu_time;
  j["fraction_data_accessed"] = a.fraction_accessed;
  return j.dump();
}

}  // namespace hercules
