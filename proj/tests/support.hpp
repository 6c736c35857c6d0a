#pragma once

#include <algorithm>
#include <atomic>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include <unistd.h>

#include "hercules/bench.hpp"
#include "hercules/build.hpp"
#include "hercules/persist.hpp"
#include "hercules/series.hpp"

namespace testing {

class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("hercules-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  std::filesystem::path path_;
};

inline std::vector<float> walks(std::size_t count, std::size_t n, std::uint64_t seed) {
  std::vector<float> out;
  out.reserve(count * n);
  for (std::size_t i = 0; i < count; ++i) {
    const auto s = hercules::random_walk(n, seed, i);
    out.insert(out.end(), s.begin(), s.end());
  }
  return out;
}

inline std::vector<float> gaussian(std::size_t count, std::mt19937_64& rng, double sd = 1.0) {
  std::normal_distribution<double> d(0.0, sd);
  std::vector<float> out(count);
  for (float& v : out) v = static_cast<float>(d(rng));
  return out;
}

inline double euclidean_sq_double(hercules::SeriesView a, hercules::SeriesView b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

// k smallest squared distances by exhaustive double-precision comparison.
inline std::vector<double> brute_force(const std::vector<float>& data, hercules::SeriesView q,
                                       std::size_t k) {
  const std::size_t n = q.size();
  std::vector<double> d;
  for (std::size_t i = 0; i * n < data.size(); ++i) {
    d.push_back(euclidean_sq_double(q, hercules::SeriesView(data.data() + i * n, n)));
  }
  std::sort(d.begin(), d.end());
  d.resize(std::min(k, d.size()));
  return d;
}

inline bool same_distances(const std::vector<float>& got, const std::vector<double>& want,
                           double rel = 1e-3) {
  if (got.size() != want.size()) return false;
  for (std::size_t i = 0; i < got.size(); ++i) {
    const double scale = std::max(1e-6, std::abs(want[i]));
    if (std::abs(got[i] - want[i]) > rel * scale + 1e-5) return false;
  }
  return true;
}

inline hercules::BuildConfig small_config(std::size_t n, std::size_t tau, std::size_t threads,
                                          std::size_t buffer_series, std::size_t db_size,
                                          const std::filesystem::path& scratch) {
  hercules::BuildConfig c;
  c.series_length = n;
  c.leaf_threshold = tau;
  c.num_threads = threads;
  c.buffer_series = buffer_series;
  c.db_size = db_size;
  c.scratch_dir = scratch;
  return c;
}

// Writes data, builds with cfg and writes the index into dir/index.
inline hercules::SearchableIndex build_and_load(const TempDir& dir, const std::vector<float>& data,
                                                const hercules::BuildConfig& cfg) {
  const std::string raw = dir.file("data.bin");
  hercules::write_raw_file(raw, data);
  hercules::BuiltIndex built = hercules::build_index(raw, cfg);
  hercules::write_index(built, dir.path() / "index", 2);
  return hercules::load_index(dir.path() / "index");
}

}  // namespace testing
