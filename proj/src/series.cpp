#include "hercules/series.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>

#include "hercules/errors.hpp"

namespace hercules {

static_assert(std::endian::native == std::endian::little,
              "on-disk formats are little-endian and read without byte swapping");

Series z_normalize(SeriesView s) {
  if (s.empty()) throw ContractError("z_normalize: empty series");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (float v : s) {
    sum += v;
    sum_sq += static_cast<double>(v) * v;
  }
  const double n = static_cast<double>(s.size());
  const double mean = sum / n;
  const double var = std::max(0.0, sum_sq / n - mean * mean);
  const double sd = std::sqrt(var);
  Series out(s.size(), 0.0f);
  if (sd < 1e-8) return out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = static_cast<float>((s[i] - mean) / sd);
  }
  return out;
}

float euclidean_sq(SeriesView a, SeriesView b) {
  if (a.size() != b.size()) throw ContractError("euclidean_sq: length mismatch");
  float sum = 0.0f;
#pragma omp simd reduction(+ : sum)
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    sum += d * d;
  }
  return sum;
}

std::optional<float> euclidean_sq_early_abandon(SeriesView a, SeriesView b, float bound) {
  if (a.size() != b.size()) throw ContractError("euclidean_sq_early_abandon: length mismatch");
  if (!(bound >= 0.0f)) throw ContractError("euclidean_sq_early_abandon: negative bound");
  constexpr std::size_t kBlock = 16;
  const std::size_t n = a.size();
  float sum = 0.0f;
  std::size_t i = 0;
  while (i < n) {
    const std::size_t end = std::min(n, i + kBlock);
    float partial = 0.0f;
#pragma omp simd reduction(+ : partial)
    for (std::size_t j = i; j < end; ++j) {
      const float d = a[j] - b[j];
      partial += d * d;
    }
    sum += partial;
    if (sum >= bound) return std::nullopt;
    i = end;
  }
  return sum;
}

std::size_t raw_file_series_count(const std::string& path, std::size_t series_length) {
  std::error_code ec;
  const auto bytes = std::filesystem::file_size(path, ec);
  if (ec) throw IoError("cannot stat " + path + ": " + ec.message());
  const std::size_t row = series_length * sizeof(float);
  if (series_length == 0 || bytes % row != 0) {
    throw ConfigError(path + ": size " + std::to_string(bytes) +
                      " is not a multiple of the series length " + std::to_string(series_length));
  }
  return bytes / row;
}

std::vector<float> read_raw_file(const std::string& path, std::size_t series_length) {
  const std::size_t count = raw_file_series_count(path, series_length);
  std::vector<float> values(count * series_length);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw IoError("short read on " + path);
  return values;
}

void write_raw_file(const std::string& path, std::span<const float> values) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create " + path);
  out.write(reinterpret_cast<const char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
  if (!out) throw IoError("write failed on " + path);
}

}  // namespace hercules
