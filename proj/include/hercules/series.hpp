#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hercules {

// A data series is a fixed-length run of single-precision points. Owned
// series are plain vectors; everything that only reads takes a span.
using Series = std::vector<float>;
using SeriesView = std::span<const float>;

// Mean 0, population sd 1. Series with sd < 1e-8 map to all zeros.
Series z_normalize(SeriesView s);

// Squared Euclidean distance. All comparisons inside the engine happen in
// squared space; callers take the square root only when reporting.
float euclidean_sq(SeriesView a, SeriesView b);

// Squared distance, or nullopt as soon as the running sum reaches `bound`.
// Never abandons a pair whose true squared distance is below `bound`.
std::optional<float> euclidean_sq_early_abandon(SeriesView a, SeriesView b, float bound);

// Raw dataset files are headerless little-endian float32 streams, row-major.
std::vector<float> read_raw_file(const std::string& path, std::size_t series_length);
void write_raw_file(const std::string& path, std::span<const float> values);
std::size_t raw_file_series_count(const std::string& path, std::size_t series_length);

}  // namespace hercules
