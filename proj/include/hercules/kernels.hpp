#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hercules/results.hpp"
#include "hercules/series.hpp"
#include "hercules/summarization.hpp"

namespace hercules {

// The two hot loops of the engine, each in a serial reference form and an
// OpenMP form. Tests hold the parallel versions to the serial ones; the
// benchmark target times them against each other.

struct SeriesCandidate {
  std::uint64_t pos;
  float lb;
};

struct PositionRange {
  std::uint64_t first;
  std::uint64_t count;
};

// LB_SAX filtering of every series in `ranges`. words holds l symbols per
// series position. Survivors (lb < bsf) are returned in per-worker lists,
// one list for the serial form.
std::vector<std::vector<SeriesCandidate>> sax_filter_serial(const SaxDistanceTable& table,
                                                            const std::uint8_t* words,
                                                            std::span<const PositionRange> ranges,
                                                            float bsf);
std::vector<std::vector<SeriesCandidate>> sax_filter_omp(const SaxDistanceTable& table,
                                                         const std::uint8_t* words,
                                                         std::span<const PositionRange> ranges,
                                                         float bsf, int num_threads);

// Early-abandoning k-NN scan of `count` consecutive series stored at data;
// series i is reported at position first_pos + i.
void knn_scan_serial(SeriesView query, const float* data, std::size_t count,
                     std::uint64_t first_pos, ResultSet& results);
void knn_scan_omp(SeriesView query, const float* data, std::size_t count,
                  std::uint64_t first_pos, ConcurrentResults& results, int num_threads);

}  // namespace hercules
