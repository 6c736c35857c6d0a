#include "hercules/kernels.hpp"

#include <atomic>

#include <omp.h>

namespace hercules {

namespace {

void filter_range(const SaxDistanceTable& table, const std::uint8_t* words,
                  const PositionRange& r, float bsf, std::vector<SeriesCandidate>& out) {
  const std::size_t l = table.segments();
  for (std::uint64_t pos = r.first; pos < r.first + r.count; ++pos) {
    const float lb = table.lower_bound(words + pos * l);
    if (lb < bsf) out.push_back({pos, lb});
  }
}

}  // namespace

std::vector<std::vector<SeriesCandidate>> sax_filter_serial(const SaxDistanceTable& table,
                                                            const std::uint8_t* words,
                                                            std::span<const PositionRange> ranges,
                                                            float bsf) {
  std::vector<std::vector<SeriesCandidate>> out(1);
  for (const PositionRange& r : ranges) filter_range(table, words, r, bsf, out[0]);
  return out;
}

std::vector<std::vector<SeriesCandidate>> sax_filter_omp(const SaxDistanceTable& table,
                                                         const std::uint8_t* words,
                                                         std::span<const PositionRange> ranges,
                                                         float bsf, int num_threads) {
  std::vector<std::vector<SeriesCandidate>> out;
  std::atomic<std::size_t> next{0};
#pragma omp parallel num_threads(num_threads)
  {
#pragma omp single
    out.resize(static_cast<std::size_t>(omp_get_num_threads()));
    std::vector<SeriesCandidate>& local = out[static_cast<std::size_t>(omp_get_thread_num())];
    for (std::size_t j = next.fetch_add(1); j < ranges.size(); j = next.fetch_add(1)) {
      filter_range(table, words, ranges[j], bsf, local);
    }
  }
  return out;
}

void knn_scan_serial(SeriesView query, const float* data, std::size_t count,
                     std::uint64_t first_pos, ResultSet& results) {
  const std::size_t n = query.size();
  for (std::size_t i = 0; i < count; ++i) {
    const auto d = euclidean_sq_early_abandon(query, SeriesView(data + i * n, n), results.bsf());
    if (d) results.insert(*d, first_pos + i);
  }
}

void knn_scan_omp(SeriesView query, const float* data, std::size_t count,
                  std::uint64_t first_pos, ConcurrentResults& results, int num_threads) {
  const std::size_t n = query.size();
  const auto total = static_cast<std::int64_t>(count);
#pragma omp parallel for num_threads(num_threads) schedule(dynamic, 256)
  for (std::int64_t i = 0; i < total; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    const auto d =
        euclidean_sq_early_abandon(query, SeriesView(data + idx * n, n), results.bsf_hint());
    if (d) results.offer(*d, first_pos + idx);
  }
}

}  // namespace hercules
