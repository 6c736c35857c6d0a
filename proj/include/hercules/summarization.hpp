#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "hercules/series.hpp"

namespace hercules {

// ---------------------------------------------------------------------------
// PAA / iSAX
// ---------------------------------------------------------------------------

struct PaaVector {
  std::vector<float> values;  // one mean per equi-length segment
  std::size_t series_length = 0;

  std::size_t segment_count() const { return values.size(); }
};

// Throws ConfigError unless n is a multiple of `segments`.
PaaVector paa(SeriesView s, std::size_t segments);

// Standard-normal quantiles at i/alphabet_size, i = 1..alphabet_size-1.
class Breakpoints {
 public:
  // alphabet_size must be a power of two in [2, 256].
  explicit Breakpoints(std::size_t alphabet_size);

  std::size_t alphabet_size() const { return cuts_.size() + 1; }
  std::span<const double> cuts() const { return cuts_; }

  // Interval [lower, upper) covered by a symbol; the extremes are unbounded.
  double lower(std::uint8_t symbol) const {
    return symbol == 0 ? -std::numeric_limits<double>::infinity() : cuts_[symbol - 1u];
  }
  double upper(std::uint8_t symbol) const {
    return symbol >= cuts_.size() ? std::numeric_limits<double>::infinity() : cuts_[symbol];
  }

  // A value equal to a cut belongs to the region above it.
  std::uint8_t symbol_for(double value) const;

 private:
  std::vector<double> cuts_;
};

Breakpoints normal_breakpoints(std::size_t alphabet_size);

// One symbol per segment, 8 bits each. Word length equals the PAA length.
using IsaxWord = std::vector<std::uint8_t>;

IsaxWord isax_from_paa(const PaaVector& p, const Breakpoints& bp);

// Squared MINDIST between a query PAA and an iSAX word.
float lb_sax(const PaaVector& query_paa, std::span<const std::uint8_t> word,
             const Breakpoints& bp, std::size_t series_length);

// Per-query lookup table for LB_SAX: gap^2 for every (segment, symbol) pair,
// pre-scaled by n/l. Summing one entry per segment gives the bound, which is
// what the scan kernels evaluate millions of times per query.
class SaxDistanceTable {
 public:
  SaxDistanceTable(const PaaVector& query_paa, const Breakpoints& bp);

  std::size_t segments() const { return segments_; }
  std::size_t alphabet_size() const { return alphabet_; }

  float lower_bound(const std::uint8_t* word) const {
    float sum = 0.0f;
    for (std::size_t i = 0; i < segments_; ++i) sum += table_[i * alphabet_ + word[i]];
    return sum;
  }

 private:
  std::size_t segments_;
  std::size_t alphabet_;
  std::vector<float> table_;
};

// ---------------------------------------------------------------------------
// EAPCA
// ---------------------------------------------------------------------------

struct SegmentStats {
  float mean = 0.0f;
  float sd = 0.0f;  // population sd
  std::uint32_t width = 0;
};

// Mean and population sd of points [begin, end).
SegmentStats segment_stats(SeriesView s, std::size_t begin, std::size_t end);

// Right endpoints r_1 < ... < r_m = n; r_0 = 0 is implicit.
class Segmentation {
 public:
  Segmentation() = default;
  explicit Segmentation(std::vector<std::uint32_t> right_endpoints);
  static Segmentation single(std::uint32_t n) { return Segmentation({n}); }

  std::size_t size() const { return ends_.size(); }
  std::uint32_t begin(std::size_t i) const { return i == 0 ? 0u : ends_[i - 1]; }
  std::uint32_t end(std::size_t i) const { return ends_[i]; }
  std::uint32_t width(std::size_t i) const { return end(i) - begin(i); }
  std::uint32_t series_length() const { return ends_.empty() ? 0u : ends_.back(); }
  std::span<const std::uint32_t> right_endpoints() const { return ends_; }

  // Copy with segment i cut at `point` (begin(i) < point < end(i)).
  Segmentation with_split(std::size_t i, std::uint32_t point) const;

  friend bool operator==(const Segmentation&, const Segmentation&) = default;

 private:
  std::vector<std::uint32_t> ends_;
};

struct SegmentEnvelope {
  float mean_min = std::numeric_limits<float>::infinity();
  float mean_max = -std::numeric_limits<float>::infinity();
  float sd_min = std::numeric_limits<float>::infinity();
  float sd_max = -std::numeric_limits<float>::infinity();

  bool empty() const { return mean_min > mean_max; }

  void widen(const SegmentStats& st) {
    mean_min = std::min(mean_min, st.mean);
    mean_max = std::max(mean_max, st.mean);
    sd_min = std::min(sd_min, st.sd);
    sd_max = std::max(sd_max, st.sd);
  }

  void merge(const SegmentEnvelope& o) {
    mean_min = std::min(mean_min, o.mean_min);
    mean_max = std::max(mean_max, o.mean_max);
    sd_min = std::min(sd_min, o.sd_min);
    sd_max = std::max(sd_max, o.sd_max);
  }

  bool contains(const SegmentStats& st) const {
    return st.mean >= mean_min && st.mean <= mean_max && st.sd >= sd_min && st.sd <= sd_max;
  }

  friend bool operator==(const SegmentEnvelope&, const SegmentEnvelope&) = default;
};

// Per-segment min/max envelopes of member means and sds. A synopsis built
// for m segments starts empty (inverted bounds) until the first widen.
using Synopsis = std::vector<SegmentEnvelope>;

// Stats of one series over every segment of a segmentation.
std::vector<SegmentStats> eapca(SeriesView s, const Segmentation& seg);

// Prefix sums of a query so that segment stats for any node's segmentation
// cost O(1) per segment.
class QueryProfile {
 public:
  explicit QueryProfile(SeriesView query);

  std::size_t length() const { return sum_.size() - 1; }
  // Mean and population sd of query points [begin, end), in double.
  void stats(std::size_t begin, std::size_t end, double& mean, double& sd) const;

 private:
  std::vector<double> sum_;
  std::vector<double> sum_sq_;
};

// Squared LB_EAPCA: sum_i w_i * (gap_mean_i^2 + gap_sd_i^2). An empty
// synopsis yields +inf.
float lb_eapca(const QueryProfile& query, const Segmentation& seg, const Synopsis& syn);
float lb_eapca(SeriesView query, const Segmentation& seg, const Synopsis& syn);

}  // namespace hercules
