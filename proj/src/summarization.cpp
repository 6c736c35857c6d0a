#include "hercules/summarization.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>

#include <boost/math/distributions/normal.hpp>

#include "hercules/errors.hpp"

namespace hercules {

PaaVector paa(SeriesView s, std::size_t segments) {
  if (segments == 0 || s.size() % segments != 0) {
    throw ConfigError("paa: series length " + std::to_string(s.size()) +
                      " is not a multiple of " + std::to_string(segments) + " segments");
  }
  const std::size_t w = s.size() / segments;
  PaaVector out;
  out.series_length = s.size();
  out.values.resize(segments);
  for (std::size_t i = 0; i < segments; ++i) {
    double sum = 0.0;
    for (std::size_t j = i * w; j < (i + 1) * w; ++j) sum += s[j];
    out.values[i] = static_cast<float>(sum / static_cast<double>(w));
  }
  return out;
}

Breakpoints::Breakpoints(std::size_t alphabet_size) {
  if (alphabet_size < 2 || alphabet_size > 256 || !std::has_single_bit(alphabet_size)) {
    throw ConfigError("alphabet size must be a power of two in [2, 256], got " +
                      std::to_string(alphabet_size));
  }
  const boost::math::normal_distribution<double> standard;
  cuts_.resize(alphabet_size - 1);
  for (std::size_t i = 0; i + 1 < alphabet_size; ++i) {
    const double p = static_cast<double>(i + 1) / static_cast<double>(alphabet_size);
    cuts_[i] = boost::math::quantile(standard, p);
  }
  // The quantile function is only antisymmetric up to rounding; force it so
  // that the median cut is exactly 0 and the table mirrors cleanly.
  const std::size_t half = cuts_.size() / 2;
  cuts_[half] = 0.0;
  for (std::size_t i = 0; i < half; ++i) cuts_[cuts_.size() - 1 - i] = -cuts_[i];
}

std::uint8_t Breakpoints::symbol_for(double value) const {
  const auto it = std::upper_bound(cuts_.begin(), cuts_.end(), value);
  return static_cast<std::uint8_t>(it - cuts_.begin());
}

Breakpoints normal_breakpoints(std::size_t alphabet_size) { return Breakpoints(alphabet_size); }

IsaxWord isax_from_paa(const PaaVector& p, const Breakpoints& bp) {
  IsaxWord word(p.values.size());
  for (std::size_t i = 0; i < p.values.size(); ++i) word[i] = bp.symbol_for(p.values[i]);
  return word;
}

namespace {

double interval_gap(double v, double lo, double hi) {
  if (v < lo) return lo - v;
  if (v > hi) return v - hi;
  return 0.0;
}

}  // namespace

float lb_sax(const PaaVector& query_paa, std::span<const std::uint8_t> word, const Breakpoints& bp,
             std::size_t series_length) {
  if (word.size() != query_paa.values.size()) throw ContractError("lb_sax: word length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < word.size(); ++i) {
    if (word[i] >= bp.alphabet_size()) throw ContractError("lb_sax: symbol out of alphabet");
    const double g = interval_gap(query_paa.values[i], bp.lower(word[i]), bp.upper(word[i]));
    sum += g * g;
  }
  const double scale = static_cast<double>(series_length) / static_cast<double>(word.size());
  return static_cast<float>(scale * sum);
}

SaxDistanceTable::SaxDistanceTable(const PaaVector& query_paa, const Breakpoints& bp)
    : segments_(query_paa.values.size()), alphabet_(bp.alphabet_size()) {
  const double scale =
      static_cast<double>(query_paa.series_length) / static_cast<double>(segments_);
  table_.resize(segments_ * alphabet_);
  for (std::size_t i = 0; i < segments_; ++i) {
    for (std::size_t s = 0; s < alphabet_; ++s) {
      const auto sym = static_cast<std::uint8_t>(s);
      const double g = interval_gap(query_paa.values[i], bp.lower(sym), bp.upper(sym));
      table_[i * alphabet_ + s] = static_cast<float>(scale * g * g);
    }
  }
}

SegmentStats segment_stats(SeriesView s, std::size_t begin, std::size_t end) {
  if (begin >= end || end > s.size()) throw ContractError("segment_stats: empty or invalid range");
  double sum = 0.0;
  double sum_sq = 0.0;
  for (std::size_t i = begin; i < end; ++i) {
    sum += s[i];
    sum_sq += static_cast<double>(s[i]) * s[i];
  }
  const double w = static_cast<double>(end - begin);
  const double mean = sum / w;
  const double var = std::max(0.0, sum_sq / w - mean * mean);
  return {static_cast<float>(mean), static_cast<float>(std::sqrt(var)),
          static_cast<std::uint32_t>(end - begin)};
}

Segmentation::Segmentation(std::vector<std::uint32_t> right_endpoints)
    : ends_(std::move(right_endpoints)) {
  if (ends_.empty()) throw ContractError("segmentation needs at least one segment");
  if (ends_.front() == 0) throw ContractError("segmentation: first endpoint must be positive");
  for (std::size_t i = 1; i < ends_.size(); ++i) {
    if (ends_[i] <= ends_[i - 1]) throw ContractError("segmentation endpoints not increasing");
  }
}

Segmentation Segmentation::with_split(std::size_t i, std::uint32_t point) const {
  if (i >= ends_.size() || point <= begin(i) || point >= end(i)) {
    throw ContractError("with_split: split point outside segment interior");
  }
  std::vector<std::uint32_t> ends = ends_;
  ends.insert(ends.begin() + static_cast<std::ptrdiff_t>(i), point);
  return Segmentation(std::move(ends));
}

std::vector<SegmentStats> eapca(SeriesView s, const Segmentation& seg) {
  if (seg.series_length() != s.size()) throw ContractError("eapca: segmentation length mismatch");
  std::vector<SegmentStats> out(seg.size());
  for (std::size_t i = 0; i < seg.size(); ++i) out[i] = segment_stats(s, seg.begin(i), seg.end(i));
  return out;
}

QueryProfile::QueryProfile(SeriesView query) : sum_(query.size() + 1), sum_sq_(query.size() + 1) {
  for (std::size_t i = 0; i < query.size(); ++i) {
    sum_[i + 1] = sum_[i] + query[i];
    sum_sq_[i + 1] = sum_sq_[i] + static_cast<double>(query[i]) * query[i];
  }
}

void QueryProfile::stats(std::size_t begin, std::size_t end, double& mean, double& sd) const {
  const double w = static_cast<double>(end - begin);
  mean = (sum_[end] - sum_[begin]) / w;
  const double var = (sum_sq_[end] - sum_sq_[begin]) / w - mean * mean;
  sd = var > 0.0 ? std::sqrt(var) : 0.0;
}

float lb_eapca(const QueryProfile& query, const Segmentation& seg, const Synopsis& syn) {
  if (seg.size() != syn.size()) throw ContractError("lb_eapca: synopsis/segmentation mismatch");
  if (seg.series_length() != query.length()) throw ContractError("lb_eapca: query length mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    const SegmentEnvelope& z = syn[i];
    if (z.empty()) return std::numeric_limits<float>::infinity();
    double mean = 0.0;
    double sd = 0.0;
    query.stats(seg.begin(i), seg.end(i), mean, sd);
    const double gm = interval_gap(mean, z.mean_min, z.mean_max);
    const double gs = interval_gap(sd, z.sd_min, z.sd_max);
    sum += static_cast<double>(seg.width(i)) * (gm * gm + gs * gs);
  }
  return static_cast<float>(sum);
}

float lb_eapca(SeriesView query, const Segmentation& seg, const Synopsis& syn) {
  return lb_eapca(QueryProfile(query), seg, syn);
}

}  // namespace hercules
