#include "hercules/results.hpp"

#include <algorithm>

#include "hercules/errors.hpp"

namespace hercules {

ResultSet::ResultSet(std::size_t k) {
  if (k == 0) throw ConfigError("k must be at least 1");
  entries_.resize(k);
}

bool ResultSet::insert(float dist, std::uint64_t pos) {
  if (!(dist < bsf())) return false;
  const auto at = std::upper_bound(entries_.begin(), entries_.end(), dist,
                                   [](float d, const Entry& e) { return d < e.dist; }) -
                  entries_.begin();
  entries_.pop_back();
  entries_.insert(entries_.begin() + at, Entry{dist, pos});
  return true;
}

std::vector<float> ResultSet::distances() const {
  std::vector<float> out;
  for (const Entry& e : entries_) {
    if (e.pos != kNoPosition) out.push_back(e.dist);
  }
  return out;
}

}  // namespace hercules
