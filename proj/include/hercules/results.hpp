#pragma once

#include <atomic>
#include <cstdint>
#include <limits>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <vector>

namespace hercules {

inline constexpr std::uint64_t kNoPosition = std::numeric_limits<std::uint64_t>::max();

// The k best answers so far, sorted ascending by squared distance.
class ResultSet {
 public:
  struct Entry {
    float dist = std::numeric_limits<float>::infinity();
    std::uint64_t pos = kNoPosition;
  };

  explicit ResultSet(std::size_t k);

  std::size_t k() const { return entries_.size(); }
  float bsf() const { return entries_.back().dist; }
  std::span<const Entry> entries() const { return entries_; }

  // Keeps the k smallest. Among equal distances the earlier insertion stays
  // ahead. Returns true when the set changed.
  bool insert(float dist, std::uint64_t pos);

  // Squared distances of the filled entries, ascending.
  std::vector<float> distances() const;

 private:
  std::vector<Entry> entries_;
};

// Shared view of a ResultSet for worker threads: BSF reads take the lock
// shared, insertions take it exclusively. A relaxed copy of the BSF lets
// hot loops skip hopeless candidates without touching the lock.
class ConcurrentResults {
 public:
  explicit ConcurrentResults(ResultSet& results) : results_(results), bsf_(results.bsf()) {}

  float bsf_hint() const { return bsf_.load(std::memory_order_relaxed); }

  float bsf() const {
    std::shared_lock lk(mutex_);
    return results_.bsf();
  }

  void offer(float dist, std::uint64_t pos) {
    if (dist >= bsf_hint()) return;
    std::unique_lock lk(mutex_);
    if (results_.insert(dist, pos)) bsf_.store(results_.bsf(), std::memory_order_relaxed);
  }

 private:
  ResultSet& results_;
  mutable std::shared_mutex mutex_;
  std::atomic<float> bsf_;
};

}  // namespace hercules
