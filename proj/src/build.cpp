#include "hercules/build.hpp"

#include <algorithm>
#include <array>
#include <barrier>
#include <exception>
#include <fstream>
#include <thread>
#include <utility>

#include <unistd.h>

#include "hercules/errors.hpp"

namespace hercules {

std::size_t BuildConfig::series_for_megabytes(double megabytes, std::size_t series_length) {
  const double bytes = megabytes * 1024.0 * 1024.0;
  return static_cast<std::size_t>(bytes / (static_cast<double>(series_length) * sizeof(float)));
}

std::size_t BuildConfig::scaled_db_size(std::size_t dataset_size) {
  constexpr std::size_t kPaperDbSize = 120000;
  constexpr std::size_t kPaperScale = 1000000;
  if (dataset_size >= kPaperScale) return kPaperDbSize;
  return std::max<std::size_t>(1, kPaperDbSize * dataset_size / kPaperScale);
}

std::filesystem::path spill_path(const std::filesystem::path& scratch_dir, std::uint64_t leaf_id) {
  return scratch_dir / ("leaf_" + std::to_string(leaf_id) + ".bin");
}

BuiltIndex::BuiltIndex(BuiltIndex&& other) noexcept { *this = std::move(other); }

BuiltIndex& BuiltIndex::operator=(BuiltIndex&& other) noexcept {
  if (this != &other) {
    release_scratch();
    series_length = other.series_length;
    dataset_size = other.dataset_size;
    leaf_threshold = other.leaf_threshold;
    root = std::move(other.root);
    regions = std::move(other.regions);
    scratch_dir = std::exchange(other.scratch_dir, {});
    stats = other.stats;
  }
  return *this;
}

BuiltIndex::~BuiltIndex() { release_scratch(); }

void BuiltIndex::release_scratch() {
  if (!scratch_dir.empty()) {
    std::error_code ec;
    std::filesystem::remove_all(scratch_dir, ec);
    scratch_dir.clear();
  }
  regions.clear();
  regions.shrink_to_fit();
}

namespace {

std::vector<float> read_spill(const std::filesystem::path& path, std::size_t count,
                              std::size_t n) {
  std::vector<float> values(count * n);
  if (count == 0) return values;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open spill file " + path.string());
  in.read(reinterpret_cast<char*>(values.data()),
          static_cast<std::streamsize>(values.size() * sizeof(float)));
  if (!in) throw IoError("short read on spill file " + path.string());
  return values;
}

void append_spill(const std::filesystem::path& path, std::span<const SeriesView> series) {
  if (series.empty()) return;
  std::ofstream out(path, std::ios::binary | std::ios::app);
  if (!out) throw IoError("cannot open spill file " + path.string());
  for (SeriesView s : series) {
    out.write(reinterpret_cast<const char*>(s.data()), static_cast<std::streamsize>(s.size_bytes()));
  }
  if (!out) throw IoError("write failed on spill file " + path.string());
}

class Builder {
 public:
  Builder(const BuildConfig& cfg, std::size_t data_size, BuiltIndex& out, BuildTrace* trace)
      : cfg_(cfg),
        n_(cfg.series_length),
        workers_(cfg.num_threads - 1),
        data_size_(data_size),
        out_(out),
        trace_(trace),
        dbarrier_(static_cast<std::ptrdiff_t>(cfg.num_threads)),
        continue_barrier_(static_cast<std::ptrdiff_t>(workers_)),
        flush_barrier_(static_cast<std::ptrdiff_t>(workers_)),
        handshake_(workers_),
        region_fill_(workers_, 0) {
    region_capacity_ = cfg.buffer_series / workers_;
    db_size_ = std::min(cfg.db_size, region_capacity_);
    for (auto& slot : dbuffer_) slot.resize(db_size_ * n_);
    out_.regions.assign(workers_, std::vector<float>(region_capacity_ * n_));
    out_.stats.effective_db_size = db_size_;
    out_.stats.region_capacity = region_capacity_;
    if (trace_) {
      trace_->dbarrier_passes.assign(workers_, 0);
      trace_->continue_passes.assign(workers_, 0);
      trace_->flush_passes.assign(workers_, 0);
      trace_->skipped_rounds.assign(workers_, 0);
    }
  }

  // The calling thread is the read coordinator.
  void run(const std::string& dataset_path) {
    std::ifstream in(dataset_path, std::ios::binary);
    if (!in) throw IoError("cannot open dataset " + dataset_path);

    unsigned toggle = 0;
    std::size_t next = 0;
    read_slot(in, toggle, next);
    toggle = 1 - toggle;

    std::vector<std::thread> threads;
    threads.reserve(workers_);
    for (std::size_t w = 0; w < workers_; ++w) threads.emplace_back([this, w] { insert_worker(w); });

    while (next < data_size_ && !aborted_.load()) {
      read_slot(in, toggle, next);
      toggle = 1 - toggle;
      dbarrier_.arrive_and_wait();
    }
    finished_[toggle].store(true);
    dbarrier_.arrive_and_wait();
    for (auto& t : threads) t.join();

    out_.stats.splits = splits_.load();
    if (error_) std::rethrow_exception(error_);
  }

 private:
  void read_slot(std::ifstream& in, unsigned slot, std::size_t& next) {
    const std::size_t count = std::min(db_size_, data_size_ - next);
    try {
      in.read(reinterpret_cast<char*>(dbuffer_[slot].data()),
              static_cast<std::streamsize>(count * n_ * sizeof(float)));
      if (!in) throw IoError("short read on dataset at series " + std::to_string(next));
    } catch (...) {
      fail(std::current_exception());
      slot_size_[slot].store(0);
      db_counter_[slot].store(0);
      next = data_size_;
      return;
    }
    slot_size_[slot].store(count);
    db_counter_[slot].store(0);
    next += count;
  }

  void fail(std::exception_ptr e) {
    std::lock_guard lk(error_mutex_);
    if (!error_) error_ = e;
    aborted_.store(true);
  }

  bool region_full(std::size_t w) const { return region_capacity_ - region_fill_[w] < db_size_; }

  void insert_worker(std::size_t w) {
    unsigned toggle = 0;
    std::size_t round = 0;
    while (!finished_[toggle].load()) {
      if (trace_ && trace_->before_claims) trace_->before_claims(w, round);
      const std::size_t slot_size = slot_size_[toggle].load();
      if (region_capacity_ - region_fill_[w] >= slot_size) {
        std::size_t pos = db_counter_[toggle].fetch_add(1);
        while (pos < slot_size) {
          if (!aborted_.load()) {
            if (trace_) {
              std::lock_guard lk(trace_->mutex);
              trace_->claims.push_back({round, w, pos});
            }
            try {
              insert_series(w, SeriesView(dbuffer_[toggle].data() + pos * n_, n_));
            } catch (...) {
              fail(std::current_exception());
            }
          }
          pos = db_counter_[toggle].fetch_add(1);
        }
      } else if (trace_) {
        std::lock_guard lk(trace_->mutex);
        ++trace_->skipped_rounds[w];
      }
      dbarrier_.arrive_and_wait();
      if (trace_) {
        std::lock_guard lk(trace_->mutex);
        ++trace_->dbarrier_passes[w];
      }
      if (w == 0) {
        flush_coordinator();
      } else {
        flush_worker(w);
      }
      toggle = 1 - toggle;
      ++round;
    }
  }

  void wait_for_handshake(std::size_t w) {
    volatile std::size_t spin = 0;
    while (!handshake_[w].load()) {
      for (std::size_t i = 0; i < cfg_.busy_wait; ++i) spin = spin + 1;
      std::this_thread::yield();
    }
  }

  void flush_coordinator() {
    handshake_[0].store(true);
    for (std::size_t w = 0; w < workers_; ++w) wait_for_handshake(w);
    const std::size_t seen = flush_counter_.load();
    const bool order = region_full(0) || seen >= cfg_.flush_threshold;
    flush_order_.store(order);
    flush_counter_.store(0);
    if (trace_) {
      std::lock_guard lk(trace_->mutex);
      trace_->flush_counter_seen.push_back(seen);
      trace_->flush_order.push_back(order);
    }
    continue_barrier_.arrive_and_wait();
    note_pass(trace_ ? &trace_->continue_passes : nullptr, 0);
    handshake_[0].store(false);
    ++out_.stats.rounds;
    if (order) {
      flushing_.store(true);
      try {
        flush_all();
      } catch (...) {
        fail(std::current_exception());
      }
      flushing_.store(false);
      ++out_.stats.flushes;
      flush_barrier_.arrive_and_wait();
      note_pass(trace_ ? &trace_->flush_passes : nullptr, 0);
      // Cleared only after every worker has passed the flush barrier, so a
      // slow worker cannot miss the order and skip the barrier.
      flush_order_.store(false);
    }
  }

  void flush_worker(std::size_t w) {
    if (region_full(w)) flush_counter_.fetch_add(1);
    handshake_[w].store(true);
    continue_barrier_.arrive_and_wait();
    note_pass(trace_ ? &trace_->continue_passes : nullptr, w);
    handshake_[w].store(false);
    if (flush_order_.load()) {
      flush_barrier_.arrive_and_wait();
      note_pass(trace_ ? &trace_->flush_passes : nullptr, w);
    }
  }

  void note_pass(std::vector<std::size_t>* counters, std::size_t w) {
    if (!counters) return;
    std::lock_guard lk(trace_->mutex);
    ++(*counters)[w];
  }

  // Every other insert worker is parked on a barrier while this runs.
  void flush_all() {
    for (Node* leaf : collect_leaves(out_.root.get())) {
      auto& mem = leaf->buffer.in_memory;
      if (mem.empty()) continue;
      std::vector<SeriesView> views;
      views.reserve(mem.size());
      for (const float* p : mem) views.emplace_back(p, n_);
      append_spill(spill_path(out_.scratch_dir, leaf->leaf_id), views);
      leaf->buffer.spilled += mem.size();
      mem.clear();
    }
    std::fill(region_fill_.begin(), region_fill_.end(), 0);
  }

  void insert_series(std::size_t w, SeriesView s) {
    if (flushing_.load() && trace_) trace_->writes_during_flush.fetch_add(1);
    float* slot = out_.regions[w].data() + region_fill_[w] * n_;
    std::copy(s.begin(), s.end(), slot);
    ++region_fill_[w];
    const SeriesView stored(slot, n_);

    Node* node = route_to_leaf(out_.root.get(), stored);
    auto lk = node->lock();
    while (!node->is_leaf()) {
      lk.unlock();
      node = route_to_leaf(node, stored);
      lk = node->lock();
    }
    update_leaf_synopsis(*node, stored);
    node->buffer.in_memory.push_back(slot);
    if (node->size > cfg_.leaf_threshold) split_leaf(*node);
  }

  // Caller holds the leaf's lock. Members come from the spill file and the
  // in-memory pointers; spilled members are re-spilled to the children.
  void split_leaf(Node& leaf) {
    const auto spill = spill_path(out_.scratch_dir, leaf.leaf_id);
    std::vector<float> spilled = read_spill(spill, leaf.buffer.spilled, n_);
    std::vector<SeriesView> from_disk;
    for (std::size_t k = 0; k < leaf.buffer.spilled; ++k) from_disk.emplace_back(spilled.data() + k * n_, n_);
    std::vector<const float*> from_memory = leaf.buffer.in_memory;
    split_recursive(leaf, from_disk, from_memory);
    std::error_code ec;
    std::filesystem::remove(spill, ec);
  }

  void split_recursive(Node& node, const std::vector<SeriesView>& from_disk,
                       const std::vector<const float*>& from_memory) {
    std::vector<SeriesView> members = from_disk;
    for (const float* p : from_memory) members.emplace_back(p, n_);
    const SplitChoice choice = get_best_split_policy(node.segmentation, members);
    SplitChildren kids = make_split_children(node, choice.policy, members, next_leaf_id_.fetch_add(1),
                                             next_leaf_id_.fetch_add(1));
    std::array<std::vector<SeriesView>, 2> disk;
    std::array<std::vector<const float*>, 2> memory;
    for (std::size_t k = 0; k < from_disk.size(); ++k) disk[kids.goes_left[k] ? 0 : 1].push_back(from_disk[k]);
    for (std::size_t k = 0; k < from_memory.size(); ++k) {
      memory[kids.goes_left[from_disk.size() + k] ? 0 : 1].push_back(from_memory[k]);
    }
    const bool separated = kids.left->size > 0 && kids.right->size > 0;
    std::array<Node*, 2> child = {kids.left.get(), kids.right.get()};
    for (int c = 0; c < 2; ++c) {
      if (separated && child[c]->size > cfg_.leaf_threshold) {
        split_recursive(*child[c], disk[c], memory[c]);
        continue;
      }
      append_spill(spill_path(out_.scratch_dir, child[c]->leaf_id), disk[c]);
      child[c]->buffer.spilled = disk[c].size();
      child[c]->buffer.in_memory = std::move(memory[c]);
    }
    node.become_internal(choice.policy, std::move(kids.left), std::move(kids.right));
    splits_.fetch_add(1);
  }

  const BuildConfig& cfg_;
  const std::size_t n_;
  const std::size_t workers_;
  const std::size_t data_size_;
  BuiltIndex& out_;
  BuildTrace* trace_;

  std::size_t region_capacity_ = 0;
  std::size_t db_size_ = 0;

  std::array<std::vector<float>, 2> dbuffer_;
  std::array<std::atomic<std::size_t>, 2> slot_size_{};
  std::array<std::atomic<std::size_t>, 2> db_counter_{};
  std::array<std::atomic<bool>, 2> finished_{};

  std::barrier<> dbarrier_;
  std::barrier<> continue_barrier_;
  std::barrier<> flush_barrier_;
  std::atomic<std::size_t> flush_counter_{0};
  std::atomic<bool> flush_order_{false};
  std::atomic<bool> flushing_{false};
  std::vector<std::atomic<bool>> handshake_;
  // Entry w is touched only by worker w, or by worker 0 while the others
  // wait on the flush barrier.
  std::vector<std::size_t> region_fill_;

  std::atomic<std::uint64_t> next_leaf_id_{1};
  std::atomic<std::size_t> splits_{0};

  std::atomic<bool> aborted_{false};
  std::mutex error_mutex_;
  std::exception_ptr error_;
};

std::filesystem::path make_scratch_dir(const std::filesystem::path& base) {
  static std::atomic<unsigned> counter{0};
  const auto root = base.empty() ? std::filesystem::temp_directory_path() : base;
  const auto dir = root / ("hercules-build-" + std::to_string(::getpid()) + "-" +
                           std::to_string(counter.fetch_add(1)));
  std::error_code ec;
  std::filesystem::remove_all(dir, ec);
  if (!std::filesystem::create_directories(dir, ec) || ec) {
    throw IoError("cannot create scratch directory " + dir.string());
  }
  return dir;
}

}  // namespace

std::vector<float> BuiltIndex::leaf_members(const Node& leaf) const {
  std::vector<float> values = read_spill(spill_path(scratch_dir, leaf.leaf_id), leaf.buffer.spilled,
                                         series_length);
  values.reserve(static_cast<std::size_t>(leaf.size) * series_length);
  for (const float* p : leaf.buffer.in_memory) values.insert(values.end(), p, p + series_length);
  return values;
}

BuiltIndex build_index(const std::string& dataset_path, const BuildConfig& config, BuildTrace* trace) {
  if (config.num_threads < 2) throw ConfigError("build needs at least 2 threads (reader + worker)");
  if (config.series_length == 0) throw ConfigError("series length must be positive");
  if (config.leaf_threshold == 0) throw ConfigError("leaf threshold must be positive");
  if (config.db_size == 0) throw ConfigError("double-buffer size must be positive");
  const std::size_t workers = config.num_threads - 1;
  if (config.buffer_series < workers) {
    throw ConfigError("buffer holds " + std::to_string(config.buffer_series) +
                      " series, fewer than one per insert worker");
  }
  const std::size_t data_size = raw_file_series_count(dataset_path, config.series_length);

  BuiltIndex out;
  out.series_length = config.series_length;
  out.dataset_size = data_size;
  out.leaf_threshold = config.leaf_threshold;
  out.root = std::make_unique<Node>(Segmentation::single(static_cast<std::uint32_t>(config.series_length)),
                                    nullptr);
  out.root->leaf_id = 0;
  out.scratch_dir = make_scratch_dir(config.scratch_dir);

  Builder builder(config, data_size, out, trace);
  builder.run(dataset_path);
  return out;
}

}  // namespace hercules
