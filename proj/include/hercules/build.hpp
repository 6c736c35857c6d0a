#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "hercules/tree.hpp"

namespace hercules {

struct BuildConfig {
  std::size_t series_length = 256;
  std::size_t leaf_threshold = 1000;  // tau
  // One reading coordinator plus num_threads - 1 insert workers.
  std::size_t num_threads = 2;
  // Series per double-buffer slot (InitialDBSize). Clamped to the per-worker
  // HBuffer region so that a worker with an empty region can always take a
  // whole slot.
  std::size_t db_size = 120000;
  // Total HBuffer capacity in series, split evenly among insert workers.
  std::size_t buffer_series = 0;
  // Number of full FlushWorker regions that triggers a flush (compared >=).
  std::size_t flush_threshold = 1;
  // Where per-leaf spill files live until the index is written.
  std::filesystem::path scratch_dir;
  // Spin iterations in the handshake loop before yielding.
  std::size_t busy_wait = 1000;

  static std::size_t series_for_megabytes(double megabytes, std::size_t series_length);
  // 120K series at 1M and above, proportionally less below (at least 1).
  static std::size_t scaled_db_size(std::size_t dataset_size);
};

struct BuildStats {
  std::size_t rounds = 0;   // DBarrier rounds completed by the insert workers
  std::size_t flushes = 0;  // rounds whose FlushOrder was set
  std::size_t splits = 0;
  std::size_t effective_db_size = 0;
  std::size_t region_capacity = 0;
};

// Optional instrumentation for protocol tests. All members are filled by
// the build threads; read them only after build_index returns.
struct BuildTrace {
  struct Claim {
    std::size_t round;
    std::size_t worker;
    std::size_t position;
  };
  std::mutex mutex;
  std::vector<Claim> claims;
  // Per round, the FlushCounter value the coordinator saw before deciding.
  std::vector<std::size_t> flush_counter_seen;
  std::vector<bool> flush_order;
  // Per worker: barrier passages.
  std::vector<std::size_t> dbarrier_passes;
  std::vector<std::size_t> continue_passes;
  std::vector<std::size_t> flush_passes;
  // Rounds in which each worker skipped insertion because its region was full.
  std::vector<std::size_t> skipped_rounds;
  // HBuffer writes attempted while a flush was in progress; must stay 0.
  std::atomic<std::size_t> writes_during_flush{0};
  // Called by each insert worker at the start of a round, before claiming.
  // Lets tests skew which worker fills its region first.
  std::function<void(std::size_t worker, std::size_t round)> before_claims;
};

// In-memory result of construction: the tree, the HBuffer regions its
// leaves still point into, and the scratch directory holding spill files.
class BuiltIndex {
 public:
  BuiltIndex() = default;
  BuiltIndex(BuiltIndex&& other) noexcept;
  BuiltIndex& operator=(BuiltIndex&& other) noexcept;
  ~BuiltIndex();

  std::size_t series_length = 0;
  std::size_t dataset_size = 0;
  std::size_t leaf_threshold = 0;
  std::unique_ptr<Node> root;
  std::vector<std::vector<float>> regions;
  std::filesystem::path scratch_dir;
  BuildStats stats;

  // All members of a leaf: spilled ones first (in spill order), then the
  // ones still in memory.
  std::vector<float> leaf_members(const Node& leaf) const;

  // Drops spill files and buffers. Called by write_index once LRDFile holds
  // everything; also on destruction.
  void release_scratch();
};

std::filesystem::path spill_path(const std::filesystem::path& scratch_dir, std::uint64_t leaf_id);

// Builds the tree from a raw dataset file using the double-buffered
// read coordinator, num_threads - 1 insert workers and the flush protocol.
BuiltIndex build_index(const std::string& dataset_path, const BuildConfig& config,
                       BuildTrace* trace = nullptr);

}  // namespace hercules
