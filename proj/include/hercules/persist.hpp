#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "hercules/build.hpp"
#include "hercules/tree.hpp"

namespace hercules {

inline constexpr std::uint32_t kFormatVersion = 1;
inline constexpr char kHtreeMagic[8] = {'H', 'R', 'C', 'L', 'T', 'R', 'E', 'E'};

inline constexpr const char* kHtreeFile = "htree.bin";
inline constexpr const char* kLrdFile = "lrd.bin";
inline constexpr const char* kLsdFile = "lsd.bin";

// Self-describing header of an index directory.
struct IndexSettings {
  std::uint32_t series_length = 0;
  std::uint64_t dataset_size = 0;
  std::uint32_t leaf_threshold = 0;
  std::uint32_t isax_segments = 16;
  std::uint32_t alphabet_size = 256;
  std::uint32_t format_version = kFormatVersion;

  // Throws ConfigError on non-positive fields or n mod l != 0.
  void validate() const;

  friend bool operator==(const IndexSettings&, const IndexSettings&) = default;
};

// HTree layout (little-endian):
//   header: magic[8] u32 version u32 n u64 dataset_size u32 tau u32 l
//           u32 alphabet u64 node_count
//   postorder node records:
//     u8 flags (bit0 leaf, bit1 vertical, bit2 sd attribute, bit3 upper half)
//     u32 m, u32 right_endpoints[m], f32 synopsis[4m] (mean_min mean_max
//     sd_min sd_max per segment), u64 size,
//     leaf:     u64 offset u64 count
//     internal: u32 segment_index u32 split_point u32 route_begin
//               u32 route_end f32 threshold
inline constexpr std::size_t kHtreeHeaderBytes = 8 + 4 + 4 + 8 + 4 + 4 + 4 + 8;

struct WriteTrace {
  enum class Event : std::uint8_t { Claimed, Processed, Written };
  struct Entry {
    Event event;
    std::size_t rank;
    std::size_t worker;  // writer entries use SIZE_MAX
  };
  std::mutex mutex;
  std::vector<Entry> entries;
};

// Widens, at every ancestor that was split vertically, the envelope of the
// split segment with s's stats over that segment. Locks each ancestor.
void vsplit_synopsis(Node& leaf, SeriesView s);

// Merges each child's envelopes into the parent's segments that were not
// split vertically there, walking from the leaf to the root.
void hsplit_synopsis(Node& leaf);

// Materializes HTree, LRDFile and LSDFile into `dir` (created if needed).
// num_threads WriteIndexWorkers post-process leaves while the calling
// thread appends finished leaves in inorder. Internal synopses are completed
// and internal sizes summed along the way. Scratch spill files are released.
void write_index(BuiltIndex& index, const std::filesystem::path& dir, std::size_t num_threads,
                 WriteTrace* trace = nullptr);

// Thread-safe positional reads of LRDFile.
class RawSeriesFile {
 public:
  RawSeriesFile() = default;
  RawSeriesFile(const std::filesystem::path& path, std::size_t series_length);
  RawSeriesFile(RawSeriesFile&& other) noexcept;
  RawSeriesFile& operator=(RawSeriesFile&& other) noexcept;
  RawSeriesFile(const RawSeriesFile&) = delete;
  RawSeriesFile& operator=(const RawSeriesFile&) = delete;
  ~RawSeriesFile();

  // Reads `count` series starting at series index `first` into dst.
  // Returns the bytes read.
  std::size_t read(std::uint64_t first, std::size_t count, float* dst) const;

  std::size_t series_length() const { return n_; }
  const std::filesystem::path& path() const { return path_; }

 private:
  int fd_ = -1;
  std::size_t n_ = 0;
  std::filesystem::path path_;
};

// A queryable index: tree and LSDFile resident, LRDFile read on demand.
class SearchableIndex {
 public:
  SearchableIndex() = default;
  SearchableIndex(SearchableIndex&&) noexcept = default;
  SearchableIndex& operator=(SearchableIndex&&) noexcept = default;

  // Uses the in-memory tree of a written index together with its files.
  static SearchableIndex attach(const BuiltIndex& index, const std::filesystem::path& dir);

  const IndexSettings& settings() const { return settings_; }
  const Node& root() const { return *root_; }
  std::span<const Node* const> leaves() const { return leaves_; }
  std::size_t total_series() const { return settings_.dataset_size; }
  std::span<const std::uint8_t> words() const { return words_; }
  const std::uint8_t* word(std::uint64_t pos) const {
    return words_.data() + pos * settings_.isax_segments;
  }
  const RawSeriesFile& raw() const { return raw_; }

 private:
  friend SearchableIndex load_index(const std::filesystem::path& dir);

  IndexSettings settings_;
  std::unique_ptr<Node> owned_root_;
  const Node* root_ = nullptr;
  std::vector<const Node*> leaves_;
  std::vector<std::uint8_t> words_;
  RawSeriesFile raw_;
};

// Loads an index directory; throws IntegrityError naming the offending file
// on size or version mismatches and ConfigError on invalid settings.
SearchableIndex load_index(const std::filesystem::path& dir);

IndexSettings read_settings(const std::filesystem::path& dir);

}  // namespace hercules
