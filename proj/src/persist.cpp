#include "hercules/persist.hpp"

#include <cstring>
#include <fstream>
#include <limits>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include "hercules/errors.hpp"
#include "hercules/summarization.hpp"

namespace hercules {

void IndexSettings::validate() const {
  if (series_length == 0 || leaf_threshold == 0 || isax_segments == 0 || alphabet_size == 0) {
    throw ConfigError("index settings must be positive");
  }
  if (series_length % isax_segments != 0) {
    throw ConfigError("series length " + std::to_string(series_length) +
                      " is not a multiple of the iSAX segment count " +
                      std::to_string(isax_segments));
  }
  if (alphabet_size > 256) throw ConfigError("alphabet size above 256 does not fit one byte");
}

namespace {

void spin_until(const std::atomic<bool>& flag) {
  std::size_t spins = 0;
  while (!flag.load(std::memory_order_acquire)) {
    if (++spins > 1000) std::this_thread::yield();
  }
}

class BinaryWriter {
 public:
  explicit BinaryWriter(const std::filesystem::path& path)
      : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError("cannot create " + path.string());
  }

  template <typename T>
  void put(const T& v) {
    out_.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void bytes(const void* p, std::size_t n) {
    out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
  }
  void finish() {
    out_.flush();
    if (!out_) throw IoError("write failed on " + path_.string());
  }

 private:
  std::filesystem::path path_;
  std::ofstream out_;
};

class BinaryReader {
 public:
  BinaryReader(std::vector<char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

  template <typename T>
  T get() {
    T v;
    need(sizeof(T));
    std::memcpy(&v, data_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return v;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, data_.data() + pos_, n);
    pos_ += n;
  }
  bool at_end() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > data_.size()) throw IntegrityError(name_ + ": truncated file");
  }

  std::vector<char> data_;
  std::string name_;
  std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

enum NodeFlags : std::uint8_t {
  kLeaf = 1u << 0,
  kVertical = 1u << 1,
  kSdAttribute = 1u << 2,
  kUpperHalf = 1u << 3,
};

void write_settings(BinaryWriter& w, const IndexSettings& s, std::uint64_t node_count) {
  w.bytes(kHtreeMagic, sizeof(kHtreeMagic));
  w.put(s.format_version);
  w.put(s.series_length);
  w.put(s.dataset_size);
  w.put(s.leaf_threshold);
  w.put(s.isax_segments);
  w.put(s.alphabet_size);
  w.put(node_count);
}

IndexSettings parse_settings(BinaryReader& r, const std::string& name, std::uint64_t& node_count) {
  char magic[sizeof(kHtreeMagic)];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kHtreeMagic, sizeof(magic)) != 0) throw IntegrityError(name + ": bad magic");
  IndexSettings s;
  s.format_version = r.get<std::uint32_t>();
  if (s.format_version != kFormatVersion) {
    throw IntegrityError(name + ": unsupported format version " + std::to_string(s.format_version));
  }
  s.series_length = r.get<std::uint32_t>();
  s.dataset_size = r.get<std::uint64_t>();
  s.leaf_threshold = r.get<std::uint32_t>();
  s.isax_segments = r.get<std::uint32_t>();
  s.alphabet_size = r.get<std::uint32_t>();
  node_count = r.get<std::uint64_t>();
  s.validate();
  return s;
}

// WriteIndexTree: postorder, summing internal sizes on the way up.
void write_tree(BinaryWriter& w, Node& node) {
  if (!node.is_leaf()) {
    write_tree(w, *node.left());
    write_tree(w, *node.right());
    node.size = node.left()->size + node.right()->size;
  }
  std::uint8_t flags = 0;
  if (node.is_leaf()) {
    flags |= kLeaf;
  } else {
    if (node.policy.kind == SplitKind::Vertical) flags |= kVertical;
    if (node.policy.attribute == SplitAttribute::Sd) flags |= kSdAttribute;
    if (node.policy.right_half) flags |= kUpperHalf;
  }
  w.put(flags);
  const auto m = static_cast<std::uint32_t>(node.segmentation.size());
  w.put(m);
  for (std::uint32_t e : node.segmentation.right_endpoints()) w.put(e);
  for (const SegmentEnvelope& z : node.synopsis) {
    w.put(z.mean_min);
    w.put(z.mean_max);
    w.put(z.sd_min);
    w.put(z.sd_max);
  }
  w.put(static_cast<std::uint64_t>(node.size));
  if (node.is_leaf()) {
    w.put(node.file_position.offset);
    w.put(node.file_position.count);
  } else {
    w.put(node.policy.segment_index);
    w.put(node.policy.split_point);
    w.put(node.policy.route_begin);
    w.put(node.policy.route_end);
    w.put(node.policy.threshold);
  }
}

struct LeafStage {
  std::vector<float> raw;
  std::vector<std::uint8_t> words;
};

void note(WriteTrace* trace, WriteTrace::Event e, std::size_t rank, std::size_t worker) {
  if (!trace) return;
  std::lock_guard lk(trace->mutex);
  trace->entries.push_back({e, rank, worker});
}

}  // namespace

// VSplitSynopsis: widen the vertically split segment of every ancestor
// with the series' stats over that segment.
void vsplit_synopsis(Node& leaf, SeriesView s) {
  for (Node* n = leaf.parent(); n != nullptr; n = n->parent()) {
    if (n->policy.kind != SplitKind::Vertical) continue;
    const std::size_t i = n->policy.segment_index;
    const SegmentStats st = segment_stats(s, n->segmentation.begin(i), n->segmentation.end(i));
    auto lk = n->lock();
    n->synopsis[i].widen(st);
  }
}

// HSplitSynopsis: merge each child's envelopes into the parent's segments
// that were not vertically split there, walking up to the root.
void hsplit_synopsis(Node& leaf) {
  Node* child = &leaf;
  for (Node* p = leaf.parent(); p != nullptr; child = p, p = p->parent()) {
    Synopsis snapshot;
    {
      auto lk = child->lock();
      snapshot = child->synopsis;
    }
    const bool vertical = p->policy.kind == SplitKind::Vertical;
    const std::size_t cut = p->policy.segment_index;
    auto lk = p->lock();
    for (std::size_t j = 0; j < p->segmentation.size(); ++j) {
      if (vertical && j == cut) continue;
      const std::size_t cj = vertical && j > cut ? j + 1 : j;
      p->synopsis[j].merge(snapshot[cj]);
    }
  }
}

void write_index(BuiltIndex& index, const std::filesystem::path& dir, std::size_t num_threads,
                 WriteTrace* trace) {
  IndexSettings settings;
  settings.series_length = static_cast<std::uint32_t>(index.series_length);
  settings.dataset_size = index.dataset_size;
  settings.leaf_threshold = static_cast<std::uint32_t>(index.leaf_threshold);
  settings.validate();
  if (num_threads == 0) throw ConfigError("write_index needs at least one worker");
  if (!index.root) throw ContractError("write_index: index has no tree");

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create index directory " + dir.string());
  const auto htree_path = dir / kHtreeFile;
  const auto lrd_path = dir / kLrdFile;
  const auto lsd_path = dir / kLsdFile;
  auto discard = [&] {
    std::error_code ignored;
    for (const auto& p : {htree_path, lrd_path, lsd_path}) std::filesystem::remove(p, ignored);
  };

  try {
    const std::size_t n = index.series_length;
    const Breakpoints bp(settings.alphabet_size);
    std::vector<Node*> leaves = collect_leaves(index.root.get());
    for (Node* leaf : leaves) {
      leaf->processed.store(false);
      leaf->written.store(false);
    }
    std::vector<LeafStage> stages(leaves.size());
    std::atomic<std::size_t> leaf_counter{0};
    std::atomic<bool> aborted{false};
    std::mutex error_mutex;
    std::exception_ptr error;

    auto worker = [&](std::size_t id) {
      for (std::size_t j = leaf_counter.fetch_add(1); j < leaves.size(); j = leaf_counter.fetch_add(1)) {
        note(trace, WriteTrace::Event::Claimed, j, id);
        Node& leaf = *leaves[j];
        LeafStage& stage = stages[j];
        if (!aborted.load()) {
          try {
            // ProcessLeaf
            stage.raw = index.leaf_members(leaf);
            const std::size_t count = stage.raw.size() / n;
            stage.words.resize(count * settings.isax_segments);
            for (std::size_t k = 0; k < count; ++k) {
              const SeriesView s(stage.raw.data() + k * n, n);
              const IsaxWord w = isax_from_paa(paa(s, settings.isax_segments), bp);
              std::copy(w.begin(), w.end(), stage.words.begin() + static_cast<std::ptrdiff_t>(k * settings.isax_segments));
              vsplit_synopsis(leaf, s);
            }
            hsplit_synopsis(leaf);
          } catch (...) {
            std::lock_guard lk(error_mutex);
            if (!error) error = std::current_exception();
            aborted.store(true);
          }
        }
        note(trace, WriteTrace::Event::Processed, j, id);
        leaf.processed.store(true, std::memory_order_release);
        spin_until(leaf.written);
      }
    };

    std::vector<std::thread> threads;
    for (std::size_t t = 0; t < num_threads; ++t) threads.emplace_back(worker, t);

    // WriteLeafData on the calling thread, strictly in inorder rank.
    {
      BinaryWriter lrd(lrd_path);
      BinaryWriter lsd(lsd_path);
      std::uint64_t offset = 0;
      for (std::size_t j = 0; j < leaves.size(); ++j) {
        Node& leaf = *leaves[j];
        spin_until(leaf.processed);
        LeafStage& stage = stages[j];
        const std::uint64_t count = stage.raw.size() / n;
        if (!aborted.load()) {
          lrd.bytes(stage.raw.data(), stage.raw.size() * sizeof(float));
          lsd.bytes(stage.words.data(), stage.words.size());
        }
        leaf.file_position = {offset, count};
        offset += count;
        stage = {};
        leaf.buffer = {};
        note(trace, WriteTrace::Event::Written, j, std::numeric_limits<std::size_t>::max());
        leaf.written.store(true, std::memory_order_release);
      }
      for (auto& t : threads) t.join();
      if (error) std::rethrow_exception(error);
      lrd.finish();
      lsd.finish();
      if (offset != index.dataset_size) {
        throw IntegrityError("leaves hold " + std::to_string(offset) + " series, expected " +
                             std::to_string(index.dataset_size));
      }
    }

    BinaryWriter htree(htree_path);
    write_settings(htree, settings, count_nodes(index.root.get()));
    write_tree(htree, *index.root);
    htree.finish();
    index.release_scratch();
  } catch (...) {
    discard();
    throw;
  }
}

RawSeriesFile::RawSeriesFile(const std::filesystem::path& path, std::size_t series_length)
    : n_(series_length), path_(path) {
  fd_ = ::open(path.c_str(), O_RDONLY);
  if (fd_ < 0) throw IoError("cannot open " + path.string());
}

RawSeriesFile::RawSeriesFile(RawSeriesFile&& other) noexcept { *this = std::move(other); }

RawSeriesFile& RawSeriesFile::operator=(RawSeriesFile&& other) noexcept {
  if (this != &other) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = std::exchange(other.fd_, -1);
    n_ = other.n_;
    path_ = std::move(other.path_);
  }
  return *this;
}

RawSeriesFile::~RawSeriesFile() {
  if (fd_ >= 0) ::close(fd_);
}

std::size_t RawSeriesFile::read(std::uint64_t first, std::size_t count, float* dst) const {
  const std::size_t bytes = count * n_ * sizeof(float);
  auto* out = reinterpret_cast<char*>(dst);
  std::size_t done = 0;
  const auto base = static_cast<off_t>(first * n_ * sizeof(float));
  while (done < bytes) {
    const ssize_t got = ::pread(fd_, out + done, bytes - done, base + static_cast<off_t>(done));
    if (got <= 0) throw IoError("short read on " + path_.string());
    done += static_cast<std::size_t>(got);
  }
  return bytes;
}

namespace {

std::unique_ptr<Node> parse_tree(BinaryReader& r, std::uint64_t node_count, const IndexSettings& s,
                                 const std::string& name) {
  std::vector<std::unique_ptr<Node>> stack;
  for (std::uint64_t i = 0; i < node_count; ++i) {
    const auto flags = r.get<std::uint8_t>();
    const auto m = r.get<std::uint32_t>();
    if (m == 0 || m > s.series_length) throw IntegrityError(name + ": bad segment count");
    std::vector<std::uint32_t> ends(m);
    for (auto& e : ends) e = r.get<std::uint32_t>();
    Synopsis syn(m);
    for (auto& z : syn) {
      z.mean_min = r.get<float>();
      z.mean_max = r.get<float>();
      z.sd_min = r.get<float>();
      z.sd_max = r.get<float>();
    }
    const auto size = r.get<std::uint64_t>();
    Segmentation seg;
    try {
      seg = Segmentation(std::move(ends));
    } catch (const ContractError& e) {
      throw IntegrityError(name + ": " + e.what());
    }
    if (seg.series_length() != s.series_length) throw IntegrityError(name + ": segmentation length");
    auto node = std::make_unique<Node>(std::move(seg), nullptr);
    node->synopsis = std::move(syn);
    node->size = size;
    if (flags & kLeaf) {
      node->file_position.offset = r.get<std::uint64_t>();
      node->file_position.count = r.get<std::uint64_t>();
    } else {
      SplitPolicy p;
      p.kind = (flags & kVertical) ? SplitKind::Vertical : SplitKind::Horizontal;
      p.attribute = (flags & kSdAttribute) ? SplitAttribute::Sd : SplitAttribute::Mean;
      p.right_half = (flags & kUpperHalf) != 0;
      p.segment_index = r.get<std::uint32_t>();
      p.split_point = r.get<std::uint32_t>();
      p.route_begin = r.get<std::uint32_t>();
      p.route_end = r.get<std::uint32_t>();
      p.threshold = r.get<float>();
      if (stack.size() < 2) throw IntegrityError(name + ": internal node without two children");
      if (p.route_begin >= p.route_end || p.route_end > s.series_length ||
          p.segment_index >= node->segmentation.size()) {
        throw IntegrityError(name + ": bad split policy");
      }
      auto right = std::move(stack.back());
      stack.pop_back();
      auto left = std::move(stack.back());
      stack.pop_back();
      node->become_internal(p, std::move(left), std::move(right));
      if (node->size != node->left()->size + node->right()->size) {
        throw IntegrityError(name + ": internal size is not the sum of its children");
      }
    }
    stack.push_back(std::move(node));
  }
  if (stack.size() != 1) throw IntegrityError(name + ": record stream does not form one tree");
  if (!r.at_end()) throw IntegrityError(name + ": trailing bytes after the last node");
  return std::move(stack.back());
}

}  // namespace

IndexSettings read_settings(const std::filesystem::path& dir) {
  const auto path = dir / kHtreeFile;
  BinaryReader r(slurp(path), path.string());
  std::uint64_t node_count = 0;
  return parse_settings(r, path.string(), node_count);
}

SearchableIndex load_index(const std::filesystem::path& dir) {
  const auto htree_path = dir / kHtreeFile;
  const auto lrd_path = dir / kLrdFile;
  const auto lsd_path = dir / kLsdFile;
  for (const auto& p : {htree_path, lrd_path, lsd_path}) {
    if (!std::filesystem::exists(p)) throw IoError("missing index file " + p.string());
  }

  SearchableIndex idx;
  BinaryReader r(slurp(htree_path), htree_path.string());
  std::uint64_t node_count = 0;
  idx.settings_ = parse_settings(r, htree_path.string(), node_count);
  const IndexSettings& s = idx.settings_;

  const auto lrd_bytes = std::filesystem::file_size(lrd_path);
  if (lrd_bytes != s.dataset_size * s.series_length * sizeof(float)) {
    throw IntegrityError(lrd_path.string() + ": size " + std::to_string(lrd_bytes) +
                         " does not match the settings");
  }
  const auto lsd_bytes = std::filesystem::file_size(lsd_path);
  if (lsd_bytes != s.dataset_size * s.isax_segments) {
    throw IntegrityError(lsd_path.string() + ": size " + std::to_string(lsd_bytes) +
                         " does not match the settings");
  }

  idx.owned_root_ = parse_tree(r, node_count, s, htree_path.string());
  idx.root_ = idx.owned_root_.get();
  idx.leaves_ = collect_leaves(idx.root_);
  std::uint64_t expect = 0;
  for (const Node* leaf : idx.leaves_) {
    if (leaf->file_position.offset != expect || leaf->file_position.count != leaf->size) {
      throw IntegrityError(htree_path.string() + ": leaf file positions are not contiguous");
    }
    expect += leaf->file_position.count;
  }
  if (expect != s.dataset_size) throw IntegrityError(htree_path.string() + ": leaf sizes do not sum");

  const std::vector<char> words = slurp(lsd_path);
  idx.words_.assign(words.begin(), words.end());
  idx.raw_ = RawSeriesFile(lrd_path, s.series_length);
  return idx;
}

SearchableIndex SearchableIndex::attach(const BuiltIndex& index, const std::filesystem::path& dir) {
  SearchableIndex idx;
  const IndexSettings on_disk = read_settings(dir);
  idx.settings_ = on_disk;
  if (on_disk.series_length != index.series_length || on_disk.dataset_size != index.dataset_size) {
    throw IntegrityError((dir / kHtreeFile).string() + ": does not describe this index");
  }
  idx.root_ = index.root.get();
  idx.leaves_ = collect_leaves(idx.root_);
  const std::vector<char> words = slurp(dir / kLsdFile);
  idx.words_.assign(words.begin(), words.end());
  if (idx.words_.size() != on_disk.dataset_size * on_disk.isax_segments) {
    throw IntegrityError((dir / kLsdFile).string() + ": size does not match the settings");
  }
  idx.raw_ = RawSeriesFile(dir / kLrdFile, on_disk.series_length);
  return idx;
}

}  // namespace hercules
