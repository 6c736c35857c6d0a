#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <vector>

#include "hercules/series.hpp"
#include "hercules/summarization.hpp"

namespace hercules {

enum class SplitAttribute : std::uint8_t { Mean = 0, Sd = 1 };
enum class SplitKind : std::uint8_t { Horizontal = 0, Vertical = 1 };

// How an internal node routes series to its children. A series goes left
// when the routed statistic over [route_begin, route_end) is strictly below
// `threshold`, right otherwise.
struct SplitPolicy {
  std::uint32_t segment_index = 0;  // segment of the node's own segmentation
  SplitAttribute attribute = SplitAttribute::Mean;
  SplitKind kind = SplitKind::Horizontal;
  std::uint32_t split_point = 0;  // vertical splits only
  bool right_half = false;        // vertical splits: route on the upper half
  float threshold = 0.0f;
  std::uint32_t route_begin = 0;
  std::uint32_t route_end = 0;

  float routed_value(SeriesView s) const;
  bool goes_left(SeriesView s) const { return routed_value(s) < threshold; }

  // Segmentation of both children given the parent's.
  Segmentation child_segmentation(const Segmentation& parent) const;

  friend bool operator==(const SplitPolicy&, const SplitPolicy&) = default;
};

// Policy with its threshold unset; `seg` supplies the routed range.
SplitPolicy make_policy(const Segmentation& seg, std::uint32_t segment_index,
                        SplitAttribute attribute, SplitKind kind, bool right_half);

struct FilePosition {
  std::uint64_t offset = 0;  // series index of the leaf's first series in LRDFile
  std::uint64_t count = 0;
};

// Construction-time leaf payload: pointers into the per-worker HBuffer
// regions plus the number of members already spilled to the leaf's file.
struct SoftBuffer {
  std::vector<const float*> in_memory;
  std::uint64_t spilled = 0;
};

class Node {
 public:
  Node(Segmentation seg, Node* parent);

  Node(const Node&) = delete;
  Node& operator=(const Node&) = delete;

  bool is_leaf() const { return leaf_.load(std::memory_order_acquire); }
  Node* left() const { return left_.get(); }
  Node* right() const { return right_.get(); }
  Node* parent() const { return parent_; }

  // Installs children and publishes the node as internal. Children must be
  // fully populated before the call; routers read them without locks.
  void become_internal(const SplitPolicy& policy, std::unique_ptr<Node> left,
                       std::unique_ptr<Node> right);

  std::unique_lock<std::mutex> lock() { return std::unique_lock(mutex_); }

  Segmentation segmentation;
  Synopsis synopsis;
  std::uint64_t size = 0;
  SplitPolicy policy;  // internal nodes only

  // Leaves only.
  std::uint64_t leaf_id = 0;
  SoftBuffer buffer;
  FilePosition file_position;

  // Index-writing handshake between workers and the leaf writer.
  std::atomic<bool> processed{false};
  std::atomic<bool> written{false};

 private:
  std::atomic<bool> leaf_{true};
  std::unique_ptr<Node> left_;
  std::unique_ptr<Node> right_;
  Node* parent_;
  std::mutex mutex_;
};

// Follows split policies from `start` until a leaf. No locking: callers
// inserting concurrently must re-check is_leaf() under the leaf's lock.
Node* route_to_leaf(Node* start, SeriesView s);
const Node* route_to_leaf(const Node* start, SeriesView s);

// Widens the leaf's envelopes with `s` and bumps its size. Caller holds the lock.
void update_leaf_synopsis(Node& leaf, SeriesView s);

// From-scratch envelopes of `members` over `seg`.
Synopsis compute_synopsis(const Segmentation& seg, std::span<const SeriesView> members);

// Sum over segments of w * (mean range^2 + sd range^2); 0 for an empty synopsis.
double quality_of_summary(const Segmentation& seg, const Synopsis& syn);

struct SplitCandidate {
  SplitPolicy policy;
  double gain = 0.0;
  std::size_t left_count = 0;
  std::size_t right_count = 0;
};

// Every admissible policy for a leaf in tie-break order: segment ascending,
// Mean before Sd, H-split before V-split, lower half before upper half.
// Gain is the parent's quality minus the size-weighted child qualities, all
// measured over the children's segmentation. Candidates whose partition
// leaves one child empty have gain 0.
std::vector<SplitCandidate> enumerate_split_candidates(const Segmentation& seg,
                                                       std::span<const SeriesView> members);

struct SplitChoice {
  SplitPolicy policy;
  double gain = 0.0;
  bool fallback = false;  // no candidate had positive gain
};

// Highest-gain candidate, first in tie-break order on ties. Falls back to an
// H-split on the mean of segment 0 when nothing has positive gain.
SplitChoice get_best_split_policy(const Segmentation& seg, std::span<const SeriesView> members);

// Splits members by the policy; result[i] is true when members[i] goes left.
std::vector<bool> partition_members(const SplitPolicy& policy, std::span<const SeriesView> members);

struct SplitChildren {
  std::unique_ptr<Node> left;
  std::unique_ptr<Node> right;
  std::vector<bool> goes_left;
};

// Builds the two leaf children of `leaf` (not yet attached) with sizes and
// synopses recomputed from the routed members.
SplitChildren make_split_children(Node& leaf, const SplitPolicy& policy,
                                  std::span<const SeriesView> members, std::uint64_t left_id,
                                  std::uint64_t right_id);

// make_split_children + become_internal. Returns the routing decisions so
// callers can move payloads; soft buffers are left to the caller.
std::vector<bool> split_node(Node& leaf, const SplitPolicy& policy,
                             std::span<const SeriesView> members,
                             std::uint64_t left_id = 0, std::uint64_t right_id = 0);

// Leaves in inorder (left to right).
std::vector<Node*> collect_leaves(Node* root);
std::vector<const Node*> collect_leaves(const Node* root);

std::size_t count_nodes(const Node* root);

}  // namespace hercules
