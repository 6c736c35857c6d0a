#include "hercules/tree.hpp"

#include <algorithm>

#include "hercules/errors.hpp"

namespace hercules {

float SplitPolicy::routed_value(SeriesView s) const {
  const SegmentStats st = segment_stats(s, route_begin, route_end);
  return attribute == SplitAttribute::Mean ? st.mean : st.sd;
}

Segmentation SplitPolicy::child_segmentation(const Segmentation& parent) const {
  if (kind == SplitKind::Horizontal) return parent;
  return parent.with_split(segment_index, split_point);
}

SplitPolicy make_policy(const Segmentation& seg, std::uint32_t segment_index,
                        SplitAttribute attribute, SplitKind kind, bool right_half) {
  if (segment_index >= seg.size()) throw ContractError("make_policy: segment out of range");
  SplitPolicy p;
  p.segment_index = segment_index;
  p.attribute = attribute;
  p.kind = kind;
  const std::uint32_t b = seg.begin(segment_index);
  const std::uint32_t e = seg.end(segment_index);
  if (kind == SplitKind::Horizontal) {
    p.route_begin = b;
    p.route_end = e;
  } else {
    if (e - b < 2) throw ContractError("make_policy: segment too narrow for a vertical split");
    p.split_point = b + (e - b) / 2;
    p.right_half = right_half;
    p.route_begin = right_half ? p.split_point : b;
    p.route_end = right_half ? e : p.split_point;
  }
  return p;
}

Node::Node(Segmentation seg, Node* parent)
    : segmentation(std::move(seg)), synopsis(segmentation.size()), parent_(parent) {}

void Node::become_internal(const SplitPolicy& p, std::unique_ptr<Node> left,
                           std::unique_ptr<Node> right) {
  policy = p;
  left_ = std::move(left);
  right_ = std::move(right);
  left_->parent_ = this;
  right_->parent_ = this;
  buffer = {};
  leaf_.store(false, std::memory_order_release);
}

Node* route_to_leaf(Node* start, SeriesView s) {
  Node* n = start;
  while (!n->is_leaf()) n = n->policy.goes_left(s) ? n->left() : n->right();
  return n;
}

const Node* route_to_leaf(const Node* start, SeriesView s) {
  return route_to_leaf(const_cast<Node*>(start), s);
}

void update_leaf_synopsis(Node& leaf, SeriesView s) {
  const Segmentation& seg = leaf.segmentation;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    leaf.synopsis[i].widen(segment_stats(s, seg.begin(i), seg.end(i)));
  }
  ++leaf.size;
}

Synopsis compute_synopsis(const Segmentation& seg, std::span<const SeriesView> members) {
  Synopsis syn(seg.size());
  for (SeriesView s : members) {
    for (std::size_t i = 0; i < seg.size(); ++i) {
      syn[i].widen(segment_stats(s, seg.begin(i), seg.end(i)));
    }
  }
  return syn;
}

double quality_of_summary(const Segmentation& seg, const Synopsis& syn) {
  double q = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    if (syn[i].empty()) return 0.0;
    const double dm = static_cast<double>(syn[i].mean_max) - syn[i].mean_min;
    const double ds = static_cast<double>(syn[i].sd_max) - syn[i].sd_min;
    q += static_cast<double>(seg.width(i)) * (dm * dm + ds * ds);
  }
  return q;
}

namespace {

// Stats of every member over a fixed list of point ranges, row-major by member.
struct StatsTable {
  std::size_t columns = 0;
  std::vector<SegmentStats> cells;

  const SegmentStats& at(std::size_t member, std::size_t col) const {
    return cells[member * columns + col];
  }
};

StatsTable tabulate(std::span<const SeriesView> members,
                    const std::vector<std::pair<std::uint32_t, std::uint32_t>>& ranges) {
  StatsTable t;
  t.columns = ranges.size();
  t.cells.resize(members.size() * ranges.size());
  for (std::size_t k = 0; k < members.size(); ++k) {
    for (std::size_t c = 0; c < ranges.size(); ++c) {
      t.cells[k * t.columns + c] = segment_stats(members[k], ranges[c].first, ranges[c].second);
    }
  }
  return t;
}

float attribute_of(const SegmentStats& st, SplitAttribute a) {
  return a == SplitAttribute::Mean ? st.mean : st.sd;
}

}  // namespace

std::vector<SplitCandidate> enumerate_split_candidates(const Segmentation& seg,
                                                       std::span<const SeriesView> members) {
  const std::size_t m = seg.size();
  const std::size_t rho = members.size();

  // Columns 0..m-1: the node's own segments. Then, for each segment wide
  // enough to cut, its lower and upper halves.
  std::vector<std::pair<std::uint32_t, std::uint32_t>> ranges;
  std::vector<std::size_t> half_column(m, 0);
  for (std::size_t i = 0; i < m; ++i) ranges.emplace_back(seg.begin(i), seg.end(i));
  for (std::size_t i = 0; i < m; ++i) {
    if (seg.width(i) < 2) continue;
    const std::uint32_t mid = seg.begin(i) + seg.width(i) / 2;
    half_column[i] = ranges.size();
    ranges.emplace_back(seg.begin(i), mid);
    ranges.emplace_back(mid, seg.end(i));
  }
  const StatsTable table = tabulate(members, ranges);

  auto envelope_quality = [&](const std::vector<std::size_t>& cols,
                              const std::vector<std::uint32_t>& widths,
                              const std::vector<std::size_t>& who) {
    if (who.empty()) return 0.0;
    double q = 0.0;
    for (std::size_t c = 0; c < cols.size(); ++c) {
      SegmentEnvelope z;
      for (std::size_t k : who) z.widen(table.at(k, cols[c]));
      const double dm = static_cast<double>(z.mean_max) - z.mean_min;
      const double ds = static_cast<double>(z.sd_max) - z.sd_min;
      q += static_cast<double>(widths[c]) * (dm * dm + ds * ds);
    }
    return q;
  };

  std::vector<std::size_t> all(rho);
  for (std::size_t k = 0; k < rho; ++k) all[k] = k;
  std::vector<std::size_t> parent_cols(m);
  std::vector<std::uint32_t> parent_widths(m);
  for (std::size_t i = 0; i < m; ++i) {
    parent_cols[i] = i;
    parent_widths[i] = seg.width(i);
  }
  const double parent_quality = envelope_quality(parent_cols, parent_widths, all);

  std::vector<SplitCandidate> out;
  // The parent is scored at the children's resolution, so a V-split is
  // judged against the parent summarized over the refined segmentation.
  auto evaluate = [&](SplitPolicy policy, std::size_t route_col,
                      const std::vector<std::size_t>& child_cols,
                      const std::vector<std::uint32_t>& child_widths, double before) {
    float lo = std::numeric_limits<float>::infinity();
    float hi = -std::numeric_limits<float>::infinity();
    for (std::size_t k = 0; k < rho; ++k) {
      const float v = attribute_of(table.at(k, route_col), policy.attribute);
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    policy.threshold = rho == 0 ? 0.0f : (lo + hi) / 2.0f;
    std::vector<std::size_t> left;
    std::vector<std::size_t> right;
    for (std::size_t k = 0; k < rho; ++k) {
      const float v = attribute_of(table.at(k, route_col), policy.attribute);
      (v < policy.threshold ? left : right).push_back(k);
    }
    SplitCandidate c;
    c.policy = policy;
    c.left_count = left.size();
    c.right_count = right.size();
    if (!left.empty() && !right.empty()) {
      const double ql = envelope_quality(child_cols, child_widths, left);
      const double qr = envelope_quality(child_cols, child_widths, right);
      c.gain = before - (static_cast<double>(left.size()) * ql +
                                 static_cast<double>(right.size()) * qr) /
                                    static_cast<double>(rho);
    }
    out.push_back(c);
  };

  for (std::size_t i = 0; i < m; ++i) {
    // Child layout for a vertical split of segment i.
    std::vector<std::size_t> v_cols;
    std::vector<std::uint32_t> v_widths;
    double v_quality = 0.0;
    if (seg.width(i) >= 2) {
      const std::uint32_t mid = seg.begin(i) + seg.width(i) / 2;
      for (std::size_t j = 0; j < m; ++j) {
        if (j == i) {
          v_cols.push_back(half_column[i]);
          v_widths.push_back(mid - seg.begin(i));
          v_cols.push_back(half_column[i] + 1);
          v_widths.push_back(seg.end(i) - mid);
        } else {
          v_cols.push_back(j);
          v_widths.push_back(seg.width(j));
        }
      }
      v_quality = envelope_quality(v_cols, v_widths, all);
    }
    const auto si = static_cast<std::uint32_t>(i);
    for (SplitAttribute attr : {SplitAttribute::Mean, SplitAttribute::Sd}) {
      evaluate(make_policy(seg, si, attr, SplitKind::Horizontal, false), i, parent_cols,
               parent_widths, parent_quality);
      if (seg.width(i) < 2) continue;
      for (bool upper : {false, true}) {
        evaluate(make_policy(seg, si, attr, SplitKind::Vertical, upper),
                 half_column[i] + (upper ? 1 : 0), v_cols, v_widths, v_quality);
      }
    }
  }
  return out;
}

SplitChoice get_best_split_policy(const Segmentation& seg, std::span<const SeriesView> members) {
  const auto candidates = enumerate_split_candidates(seg, members);
  SplitChoice best;
  best.fallback = true;
  for (const SplitCandidate& c : candidates) {
    if (c.gain > best.gain) {
      best.policy = c.policy;
      best.gain = c.gain;
      best.fallback = false;
    }
  }
  if (best.fallback) {
    // Degenerate leaf: the first candidate is the H-split on segment 0's mean.
    best.policy = candidates.front().policy;
    best.gain = 0.0;
  }
  return best;
}

std::vector<bool> partition_members(const SplitPolicy& policy, std::span<const SeriesView> members) {
  std::vector<bool> left(members.size());
  for (std::size_t k = 0; k < members.size(); ++k) left[k] = policy.goes_left(members[k]);
  return left;
}

SplitChildren make_split_children(Node& leaf, const SplitPolicy& policy,
                                  std::span<const SeriesView> members, std::uint64_t left_id,
                                  std::uint64_t right_id) {
  SplitChildren out;
  out.goes_left = partition_members(policy, members);
  const Segmentation child_seg = policy.child_segmentation(leaf.segmentation);
  std::vector<SeriesView> lm;
  std::vector<SeriesView> rm;
  for (std::size_t k = 0; k < members.size(); ++k) (out.goes_left[k] ? lm : rm).push_back(members[k]);
  out.left = std::make_unique<Node>(child_seg, &leaf);
  out.right = std::make_unique<Node>(child_seg, &leaf);
  out.left->synopsis = compute_synopsis(child_seg, lm);
  out.right->synopsis = compute_synopsis(child_seg, rm);
  out.left->size = lm.size();
  out.right->size = rm.size();
  out.left->leaf_id = left_id;
  out.right->leaf_id = right_id;
  return out;
}

std::vector<bool> split_node(Node& leaf, const SplitPolicy& policy,
                             std::span<const SeriesView> members, std::uint64_t left_id,
                             std::uint64_t right_id) {
  if (!leaf.is_leaf()) throw ContractError("split_node: node is already internal");
  SplitChildren c = make_split_children(leaf, policy, members, left_id, right_id);
  leaf.become_internal(policy, std::move(c.left), std::move(c.right));
  return std::move(c.goes_left);
}

namespace {

template <typename NodePtr>
void inorder_leaves(NodePtr n, std::vector<NodePtr>& out) {
  if (n->is_leaf()) {
    out.push_back(n);
    return;
  }
  inorder_leaves<NodePtr>(n->left(), out);
  inorder_leaves<NodePtr>(n->right(), out);
}

}  // namespace

std::vector<Node*> collect_leaves(Node* root) {
  std::vector<Node*> out;
  inorder_leaves<Node*>(root, out);
  return out;
}

std::vector<const Node*> collect_leaves(const Node* root) {
  std::vector<const Node*> out;
  inorder_leaves<const Node*>(root, out);
  return out;
}

std::size_t count_nodes(const Node* root) {
  if (root->is_leaf()) return 1;
  return 1 + count_nodes(root->left()) + count_nodes(root->right());
}

}  // namespace hercules
