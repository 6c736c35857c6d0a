#pragma once

#include <cstdint>
#include <queue>
#include <string>
#include <vector>

#include "hercules/kernels.hpp"
#include "hercules/persist.hpp"
#include "hercules/results.hpp"
#include "hercules/summarization.hpp"

namespace hercules {

struct QueryConfig {
  std::size_t k = 1;
  std::size_t lmax = 80;
  double eapca_th = 0.25;
  double sax_th = 0.50;
  std::size_t num_threads = 1;

  void validate() const;
};

// The phase a query finished in: 4 is full refinement, scan2/scan3 are the
// skip-sequential fallbacks taken after leaf or series filtering.
enum class Phase : std::uint8_t { Approx = 1, Leaves = 2, Series = 3, Refine = 4, Scan2, Scan3 };

std::string to_string(Phase p);

struct QueryMetrics {
  std::uint64_t query_id = 0;
  std::size_t k = 0;
  Phase phase = Phase::Approx;
  double eapca_pr = 0.0;
  double sax_pr = 0.0;
  std::uint64_t bytes_read = 0;
  std::uint64_t leaf_reads = 0;    // contiguous leaf slices read
  std::uint64_t series_reads = 0;  // single-series reads in refinement
  std::size_t approx_leaves = 0;
  std::size_t candidate_leaves = 0;
  std::size_t candidate_series = 0;
  double wall_time = 0.0;   // seconds
  double input_time = 0.0;  // seconds spent in LRDFile reads, summed over threads
  double fraction_accessed = 0.0;

  double cpu_time() const { return wall_time > input_time ? wall_time - input_time : 0.0; }
};

// Best-first frontier ordered by LB_EAPCA; equal bounds pop in push order.
class NodeQueue {
 public:
  struct Item {
    float lb;
    std::uint64_t seq;
    const Node* node;
  };

  void push(const Node* node, float lb) { heap_.push({lb, seq_++, node}); }
  Item pop() {
    Item top = heap_.top();
    heap_.pop();
    return top;
  }
  bool empty() const { return heap_.empty(); }
  std::size_t size() const { return heap_.size(); }

 private:
  struct Later {
    bool operator()(const Item& a, const Item& b) const {
      return a.lb != b.lb ? a.lb > b.lb : a.seq > b.seq;
    }
  };
  std::priority_queue<Item, std::vector<Item>, Later> heap_;
  std::uint64_t seq_ = 0;
};

struct CandidateLeaf {
  const Node* leaf;
  float lb;
};

using CandidateLeafList = std::vector<CandidateLeaf>;
using CandidateSeriesList = std::vector<std::vector<SeriesCandidate>>;

std::size_t candidate_count(const CandidateSeriesList& sc);

// Everything one query carries between phases.
class QueryContext {
 public:
  QueryContext(const SearchableIndex& index, SeriesView query, std::size_t k);

  const SearchableIndex& index;
  SeriesView query;
  QueryProfile profile;
  PaaVector query_paa;
  SaxDistanceTable sax_table;
  ResultSet results;
  NodeQueue pq;
  QueryMetrics metrics;

  float node_lb(const Node& node) const;
  // Reads a leaf's LRDFile slice into a reusable buffer.
  const float* read_leaf(const Node& leaf);

 private:
  std::vector<float> leaf_buffer_;
};

// Phase 1: best-first descent visiting at most lmax leaves.
void approx_knn(QueryContext& ctx, std::size_t lmax);
// Phase 2: drains the frontier against the fixed BSF; sorted by file position.
CandidateLeafList find_candidate_leaves(QueryContext& ctx);
// Phase 3: LB_SAX filtering of the candidate leaves' series.
CandidateSeriesList find_candidate_series(QueryContext& ctx, const CandidateLeafList& lc,
                                          std::size_t num_threads);
// Phase 4: parallel refinement of the surviving series.
void compute_results(QueryContext& ctx, const CandidateSeriesList& sc, std::size_t num_threads);
// Single-threaded scan of the candidate leaves in file order.
void skip_sequential_scan(QueryContext& ctx, const CandidateLeafList& lc);

struct QueryAnswer {
  ResultSet results;
  QueryMetrics metrics;
};

QueryAnswer exact_knn(const SearchableIndex& index, SeriesView query, const QueryConfig& cfg,
                      std::uint64_t query_id = 0);

}  // namespace hercules
