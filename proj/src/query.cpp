#include "hercules/query.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>

#include <omp.h>

#include "hercules/errors.hpp"

namespace hercules {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

const Breakpoints& breakpoints_for(std::size_t alphabet) {
  static const Breakpoints b256(256);
  if (alphabet == 256) return b256;
  thread_local std::unique_ptr<Breakpoints> other;
  if (!other || other->alphabet_size() != alphabet) other = std::make_unique<Breakpoints>(alphabet);
  return *other;
}

}  // namespace

void QueryConfig::validate() const {
  if (k == 0) throw ConfigError("k must be at least 1");
  if (lmax == 0) throw ConfigError("lmax must be at least 1");
  if (!(eapca_th >= 0.0 && eapca_th <= 1.0)) throw ConfigError("eapca threshold must lie in [0, 1]");
  if (!(sax_th >= 0.0 && sax_th <= 1.0)) throw ConfigError("sax threshold must lie in [0, 1]");
  if (num_threads == 0) throw ConfigError("query threads must be at least 1");
}

std::string to_string(Phase p) {
  switch (p) {
    case Phase::Approx: return "1";
    case Phase::Leaves: return "2";
    case Phase::Series: return "3";
    case Phase::Refine: return "4";
    case Phase::Scan2: return "scan2";
    case Phase::Scan3: return "scan3";
  }
  return "?";
}

std::size_t candidate_count(const CandidateSeriesList& sc) {
  std::size_t total = 0;
  for (const auto& local : sc) total += local.size();
  return total;
}

QueryContext::QueryContext(const SearchableIndex& idx, SeriesView q, std::size_t k)
    : index(idx),
      query(q),
      profile(q),
      query_paa(paa(q, idx.settings().isax_segments)),
      sax_table(query_paa, breakpoints_for(idx.settings().alphabet_size)),
      results(k) {
  metrics.k = k;
}

float QueryContext::node_lb(const Node& node) const {
  return lb_eapca(profile, node.segmentation, node.synopsis);
}

const float* QueryContext::read_leaf(const Node& leaf) {
  const std::size_t n = index.settings().series_length;
  leaf_buffer_.resize(leaf.file_position.count * n);
  const auto t0 = Clock::now();
  metrics.bytes_read +=
      index.raw().read(leaf.file_position.offset, leaf.file_position.count, leaf_buffer_.data());
  metrics.input_time += seconds_since(t0);
  ++metrics.leaf_reads;
  return leaf_buffer_.data();
}

void approx_knn(QueryContext& ctx, std::size_t lmax) {
  ctx.pq.push(&ctx.index.root(), ctx.node_lb(ctx.index.root()));
  std::size_t visited = 0;
  while (!ctx.pq.empty() && visited < lmax) {
    const NodeQueue::Item item = ctx.pq.pop();
    if (item.lb > ctx.results.bsf()) {
      // Keep it: the frontier is handed to the next phase untouched.
      ctx.pq.push(item.node, item.lb);
      break;
    }
    const Node& node = *item.node;
    if (node.is_leaf()) {
      const float* data = ctx.read_leaf(node);
      knn_scan_serial(ctx.query, data, node.file_position.count, node.file_position.offset,
                      ctx.results);
      ++visited;
    } else {
      for (const Node* child : {node.left(), node.right()}) {
        const float lb = ctx.node_lb(*child);
        if (lb < ctx.results.bsf()) ctx.pq.push(child, lb);
      }
    }
  }
  ctx.metrics.approx_leaves = visited;
}

CandidateLeafList find_candidate_leaves(QueryContext& ctx) {
  CandidateLeafList lc;
  const float bsf = ctx.results.bsf();
  while (!ctx.pq.empty()) {
    const NodeQueue::Item item = ctx.pq.pop();
    if (item.lb > bsf) break;  // every remaining bound is at least as large
    const Node& node = *item.node;
    if (node.is_leaf()) {
      lc.push_back({&node, item.lb});
    } else {
      for (const Node* child : {node.left(), node.right()}) {
        const float lb = ctx.node_lb(*child);
        if (lb < bsf) ctx.pq.push(child, lb);
      }
    }
  }
  std::sort(lc.begin(), lc.end(), [](const CandidateLeaf& a, const CandidateLeaf& b) {
    return a.leaf->file_position.offset < b.leaf->file_position.offset;
  });
  ctx.metrics.candidate_leaves = lc.size();
  return lc;
}

CandidateSeriesList find_candidate_series(QueryContext& ctx, const CandidateLeafList& lc,
                                          std::size_t num_threads) {
  std::vector<PositionRange> ranges;
  ranges.reserve(lc.size());
  for (const CandidateLeaf& c : lc) {
    ranges.push_back({c.leaf->file_position.offset, c.leaf->file_position.count});
  }
  CandidateSeriesList sc = sax_filter_omp(ctx.sax_table, ctx.index.words().data(), ranges,
                                          ctx.results.bsf(), static_cast<int>(num_threads));
  ctx.metrics.candidate_series = candidate_count(sc);
  return sc;
}

void compute_results(QueryContext& ctx, const CandidateSeriesList& sc, std::size_t num_threads) {
  const std::size_t n = ctx.index.settings().series_length;
  ConcurrentResults shared(ctx.results);
  std::atomic<std::size_t> next{0};
  std::uint64_t bytes = 0;
  std::uint64_t reads = 0;
  double input = 0.0;
  std::exception_ptr error;

#pragma omp parallel num_threads(static_cast<int>(num_threads)) reduction(+ : bytes, reads, input)
  {
    std::vector<float> buf(n);
    for (std::size_t j = next.fetch_add(1); j < sc.size(); j = next.fetch_add(1)) {
      for (const SeriesCandidate& c : sc[j]) {
        if (!(c.lb < shared.bsf())) continue;
        try {
          const auto t0 = Clock::now();
          bytes += ctx.index.raw().read(c.pos, 1, buf.data());
          input += seconds_since(t0);
        } catch (...) {
#pragma omp critical(hercules_query_error)
          if (!error) error = std::current_exception();
          break;
        }
        ++reads;
        const auto d = euclidean_sq_early_abandon(ctx.query, SeriesView(buf.data(), n), shared.bsf());
        if (d) shared.offer(*d, c.pos);
      }
    }
  }
  if (error) std::rethrow_exception(error);
  ctx.metrics.bytes_read += bytes;
  ctx.metrics.series_reads += reads;
  ctx.metrics.input_time += input;
}

void skip_sequential_scan(QueryContext& ctx, const CandidateLeafList& lc) {
  for (const CandidateLeaf& c : lc) {
    if (c.lb >= ctx.results.bsf()) continue;
    const float* data = ctx.read_leaf(*c.leaf);
    knn_scan_serial(ctx.query, data, c.leaf->file_position.count, c.leaf->file_position.offset,
                    ctx.results);
  }
}

QueryAnswer exact_knn(const SearchableIndex& index, SeriesView query, const QueryConfig& cfg,
                      std::uint64_t query_id) {
  cfg.validate();
  if (index.leaves().empty()) throw ConfigError("index is not loaded");
  if (query.size() != index.settings().series_length) {
    throw ConfigError("query length " + std::to_string(query.size()) + " differs from series length " +
                      std::to_string(index.settings().series_length));
  }
  const auto t0 = Clock::now();
  QueryContext ctx(index, query, cfg.k);
  ctx.metrics.query_id = query_id;

  approx_knn(ctx, cfg.lmax);
  ctx.metrics.phase = Phase::Leaves;
  const CandidateLeafList lc = find_candidate_leaves(ctx);
  ctx.metrics.eapca_pr =
      1.0 - static_cast<double>(lc.size()) / static_cast<double>(index.leaves().size());

  if (ctx.metrics.eapca_pr < cfg.eapca_th) {
    ctx.metrics.phase = Phase::Scan2;
    skip_sequential_scan(ctx, lc);
  } else {
    ctx.metrics.phase = Phase::Series;
    const CandidateSeriesList sc = find_candidate_series(ctx, lc, cfg.num_threads);
    ctx.metrics.sax_pr = 1.0 - static_cast<double>(candidate_count(sc)) /
                                   static_cast<double>(index.total_series());
    if (ctx.metrics.sax_pr < cfg.sax_th) {
      ctx.metrics.phase = Phase::Scan3;
      skip_sequential_scan(ctx, lc);
    } else {
      ctx.metrics.phase = Phase::Refine;
      compute_results(ctx, sc, cfg.num_threads);
    }
  }

  ctx.metrics.wall_time = seconds_since(t0);
  const double total_bytes = static_cast<double>(index.total_series()) *
                             static_cast<double>(index.settings().series_length) * sizeof(float);
  ctx.metrics.fraction_accessed = std::min(1.0, static_cast<double>(ctx.metrics.bytes_read) / total_bytes);
  return {std::move(ctx.results), ctx.metrics};
}

}  // namespace hercules
