// End-to-end acceptance run: one PASS/FAIL line per criterion.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "hercules/bench.hpp"
#include "hercules/build.hpp"
#include "hercules/persist.hpp"
#include "hercules/query.hpp"
#include "support.hpp"

using namespace hercules;

namespace {

using Clock = std::chrono::steady_clock;
using Row = std::vector<float>;

struct Outcome {
  bool pass = true;
  std::ostringstream detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      if (pass) detail << "first failure: " << what << "; ";
      pass = false;
    }
  }
};

// Distances within rel 1e-3 of each other, elementwise on sorted lists.
bool close_multisets(const std::vector<float>& a, const std::vector<float>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max(1e-6, std::abs(static_cast<double>(b[i])));
    if (std::abs(static_cast<double>(a[i]) - b[i]) > 1e-3 * scale + 1e-5) return false;
  }
  return true;
}

bool within_rounding(double lb, double ed) { return lb <= ed + 1e-5 * std::max(1.0, ed); }

std::multiset<Row> rows_of(const float* data, std::size_t count, std::size_t n) {
  std::multiset<Row> out;
  for (std::size_t i = 0; i < count; ++i) out.emplace(data + i * n, data + (i + 1) * n);
  return out;
}

struct TreeCounts {
  std::size_t nodes = 0, internal = 0, segments = 0;
};

void count_tree(const Node* n, TreeCounts& c) {
  ++c.nodes;
  c.segments += n->segmentation.size();
  if (!n->is_leaf()) {
    ++c.internal;
    count_tree(n->left(), c);
    count_tree(n->right(), c);
  }
}

// Inorder layout, alignment and multiset of a written index against its input.
void check_layout(const SearchableIndex& idx, const std::vector<float>& input, std::size_t tau, Outcome& o) {
  const std::size_t n = idx.settings().series_length;
  std::uint64_t offset = 0;
  const Breakpoints bp(256);
  std::vector<float> all(idx.total_series() * n);
  for (const Node* leaf : idx.leaves()) {
    o.require(leaf->size <= tau, "leaf above tau");
    o.require(leaf->file_position.offset == offset, "leaf not at its inorder offset");
    o.require(leaf->file_position.count == leaf->size, "leaf count differs from size");
    idx.raw().read(offset, leaf->size, all.data() + offset * n);
    for (std::uint64_t i = 0; i < leaf->size; ++i) {
      const SeriesView s(all.data() + (offset + i) * n, n);
      o.require(route_to_leaf(&idx.root(), s) == leaf, "series stored outside the leaf it routes to");
      const IsaxWord w = isax_from_paa(paa(s, 16), bp);
      o.require(std::equal(w.begin(), w.end(), idx.word(offset + i)), "summary not aligned with raw position");
    }
    offset += leaf->size;
  }
  o.require(offset == input.size() / n, "leaves do not cover the file");
  o.require(rows_of(all.data(), offset, n) == rows_of(input.data(), input.size() / n, n),
            "stored series differ from the input");
}

// Shared desk-scale fixture for criteria 1, 2, 4 and 7.
struct DeskScale {
  static constexpr std::size_t kN = 256;
  static constexpr std::size_t kQueries = 100;
  testing::TempDir dir;
  std::vector<float> reduced;
  std::map<std::string, std::vector<float>> workloads;  // in increasing difficulty
  std::vector<std::string> order{"1%", "5%", "10%", "ood"};
  SearchableIndex index;
  double build_seconds = 0.0;

  DeskScale() {
    generate_random_walk(dir.file("full.bin"), 100000 + kQueries, kN, 2024);
    WorkloadSpec ood;
    ood.kind = WorkloadKind::OutOfDataset;
    ood.count = kQueries;
    ood.seed = 5;
    workloads["ood"] = generate_workload(dir.file("full.bin"), kN, ood, dir.file("q_ood.bin"),
                                         dir.file("data.bin")).queries;
    std::filesystem::remove(dir.file("full.bin"));
    reduced = read_raw_file(dir.file("data.bin"), kN);
    const std::pair<const char*, double> noise[] = {{"1%", 0.01}, {"5%", 0.05}, {"10%", 0.1}};
    for (auto [name, sigma2] : noise) {
      WorkloadSpec s;
      s.count = kQueries;
      s.sigma2 = sigma2;
      s.seed = 7;
      workloads[name] = make_workload(reduced, kN, s).queries;
    }
    const auto t0 = Clock::now();
    BuildConfig cfg = testing::small_config(kN, 1000, 2, 100000, BuildConfig::scaled_db_size(100000),
                                            dir.path() / "scratch");
    BuiltIndex built = build_index(dir.file("data.bin"), cfg);
    write_index(built, dir.path() / "index", 2);
    built = BuiltIndex();
    index = load_index(dir.path() / "index");
    build_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
  }

  SeriesView query(const std::string& w, std::size_t q) const {
    return SeriesView(workloads.at(w).data() + q * kN, kN);
  }
};

std::map<std::string, double> g_fraction;  // criterion 1 feeds criterion 7

Outcome exactness(const DeskScale& d) {
  Outcome o;
  const auto t0 = Clock::now();
  std::size_t compared = 0;
  for (const std::string& w : d.order) {
    double fraction = 0.0;
    for (std::size_t q = 0; q < DeskScale::kQueries; ++q) {
      const ScanAnswer scan = pscan(d.dir.file("data.bin"), d.query(w, q), 100, 1);
      const auto truth = scan.results.distances();
      for (std::size_t k : {1u, 10u, 100u}) {
        QueryConfig cfg;
        cfg.k = k;
        const QueryAnswer a = exact_knn(d.index, d.query(w, q), cfg, q);
        o.require(close_multisets(a.results.distances(), {truth.begin(), truth.begin() + k}),
                  w + " query " + std::to_string(q) + " k=" + std::to_string(k));
        if (k == 1) fraction += a.metrics.fraction_accessed;
        ++compared;
      }
    }
    g_fraction[w] = fraction / DeskScale::kQueries;
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count() + d.build_seconds;
  o.require(secs < 300.0, "took longer than 5 minutes");
  o.detail << compared << " answers vs parallel scan, " << static_cast<int>(secs) << "s including build";
  return o;
}

Outcome soundness(const DeskScale& d) {
  Outcome o;
  std::mt19937_64 rng(31);
  const Breakpoints bp(256);
  std::uniform_int_distribution<std::size_t> pick_series(0, d.index.total_series() - 1);
  std::uniform_int_distribution<std::size_t> pick_query(0, DeskScale::kQueries - 1);
  std::size_t sax_bad = 0;
  for (int t = 0; t < 10000; ++t) {
    // Half the queries are workload queries near the data, half fresh walks.
    const Series fresh = random_walk(DeskScale::kN, 99, static_cast<std::uint64_t>(t));
    const SeriesView q = t % 2 ? d.query(d.order[static_cast<std::size_t>(t) % 4], pick_query(rng)) : SeriesView(fresh);
    const std::size_t p = pick_series(rng);
    Series s(DeskScale::kN);
    d.index.raw().read(p, 1, s.data());
    const float lb = lb_sax(paa(q, 16), std::span<const std::uint8_t>(d.index.word(p), 16), bp, DeskScale::kN);
    if (!within_rounding(lb, testing::euclidean_sq_double(q, s))) ++sax_bad;
  }
  std::size_t eapca_bad = 0;
  std::uniform_int_distribution<std::size_t> pick_leaf(0, d.index.leaves().size() - 1);
  for (int t = 0; t < 1000; ++t) {
    const Series fresh = random_walk(DeskScale::kN, 98, static_cast<std::uint64_t>(t));
    const SeriesView q = t % 2 ? d.query(d.order[static_cast<std::size_t>(t) % 4], pick_query(rng)) : SeriesView(fresh);
    const Node& leaf = *d.index.leaves()[pick_leaf(rng)];
    std::vector<float> m(leaf.size * DeskScale::kN);
    d.index.raw().read(leaf.file_position.offset, leaf.size, m.data());
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < leaf.size; ++i) {
      best = std::min(best, testing::euclidean_sq_double(q, SeriesView(m.data() + i * DeskScale::kN, DeskScale::kN)));
    }
    if (!within_rounding(lb_eapca(q, leaf.segmentation, leaf.synopsis), best)) ++eapca_bad;
  }
  o.require(sax_bad == 0, "LB_SAX above the true distance");
  o.require(eapca_bad == 0, "LB_EAPCA above the leaf's nearest member");
  o.detail << sax_bad << "/10000 series bound violations, " << eapca_bad << "/1000 leaf bound violations";
  return o;
}

Outcome construction_stress() {
  Outcome o;
  constexpr std::size_t n = 64, count = 12000, tau = 100;
  testing::TempDir dir;
  const auto data = testing::walks(count, n, 77);
  write_raw_file(dir.file("data.bin"), data);
  std::size_t min_flushes = SIZE_MAX;
  for (std::size_t threads : {2u, 8u, 24u}) {
    const std::size_t workers = threads - 1;
    for (std::size_t threshold : {std::size_t{1}, std::max<std::size_t>(1, workers / 2)}) {
      BuildConfig cfg = testing::small_config(n, tau, threads, count / 4, 200, dir.path() / "s");
      cfg.flush_threshold = threshold;
      BuiltIndex built = build_index(dir.file("data.bin"), cfg);
      min_flushes = std::min(min_flushes, built.stats.flushes);
      o.require(built.stats.flushes >= 3, "fewer than 3 flushes with " + std::to_string(threads) + " threads");
      const auto out = dir.path() / ("ix" + std::to_string(threads) + "_" + std::to_string(threshold));
      write_index(built, out, threads);
      check_layout(load_index(out), data, tau, o);
      std::filesystem::remove_all(out);
    }
  }
  o.detail << "threads {2,8,24} x flush threshold {1,half}, at least " << min_flushes << " flushes per build";
  return o;
}

Outcome path_invariance(const DeskScale& d) {
  Outcome o;
  std::size_t runs = 0;
  std::set<Phase> phases;
  for (const std::string& w : d.order) {
    for (std::size_t q = 0; q < 10; ++q) {
      std::vector<float> reference;
      for (double e : {0.0, 0.25, 1.0}) {
        for (double s : {0.0, 0.5, 1.0}) {
          for (std::size_t t : {1u, 8u}) {
            QueryConfig cfg;
            cfg.k = 10;
            cfg.eapca_th = e;
            cfg.sax_th = s;
            cfg.num_threads = t;
            const QueryAnswer a = exact_knn(d.index, d.query(w, q), cfg);
            phases.insert(a.metrics.phase);
            if (reference.empty()) reference = a.results.distances();
            o.require(a.results.distances() == reference, w + " query " + std::to_string(q) + " changed with the path");
            ++runs;
          }
        }
      }
    }
  }
  o.detail << runs << " runs over " << phases.size() << " distinct final phases";
  return o;
}

Outcome synopsis_correctness() {
  Outcome o;
  constexpr std::size_t n = 256, count = 10000;
  testing::TempDir dir;
  const auto data = testing::walks(count, n, 55);
  const SearchableIndex idx =
      testing::build_and_load(dir, data, testing::small_config(n, 100, 4, count / 3, 500, dir.path() / "s"));
  double worst = 0.0;
  std::size_t nodes = 0;
  std::vector<float> all(count * n);
  idx.raw().read(0, count, all.data());
  std::vector<const Node*> stack{&idx.root()};
  while (!stack.empty()) {
    const Node* node = stack.back();
    stack.pop_back();
    // A node's members are the contiguous slice spanned by its leaves.
    const auto leaves = collect_leaves(node);
    const std::uint64_t first = leaves.front()->file_position.offset;
    std::vector<SeriesView> members;
    for (std::uint64_t i = 0; i < node->size; ++i) members.emplace_back(all.data() + (first + i) * n, n);
    const Synopsis fresh = compute_synopsis(node->segmentation, members);
    for (std::size_t i = 0; i < fresh.size(); ++i) {
      worst = std::max({worst, std::abs(static_cast<double>(fresh[i].mean_min) - node->synopsis[i].mean_min),
                        std::abs(static_cast<double>(fresh[i].mean_max) - node->synopsis[i].mean_max),
                        std::abs(static_cast<double>(fresh[i].sd_min) - node->synopsis[i].sd_min),
                        std::abs(static_cast<double>(fresh[i].sd_max) - node->synopsis[i].sd_max)});
    }
    ++nodes;
    if (!node->is_leaf()) {
      o.require(node->size == node->left()->size + node->right()->size, "internal size is not the sum of its children");
      stack.push_back(node->left());
      stack.push_back(node->right());
    }
  }
  o.require(worst <= 1e-4, "envelope off by more than 1e-4");
  o.detail << nodes << " nodes, largest envelope difference " << worst;
  return o;
}

Outcome round_trip() {
  Outcome o;
  constexpr std::size_t n = 128, count = 10000;
  testing::TempDir dir;
  const auto data = testing::walks(count, n, 66);
  write_raw_file(dir.file("data.bin"), data);
  BuiltIndex built = build_index(dir.file("data.bin"), testing::small_config(n, 150, 3, count / 2, 1000, dir.path() / "s"));
  TreeCounts c;
  count_tree(built.root.get(), c);
  const auto out = dir.path() / "index";
  write_index(built, out, 3);
  const SearchableIndex attached = SearchableIndex::attach(built, out);
  const SearchableIndex loaded = load_index(out);
  for (std::size_t q = 0; q < 50; ++q) {
    const Series query = z_normalize(testing::walks(1, n, 900 + q));
    for (std::size_t k : {1u, 10u}) {
      QueryConfig cfg;
      cfg.k = k;
      const QueryAnswer a = exact_knn(attached, query, cfg);
      const QueryAnswer b = exact_knn(loaded, query, cfg);
      o.require(a.results.distances() == b.results.distances(), "reloaded index answers differently");
    }
  }
  const std::size_t leaves = c.nodes - c.internal;
  const std::uintmax_t htree = kHtreeHeaderBytes + c.nodes * (1 + 4 + 8) + c.segments * (4 + 16) + leaves * 16 +
                               c.internal * 20;
  o.require(std::filesystem::file_size(out / kHtreeFile) == htree, "tree file size");
  o.require(std::filesystem::file_size(out / kLrdFile) == count * n * sizeof(float), "raw file size");
  o.require(std::filesystem::file_size(out / kLsdFile) == count * 16, "summary file size");
  o.detail << "100 queries, " << c.nodes << " nodes, file sizes checked";
  return o;
}

Outcome access_trend(const DeskScale& d) {
  Outcome o;
  for (std::size_t i = 0; i < d.order.size(); ++i) {
    o.detail << d.order[i] << "=" << g_fraction.at(d.order[i]) << (i + 1 < d.order.size() ? " " : "");
    if (i > 0) o.require(g_fraction.at(d.order[i - 1]) < g_fraction.at(d.order[i]), d.order[i] + " not above " + d.order[i - 1]);
  }
  o.require(g_fraction.at("1%") < 1.0, "1% workload reads everything");
  return o;
}

// Exhaustive search over every (segment, attribute, kind, half) policy,
// scoring each by physically splitting and summarizing from scratch.
double exhaustive_best_gain(const Segmentation& seg, std::span<const SeriesView> members) {
  double best = 0.0;
  for (std::size_t i = 0; i < seg.size(); ++i) {
    for (SplitAttribute a : {SplitAttribute::Mean, SplitAttribute::Sd}) {
      for (SplitKind kind : {SplitKind::Horizontal, SplitKind::Vertical}) {
        for (bool upper : {false, true}) {
          if (kind == SplitKind::Horizontal && upper) continue;
          if (kind == SplitKind::Vertical && seg.width(i) < 2) continue;
          SplitPolicy p = make_policy(seg, static_cast<std::uint32_t>(i), a, kind, upper);
          float lo = std::numeric_limits<float>::infinity(), hi = -lo;
          for (SeriesView s : members) {
            lo = std::min(lo, p.routed_value(s));
            hi = std::max(hi, p.routed_value(s));
          }
          p.threshold = (lo + hi) / 2.0f;
          Node leaf(seg, nullptr);
          const SplitChildren kids = make_split_children(leaf, p, members, 1, 2);
          if (kids.left->size == 0 || kids.right->size == 0) continue;
          const Segmentation cs = p.child_segmentation(seg);
          const double before = quality_of_summary(cs, compute_synopsis(cs, members));
          const double after = (static_cast<double>(kids.left->size) * quality_of_summary(cs, kids.left->synopsis) +
                                static_cast<double>(kids.right->size) * quality_of_summary(cs, kids.right->synopsis)) /
                               static_cast<double>(members.size());
          best = std::max(best, before - after);
        }
      }
    }
  }
  return best;
}

Outcome split_oracle() {
  Outcome o;
  constexpr std::size_t n = 256, tau = 64;
  testing::TempDir dir;
  const auto data = testing::walks(8000, n, 88);
  write_raw_file(dir.file("data.bin"), data);
  BuiltIndex built = build_index(dir.file("data.bin"), testing::small_config(n, tau, 2, 8000, 1000, dir.path() / "s"));
  const auto leaves = collect_leaves(static_cast<const Node*>(built.root.get()));
  std::mt19937_64 rng(8);
  std::uniform_int_distribution<std::size_t> pick(0, leaves.size() - 1);
  double worst = 0.0;
  std::size_t segmented = 0;
  for (std::uint64_t t = 0; t < 100; ++t) {
    // A full leaf: a real leaf's segmentation holding tau series, topped up
    // with fresh walks when the leaf has fewer.
    const Node& leaf = *leaves[pick(rng)];
    std::vector<float> m = built.leaf_members(leaf);
    for (std::uint64_t i = 0; m.size() < tau * n; ++i) {
      const Series s = random_walk(n, 5000 + t, i);
      m.insert(m.end(), s.begin(), s.end());
    }
    m.resize(tau * n);
    std::vector<SeriesView> members;
    for (std::size_t i = 0; i < tau; ++i) members.emplace_back(m.data() + i * n, n);
    segmented += leaf.segmentation.size() > 1;
    const double got = get_best_split_policy(leaf.segmentation, members).gain;
    const double want = exhaustive_best_gain(leaf.segmentation, members);
    worst = std::max(worst, std::abs(got - want));
    o.require(got == want, "leaf " + std::to_string(t) + " chose gain " + std::to_string(got) + " of " + std::to_string(want));
  }
  o.detail << "100 leaves (" << segmented << " with refined segmentations), largest gain difference " << worst;
  return o;
}

}  // namespace

int main() {
  bool all = true;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& run) {
    const auto t0 = Clock::now();
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail << "threw: " << e.what();
    }
    const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
    std::printf("criterion %d %-24s %s  (%s; %.1fs)\n", id, name, o.pass ? "PASS" : "FAIL", o.detail.str().c_str(), secs);
    std::fflush(stdout);
    all = all && o.pass;
  };

  const DeskScale desk;
  report(1, "exactness", [&] { return exactness(desk); });
  report(2, "lower-bound soundness", [&] { return soundness(desk); });
  report(3, "construction integrity", construction_stress);
  report(4, "path invariance", [&] { return path_invariance(desk); });
  report(5, "synopsis correctness", synopsis_correctness);
  report(6, "persistence round trip", round_trip);
  report(7, "data accessed trend", [&] { return access_trend(desk); });
  report(8, "split policy oracle", split_oracle);
  return all ? 0 : 1;
}
