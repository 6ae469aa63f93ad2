#include "emap/tda.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <queue>
#include <unordered_map>

namespace emap::tda {

namespace {

using std::uint32_t;
using std::uint64_t;

uint64_t edge_rank(uint32_t a, uint32_t b) {  // a < b, colex
  return static_cast<uint64_t>(b) * (b - 1) / 2 + a;
}

uint64_t triangle_rank(uint32_t i, uint32_t j, uint32_t k) {  // i < j < k, colex
  const uint64_t ck = static_cast<uint64_t>(k) * (k - 1) * (k - 2) / 6;
  const uint64_t cj = static_cast<uint64_t>(j) * (j - 1) / 2;
  return ck + cj + i;
}

struct Edge {
  double diam;
  uint32_t a, b;
  uint64_t id;
};

struct EdgeOrder {
  bool operator()(const Edge& x, const Edge& y) const {
    return x.diam < y.diam || (x.diam == y.diam && x.id < y.id);
  }
};

class UnionFind {
 public:
  explicit UnionFind(Index n) : parent_(static_cast<std::size_t>(n)) {
    for (std::size_t i = 0; i < parent_.size(); ++i) parent_[i] = i;
  }

  std::size_t find(std::size_t x) {
    while (parent_[x] != x) {
      parent_[x] = parent_[parent_[x]];  // path halving
      x = parent_[x];
    }
    return x;
  }

  // Returns true when the edge merged two components.
  bool merge(std::size_t a, std::size_t b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent_[a] = b;
    return true;
  }

 private:
  std::vector<std::size_t> parent_;
};

struct TriEntry {
  double diam;
  uint64_t id;
};

struct TriAscending {
  bool operator()(const TriEntry& x, const TriEntry& y) const {
    return x.diam < y.diam || (x.diam == y.diam && x.id < y.id);
  }
};

struct TriDescending {
  bool operator()(const TriEntry& x, const TriEntry& y) const {
    return TriAscending{}(y, x);
  }
};

// Working column for the cascade path: a min-heap with lazy Z/2
// cancellation. Merging another column only pushes that column's entries;
// the accumulated column is never copied.
using ColumnHeap =
    std::priority_queue<TriEntry, std::vector<TriEntry>, TriDescending>;

std::optional<TriEntry> pop_pivot(ColumnHeap& heap) {
  while (!heap.empty()) {
    TriEntry top = heap.top();
    heap.pop();
    if (!heap.empty() && heap.top().id == top.id) {
      heap.pop();  // even multiplicity cancels over Z/2
    } else {
      return top;
    }
  }
  return std::nullopt;
}

void finalize(PersistenceDiagram& diagram) {
  std::erase_if(diagram.pairs,
                [](const PersistencePair& p) { return p.death == p.birth; });
  std::sort(diagram.pairs.begin(), diagram.pairs.end(),
            [](const PersistencePair& x, const PersistencePair& y) {
              return x.birth < y.birth ||
                     (x.birth == y.birth && x.death < y.death);
            });
}

}  // namespace

std::size_t PersistenceDiagram::essential_count() const {
  std::size_t count = 0;
  for (const auto& p : pairs) count += p.essential() ? 1 : 0;
  return count;
}

SimplexBudgetError::SimplexBudgetError(std::size_t count_, std::size_t budget_)
    : std::runtime_error("simplex budget exceeded: " + std::to_string(count_) +
                         " simplices, budget " + std::to_string(budget_)),
      count(count_),
      budget(budget_) {}

std::vector<PersistenceDiagram> rips_persistence(
    const geometry::PointCloud& cloud, const FiltrationParams& params) {
  return rips_persistence_from_distances(geometry::pairwise_distances(cloud),
                                         params);
}

std::vector<PersistenceDiagram> rips_persistence_from_distances(
    const Matrix& d, const FiltrationParams& params) {
  const Index n = d.rows();
  if (n < 1 || d.cols() != n)
    throw std::invalid_argument("rips: distance matrix must be square, n >= 1");
  if (params.max_dimension < 0 || params.max_dimension > 1)
    throw std::invalid_argument("rips: max_dimension must be 0 or 1");
  if (!(params.max_radius > 0))
    throw std::invalid_argument("rips: max_radius must be positive");
  if (std::isinf(params.max_radius) && n > kAutoRadiusLimit)
    throw std::invalid_argument(
        "rips: set max_radius explicitly for clouds larger than " +
        std::to_string(kAutoRadiusLimit) + " points");

  // Enclosing radius: above it every simplex is a coface of the enclosing
  // vertex's cone, so the filtration is constant. Scanning further would only
  // produce zero-persistence pairs.
  double enclosing = kInfiniteDeath;
  for (Index i = 0; i < n; ++i) {
    double row_max = 0;
    for (Index j = 0; j < n; ++j) row_max = std::max(row_max, d(i, j));
    enclosing = std::min(enclosing, row_max);
  }
  const double cut = std::min(params.max_radius, enclosing);

  std::vector<Edge> edges;
  edges.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (Index j = 1; j < n; ++j)
    for (Index i = 0; i < j; ++i)
      if (d(i, j) <= cut)
        edges.push_back(Edge{d(i, j), static_cast<uint32_t>(i),
                             static_cast<uint32_t>(j),
                             edge_rank(static_cast<uint32_t>(i),
                                       static_cast<uint32_t>(j))});

  std::size_t simplex_count = static_cast<std::size_t>(n) + edges.size();
  if (simplex_count > params.simplex_budget)
    throw SimplexBudgetError(simplex_count, params.simplex_budget);
  if (params.max_dimension >= 1) {
    for (Index k = 2; k < n && simplex_count <= params.simplex_budget; ++k)
      for (Index j = 1; j < k; ++j) {
        if (d(j, k) > cut) continue;
        for (Index i = 0; i < j; ++i)
          if (d(i, j) <= cut && d(i, k) <= cut) ++simplex_count;
        if (simplex_count > params.simplex_budget) break;
      }
    if (simplex_count > params.simplex_budget)
      throw SimplexBudgetError(simplex_count, params.simplex_budget);
  }

  std::sort(edges.begin(), edges.end(), EdgeOrder{});

  // Dimension 0: Kruskal over the sorted edges. Every point is born at 0;
  // an edge that merges two components kills one bar at its diameter.
  PersistenceDiagram h0;
  h0.dimension = 0;
  UnionFind components(n);
  std::vector<char> is_tree_edge(edges.size(), 0);
  Index merges = 0;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    if (components.merge(edges[e].a, edges[e].b)) {
      is_tree_edge[e] = 1;
      h0.pairs.push_back(PersistencePair{0.0, edges[e].diam});
      ++merges;
    }
  }
  for (Index c = 0; c < n - merges; ++c)
    h0.pairs.push_back(PersistencePair{0.0, kInfiniteDeath});
  finalize(h0);

  std::vector<PersistenceDiagram> result;
  result.push_back(std::move(h0));
  if (params.max_dimension < 1) return result;

  // Dimension 1 by coboundary reduction (the anti-transposed boundary matrix,
  // which yields the same pairing): columns are edges in decreasing filtration
  // order, entries are their triangle cofacets, and the pivot is the earliest
  // cofacet. Tree edges are cleared -- they are already paired as dimension-0
  // deaths, so their columns reduce to zero and can be skipped outright.
  PersistenceDiagram h1;
  h1.dimension = 1;

  // A stored column is either the raw cofacet list of an edge (recorded by
  // index, materialized on demand) or an explicitly merged column. Most
  // columns claim their minimal cofacet immediately, so the common path is a
  // single linear scan with no sorting at all.
  struct StoredColumn {
    std::ptrdiff_t edge = -1;          // >= 0: raw cofacets of this edge
    std::vector<TriEntry> materialized;
  };
  std::unordered_map<uint64_t, uint32_t> pivot_owner;  // triangle id -> column
  std::vector<StoredColumn> stored_columns;
  pivot_owner.reserve(edges.size());

  auto cofacets_of = [&](const Edge& edge) {
    std::vector<TriEntry> column;
    for (Index k = 0; k < n; ++k) {
      const auto ku = static_cast<uint32_t>(k);
      if (ku == edge.a || ku == edge.b) continue;
      const double tri_diam = std::max({edge.diam, d(edge.a, k), d(edge.b, k)});
      if (tri_diam > cut) continue;
      uint32_t lo = std::min(edge.a, ku);
      uint32_t hi = std::max(edge.b, ku);
      uint32_t mid = edge.a + edge.b + ku - lo - hi;
      column.push_back(TriEntry{tri_diam, triangle_rank(lo, mid, hi)});
    }
    std::sort(column.begin(), column.end(), TriAscending{});
    return column;
  };
  auto column_of = [&](StoredColumn& stored) -> const std::vector<TriEntry>& {
    if (stored.edge >= 0) {
      stored.materialized = cofacets_of(edges[static_cast<std::size_t>(stored.edge)]);
      stored.edge = -1;
    }
    return stored.materialized;
  };

  for (std::size_t e = edges.size(); e-- > 0;) {
    if (is_tree_edge[e]) continue;
    const Edge& edge = edges[e];

    // Fast path: the minimal cofacet, found by a plain scan.
    bool found = false;
    TriEntry pivot{0.0, 0};
    for (Index k = 0; k < n; ++k) {
      const auto ku = static_cast<uint32_t>(k);
      if (ku == edge.a || ku == edge.b) continue;
      const double tri_diam = std::max({edge.diam, d(edge.a, k), d(edge.b, k)});
      if (tri_diam > cut) continue;
      uint32_t lo = std::min(edge.a, ku);
      uint32_t hi = std::max(edge.b, ku);
      uint32_t mid = edge.a + edge.b + ku - lo - hi;
      const TriEntry entry{tri_diam, triangle_rank(lo, mid, hi)};
      if (!found || TriAscending{}(entry, pivot)) {
        pivot = entry;
        found = true;
      }
    }

    if (found && pivot_owner.find(pivot.id) == pivot_owner.end()) {
      pivot_owner.emplace(pivot.id, static_cast<uint32_t>(stored_columns.size()));
      h1.pairs.push_back(PersistencePair{edge.diam, pivot.diam});
      stored_columns.push_back({static_cast<std::ptrdiff_t>(e), {}});
      continue;
    }

    // Collision: reduce by Z/2 column additions through the lazy heap.
    ColumnHeap column;
    for (const TriEntry& entry : cofacets_of(edge)) column.push(entry);
    for (;;) {
      const auto low = pop_pivot(column);
      if (!low) {
        // No unclaimed cofacet left: the cycle born at this edge never dies
        // within the threshold. Only reachable with a finite user cutoff.
        h1.pairs.push_back(PersistencePair{edge.diam, kInfiniteDeath});
        break;
      }
      auto owner = pivot_owner.find(low->id);
      if (owner == pivot_owner.end()) {
        pivot_owner.emplace(low->id, static_cast<uint32_t>(stored_columns.size()));
        h1.pairs.push_back(PersistencePair{edge.diam, low->diam});
        std::vector<TriEntry> reduced;
        reduced.reserve(column.size() + 1);
        reduced.push_back(*low);
        while (auto rest = pop_pivot(column)) reduced.push_back(*rest);
        stored_columns.push_back({-1, std::move(reduced)});
        break;
      }
      // The owner's pivot equals the popped entry, so it cancels; push the
      // tail only.
      const auto& other = column_of(stored_columns[owner->second]);
      for (std::size_t t = 1; t < other.size(); ++t) column.push(other[t]);
    }
  }

  finalize(h1);
  result.push_back(std::move(h1));
  return result;
}

namespace {

double pair_cost(const PersistencePair& x, const PersistencePair& y) {
  return std::max(std::abs(x.birth - y.birth), std::abs(x.death - y.death));
}

double diagonal_cost(const PersistencePair& x) {
  return (x.death - x.birth) / 2.0;
}

// Hopcroft-Karp maximum matching on an explicit bipartite adjacency.
class HopcroftKarp {
 public:
  HopcroftKarp(std::size_t n_left, std::size_t n_right)
      : adj_(n_left), match_left_(n_left, kNil), match_right_(n_right, kNil),
        level_(n_left) {}

  void add_edge(std::size_t u, std::size_t v) { adj_[u].push_back(v); }

  std::size_t max_matching() {
    std::size_t matching = 0;
    while (bfs()) {
      for (std::size_t u = 0; u < adj_.size(); ++u)
        if (match_left_[u] == kNil && dfs(u)) ++matching;
    }
    return matching;
  }

 private:
  static constexpr std::size_t kNil = static_cast<std::size_t>(-1);
  static constexpr std::size_t kInf = static_cast<std::size_t>(-2);

  bool bfs() {
    std::queue<std::size_t> queue;
    for (std::size_t u = 0; u < adj_.size(); ++u) {
      if (match_left_[u] == kNil) {
        level_[u] = 0;
        queue.push(u);
      } else {
        level_[u] = kInf;
      }
    }
    bool found_free = false;
    while (!queue.empty()) {
      const std::size_t u = queue.front();
      queue.pop();
      for (const std::size_t v : adj_[u]) {
        const std::size_t w = match_right_[v];
        if (w == kNil) {
          found_free = true;
        } else if (level_[w] == kInf) {
          level_[w] = level_[u] + 1;
          queue.push(w);
        }
      }
    }
    return found_free;
  }

  bool dfs(std::size_t u) {
    for (const std::size_t v : adj_[u]) {
      const std::size_t w = match_right_[v];
      if (w == kNil || (level_[w] == level_[u] + 1 && dfs(w))) {
        match_left_[u] = v;
        match_right_[v] = u;
        return true;
      }
    }
    level_[u] = kInf;
    return false;
  }

  std::vector<std::vector<std::size_t>> adj_;
  std::vector<std::size_t> match_left_;
  std::vector<std::size_t> match_right_;
  std::vector<std::size_t> level_;
};

// Perfect matching test for the standard diagram-plus-diagonal construction:
// left = A's points and one diagonal slot per B point, right = B's points and
// one diagonal slot per A point. A point may pair with its own diagonal slot,
// diagonal slots pair with each other freely.
bool feasible_at(const std::vector<PersistencePair>& a,
                 const std::vector<PersistencePair>& b, double t) {
  const std::size_t n1 = a.size();
  const std::size_t n2 = b.size();
  HopcroftKarp hk(n1 + n2, n1 + n2);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j)
      if (pair_cost(a[i], b[j]) <= t) hk.add_edge(i, j);
    if (diagonal_cost(a[i]) <= t) hk.add_edge(i, n2 + i);
  }
  for (std::size_t j = 0; j < n2; ++j) {
    if (diagonal_cost(b[j]) <= t) hk.add_edge(n1 + j, j);
    for (std::size_t i = 0; i < n1; ++i) hk.add_edge(n1 + j, n2 + i);
  }
  return hk.max_matching() == n1 + n2;
}

}  // namespace

double bottleneck_distance(const PersistenceDiagram& da,
                           const PersistenceDiagram& db) {
  if (da.dimension != db.dimension)
    throw std::invalid_argument("bottleneck: diagram dimensions differ");

  std::vector<PersistencePair> a, b;
  std::vector<double> inf_a, inf_b;
  for (const auto& p : da.pairs)
    (p.essential() ? (void)inf_a.push_back(p.birth) : (void)a.push_back(p));
  for (const auto& p : db.pairs)
    (p.essential() ? (void)inf_b.push_back(p.birth) : (void)b.push_back(p));

  if (inf_a.size() != inf_b.size())
    throw std::invalid_argument(
        "bottleneck: infinite-bar counts differ (" +
        std::to_string(inf_a.size()) + " vs " + std::to_string(inf_b.size()) +
        ")");

  // Essential pairs must match each other; on a line the sorted matching
  // minimizes the maximum gap.
  double essential_part = 0;
  std::sort(inf_a.begin(), inf_a.end());
  std::sort(inf_b.begin(), inf_b.end());
  for (std::size_t i = 0; i < inf_a.size(); ++i)
    essential_part = std::max(essential_part, std::abs(inf_a[i] - inf_b[i]));

  if (a.empty() && b.empty()) return essential_part;

  std::vector<double> candidates{0.0};
  for (const auto& p : a) candidates.push_back(diagonal_cost(p));
  for (const auto& p : b) candidates.push_back(diagonal_cost(p));
  for (const auto& p : a)
    for (const auto& q : b) candidates.push_back(pair_cost(p, q));
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  // The optimum is attained at a candidate cost; feasibility is monotone, so
  // binary search for the smallest feasible one.
  std::size_t lo = 0, hi = candidates.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (feasible_at(a, b, candidates[mid]))
      hi = mid;
    else
      lo = mid + 1;
  }
  return std::max(essential_part, candidates[lo]);
}

double normalized_bottleneck(const PersistenceDiagram& a,
                             const PersistenceDiagram& b, double noise) {
  if (!(noise > 0))
    throw std::invalid_argument("normalized_bottleneck: noise must be positive");
  return bottleneck_distance(a, b) / noise;
}

nlohmann::json diagrams_to_json(const std::vector<PersistenceDiagram>& diagrams) {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& diagram : diagrams)
    for (const auto& p : diagram.pairs) {
      nlohmann::json item;
      item["dim"] = diagram.dimension;
      item["birth"] = p.birth;
      if (p.essential())
        item["death"] = "inf";
      else
        item["death"] = p.death;
      out.push_back(std::move(item));
    }
  return out;
}

std::vector<PersistenceDiagram> diagrams_from_json(const nlohmann::json& j) {
  std::vector<PersistenceDiagram> diagrams;
  auto diagram_for = [&diagrams](int dim) -> PersistenceDiagram& {
    for (auto& d : diagrams)
      if (d.dimension == dim) return d;
    diagrams.push_back(PersistenceDiagram{dim, {}});
    return diagrams.back();
  };
  for (const auto& item : j) {
    PersistencePair p;
    p.birth = item.at("birth").get<double>();
    const auto& death = item.at("death");
    p.death = death.is_string() ? kInfiniteDeath : death.get<double>();
    diagram_for(item.at("dim").get<int>()).pairs.push_back(p);
  }
  std::sort(diagrams.begin(), diagrams.end(),
            [](const auto& x, const auto& y) { return x.dimension < y.dimension; });
  for (auto& d : diagrams) finalize(d);
  return diagrams;
}

}  // namespace emap::tda
