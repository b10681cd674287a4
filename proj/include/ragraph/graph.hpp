#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "ragraph/error.hpp"
#include "ragraph/linalg.hpp"

namespace ragraph {

using NodeId = std::int64_t;
using ClassId = int;
using Timestamp = std::int64_t;

struct Neighbor {
  std::size_t index;
  double weight;
};

struct Edge {
  NodeId u;
  NodeId v;
  double w;
};

/// One static graph: nodes kept sorted by NodeId, a feature row per node,
/// and symmetric weighted adjacency with weights in (0, 1].
///
/// Structural edits (add/remove node) are O(n + m); they exist for the
/// augmentation operators, which only ever touch toy-sized graphs.
class Snapshot {
 public:
  Snapshot() = default;
  Snapshot(Timestamp t, std::size_t dim) : t_(t), dim_(dim) {}

  Timestamp t() const { return t_; }
  void set_t(Timestamp t) { t_ = t; }
  std::size_t size() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  bool empty() const { return ids_.empty(); }

  const std::vector<NodeId>& ids() const { return ids_; }
  NodeId id(std::size_t i) const { return ids_[i]; }

  std::optional<std::size_t> index_of(NodeId id) const {
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
  }
  bool contains(NodeId id) const { return index_of(id).has_value(); }

  std::size_t require_index(NodeId id) const {
    auto i = index_of(id);
    if (!i) throw NotFound("node " + std::to_string(id) + " not in snapshot t=" + std::to_string(t_));
    return *i;
  }

  std::span<const double> features(std::size_t i) const { return x_[i]; }
  void set_features(std::size_t i, Vec x) {
    require_same_size(x.size(), dim_, "set_features");
    x_[i] = std::move(x);
  }

  std::span<const Neighbor> adjacency(std::size_t i) const { return adj_[i]; }
  std::size_t degree(std::size_t i) const { return adj_[i].size(); }

  double weight(std::size_t i, std::size_t j) const {
    const auto& row = adj_[i];
    auto it = std::lower_bound(row.begin(), row.end(), j,
                               [](const Neighbor& n, std::size_t k) { return n.index < k; });
    return (it != row.end() && it->index == j) ? it->weight : 0.0;
  }

  std::size_t edge_count() const {
    std::size_t m = 0;
    for (const auto& row : adj_) m += row.size();
    return m / 2;
  }

  /// Edges with u < v, ordered by (u, v).
  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t i = 0; i < size(); ++i) {
      for (const auto& n : adj_[i]) {
        if (n.index > i) out.push_back({ids_[i], ids_[n.index], n.weight});
      }
    }
    return out;
  }

  const std::map<NodeId, ClassId>& labels() const { return labels_; }
  std::optional<ClassId> label(NodeId id) const {
    auto it = labels_.find(id);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
  }
  void set_label(NodeId id, ClassId y) {
    require_index(id);
    labels_[id] = y;
  }
  void clear_label(NodeId id) { labels_.erase(id); }

  /// Inserts a node, keeping id order. Existing node → InvalidInput.
  std::size_t add_node(NodeId id, Vec x, std::optional<ClassId> y = std::nullopt) {
    require_same_size(x.size(), dim_, "add_node");
    auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it != ids_.end() && *it == id) {
      throw InvalidInput("duplicate node " + std::to_string(id));
    }
    const auto pos = static_cast<std::size_t>(it - ids_.begin());
    ids_.insert(it, id);
    x_.insert(x_.begin() + static_cast<std::ptrdiff_t>(pos), std::move(x));
    adj_.insert(adj_.begin() + static_cast<std::ptrdiff_t>(pos), std::vector<Neighbor>{});
    for (auto& row : adj_) {
      for (auto& n : row) {
        if (n.index >= pos) ++n.index;
      }
    }
    if (y) labels_[id] = *y;
    return pos;
  }

  /// Adds or overwrites the undirected edge {u, v}.
  void add_edge(NodeId u, NodeId v, double w) {
    if (u == v) throw InvalidInput("self-loop on node " + std::to_string(u));
    if (!(w > 0.0 && w <= 1.0)) {
      throw InvalidInput("edge weight " + std::to_string(w) + " outside (0,1]");
    }
    const auto i = require_index(u);
    const auto j = require_index(v);
    upsert(adj_[i], j, w);
    upsert(adj_[j], i, w);
  }

  bool remove_edge(NodeId u, NodeId v) {
    auto i = index_of(u);
    auto j = index_of(v);
    if (!i || !j) return false;
    return erase(adj_[*i], *j) && erase(adj_[*j], *i);
  }

  void remove_node(NodeId id) {
    const auto pos = require_index(id);
    ids_.erase(ids_.begin() + static_cast<std::ptrdiff_t>(pos));
    x_.erase(x_.begin() + static_cast<std::ptrdiff_t>(pos));
    adj_.erase(adj_.begin() + static_cast<std::ptrdiff_t>(pos));
    for (auto& row : adj_) {
      std::erase_if(row, [pos](const Neighbor& n) { return n.index == pos; });
      for (auto& n : row) {
        if (n.index > pos) --n.index;
      }
    }
    labels_.erase(id);
  }

  /// Subgraph induced on `keep` (ids not present are ignored), preserving
  /// features, labels and edge weights.
  Snapshot induced(std::span<const NodeId> keep) const {
    std::vector<std::size_t> idx;
    idx.reserve(keep.size());
    for (NodeId id : keep) {
      if (auto i = index_of(id)) idx.push_back(*i);
    }
    std::sort(idx.begin(), idx.end());
    idx.erase(std::unique(idx.begin(), idx.end()), idx.end());
    std::vector<std::ptrdiff_t> remap(size(), -1);
    Snapshot out(t_, dim_);
    out.ids_.reserve(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      remap[idx[k]] = static_cast<std::ptrdiff_t>(k);
      out.ids_.push_back(ids_[idx[k]]);
      out.x_.push_back(x_[idx[k]]);
      if (auto y = label(ids_[idx[k]])) out.labels_[ids_[idx[k]]] = *y;
    }
    out.adj_.resize(idx.size());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      for (const auto& n : adj_[idx[k]]) {
        if (remap[n.index] >= 0) {
          out.adj_[k].push_back({static_cast<std::size_t>(remap[n.index]), n.weight});
        }
      }
    }
    return out;
  }

  /// Bulk construction. Nodes are sorted; duplicate edges keep the larger
  /// weight, which also symmetrizes directed input.
  static Snapshot build(Timestamp t, std::size_t dim,
                        std::vector<std::pair<NodeId, Vec>> nodes,
                        const std::vector<Edge>& edges,
                        const std::map<NodeId, ClassId>& labels = {}) {
    std::sort(nodes.begin(), nodes.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    Snapshot s(t, dim);
    for (auto& [id, x] : nodes) {
      if (!s.ids_.empty() && s.ids_.back() == id) {
        throw InvalidInput("duplicate node " + std::to_string(id) + " at t=" + std::to_string(t));
      }
      require_same_size(x.size(), dim, "node features");
      s.ids_.push_back(id);
      s.x_.push_back(std::move(x));
    }
    s.adj_.resize(s.ids_.size());
    for (const auto& e : edges) {
      if (e.u == e.v) continue;
      if (!(e.w > 0.0 && e.w <= 1.0)) {
        throw InvalidInput("edge weight " + std::to_string(e.w) + " outside (0,1]");
      }
      auto i = s.index_of(e.u);
      auto j = s.index_of(e.v);
      if (!i || !j) {
        throw InvalidInput("edge (" + std::to_string(e.u) + "," + std::to_string(e.v) +
                           ") references a node missing at t=" + std::to_string(t));
      }
      s.adj_[*i].push_back({*j, e.w});
      s.adj_[*j].push_back({*i, e.w});
    }
    for (auto& row : s.adj_) {
      std::sort(row.begin(), row.end(), [](const Neighbor& a, const Neighbor& b) {
        return a.index < b.index || (a.index == b.index && a.weight > b.weight);
      });
      row.erase(std::unique(row.begin(), row.end(),
                            [](const Neighbor& a, const Neighbor& b) { return a.index == b.index; }),
                row.end());
    }
    for (const auto& [id, y] : labels) {
      if (s.contains(id)) s.labels_[id] = y;
    }
    return s;
  }

 private:
  static void upsert(std::vector<Neighbor>& row, std::size_t j, double w) {
    auto it = std::lower_bound(row.begin(), row.end(), j,
                               [](const Neighbor& n, std::size_t k) { return n.index < k; });
    if (it != row.end() && it->index == j) {
      it->weight = w;
    } else {
      row.insert(it, {j, w});
    }
  }
  static bool erase(std::vector<Neighbor>& row, std::size_t j) {
    auto it = std::lower_bound(row.begin(), row.end(), j,
                               [](const Neighbor& n, std::size_t k) { return n.index < k; });
    if (it == row.end() || it->index != j) return false;
    row.erase(it);
    return true;
  }

  Timestamp t_ = 0;
  std::size_t dim_ = 0;
  std::vector<NodeId> ids_;
  std::vector<Vec> x_;
  std::vector<std::vector<Neighbor>> adj_;
  std::map<NodeId, ClassId> labels_;
};

/// Sequence of snapshots with strictly increasing timestamps. Multi-graph
/// corpora (graph classification) keep every graph in one snapshot as a
/// disjoint union, with `graph_of` recording membership.
struct DynamicGraph {
  std::vector<Snapshot> snapshots;
  std::map<NodeId, int> graph_of;
  std::map<int, ClassId> graph_labels;

  bool is_multi_graph() const { return !graph_labels.empty(); }

  std::vector<NodeId> node_universe() const {
    std::vector<NodeId> all;
    for (const auto& s : snapshots) all.insert(all.end(), s.ids().begin(), s.ids().end());
    std::sort(all.begin(), all.end());
    all.erase(std::unique(all.begin(), all.end()), all.end());
    return all;
  }

  void validate() const {
    for (std::size_t i = 1; i < snapshots.size(); ++i) {
      if (snapshots[i].t() <= snapshots[i - 1].t()) {
        throw InvalidInput("snapshot timestamps must be strictly increasing");
      }
    }
  }

  /// Members of graph g, sorted.
  std::vector<NodeId> graph_members(int g) const {
    std::vector<NodeId> out;
    for (const auto& [id, gg] : graph_of) {
      if (gg == g) out.push_back(id);
    }
    return out;
  }
};

struct EgoNet {
  NodeId origin = 0;
  int hops = 0;
  Snapshot subgraph;
};

/// Hop distances from `source` by unweighted BFS; -1 marks unreachable or
/// beyond `max_hops` (negative max_hops means unbounded).
inline std::vector<int> bfs_hops(const Snapshot& g, std::size_t source, int max_hops = -1) {
  std::vector<int> dist(g.size(), -1);
  std::deque<std::size_t> queue{source};
  dist[source] = 0;
  while (!queue.empty()) {
    const auto u = queue.front();
    queue.pop_front();
    if (max_hops >= 0 && dist[u] >= max_hops) continue;
    for (const auto& n : g.adjacency(u)) {
      if (dist[n.index] < 0) {
        dist[n.index] = dist[u] + 1;
        queue.push_back(n.index);
      }
    }
  }
  return dist;
}

/// {u : A[node][u] > 0}, sorted by id.
inline std::vector<NodeId> neighbors(const Snapshot& g, NodeId node) {
  const auto i = g.require_index(node);
  std::vector<NodeId> out;
  out.reserve(g.degree(i));
  for (const auto& n : g.adjacency(i)) {
    if (n.weight > 0.0) out.push_back(g.id(n.index));
  }
  return out;
}

inline EgoNet ego_net(const Snapshot& g, NodeId node, int k) {
  if (k < 1) throw InvalidInput("ego_net requires k >= 1");
  const auto src = g.require_index(node);
  const auto dist = bfs_hops(g, src, k);
  std::vector<NodeId> keep;
  for (std::size_t i = 0; i < g.size(); ++i) {
    if (dist[i] >= 0) keep.push_back(g.id(i));
  }
  return {node, k, g.induced(keep)};
}

/// Unweighted degree / (n - 1), aligned with g.ids().
inline Vec degree_centrality(const Snapshot& g) {
  const auto n = g.size();
  if (n < 2) throw InvalidInput("degree centrality needs at least 2 nodes");
  Vec dc(n);
  for (std::size_t i = 0; i < n; ++i) {
    dc[i] = static_cast<double>(g.degree(i)) / static_cast<double>(n - 1);
  }
  return dc;
}

struct PageRankOptions {
  double damping = 0.85;
  double tol = 1e-9;
  int max_iter = 200;
};

struct PageRankResult {
  Vec scores;  // aligned with g.ids()
  int iterations = 0;
  bool converged = false;
};

/// Damped random walk with edge-weight-proportional transitions. Dangling
/// nodes spread their mass uniformly. Convergence is checked on the L1
/// change between iterates; on failure the last iterate is returned with
/// converged = false.
inline PageRankResult pagerank(const Snapshot& g, const PageRankOptions& opt = {}) {
  if (!(opt.damping > 0.0 && opt.damping < 1.0)) {
    throw InvalidInput("damping must lie in (0,1)");
  }
  const auto n = g.size();
  PageRankResult res;
  if (n == 0) return res;
  Vec out_w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (const auto& nb : g.adjacency(i)) out_w[i] += nb.weight;
  }
  const double inv_n = 1.0 / static_cast<double>(n);
  Vec pr(n, inv_n), next(n);
  for (res.iterations = 1; res.iterations <= opt.max_iter; ++res.iterations) {
    double dangling = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (out_w[i] == 0.0) dangling += pr[i];
    }
    const double base = (1.0 - opt.damping) * inv_n + opt.damping * dangling * inv_n;
    std::fill(next.begin(), next.end(), base);
    for (std::size_t i = 0; i < n; ++i) {
      if (out_w[i] == 0.0) continue;
      const double share = opt.damping * pr[i] / out_w[i];
      for (const auto& nb : g.adjacency(i)) next[nb.index] += share * nb.weight;
    }
    double diff = 0.0;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      diff += std::abs(next[i] - pr[i]);
      total += next[i];
    }
    for (std::size_t i = 0; i < n; ++i) next[i] /= total;
    pr.swap(next);
    if (diff < opt.tol) {
      res.converged = true;
      break;
    }
  }
  res.iterations = std::min(res.iterations, opt.max_iter);
  res.scores = std::move(pr);
  return res;
}

}  // namespace ragraph
