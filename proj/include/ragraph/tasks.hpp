#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/linalg.hpp"
#include "ragraph/propagate.hpp"
#include "ragraph/rng.hpp"

namespace ragraph {

// ---------------------------------------------------------------------------
// Few-shot classification
// ---------------------------------------------------------------------------

struct PrototypeSet {
  std::vector<Vec> vectors;  // index = class id
  std::vector<std::size_t> shots;

  std::size_t num_classes() const { return vectors.size(); }
};

/// Mean output vector per class over the shot set. Every class in
/// [0, num_classes) needs at least one shot.
inline PrototypeSet prototypes(const std::vector<std::pair<Vec, ClassId>>& shots, std::size_t num_classes) {
  if (shots.empty()) throw InvalidInput("prototypes need at least one shot");
  const auto dim = shots.front().first.size();
  PrototypeSet p;
  p.vectors.assign(num_classes, Vec(dim, 0.0));
  p.shots.assign(num_classes, 0);
  for (const auto& [o, y] : shots) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes) {
      throw InvalidInput("shot label " + std::to_string(y) + " out of range");
    }
    axpy(1.0, o, p.vectors[static_cast<std::size_t>(y)]);
    ++p.shots[static_cast<std::size_t>(y)];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (p.shots[c] == 0) throw InvalidInput("class " + std::to_string(c) + " has no shots");
    for (double& v : p.vectors[c]) v /= static_cast<double>(p.shots[c]);
  }
  return p;
}

/// argmax_c cosine(output, prototype_c); ties go to the lower class id.
inline ClassId classify(std::span<const double> output, const PrototypeSet& p) {
  ClassId best = 0;
  double best_sim = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < p.num_classes(); ++c) {
    const double s = cosine(output, p.vectors[c]);
    if (s > best_sim) {
      best_sim = s;
      best = static_cast<ClassId>(c);
    }
  }
  return best;
}

// ---------------------------------------------------------------------------
// Link prediction
// ---------------------------------------------------------------------------

struct RankedCandidate {
  NodeId id;
  double score;
};

/// Candidates ranked by cosine to the query output, descending, ties by id.
/// k == 0 returns the full ranking.
inline std::vector<RankedCandidate> predict_links(std::span<const double> query_output,
                                                  const std::vector<std::pair<NodeId, Vec>>& candidates,
                                                  std::size_t k = 0) {
  std::vector<RankedCandidate> ranked;
  ranked.reserve(candidates.size());
  for (const auto& [id, o] : candidates) ranked.push_back({id, cosine(query_output, o)});
  std::sort(ranked.begin(), ranked.end(), [](const RankedCandidate& a, const RankedCandidate& b) {
    return a.score > b.score || (a.score == b.score && a.id < b.id);
  });
  if (k > 0 && ranked.size() > k) ranked.resize(k);
  return ranked;
}

/// Margin rule for a binary link decision between v_i and v_q: linked when
/// some known neighbor v_j of v_i satisfies sim(o_i, o_q) >= sim(o_i, o_j) + eps.
inline bool declare_link(std::span<const double> o_i, std::span<const double> o_q,
                         const std::vector<Vec>& known_neighbor_outputs, double eps = 0.0) {
  const double sq = cosine(o_i, o_q);
  for (const auto& o_j : known_neighbor_outputs) {
    if (sq >= cosine(o_i, o_j) + eps) return true;
  }
  return false;
}

struct MetricResult {
  double value = 0.0;
  std::size_t evaluated = 0;
  std::size_t excluded = 0;  // nodes without ground-truth links
};

namespace detail {

template <typename PerNode>
MetricResult average_over_nodes(const std::vector<std::vector<NodeId>>& rankings,
                                const std::vector<std::vector<NodeId>>& truth, PerNode&& per_node) {
  if (rankings.size() != truth.size()) throw InvalidInput("rankings and ground truth differ in length");
  MetricResult r;
  double sum = 0.0;
  for (std::size_t i = 0; i < rankings.size(); ++i) {
    if (truth[i].empty()) {
      ++r.excluded;
      continue;
    }
    std::vector<NodeId> t = truth[i];
    std::sort(t.begin(), t.end());
    t.erase(std::unique(t.begin(), t.end()), t.end());
    sum += per_node(rankings[i], t);
    ++r.evaluated;
  }
  r.value = r.evaluated ? sum / static_cast<double>(r.evaluated) : 0.0;
  return r;
}

}  // namespace detail

/// Mean over nodes of (true links in the top k) / (number of true links).
inline MetricResult recall_at_k(const std::vector<std::vector<NodeId>>& rankings,
                                const std::vector<std::vector<NodeId>>& truth, std::size_t k) {
  return detail::average_over_nodes(rankings, truth, [k](const auto& rank, const auto& t) {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < std::min(k, rank.size()); ++j) {
      if (std::binary_search(t.begin(), t.end(), rank[j])) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(t.size());
  });
}

/// Binary-relevance nDCG@k: sum_j rel_j / log2(j + 1) over the top k,
/// divided by the ideal DCG.
inline MetricResult ndcg_at_k(const std::vector<std::vector<NodeId>>& rankings,
                              const std::vector<std::vector<NodeId>>& truth, std::size_t k) {
  return detail::average_over_nodes(rankings, truth, [k](const auto& rank, const auto& t) {
    double dcg = 0.0;
    for (std::size_t j = 0; j < std::min(k, rank.size()); ++j) {
      if (std::binary_search(t.begin(), t.end(), rank[j])) dcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    }
    double idcg = 0.0;
    for (std::size_t j = 0; j < std::min(k, t.size()); ++j) idcg += 1.0 / std::log2(static_cast<double>(j) + 2.0);
    return dcg / idcg;
  });
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

struct SplitSpec {
  enum class Mode { kStaticNode, kDynamicSnapshot };
  Mode mode = Mode::kStaticNode;
  double train = 0.5;
  double resource = 0.3;
  double dyn_resource = 0.6;
  double dyn_train = 0.2;
  std::uint64_t seed = 0;
};

/// Partition ids: node ids or graph ids (static mode), or snapshot indices
/// (dynamic mode). Each list is sorted.
struct Split {
  std::vector<std::int64_t> train;
  std::vector<std::int64_t> resource;
  std::vector<std::int64_t> test;
};

/// Static mode shuffles `units` (node or graph ids) and cuts them
/// train/resource/test; dynamic mode assigns the earliest snapshots to the
/// resource graph, the middle to training and the last to testing.
inline Split split(std::vector<std::int64_t> units, std::size_t snapshot_count, const SplitSpec& spec) {
  Split s;
  auto cut = [](std::size_t n, double frac) {
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(frac * static_cast<double>(n) + 1e-9)));
  };
  if (spec.mode == SplitSpec::Mode::kDynamicSnapshot) {
    const auto n = snapshot_count;
    if (n < 3) throw InvalidInput("dynamic split needs at least 3 snapshots");
    const auto r = cut(n, spec.dyn_resource);
    const auto t = cut(n, spec.dyn_train);
    if (r + t >= n) throw InvalidInput("dynamic split leaves no test snapshot");
    for (std::size_t i = 0; i < n; ++i) {
      auto& dst = i < r ? s.resource : (i < r + t ? s.train : s.test);
      dst.push_back(static_cast<std::int64_t>(i));
    }
    return s;
  }
  const auto n = units.size();
  if (n < 3) throw InvalidInput("static split needs at least 3 units");
  const auto tr = cut(n, spec.train);
  const auto rs = cut(n, spec.resource);
  if (tr + rs >= n) throw InvalidInput("static split leaves no test units");
  std::sort(units.begin(), units.end());
  auto rng = substream(spec.seed, "split");
  std::shuffle(units.begin(), units.end(), rng);
  s.train.assign(units.begin(), units.begin() + static_cast<std::ptrdiff_t>(tr));
  s.resource.assign(units.begin() + static_cast<std::ptrdiff_t>(tr),
                    units.begin() + static_cast<std::ptrdiff_t>(tr + rs));
  s.test.assign(units.begin() + static_cast<std::ptrdiff_t>(tr + rs), units.end());
  for (auto* v : {&s.train, &s.resource, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

inline Split split(const DynamicGraph& g, const SplitSpec& spec) {
  std::vector<std::int64_t> units;
  if (spec.mode == SplitSpec::Mode::kStaticNode) {
    if (g.is_multi_graph()) {
      for (const auto& [graph, y] : g.graph_labels) units.push_back(graph);
    } else if (!g.snapshots.empty()) {
      units.assign(g.snapshots.front().ids().begin(), g.snapshots.front().ids().end());
    }
  }
  return split(std::move(units), g.snapshots.size(), spec);
}

// ---------------------------------------------------------------------------
// Graph-level query
// ---------------------------------------------------------------------------

/// Adds a virtual center with the mean node feature, linked to every node
/// with weight 1. `center_id` defaults to one past the largest id.
inline QueryGraph virtual_center(const Snapshot& graph, std::optional<NodeId> center_id = std::nullopt) {
  if (graph.empty()) throw InvalidInput("virtual_center needs a nonempty graph");
  QueryGraph q;
  q.subgraph = graph;
  q.tau = graph.t();
  q.is_virtual_center = true;
  q.center = center_id.value_or(graph.ids().back() + 1);
  Vec mean(graph.dim(), 0.0);
  for (std::size_t i = 0; i < graph.size(); ++i) axpy(1.0 / static_cast<double>(graph.size()), graph.features(i), mean);
  q.subgraph.add_node(q.center, std::move(mean));
  for (NodeId id : graph.ids()) q.subgraph.add_edge(q.center, id, 1.0);
  return q;
}

// ---------------------------------------------------------------------------
// Synthetic generators
// ---------------------------------------------------------------------------

struct SbmParams {
  std::size_t classes = 6;
  std::size_t nodes_per_class = 40;
  double p_in = 0.2;
  double p_out = 0.02;
  std::size_t feature_dim = 8;
  double signal = 0.7;
};

/// Stochastic block model with one labeled snapshot at t=0. Node i belongs to
/// class i / nodes_per_class. Class means are random unit vectors; features
/// are signal * mean + (1 - signal) * N(0, I).
inline DynamicGraph gen_sbm(const SbmParams& p, std::uint64_t seed) {
  if (!(p.p_in >= 0.0 && p.p_in <= 1.0 && p.p_out >= 0.0 && p.p_out <= 1.0) || !(p.p_in > p.p_out)) {
    throw InvalidInput("gen_sbm requires 0 <= p_out < p_in <= 1");
  }
  if (!(p.signal >= 0.0 && p.signal <= 1.0)) throw InvalidInput("signal must lie in [0,1]");
  if (p.classes == 0 || p.nodes_per_class == 0 || p.feature_dim == 0) throw InvalidInput("gen_sbm sizes must be positive");
  auto rng = substream(seed, "sbm");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<Vec> means(p.classes, Vec(p.feature_dim));
  for (auto& m : means) {
    for (double& v : m) v = normal(rng);
    m = l2_normalized(m);
  }
  const auto n = p.classes * p.nodes_per_class;
  std::vector<std::pair<NodeId, Vec>> nodes;
  std::map<NodeId, ClassId> labels;
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = i / p.nodes_per_class;
    Vec x(p.feature_dim);
    for (std::size_t k = 0; k < p.feature_dim; ++k) x[k] = p.signal * means[c][k] + (1.0 - p.signal) * normal(rng);
    nodes.emplace_back(static_cast<NodeId>(i), std::move(x));
    labels[static_cast<NodeId>(i)] = static_cast<ClassId>(c);
  }
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const bool same = i / p.nodes_per_class == j / p.nodes_per_class;
      if (uniform01(rng) < (same ? p.p_in : p.p_out)) edges.push_back({static_cast<NodeId>(i), static_cast<NodeId>(j), 1.0});
    }
  }
  DynamicGraph g;
  g.snapshots.push_back(Snapshot::build(0, p.feature_dim, std::move(nodes), edges, labels));
  return g;
}

struct BipartiteParams {
  std::size_t users = 50;
  std::size_t items = 100;
  std::size_t snapshots = 10;
  double preference_drift = 0.1;
  std::size_t latent_dim = 8;
  std::size_t interactions_per_user = 5;
  double sharpness = 4.0;       // softmax inverse temperature over affinities
  double feature_noise = 0.1;
};

struct BipartiteData {
  DynamicGraph graph;
  std::vector<std::vector<Vec>> user_latents;  // [snapshot][user]
  std::vector<Vec> item_latents;

  /// Affinity of user u and item i at snapshot s (higher = more likely edge).
  double affinity(std::size_t s, std::size_t u, std::size_t i) const {
    return dot(user_latents[s][u], item_latents[i]);
  }
};

/// User-item interactions over `snapshots` snapshots. Users are ids
/// [0, users), items [users, users + items). User preferences drift by a
/// Gaussian step each snapshot; every user draws interactions_per_user
/// distinct items from softmax(sharpness * affinity). Features are the
/// latent vector plus fixed per-node noise.
inline BipartiteData gen_dynamic_bipartite(const BipartiteParams& p, std::uint64_t seed) {
  if (p.snapshots < 3) throw InvalidInput("gen_dynamic_bipartite needs at least 3 snapshots");
  if (p.users == 0 || p.items == 0 || p.latent_dim == 0) throw InvalidInput("bipartite sizes must be positive");
  if (p.interactions_per_user > p.items) throw InvalidInput("more interactions per user than items");
  auto rng = substream(seed, "bipartite");
  std::normal_distribution<double> normal(0.0, 1.0);
  auto random_unit = [&] {
    Vec v(p.latent_dim);
    for (double& x : v) x = normal(rng);
    return l2_normalized(v);
  };
  BipartiteData out;
  for (std::size_t i = 0; i < p.items; ++i) out.item_latents.push_back(random_unit());
  std::vector<Vec> users;
  for (std::size_t u = 0; u < p.users; ++u) users.push_back(random_unit());
  std::vector<Vec> node_noise(p.users + p.items, Vec(p.latent_dim));
  for (auto& v : node_noise) {
    for (double& x : v) x = p.feature_noise * normal(rng);
  }
  const double step = p.preference_drift / std::sqrt(static_cast<double>(p.latent_dim));
  for (std::size_t s = 0; s < p.snapshots; ++s) {
    if (s > 0 && p.preference_drift > 0.0) {
      for (auto& u : users) {
        for (double& x : u) x += step * normal(rng);
        u = l2_normalized(u);
      }
    }
    out.user_latents.push_back(users);
    std::vector<std::pair<NodeId, Vec>> nodes;
    for (std::size_t u = 0; u < p.users; ++u) {
      Vec x = users[u];
      axpy(1.0, node_noise[u], x);
      nodes.emplace_back(static_cast<NodeId>(u), std::move(x));
    }
    for (std::size_t i = 0; i < p.items; ++i) {
      Vec x = out.item_latents[i];
      axpy(1.0, node_noise[p.users + i], x);
      nodes.emplace_back(static_cast<NodeId>(p.users + i), std::move(x));
    }
    std::vector<Edge> edges;
    for (std::size_t u = 0; u < p.users; ++u) {
      // Gumbel top-k == sampling without replacement from the softmax.
      std::vector<std::pair<double, std::size_t>> keys(p.items);
      for (std::size_t i = 0; i < p.items; ++i) {
        double r = uniform01(rng);
        while (r <= 0.0) r = uniform01(rng);
        keys[i] = {p.sharpness * dot(users[u], out.item_latents[i]) - std::log(-std::log(r)), i};
      }
      std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(p.interactions_per_user), keys.end(),
                        [](const auto& a, const auto& b) { return a.first > b.first; });
      for (std::size_t k = 0; k < p.interactions_per_user; ++k) {
        edges.push_back({static_cast<NodeId>(u), static_cast<NodeId>(p.users + keys[k].second), 1.0});
      }
    }
    out.graph.snapshots.push_back(
        Snapshot::build(static_cast<Timestamp>(s), p.latent_dim, std::move(nodes), edges));
  }
  return out;
}

}  // namespace ragraph
