#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/hash.hpp"
#include "ragraph/parallel.hpp"
#include "ragraph/propagate.hpp"
#include "ragraph/rng.hpp"
#include "ragraph/similarity.hpp"
#include "ragraph/store.hpp"
#include "ragraph/toy.hpp"

namespace ragraph {

struct BuildConfig {
  int k = 2;
  double K_scale = 3.0;
  double alpha = 0.5;
  double lambda = 0.5;
  double sigma_scale = 0.1;
  double eps = 1e-6;
  int dis_q = 4;
  std::optional<std::size_t> anchor_count;  // nullopt: ceil(log2 n)
  bool noise_variants = false;
  std::optional<std::size_t> store_cap;  // masters per snapshot
  bool label_outputs = true;
  PageRankOptions pagerank;

  void validate() const {
    if (k < 1) throw InvalidInput("k must be >= 1");
    if (!(K_scale >= 0.0)) throw InvalidInput("K_scale must be >= 0");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
    if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidInput("lambda must lie in (0,1)");
    if (!(sigma_scale >= 0.0)) throw InvalidInput("sigma_scale must be >= 0");
    if (!(eps > 0.0)) throw InvalidInput("eps must be > 0");
    if (dis_q < 1) throw InvalidInput("dis_q must be >= 1");
  }
};

inline nlohmann::json to_json(const BuildConfig& c) {
  nlohmann::json j = {{"k", c.k},
                      {"K_scale", c.K_scale},
                      {"alpha", c.alpha},
                      {"lambda", c.lambda},
                      {"sigma_scale", c.sigma_scale},
                      {"eps", c.eps},
                      {"dis_q", c.dis_q},
                      {"noise_variants", c.noise_variants},
                      {"label_outputs", c.label_outputs}};
  j["anchor_count"] = c.anchor_count ? nlohmann::json(*c.anchor_count) : nlohmann::json("log2");
  j["store_cap"] = c.store_cap ? nlohmann::json(*c.store_cap) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Inverse-importance table
// ---------------------------------------------------------------------------

/// Per-node centralities and sampling probabilities, aligned with `ids`.
struct ImportanceTable {
  std::vector<NodeId> ids;
  Vec pr;
  Vec dc;
  Vec importance;
  Vec inverse;
  Vec prob;

  std::optional<std::size_t> index_of(NodeId id) const {
    auto it = std::lower_bound(ids.begin(), ids.end(), id);
    if (it == ids.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids.begin());
  }

  double prob_of(NodeId id) const {
    auto i = index_of(id);
    return i ? prob[*i] : 0.0;
  }

  double mean_inverse() const {
    return std::accumulate(inverse.begin(), inverse.end(), 0.0) / static_cast<double>(inverse.size());
  }
};

namespace detail {

// Scales into [0,1] by the maximum. Max rather than min-max scaling keeps
// every node's importance positive, so I' stays bounded by 1/(min I).
inline Vec max_scaled(const Vec& v) {
  const double mx = *std::max_element(v.begin(), v.end());
  if (mx <= 0.0) return Vec(v.size(), 0.0);
  return scaled(v, 1.0 / mx);
}

}  // namespace detail

/// I = alpha * PR + (1 - alpha) * DC (each scaled to [0,1]),
/// I' = 1 / (I + eps), prob = I' / sum I'.
inline ImportanceTable importance(const Snapshot& g, double alpha, double eps = 1e-6,
                                  const PageRankOptions& pr_opt = {}) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidInput("alpha must lie in (0,1)");
  if (g.size() < 2) throw InvalidInput("importance needs a snapshot with at least 2 nodes");
  ImportanceTable t;
  t.ids = g.ids();
  t.pr = pagerank(g, pr_opt).scores;
  t.dc = degree_centrality(g);
  const auto prn = detail::max_scaled(t.pr);
  const auto dcn = detail::max_scaled(t.dc);
  const auto n = g.size();
  t.importance.resize(n);
  t.inverse.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    t.importance[i] = alpha * prn[i] + (1.0 - alpha) * dcn[i];
    t.inverse[i] = 1.0 / (t.importance[i] + eps);
  }
  const double total = std::accumulate(t.inverse.begin(), t.inverse.end(), 0.0);
  t.prob = scaled(t.inverse, 1.0 / total);
  return t;
}

/// Weighted sampling without replacement (exponential-key method): each node
/// gets key log(u) / p and the `count` largest keys win. Returned in draw
/// order.
inline std::vector<NodeId> sample_masters(const ImportanceTable& t, std::size_t count,
                                          std::uint64_t seed) {
  if (count > t.ids.size()) throw InvalidInput("cannot sample more masters than nodes");
  auto rng = substream(seed, "sample_masters");
  std::vector<std::pair<double, std::size_t>> keys(t.ids.size());
  for (std::size_t i = 0; i < t.ids.size(); ++i) {
    double u = uniform01(rng);
    while (u <= 0.0) u = uniform01(rng);
    const double p = t.prob[i];
    keys[i] = {p > 0.0 ? std::log(u) / p : -std::numeric_limits<double>::infinity(), i};
  }
  std::partial_sort(keys.begin(), keys.begin() + static_cast<std::ptrdiff_t>(count), keys.end(),
                    [](const auto& a, const auto& b) { return a.first > b.first || (a.first == b.first && a.second < b.second); });
  std::vector<NodeId> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(t.ids[keys[i].second]);
  return out;
}

/// floor(K * mean of rescaled I' over the ego nodes), where I' is rescaled so
/// that its snapshot-wide mean is 1. Nodes unknown to the table are skipped.
inline int augment_count(std::span<const NodeId> ego_nodes, const ImportanceTable& t, double K_scale) {
  if (!(K_scale >= 0.0)) throw InvalidInput("K_scale must be >= 0");
  const double snap_mean = t.mean_inverse();
  double sum = 0.0;
  std::size_t n = 0;
  for (NodeId id : ego_nodes) {
    if (auto i = t.index_of(id)) {
      sum += t.inverse[*i] / snap_mean;
      ++n;
    }
  }
  if (n == 0) return 0;
  return static_cast<int>(std::floor(K_scale * sum / static_cast<double>(n) + 1e-9));
}

// ---------------------------------------------------------------------------
// Augmentation operators
// ---------------------------------------------------------------------------

inline NodeId next_synthetic_id(const Snapshot& g) {
  return g.empty() ? -1 : std::min<NodeId>(g.id(0), 0) - 1;
}

/// Drops each non-master node with probability clamp(1 - p_i, 0, 0.5).
inline ToyGraph node_dropout(ToyGraph toy, const ImportanceTable& t, std::uint64_t seed) {
  auto rng = substream(seed, "node_dropout");
  std::vector<NodeId> drop;
  for (NodeId id : toy.subgraph.ids()) {
    const double u = uniform01(rng);
    if (id == toy.master) continue;
    const double p_drop = std::clamp(1.0 - t.prob_of(id), 0.0, 0.5);
    if (u < p_drop) drop.push_back(id);
  }
  for (NodeId id : drop) toy.subgraph.remove_node(id);
  toy.lineage.emplace_back("node_dropout");
  return toy;
}

/// X' = X + N(0, sigma^2) with sigma per dimension = sigma_scale * std of
/// that feature over the toy (std of 0 falls back to 1).
inline ToyGraph gaussian_noise(ToyGraph toy, double sigma_scale, std::uint64_t seed) {
  if (!(sigma_scale >= 0.0)) throw InvalidInput("sigma_scale must be >= 0");
  auto& g = toy.subgraph;
  const auto n = g.size();
  const auto d = g.dim();
  Vec mean(d, 0.0), var(d, 0.0);
  for (std::size_t i = 0; i < n; ++i) axpy(1.0 / static_cast<double>(n), g.features(i), mean);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = g.features(i);
    for (std::size_t k = 0; k < d; ++k) var[k] += (x[k] - mean[k]) * (x[k] - mean[k]) / static_cast<double>(n);
  }
  Vec sigma(d);
  for (std::size_t k = 0; k < d; ++k) {
    const double sd = std::sqrt(var[k]);
    sigma[k] = sigma_scale * (sd > 0.0 ? sd : 1.0);
  }
  auto rng = substream(seed, "gaussian_noise");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (std::size_t i = 0; i < n; ++i) {
    auto x = g.features(i);
    Vec y(x.begin(), x.end());
    for (std::size_t k = 0; k < d; ++k) y[k] += sigma[k] * normal(rng);
    g.set_features(i, std::move(y));
  }
  toy.lineage.emplace_back("gaussian_noise");
  return toy;
}

/// Adds a node with features lambda*X(i) + (1-lambda)*X(j), linked to i with
/// weight lambda*A[i,j] and to j with (1-lambda)*A[i,j]. The (i,j) edge stays.
inline ToyGraph interpolate_nodes(ToyGraph toy, NodeId i, NodeId j, double lambda) {
  if (!(lambda > 0.0 && lambda < 1.0)) throw InvalidInput("lambda must lie in (0,1)");
  auto& g = toy.subgraph;
  auto ii = g.index_of(i);
  auto jj = g.index_of(j);
  if (!ii || !jj || g.weight(*ii, *jj) <= 0.0) {
    throw InvalidInput("interpolate_nodes: no edge (" + std::to_string(i) + "," + std::to_string(j) + ")");
  }
  const double a = g.weight(*ii, *jj);
  Vec x = scaled(g.features(*ii), lambda);
  axpy(1.0 - lambda, g.features(*jj), x);
  const NodeId fresh = next_synthetic_id(g);
  g.add_node(fresh, std::move(x));
  g.add_edge(fresh, i, lambda * a);
  g.add_edge(fresh, j, (1.0 - lambda) * a);
  toy.lineage.emplace_back("interpolate_nodes");
  return toy;
}

/// Each edge is selected with probability clamp((p_i + p_j)/2, 0, 0.5); one
/// uniformly chosen endpoint is detached and the edge re-attached, weight
/// kept, to a uniformly chosen node not adjacent to the other endpoint. The
/// master never loses its last edge.
inline ToyGraph rewire_edges(ToyGraph toy, const ImportanceTable& t, std::uint64_t seed) {
  auto& g = toy.subgraph;
  if (g.size() < 3) throw InvalidInput("rewire_edges needs at least 3 nodes");
  auto rng = substream(seed, "rewire_edges");
  for (const auto& e : g.edges()) {
    const double p = std::clamp((t.prob_of(e.u) + t.prob_of(e.v)) / 2.0, 0.0, 0.5);
    const double u = uniform01(rng);
    const bool flip = uniform01(rng) < 0.5;
    if (u >= p) continue;
    const NodeId keep = flip ? e.v : e.u;
    const NodeId moved = flip ? e.u : e.v;
    const auto ki = g.require_index(keep);
    if (moved == toy.master && g.degree(g.require_index(moved)) <= 1) continue;
    std::vector<NodeId> candidates;
    for (std::size_t c = 0; c < g.size(); ++c) {
      if (c != ki && g.weight(ki, c) <= 0.0) candidates.push_back(g.id(c));
    }
    if (candidates.empty()) continue;
    const NodeId target = candidates[uniform_index(rng, candidates.size())];
    g.remove_edge(keep, moved);
    g.add_edge(keep, target, e.w);
  }
  toy.lineage.emplace_back("rewire_edges");
  return toy;
}

struct NoiseInjection {
  ToyGraph toy;
  bool warning = false;  // no node outside the toy graph to inject
};

/// Adds one uniformly sampled resource node from outside the toy graph,
/// joined with weight 0.5 to a uniformly chosen toy node.
inline NoiseInjection inject_noise_nodes(ToyGraph toy, const Snapshot& resource, std::uint64_t seed) {
  std::vector<std::size_t> outside;
  for (std::size_t i = 0; i < resource.size(); ++i) {
    if (!toy.subgraph.contains(resource.id(i))) outside.push_back(i);
  }
  if (outside.empty()) return {std::move(toy), true};
  auto rng = substream(seed, "inject_noise_nodes");
  const auto pick = outside[uniform_index(rng, outside.size())];
  const NodeId anchor = toy.subgraph.id(uniform_index(rng, toy.subgraph.size()));
  const auto x = resource.features(pick);
  toy.subgraph.add_node(resource.id(pick), Vec(x.begin(), x.end()), resource.label(resource.id(pick)));
  toy.subgraph.add_edge(resource.id(pick), anchor, 0.5);
  toy.is_noise_variant = true;
  toy.lineage.emplace_back("noise_node");
  return {std::move(toy), false};
}

// ---------------------------------------------------------------------------
// Keys and values
// ---------------------------------------------------------------------------

inline ToyKey build_keys_from_hidden(const ToyGraph& toy, const Embeddings& hidden,
                                     std::span<const NodeId> anchors, int dis_q) {
  if (anchors.empty()) throw InvalidInput("anchor set must be nonempty");
  const auto m = toy.subgraph.require_index(toy.master);
  return {toy.tau, neighbors(toy.subgraph, toy.master), d2c_code(toy.subgraph, toy.master, anchors, dis_q),
          hidden[m]};
}

inline ToyKey build_keys(const ToyGraph& toy, const Encoder& enc, std::span<const NodeId> anchors, int dis_q) {
  return build_keys_from_hidden(toy, encode(toy.subgraph, enc), anchors, dis_q);
}

/// With label_outputs, nodes carrying a label store one-hot(label) as their
/// output vector; everything else is decode(hidden).
inline ToyValues build_values_from_hidden(const ToyGraph& toy, Embeddings hidden, const Decoder& dec,
                                          bool label_outputs = false) {
  ToyValues v;
  v.output.reserve(hidden.size());
  for (std::size_t i = 0; i < hidden.size(); ++i) {
    const auto y = label_outputs ? toy.subgraph.label(toy.subgraph.id(i)) : std::nullopt;
    if (y) {
      if (*y < 0 || static_cast<std::size_t>(*y) >= dec.out_dim()) {
        throw InvalidInput("label " + std::to_string(*y) + " outside decoder output range");
      }
      Vec onehot(dec.out_dim(), 0.0);
      onehot[static_cast<std::size_t>(*y)] = 1.0;
      v.output.push_back(std::move(onehot));
    } else {
      v.output.push_back(decode(hidden[i], dec));
    }
  }
  v.hidden = std::move(hidden);
  auto agg = intra_propagate(toy, v);
  v.master_hidden_agg = std::move(agg.hidden);
  v.master_output_agg = std::move(agg.output);
  return v;
}

inline ToyValues build_values(const ToyGraph& toy, const Encoder& enc, const Decoder& dec,
                              bool label_outputs = false) {
  return build_values_from_hidden(toy, encode(toy.subgraph, enc), dec, label_outputs);
}

// ---------------------------------------------------------------------------
// Store construction
// ---------------------------------------------------------------------------

inline std::size_t default_anchor_count(std::size_t n) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(std::max<std::size_t>(n, 2))))));
}

inline std::vector<NodeId> choose_anchors(const DynamicGraph& g, std::optional<std::size_t> count,
                                          std::uint64_t seed) {
  auto universe = g.node_universe();
  const auto want = std::min(universe.size(), count.value_or(default_anchor_count(universe.size())));
  auto rng = substream(seed, "anchors");
  std::shuffle(universe.begin(), universe.end(), rng);
  universe.resize(want);
  std::sort(universe.begin(), universe.end());
  return universe;
}

/// Hash over the fields that shape the stored toys, plus the seed.
inline std::string build_config_hash(const BuildConfig& c, std::uint64_t seed) {
  auto j = to_json(c);
  j["seed"] = seed;
  return hash_hex(j.dump());
}

namespace detail {

inline std::vector<ToyGraph> toys_for_master(const Snapshot& snap, const ImportanceTable& table, NodeId master,
                                             const BuildConfig& cfg, std::uint64_t seed) {
  auto rng = substream(seed, "toy", static_cast<std::uint64_t>(snap.t()), static_cast<std::uint64_t>(master));
  std::vector<ToyGraph> out;
  auto ego = ego_net(snap, master, cfg.k);
  ToyGraph base{master, snap.t(), std::move(ego.subgraph), {"base"}, false};
  const int n_aug = augment_count(base.subgraph.ids(), table, cfg.K_scale);
  out.push_back(base);
  for (int v = 0; v < n_aug; ++v) {
    const auto op = uniform_index(rng, 4);
    const std::uint64_t op_seed = rng();
    const auto& bg = base.subgraph;
    if (op == 0) {
      out.push_back(node_dropout(base, table, op_seed));
    } else if (op == 2 && bg.edge_count() > 0) {
      auto edges = bg.edges();
      auto pick_rng = substream(op_seed, "interpolate_pick");
      const auto& e = edges[uniform_index(pick_rng, edges.size())];
      out.push_back(interpolate_nodes(base, e.u, e.v, cfg.lambda));
    } else if (op == 3 && bg.size() >= 3) {
      out.push_back(rewire_edges(base, table, op_seed));
    } else {
      out.push_back(gaussian_noise(base, cfg.sigma_scale, op_seed));
    }
  }
  if (cfg.noise_variants && uniform01(rng) < 0.2) {
    auto inj = inject_noise_nodes(base, snap, rng());
    if (!inj.warning) out.push_back(std::move(inj.toy));
  }
  return out;
}

}  // namespace detail

/// Chunks every snapshot of the resource graph into toy graphs: a base
/// ego-net per master plus n_aug augmented variants (and optional noise
/// variants), then computes keys and values. Deterministic in
/// (resource, cfg, seed) regardless of `threads`.
inline ToyStore build_store(const DynamicGraph& resource, const BuildConfig& cfg, const Encoder& enc,
                            const Decoder& dec, std::uint64_t seed, std::size_t threads = 1) {
  cfg.validate();
  std::size_t total = 0;
  for (const auto& s : resource.snapshots) total += s.size();
  if (total == 0) throw InvalidInput("resource graph is empty");

  ToyStore store;
  store.encoder = enc;
  store.anchors = choose_anchors(resource, cfg.anchor_count, seed);
  store.config = to_json(cfg);
  store.config["seed"] = seed;
  store.config_hash = build_config_hash(cfg, seed);
  store.f1 = 0;
  store.f2 = dec.out_dim();

  for (const auto& snap : resource.snapshots) {
    if (snap.empty()) continue;
    const auto table = importance(snap, cfg.alpha, cfg.eps, cfg.pagerank);
    std::vector<NodeId> masters = snap.ids();
    if (cfg.store_cap && *cfg.store_cap < masters.size()) {
      masters = sample_masters(table, *cfg.store_cap, splitmix64(seed ^ static_cast<std::uint64_t>(snap.t())));
      std::sort(masters.begin(), masters.end());
    }
    std::vector<std::vector<StoreEntry>> per_master(masters.size());
    parallel_for(masters.size(), threads, [&](std::size_t mi) {
      auto toys = detail::toys_for_master(snap, table, masters[mi], cfg, seed);
      for (auto& toy : toys) {
        auto hidden = encode(toy.subgraph, enc);
        StoreEntry e;
        e.key = build_keys_from_hidden(toy, hidden, store.anchors, cfg.dis_q);
        e.values = build_values_from_hidden(toy, std::move(hidden), dec, cfg.label_outputs);
        e.toy = std::move(toy);
        per_master[mi].push_back(std::move(e));
      }
    });
    for (auto& group : per_master) {
      for (auto& e : group) store.entries.push_back(std::move(e));
    }
  }
  if (!store.entries.empty()) store.f1 = store.entries.front().key.semantic.size();
  return store;
}

}  // namespace ragraph
