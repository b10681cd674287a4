#pragma once

#include <algorithm>
#include <deque>
#include <numeric>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragraph/config.hpp"
#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/parallel.hpp"
#include "ragraph/query.hpp"
#include "ragraph/store.hpp"
#include "ragraph/tasks.hpp"
#include "ragraph/toybuilder.hpp"
#include "ragraph/tuner.hpp"

namespace ragraph {

/// nf: retrieval, no tuning. ft: prompt-tuned decoder. nft: prompt tuning
/// with retrieval noise. baseline: no store, gamma 0, query-only context.
enum class Mode { kNF, kFT, kNFT, kBaseline };

inline std::string to_string(Mode m) {
  switch (m) {
    case Mode::kFT: return "ft";
    case Mode::kNFT: return "nft";
    case Mode::kBaseline: return "baseline";
    default: return "nf";
  }
}

inline Mode mode_from_string(const std::string& s) {
  if (s == "nf") return Mode::kNF;
  if (s == "ft") return Mode::kFT;
  if (s == "nft") return Mode::kNFT;
  if (s == "baseline") return Mode::kBaseline;
  throw InvalidInput("unknown mode '" + s + "'");
}

inline bool is_tuned(Mode m) { return m == Mode::kFT || m == Mode::kNFT; }

/// Multi-graph corpora → graph; one labeled snapshot → node; otherwise link.
inline TaskKind resolve_task(const DynamicGraph& g, TaskKind requested) {
  if (requested != TaskKind::kAuto) return requested;
  if (g.snapshots.empty()) throw InvalidInput("dataset has no snapshots");
  if (g.is_multi_graph()) return TaskKind::kGraph;
  if (g.snapshots.size() == 1 && !g.snapshots.front().labels().empty()) return TaskKind::kNode;
  if (g.snapshots.size() >= 3) return TaskKind::kLink;
  throw InvalidInput("cannot infer task: need labels, graph labels, or at least 3 snapshots");
}

// ---------------------------------------------------------------------------
// Per-seed task setup
// ---------------------------------------------------------------------------

/// Node and graph classification share this shape: a store graph, the set of
/// resource masters (eligible while tuning), shot queries and test queries.
struct ClassificationSetup {
  DynamicGraph store_graph;
  std::set<NodeId> resource_nodes;
  std::vector<QueryGraph> shots;
  std::vector<ClassId> shot_labels;
  std::vector<QueryGraph> tests;
  std::vector<ClassId> test_labels;
  std::size_t num_classes = 0;
  Split split;
};

/// Link prediction: resource + train snapshots are stored, resource
/// snapshots alone are eligible while tuning.
struct LinkSetup {
  DynamicGraph store_graph;
  std::set<Timestamp> resource_taus;
  std::vector<std::size_t> train_snapshots;  // indices into the dataset
  std::vector<std::size_t> test_snapshots;
  std::set<NodeId> query_side;
  std::set<NodeId> candidate_side;
  Split split;
};

namespace detail {

inline std::size_t class_count(const std::vector<ClassId>& labels) {
  ClassId mx = -1;
  for (ClassId y : labels) {
    if (y < 0) throw InvalidInput("negative class label");
    mx = std::max(mx, y);
  }
  return static_cast<std::size_t>(mx + 1);
}

// Up to `shots` members of each class, picked by a seeded shuffle of `pool`.
inline std::vector<std::size_t> pick_shots(const std::vector<ClassId>& pool_labels, std::size_t classes,
                                           std::size_t shots, std::uint64_t seed) {
  std::vector<std::size_t> order(pool_labels.size());
  std::iota(order.begin(), order.end(), 0);
  auto rng = substream(seed, "shots");
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> taken(classes, 0);
  std::vector<std::size_t> picked;
  for (std::size_t i : order) {
    const auto y = static_cast<std::size_t>(pool_labels[i]);
    if (taken[y] < shots) {
      ++taken[y];
      picked.push_back(i);
    }
  }
  for (std::size_t c = 0; c < classes; ++c) {
    if (taken[c] == 0) throw InvalidInput("class " + std::to_string(c) + " has no training example for shots");
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

inline SplitSpec split_spec(const RunConfig& cfg, SplitSpec::Mode mode, std::uint64_t seed) {
  SplitSpec s;
  s.mode = mode;
  s.train = cfg.eval.train_ratio;
  s.resource = cfg.eval.resource_ratio;
  s.dyn_resource = cfg.eval.dyn_resource;
  s.dyn_train = cfg.eval.dyn_train;
  s.seed = seed;
  return s;
}

}  // namespace detail

/// Static node split: the store covers the induced train + resource graph
/// with labels kept on resource nodes only; shots come from train nodes;
/// test queries are ego nets in the full snapshot.
inline ClassificationSetup node_setup(const DynamicGraph& g, const RunConfig& cfg, std::uint64_t seed) {
  if (g.snapshots.empty()) throw InvalidInput("dataset has no snapshots");
  const auto& snap = g.snapshots.front();
  ClassificationSetup s;
  s.split = split(g, detail::split_spec(cfg, SplitSpec::Mode::kStaticNode, seed));
  std::vector<ClassId> all_labels;
  for (const auto& [id, y] : snap.labels()) all_labels.push_back(y);
  s.num_classes = detail::class_count(all_labels);

  std::vector<NodeId> stored(s.split.train.begin(), s.split.train.end());
  stored.insert(stored.end(), s.split.resource.begin(), s.split.resource.end());
  std::sort(stored.begin(), stored.end());
  auto resource = snap.induced(stored);
  for (NodeId id : s.split.train) resource.clear_label(id);
  s.store_graph.snapshots.push_back(std::move(resource));
  s.resource_nodes.insert(s.split.resource.begin(), s.split.resource.end());

  std::vector<NodeId> pool;
  std::vector<ClassId> pool_labels;
  for (NodeId id : s.split.train) {
    if (auto y = snap.label(id)) {
      pool.push_back(id);
      pool_labels.push_back(*y);
    }
  }
  for (std::size_t i : detail::pick_shots(pool_labels, s.num_classes, cfg.eval.shots, seed)) {
    s.shots.push_back(node_query(snap, pool[i], cfg.build.k));
    s.shot_labels.push_back(pool_labels[i]);
  }
  for (NodeId id : s.split.test) {
    if (auto y = snap.label(id)) {
      s.tests.push_back(node_query(snap, id, cfg.build.k));
      s.test_labels.push_back(*y);
    }
  }
  if (s.tests.empty()) throw InvalidInput("no labeled test nodes");
  return s;
}

/// Graph split: each graph gets a virtual center with id
/// max_id + 1 + graph index. Train and resource graphs are stored as one
/// disjoint union; members inherit the graph label on resource graphs.
inline ClassificationSetup graph_setup(const DynamicGraph& g, const RunConfig& cfg, std::uint64_t seed) {
  if (g.snapshots.empty()) throw InvalidInput("dataset has no snapshots");
  const auto& snap = g.snapshots.front();
  ClassificationSetup s;
  s.split = split(g, detail::split_spec(cfg, SplitSpec::Mode::kStaticNode, seed));
  std::vector<ClassId> all_labels;
  for (const auto& [graph, y] : g.graph_labels) all_labels.push_back(y);
  s.num_classes = detail::class_count(all_labels);
  const NodeId base = snap.empty() ? 0 : snap.ids().back() + 1;

  std::map<int, QueryGraph> centered;
  std::size_t index = 0;
  for (const auto& [graph, y] : g.graph_labels) {
    const auto members = g.graph_members(graph);
    if (members.empty()) throw InvalidInput("graph " + std::to_string(graph) + " has no nodes");
    centered.emplace(graph, virtual_center(snap.induced(members), base + static_cast<NodeId>(index++)));
  }

  const std::set<std::int64_t> resource_graphs(s.split.resource.begin(), s.split.resource.end());
  std::vector<std::pair<NodeId, Vec>> nodes;
  std::vector<Edge> edges;
  std::map<NodeId, ClassId> labels;
  std::vector<std::int64_t> stored(s.split.train.begin(), s.split.train.end());
  stored.insert(stored.end(), s.split.resource.begin(), s.split.resource.end());
  std::sort(stored.begin(), stored.end());
  for (auto graph : stored) {
    const auto& q = centered.at(static_cast<int>(graph));
    const bool is_resource = resource_graphs.count(graph) > 0;
    for (std::size_t i = 0; i < q.subgraph.size(); ++i) {
      const auto x = q.subgraph.features(i);
      nodes.emplace_back(q.subgraph.id(i), Vec(x.begin(), x.end()));
      if (is_resource) {
        labels[q.subgraph.id(i)] = g.graph_labels.at(static_cast<int>(graph));
        s.resource_nodes.insert(q.subgraph.id(i));
      }
    }
    const auto e = q.subgraph.edges();
    edges.insert(edges.end(), e.begin(), e.end());
  }
  s.store_graph.snapshots.push_back(Snapshot::build(snap.t(), snap.dim(), std::move(nodes), edges, labels));

  std::vector<ClassId> pool_labels;
  for (auto graph : s.split.train) pool_labels.push_back(g.graph_labels.at(static_cast<int>(graph)));
  for (std::size_t i : detail::pick_shots(pool_labels, s.num_classes, cfg.eval.shots, seed)) {
    s.shots.push_back(centered.at(static_cast<int>(s.split.train[i])));
    s.shot_labels.push_back(pool_labels[i]);
  }
  for (auto graph : s.split.test) {
    s.tests.push_back(centered.at(static_cast<int>(graph)));
    s.test_labels.push_back(g.graph_labels.at(static_cast<int>(graph)));
  }
  return s;
}

/// Two-coloring of the union of all snapshots. Returns nullopt when some
/// component is not bipartite.
inline std::optional<std::pair<std::set<NodeId>, std::set<NodeId>>> bipartition(const DynamicGraph& g) {
  std::map<NodeId, std::set<NodeId>> adj;
  for (const auto& s : g.snapshots) {
    for (NodeId id : s.ids()) adj[id];
    for (const auto& e : s.edges()) {
      adj[e.u].insert(e.v);
      adj[e.v].insert(e.u);
    }
  }
  std::map<NodeId, int> color;
  for (const auto& [start, _] : adj) {
    if (color.count(start)) continue;
    color[start] = 0;
    std::deque<NodeId> queue{start};
    while (!queue.empty()) {
      const NodeId u = queue.front();
      queue.pop_front();
      for (NodeId v : adj[u]) {
        auto it = color.find(v);
        if (it == color.end()) {
          color[v] = 1 - color[u];
          queue.push_back(v);
        } else if (it->second == color[u]) {
          return std::nullopt;
        }
      }
    }
  }
  std::pair<std::set<NodeId>, std::set<NodeId>> sides;
  const int query_color = color.begin()->second;
  for (const auto& [id, c] : color) (c == query_color ? sides.first : sides.second).insert(id);
  return sides;
}

inline LinkSetup link_setup(const DynamicGraph& g, const RunConfig& cfg, std::uint64_t seed) {
  g.validate();
  LinkSetup s;
  s.split = split(g, detail::split_spec(cfg, SplitSpec::Mode::kDynamicSnapshot, seed));
  for (auto i : s.split.resource) {
    s.store_graph.snapshots.push_back(g.snapshots[static_cast<std::size_t>(i)]);
    s.resource_taus.insert(g.snapshots[static_cast<std::size_t>(i)].t());
  }
  for (auto i : s.split.train) {
    s.store_graph.snapshots.push_back(g.snapshots[static_cast<std::size_t>(i)]);
    s.train_snapshots.push_back(static_cast<std::size_t>(i));
  }
  for (auto i : s.split.test) s.test_snapshots.push_back(static_cast<std::size_t>(i));
  if (auto sides = bipartition(g)) {
    s.query_side = std::move(sides->first);
    s.candidate_side = std::move(sides->second);
  } else {
    const auto all = g.node_universe();
    s.query_side.insert(all.begin(), all.end());
    s.candidate_side = s.query_side;
  }
  return s;
}

// ---------------------------------------------------------------------------
// Store preparation
// ---------------------------------------------------------------------------

/// Decoder used while building the store: identity for unlabeled corpora,
/// else columns are the class prototypes of the labeled stored nodes.
inline Decoder build_decoder(const DynamicGraph& store_graph, const Encoder& enc, std::size_t num_classes) {
  if (num_classes == 0) {
    const auto dim = store_graph.snapshots.empty() ? 0 : store_graph.snapshots.front().dim();
    return Decoder::identity(enc.output_dim(dim));
  }
  std::optional<std::size_t> f1;
  std::vector<Vec> sums(num_classes);
  std::vector<std::size_t> counts(num_classes, 0);
  for (const auto& snap : store_graph.snapshots) {
    const auto hidden = encode(snap, enc);
    for (std::size_t i = 0; i < snap.size(); ++i) {
      if (!f1) {
        f1 = hidden[i].size();
        for (auto& s : sums) s.assign(*f1, 0.0);
      }
      if (auto y = snap.label(snap.id(i))) {
        axpy(1.0, hidden[i], sums[static_cast<std::size_t>(*y)]);
        ++counts[static_cast<std::size_t>(*y)];
      }
    }
  }
  if (!f1) throw InvalidInput("store graph is empty");
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c]) sums[c] = scaled(sums[c], 1.0 / static_cast<double>(counts[c]));
  }
  return Decoder::from_prototypes(sums);
}

inline Encoder run_encoder(const RunConfig& cfg) { return Encoder::parameter_free_encoder(cfg.encoder_layers); }

/// Builds the store a run with (data, cfg, seed) evaluates against.
inline ToyStore prepare_store(const DynamicGraph& g, const RunConfig& cfg, std::uint64_t seed, std::size_t threads,
                              const std::string& data_hash = {}) {
  const auto task = resolve_task(g, cfg.task);
  const auto enc = run_encoder(cfg);
  DynamicGraph store_graph;
  std::size_t classes = 0;
  if (task == TaskKind::kLink) {
    store_graph = link_setup(g, cfg, seed).store_graph;
  } else {
    auto s = task == TaskKind::kNode ? node_setup(g, cfg, seed) : graph_setup(g, cfg, seed);
    store_graph = std::move(s.store_graph);
    classes = s.num_classes;
  }
  auto dec = build_decoder(store_graph, enc, classes);
  auto store = build_store(store_graph, cfg.build, enc, dec, seed, threads);
  store.provenance = {{"task", to_string(task)}, {"data_hash", data_hash}, {"seed", seed}};
  return store;
}

/// A supplied store must come from the same build config, seed and data.
inline void check_store(const ToyStore& store, const RunConfig& cfg, std::uint64_t seed,
                        const std::string& data_hash) {
  if (store.config_hash != build_config_hash(cfg.build, seed)) {
    throw ConsistencyError("store was built with a different build config or seed (config_hash " +
                           store.config_hash + ")");
  }
  const auto stored = store.provenance.value("data_hash", std::string());
  if (!data_hash.empty() && !stored.empty() && stored != data_hash) {
    throw ConsistencyError("store was built from different data (data_hash " + stored + ")");
  }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

struct EvalResult {
  TaskKind task = TaskKind::kNode;
  Mode mode = Mode::kNF;
  std::uint64_t seed = 0;
  std::optional<double> accuracy;
  std::optional<double> recall;
  std::optional<double> ndcg;
  std::size_t link_k = 20;
  std::size_t n_test = 0;
  std::size_t excluded = 0;
  std::size_t empty_contexts = 0;
  double gamma = 0.0;
  std::size_t store_entries = 0;
  std::vector<double> loss_trace;
};

inline nlohmann::json to_json(const EvalResult& r) {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  const auto k = std::to_string(r.link_k);
  nlohmann::json j = {{"task", to_string(r.task)},
                      {"mode", to_string(r.mode)},
                      {"seed", r.seed},
                      {"accuracy", opt(r.accuracy)},
                      {"recall@" + k, opt(r.recall)},
                      {"ndcg@" + k, opt(r.ndcg)},
                      {"n_test", r.n_test},
                      {"excluded", r.excluded},
                      {"empty_contexts", r.empty_contexts},
                      {"gamma", r.gamma},
                      {"store_entries", r.store_entries}};
  if (!r.loss_trace.empty()) {
    j["initial_loss"] = r.loss_trace.front();
    j["final_loss"] = r.loss_trace.back();
  }
  return j;
}

/// Optional hooks for callers that already hold a store or tuned decoder.
struct EvalInputs {
  const ToyStore* store = nullptr;
  std::optional<TuneResult> tuned;
};

namespace detail {

struct Scorer {
  const ToyStore* store = nullptr;
  const Decoder* decoder = nullptr;
  double gamma = 0.0;
  RetrievalPlan plan;
  double mix = 0.5;
  bool baseline = false;

  // Final output ô for one prepared query; counts empty contexts.
  Vec operator()(const PreparedQuery& q, bool& empty) const {
    if (baseline) {
      auto h = inter_propagate_hidden(q.graph, q.hidden, RetrievalContext{}, mix);
      empty = true;
      return fuse(Vec(decoder->out_dim(), 0.0), h.h_c, *decoder, 0.0);
    }
    auto ctx = retrieve(*store, q.key, plan);
    auto p = propagate_query(q, ctx, store->f2, mix);
    empty = p.empty_context;
    return fuse(p.o_c, p.h_c, *decoder, gamma);
  }
};

inline std::vector<PreparedQuery> prepare_all(const std::vector<QueryGraph>& graphs, const Encoder& enc,
                                              std::span<const NodeId> anchors, int dis_q, std::size_t threads) {
  std::vector<PreparedQuery> out(graphs.size());
  parallel_for(graphs.size(), threads, [&](std::size_t i) { out[i] = prepare_query(graphs[i], enc, anchors, dis_q); });
  return out;
}

inline std::vector<Vec> score_all(const Scorer& scorer, const std::vector<PreparedQuery>& queries,
                                  std::size_t threads, std::size_t& empty_count) {
  std::vector<Vec> out(queries.size());
  std::vector<char> empty(queries.size(), 0);
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    bool e = false;
    out[i] = scorer(queries[i], e);
    empty[i] = e ? 1 : 0;
  });
  empty_count += static_cast<std::size_t>(std::count(empty.begin(), empty.end(), 1));
  return out;
}

inline RetrievalPlan base_plan(const RunConfig& cfg) {
  RetrievalPlan p;
  p.top_k = cfg.retrieval.top_k;
  p.params = cfg.retrieval.params;
  return p;
}

inline TuneConfig tune_config(const RunConfig& cfg, Mode mode, std::uint64_t seed, std::size_t threads) {
  TuneConfig t = cfg.tune;
  t.add_noise = mode == Mode::kNFT || (mode != Mode::kFT && cfg.tune.add_noise);
  t.seed = seed;
  t.threads = threads;
  return t;
}

}  // namespace detail

/// Shot-prototype decoder: column c is the L2-normalized mean center hidden
/// of the class-c shots.
inline Decoder shot_decoder(const std::vector<PreparedQuery>& shots, const std::vector<ClassId>& labels,
                            std::size_t classes) {
  std::vector<std::pair<Vec, ClassId>> pairs;
  for (std::size_t i = 0; i < shots.size(); ++i) {
    const auto h = shots[i].center_hidden();
    pairs.emplace_back(Vec(h.begin(), h.end()), labels[i]);
  }
  return Decoder::from_prototypes(prototypes(pairs, classes).vectors);
}

/// Tunes the decoder for a classification setup against `store`, retrieving
/// resource masters only.
inline TuneResult tune_classification(const ClassificationSetup& s, const ToyStore& store, const RunConfig& cfg,
                                      Mode mode, std::uint64_t seed, std::size_t threads) {
  const auto enc = store.encoder;
  auto shots = detail::prepare_all(s.shots, enc, store.anchors, cfg.build.dis_q, threads);
  TrainSet train{std::move(shots), s.shot_labels, {}, s.num_classes};
  auto plan = detail::base_plan(cfg);
  plan.filter = [&s](const StoreEntry& e) { return s.resource_nodes.count(e.toy.master) > 0; };
  auto init = shot_decoder(train.queries, train.labels, s.num_classes);
  return tune(store, train, std::move(init), cfg.effective_gamma(), detail::tune_config(cfg, mode, seed, threads),
              plan, cfg.retrieval.mix);
}

inline EvalResult evaluate_classification(const ClassificationSetup& s, const RunConfig& cfg, Mode mode,
                                          std::uint64_t seed, std::size_t threads, const ToyStore* store,
                                          std::optional<TuneResult> tuned) {
  EvalResult r;
  r.mode = mode;
  r.seed = seed;
  const bool baseline = mode == Mode::kBaseline;
  const auto enc = store ? store->encoder : run_encoder(cfg);
  const std::vector<NodeId> no_anchors;
  std::span<const NodeId> anchors = store ? std::span<const NodeId>(store->anchors) : no_anchors;

  auto shots = detail::prepare_all(s.shots, enc, anchors, cfg.build.dis_q, threads);
  auto tests = detail::prepare_all(s.tests, enc, anchors, cfg.build.dis_q, threads);
  Decoder dec = shot_decoder(shots, s.shot_labels, s.num_classes);
  double gamma = baseline ? 0.0 : cfg.effective_gamma();
  if (!baseline) {
    if (!store) throw InvalidInput("retrieval modes need a store");
    if (store->f2 != s.num_classes) {
      throw ConsistencyError("store output width " + std::to_string(store->f2) + " differs from class count " +
                             std::to_string(s.num_classes));
    }
    r.store_entries = store->size();
  }
  if (is_tuned(mode)) {
    if (!tuned) tuned = tune_classification(s, *store, cfg, mode, seed, threads);
    dec = tuned->decoder;
    gamma = tuned->gamma;
    r.loss_trace = tuned->loss_trace;
  }
  r.gamma = gamma;

  detail::Scorer scorer{store, &dec, gamma, detail::base_plan(cfg), cfg.retrieval.mix, baseline};
  std::size_t empty = 0;
  const auto shot_out = detail::score_all(scorer, shots, threads, empty);
  std::vector<std::pair<Vec, ClassId>> pairs;
  for (std::size_t i = 0; i < shot_out.size(); ++i) pairs.emplace_back(shot_out[i], s.shot_labels[i]);
  const auto protos = prototypes(pairs, s.num_classes);

  scorer.plan.bottom_k = baseline ? 0 : cfg.eval.forced_noise;
  empty = 0;
  const auto test_out = detail::score_all(scorer, tests, threads, empty);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < test_out.size(); ++i) {
    if (classify(test_out[i], protos) == s.test_labels[i]) ++correct;
  }
  r.n_test = tests.size();
  r.empty_contexts = empty;
  r.accuracy = static_cast<double>(correct) / static_cast<double>(tests.size());
  return r;
}

namespace detail {

// Queries for every node of snapshot `at`, in id order.
inline std::vector<QueryGraph> snapshot_queries(const Snapshot& at, int k) {
  std::vector<QueryGraph> out;
  out.reserve(at.size());
  for (NodeId id : at.ids()) out.push_back(node_query(at, id, k));
  return out;
}

}  // namespace detail

/// Training triples from the train snapshots: the anchor is a query-side
/// node seen in snapshot s-1, the positive one of its links in s, the
/// negative a uniformly drawn candidate it does not link to in s.
inline TrainSet link_train_set(const DynamicGraph& g, const LinkSetup& s, const ToyStore& store,
                               const RunConfig& cfg, std::uint64_t seed, std::size_t threads) {
  TrainSet train;
  auto rng = substream(seed, "link_triples");
  const std::vector<NodeId> candidates(s.candidate_side.begin(), s.candidate_side.end());
  for (std::size_t si : s.train_snapshots) {
    if (si == 0) continue;
    const auto& prev = g.snapshots[si - 1];
    const auto& cur = g.snapshots[si];
    const std::size_t offset = train.queries.size();
    auto queries = detail::prepare_all(detail::snapshot_queries(prev, cfg.build.k), store.encoder, store.anchors,
                                       cfg.build.dis_q, threads);
    for (auto& q : queries) train.queries.push_back(std::move(q));
    for (std::size_t a = 0; a < prev.size(); ++a) {
      const NodeId u = prev.id(a);
      if (!s.query_side.count(u) || !cur.contains(u)) continue;
      const auto pos = neighbors(cur, u);
      for (NodeId p : pos) {
        auto pi = prev.index_of(p);
        if (!pi || !s.candidate_side.count(p)) continue;
        for (int attempt = 0; attempt < 32; ++attempt) {
          const NodeId n = candidates[uniform_index(rng, candidates.size())];
          if (n == u || std::binary_search(pos.begin(), pos.end(), n)) continue;
          if (auto ni = prev.index_of(n)) {
            train.triples.push_back({offset + a, offset + *pi, offset + *ni});
            break;
          }
        }
      }
    }
  }
  if (train.triples.empty()) throw InvalidInput("no link training triples in the train snapshots");
  return train;
}

inline TuneResult tune_link(const DynamicGraph& g, const LinkSetup& s, const ToyStore& store, const RunConfig& cfg,
                            Mode mode, std::uint64_t seed, std::size_t threads) {
  auto train = link_train_set(g, s, store, cfg, seed, threads);
  auto plan = detail::base_plan(cfg);
  plan.filter = [&s](const StoreEntry& e) { return s.resource_taus.count(e.toy.tau) > 0; };
  return tune(store, train, Decoder::identity(store.f2), cfg.effective_gamma(),
              detail::tune_config(cfg, mode, seed, threads), plan, cfg.retrieval.mix);
}

/// For each test snapshot s, query-side nodes are embedded from their ego
/// net in s-1 and rank every candidate embedded the same way; ground truth
/// is the node's links in s.
inline EvalResult evaluate_link(const DynamicGraph& g, const LinkSetup& s, const RunConfig& cfg, Mode mode,
                                std::uint64_t seed, std::size_t threads, const ToyStore* store,
                                std::optional<TuneResult> tuned) {
  EvalResult r;
  r.task = TaskKind::kLink;
  r.mode = mode;
  r.seed = seed;
  r.link_k = cfg.eval.link_k;
  const bool baseline = mode == Mode::kBaseline;
  if (!baseline && !store) throw InvalidInput("retrieval modes need a store");
  const auto enc = store ? store->encoder : run_encoder(cfg);
  const std::vector<NodeId> no_anchors;
  std::span<const NodeId> anchors = store ? std::span<const NodeId>(store->anchors) : no_anchors;
  const auto dim = enc.output_dim(g.snapshots.front().dim());
  Decoder dec = Decoder::identity(dim);
  double gamma = baseline ? 0.0 : cfg.effective_gamma();
  if (store) r.store_entries = store->size();
  if (is_tuned(mode)) {
    if (!tuned) tuned = tune_link(g, s, *store, cfg, mode, seed, threads);
    dec = tuned->decoder;
    gamma = tuned->gamma;
    r.loss_trace = tuned->loss_trace;
  }
  r.gamma = gamma;
  detail::Scorer scorer{store, &dec, gamma, detail::base_plan(cfg), cfg.retrieval.mix, baseline};
  scorer.plan.bottom_k = baseline ? 0 : cfg.eval.forced_noise;

  std::vector<std::vector<NodeId>> rankings, truth;
  for (std::size_t si : s.test_snapshots) {
    if (si == 0) continue;
    const auto& prev = g.snapshots[si - 1];
    const auto& cur = g.snapshots[si];
    auto queries = detail::prepare_all(detail::snapshot_queries(prev, cfg.build.k), enc, anchors, cfg.build.dis_q,
                                       threads);
    const auto outputs = detail::score_all(scorer, queries, threads, r.empty_contexts);
    std::vector<std::pair<NodeId, Vec>> candidates;
    for (std::size_t i = 0; i < prev.size(); ++i) {
      if (s.candidate_side.count(prev.id(i))) candidates.emplace_back(prev.id(i), outputs[i]);
    }
    for (std::size_t i = 0; i < prev.size(); ++i) {
      const NodeId u = prev.id(i);
      if (!s.query_side.count(u)) continue;
      std::vector<NodeId> t;
      if (cur.contains(u)) {
        for (NodeId v : neighbors(cur, u)) {
          if (s.candidate_side.count(v) && v != u) t.push_back(v);
        }
      }
      std::vector<std::pair<NodeId, Vec>> others;
      for (const auto& c : candidates) {
        if (c.first != u) others.push_back(c);
      }
      std::vector<NodeId> ranked;
      for (const auto& rc : predict_links(outputs[i], others, cfg.eval.link_k)) ranked.push_back(rc.id);
      rankings.push_back(std::move(ranked));
      truth.push_back(std::move(t));
    }
  }
  const auto rec = recall_at_k(rankings, truth, cfg.eval.link_k);
  const auto nd = ndcg_at_k(rankings, truth, cfg.eval.link_k);
  r.recall = rec.value;
  r.ndcg = nd.value;
  r.n_test = rec.evaluated;
  r.excluded = rec.excluded;
  return r;
}

/// One seeded run. Builds the store unless one is supplied; baseline mode
/// never touches a store.
inline EvalResult evaluate(const DynamicGraph& g, const RunConfig& cfg, Mode mode, std::uint64_t seed,
                           std::size_t threads = 1, EvalInputs in = {}) {
  cfg.validate();
  const auto task = resolve_task(g, cfg.task);
  std::optional<ToyStore> owned;
  const ToyStore* store = in.store;
  if (mode != Mode::kBaseline && !store) {
    owned = prepare_store(g, cfg, seed, threads);
    store = &*owned;
  }
  if (mode == Mode::kBaseline) store = nullptr;
  EvalResult r;
  if (task == TaskKind::kLink) {
    r = evaluate_link(g, link_setup(g, cfg, seed), cfg, mode, seed, threads, store, std::move(in.tuned));
  } else {
    const auto s = task == TaskKind::kNode ? node_setup(g, cfg, seed) : graph_setup(g, cfg, seed);
    r = evaluate_classification(s, cfg, mode, seed, threads, store, std::move(in.tuned));
  }
  r.task = task;
  return r;
}

/// Decoder tuning as a standalone step (the `tune` command).
inline TuneResult tune_for(const DynamicGraph& g, const RunConfig& cfg, const ToyStore& store, Mode mode,
                           std::uint64_t seed, std::size_t threads = 1) {
  const auto task = resolve_task(g, cfg.task);
  if (task == TaskKind::kLink) return tune_link(g, link_setup(g, cfg, seed), store, cfg, mode, seed, threads);
  const auto s = task == TaskKind::kNode ? node_setup(g, cfg, seed) : graph_setup(g, cfg, seed);
  return tune_classification(s, store, cfg, mode, seed, threads);
}

}  // namespace ragraph
