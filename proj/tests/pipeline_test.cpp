#include <set>

#include "gtest/gtest.h"
#include "ragraph/config.hpp"
#include "ragraph/pipeline.hpp"
#include "test_util.hpp"

using namespace ragraph;
using namespace ragraph::testing;

namespace {

// Class 0: paths with feature (1, 0); class 1: 4-cliques with feature (0, 1).
DynamicGraph graph_corpus(std::size_t per_class) {
  DynamicGraph d;
  std::vector<std::pair<NodeId, Vec>> nodes;
  std::vector<Edge> edges;
  NodeId next = 0;
  for (std::size_t gi = 0; gi < 2 * per_class; ++gi) {
    const int graph = static_cast<int>(gi);
    const bool clique = gi % 2 == 1;
    const NodeId first = next;
    const NodeId size = clique ? 4 : 5;
    for (NodeId i = 0; i < size; ++i) {
      nodes.emplace_back(next, clique ? Vec{0.1 * static_cast<double>(gi % 3), 1.0} : Vec{1.0, 0.1 * static_cast<double>(gi % 3)});
      d.graph_of[next] = graph;
      ++next;
    }
    for (NodeId i = first; i < next; ++i) {
      for (NodeId j = i + 1; j < next; ++j) {
        if (clique || j == i + 1) edges.push_back({i, j, 1.0});
      }
    }
    d.graph_labels[graph] = clique ? 1 : 0;
  }
  d.snapshots.push_back(Snapshot::build(0, 2, std::move(nodes), edges));
  return d;
}

}  // namespace

TEST(Pipeline, ResolveTask) {
  auto sbm = gen_sbm({}, 1);
  EXPECT_EQ(resolve_task(sbm, TaskKind::kAuto), TaskKind::kNode);
  EXPECT_EQ(resolve_task(graph_corpus(3), TaskKind::kAuto), TaskKind::kGraph);
  EXPECT_EQ(resolve_task(gen_dynamic_bipartite({}, 1).graph, TaskKind::kAuto), TaskKind::kLink);
  EXPECT_EQ(resolve_task(sbm, TaskKind::kLink), TaskKind::kLink);
  DynamicGraph unlabeled;
  unlabeled.snapshots.push_back(path_graph(4));
  EXPECT_THROW(resolve_task(unlabeled, TaskKind::kAuto), InvalidInput);
  EXPECT_EQ(mode_from_string("nft"), Mode::kNFT);
  EXPECT_THROW(mode_from_string("xx"), InvalidInput);
}

TEST(Pipeline, NodeSetupKeepsLabelsOnResourceOnly) {
  auto g = gen_sbm({}, 2);
  RunConfig cfg;
  auto s = node_setup(g, cfg, 7);
  const auto& stored = s.store_graph.snapshots.front();
  EXPECT_EQ(stored.size(), s.split.train.size() + s.split.resource.size());
  for (auto id : s.split.resource) EXPECT_TRUE(stored.label(id).has_value());
  for (auto id : s.split.train) EXPECT_FALSE(stored.label(id).has_value());
  for (auto id : s.split.test) EXPECT_FALSE(stored.contains(id));
  EXPECT_EQ(s.shots.size(), 6u * cfg.eval.shots);
  std::set<NodeId> train(s.split.train.begin(), s.split.train.end());
  for (const auto& q : s.shots) EXPECT_TRUE(train.count(q.center));
  EXPECT_EQ(s.tests.size(), s.split.test.size());
}

TEST(Pipeline, LabelInjectionIsExact) {
  SbmParams p;
  p.signal = 1.0;
  p.p_out = 0.0;
  auto g = gen_sbm(p, 3);
  RunConfig cfg;
  cfg.gamma = 1.0;
  cfg.retrieval.top_k = 1;
  auto r = evaluate(g, cfg, Mode::kNF, 3);
  ASSERT_TRUE(r.accuracy.has_value());
  EXPECT_DOUBLE_EQ(*r.accuracy, 1.0);
}

TEST(Pipeline, BaselineIgnoresStore) {
  auto g = gen_sbm({}, 4);
  RunConfig cfg;
  auto plain = evaluate(g, cfg, Mode::kBaseline, 4);
  auto other = prepare_store(gen_sbm({}, 99), cfg, 99, 1);
  EvalInputs in;
  in.store = &other;
  auto with = evaluate(g, cfg, Mode::kBaseline, 4, 1, in);
  EXPECT_EQ(to_json(plain), to_json(with));
  EXPECT_EQ(plain.store_entries, 0u);
  EXPECT_DOUBLE_EQ(plain.gamma, 0.0);
}

TEST(Pipeline, EvaluationIsDeterministic) {
  auto g = gen_sbm({}, 5);
  RunConfig cfg;
  cfg.tune.epochs = 10;
  for (Mode m : {Mode::kNF, Mode::kFT, Mode::kNFT}) {
    auto a = evaluate(g, cfg, m, 5);
    auto b = evaluate(g, cfg, m, 5, 2);
    EXPECT_EQ(to_json(a).dump(), to_json(b).dump()) << to_string(m);
    EXPECT_GE(*a.accuracy, 0.0);
    EXPECT_LE(*a.accuracy, 1.0);
  }
}

TEST(Pipeline, SuppliedStoreMustMatch) {
  auto g = gen_sbm({}, 6);
  RunConfig cfg;
  auto store = prepare_store(g, cfg, 6, 1, "abc");
  EXPECT_NO_THROW(check_store(store, cfg, 6, "abc"));
  EXPECT_THROW(check_store(store, cfg, 7, "abc"), ConsistencyError);
  EXPECT_THROW(check_store(store, cfg, 6, "def"), ConsistencyError);
  auto changed = cfg;
  changed.build.k = 1;
  EXPECT_THROW(check_store(store, changed, 6, "abc"), ConsistencyError);
}

TEST(Pipeline, LinkMetricsInRange) {
  BipartiteParams p;
  p.users = 20;
  p.items = 40;
  p.snapshots = 5;
  auto g = gen_dynamic_bipartite(p, 8).graph;
  RunConfig cfg;
  cfg.tune.epochs = 5;
  auto s = link_setup(g, cfg, 8);
  EXPECT_EQ(s.query_side.size(), 20u);
  EXPECT_EQ(*s.query_side.begin(), 0);
  EXPECT_EQ(s.store_graph.snapshots.size(), 4u);
  EXPECT_EQ(s.resource_taus.size(), 3u);
  for (Mode m : {Mode::kBaseline, Mode::kNF, Mode::kFT}) {
    auto r = evaluate(g, cfg, m, 8);
    ASSERT_TRUE(r.recall && r.ndcg);
    EXPECT_FALSE(r.accuracy.has_value());
    EXPECT_GE(*r.recall, 0.0);
    EXPECT_LE(*r.recall, 1.0);
    EXPECT_GE(*r.ndcg, 0.0);
    EXPECT_LE(*r.ndcg, 1.0);
    EXPECT_GT(r.n_test, 0u);
  }
}

TEST(Pipeline, GraphClassificationOnSeparableCorpus) {
  auto g = graph_corpus(15);
  RunConfig cfg;
  cfg.eval.shots = 2;
  auto s = graph_setup(g, cfg, 1);
  EXPECT_EQ(s.num_classes, 2u);
  EXPECT_EQ(s.split.train.size() + s.split.resource.size() + s.split.test.size(), 30u);
  std::set<NodeId> centers;
  for (const auto& q : s.tests) {
    EXPECT_TRUE(q.is_virtual_center);
    EXPECT_GE(q.center, 135);
    centers.insert(q.center);
  }
  EXPECT_EQ(centers.size(), s.tests.size());
  for (Mode m : {Mode::kBaseline, Mode::kNF}) {
    auto r = evaluate(g, cfg, m, 1);
    EXPECT_EQ(r.task, TaskKind::kGraph);
    EXPECT_GE(*r.accuracy, 0.9) << to_string(m);
  }
}

TEST(Config, JsonRoundTripAndValidation) {
  RunConfig c;
  c.gamma = 0.3;
  c.retrieval.top_k = 9;
  c.build.store_cap = 12;
  auto back = config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_THROW(config_from_json(nlohmann::json{{"gama", 0.5}}), FormatError);
  EXPECT_THROW(config_from_json(nlohmann::json{{"gamma", 1.5}}), InvalidInput);
  EXPECT_THROW(config_from_json(nlohmann::json{{"retrieval", {{"top_k", "x"}}}}), FormatError);
  auto preset = config_from_json(nlohmann::json{{"gamma_preset", "node:PROTEINS"}});
  EXPECT_DOUBLE_EQ(preset.effective_gamma(), 0.8);
  EXPECT_THROW(config_from_json(nlohmann::json{{"gamma_preset", "node:NOPE"}}), InvalidInput);
  EXPECT_THROW(load_config("/nonexistent/config.json"), NotFound);
}
