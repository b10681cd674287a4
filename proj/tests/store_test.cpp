#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "gtest/gtest.h"
#include "ragraph/store.hpp"
#include "ragraph/toybuilder.hpp"
#include "test_util.hpp"

using namespace ragraph;
using namespace ragraph::testing;

namespace {

std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("ragraph_store_" + name);
  std::filesystem::remove_all(dir);
  return dir;
}

ToyStore small_store(std::uint64_t seed = 4, bool noise = false) {
  DynamicGraph d;
  d.snapshots.push_back(random_graph(20, 0.2, 3, seed));
  auto g2 = random_graph(20, 0.2, 3, seed + 1);
  g2.set_t(3);
  d.snapshots.push_back(g2);
  BuildConfig cfg;
  cfg.noise_variants = noise;
  cfg.K_scale = 1.0;
  return build_store(d, cfg, Encoder::parameter_free_encoder(2), Decoder::identity(3), seed);
}

// Independent scoring: plain formulas, no library similarity helpers.
double oracle_score(const QueryKey& q, const ToyKey& m) {
  auto cos = [](const Vec& a, const Vec& b) {
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
      ab += a[i] * b[i];
      aa += a[i] * a[i];
      bb += b[i] * b[i];
    }
    return aa == 0 || bb == 0 ? 0.0 : ab / std::sqrt(aa * bb);
  };
  std::vector<NodeId> inter, uni;
  std::set_intersection(q.env.begin(), q.env.end(), m.env.begin(), m.env.end(), std::back_inserter(inter));
  std::set_union(q.env.begin(), q.env.end(), m.env.begin(), m.env.end(), std::back_inserter(uni));
  const double env = uni.empty() ? 0.0 : static_cast<double>(inter.size()) / static_cast<double>(uni.size());
  const double time = std::exp(-0.1 * std::abs(static_cast<double>(q.tau - m.tau)));
  return 0.05 * time + 0.05 * cos(q.scode, m.scode) + 0.05 * env + 0.85 * cos(q.semantic, m.semantic);
}

}  // namespace

TEST(Similarity, Components) {
  EXPECT_DOUBLE_EQ(sim_time(5, 5, 0.1), 1.0);
  EXPECT_NEAR(sim_time(0, 10, 0.1), std::exp(-1.0), 1e-15);
  EXPECT_THROW(sim_time(0, 1, 0.0), InvalidInput);
  const std::vector<NodeId> a{1, 2, 3}, b{2, 3, 4, 5}, none;
  EXPECT_DOUBLE_EQ(sim_env(a, b), 2.0 / 5.0);
  EXPECT_DOUBLE_EQ(sim_env(none, none), 0.0);
  EXPECT_DOUBLE_EQ(sim_semantic(Vec{1, 0}, Vec{0, 1}), 0.0);
  EXPECT_NEAR(sim_semantic(Vec{1, 1}, Vec{2, 2}), 1.0, 1e-15);
  EXPECT_DOUBLE_EQ(sim_semantic(Vec{0, 0}, Vec{1, 1}), 0.0);
  EXPECT_DOUBLE_EQ(composite(kDefaultSimWeights, {1, 1, 1, 1}), 1.0);
}

TEST(Similarity, PositionCodeOnPath) {
  auto g = path_graph(5);
  const std::vector<NodeId> anchors{0, 1, 2, 4};
  auto code = d2c_code(g, 0, anchors, 3);
  EXPECT_EQ(code, (Vec{1.0, 0.5, 1.0 / 3.0, 0.0}));
  const std::vector<NodeId> missing{99};
  EXPECT_EQ(d2c_code(g, 0, missing, 3), (Vec{0.0}));
}

TEST(Similarity, PositionCodeMatchesAllPairsOracle) {
  auto g = random_graph(30, 0.08, 1, 17);
  const auto d = all_pairs_hops(g);
  std::vector<NodeId> anchors{g.id(0), g.id(7), g.id(13), g.id(29)};
  for (int q = 1; q <= 4; ++q) {
    for (std::size_t v = 0; v < g.size(); ++v) {
      auto code = d2c_code(g, g.id(v), anchors, q);
      for (std::size_t a = 0; a < anchors.size(); ++a) {
        const int h = d[v][g.require_index(anchors[a])];
        const double want = h >= 0 && h < q ? 1.0 / (h + 1.0) : 0.0;
        EXPECT_DOUBLE_EQ(code[a], want);
      }
    }
  }
}

TEST(Retrieval, TopKMatchesFullSortOracle) {
  auto store = small_store();
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const auto& probe = store.entries[rng() % store.size()].key;
    QueryKey q = probe;
    q.semantic = random_vec(3, rng);
    q.tau = static_cast<Timestamp>(rng() % 5);
    std::vector<std::pair<double, std::size_t>> all;
    for (std::size_t i = 0; i < store.size(); ++i) all.emplace_back(oracle_score(q, store.entries[i].key), i);
    auto by_desc = all;
    std::stable_sort(by_desc.begin(), by_desc.end(), [](auto a, auto b) { return a.first > b.first; });
    auto by_asc = all;
    std::stable_sort(by_asc.begin(), by_asc.end(), [](auto a, auto b) { return a.first < b.first; });
    for (std::size_t k : {1u, 5u, 17u}) {
      auto top = top_k(store, q, k);
      auto bottom = bottom_k(store, q, k);
      ASSERT_EQ(top.size(), k);
      for (std::size_t j = 0; j < k; ++j) {
        EXPECT_NEAR(top[j].score, by_desc[j].first, 1e-12);
        EXPECT_NEAR(bottom[j].score, by_asc[j].first, 1e-12);
      }
    }
  }
}

TEST(Retrieval, TiesGoToLowerIndex) {
  ToyStore store;
  for (int i = 0; i < 4; ++i) {
    StoreEntry e;
    e.key = {0, {}, {1.0}, {1.0, 0.0}};
    store.entries.push_back(e);
  }
  QueryKey q{0, {}, {1.0}, {1.0, 0.0}};
  auto top = top_k(store, q, 3);
  EXPECT_EQ(top[0].entry, 0u);
  EXPECT_EQ(top[1].entry, 1u);
  EXPECT_EQ(top[2].entry, 2u);
  auto bottom = bottom_k(store, q, 2);
  EXPECT_EQ(bottom[0].entry, 0u);
  EXPECT_EQ(top_k(store, q, 10).size(), 4u);
}

TEST(Retrieval, FilterAndErrors) {
  auto store = small_store();
  const auto q = store.entries.front().key;
  auto only_t3 = top_k(store, q, 100, {}, [](const StoreEntry& e) { return e.toy.tau == 3; });
  for (const auto& h : only_t3) EXPECT_EQ(store.entries[h.entry].toy.tau, 3);
  EXPECT_FALSE(only_t3.empty());
  EXPECT_THROW(top_k(ToyStore{}, q, 1), EmptyStore);
  EXPECT_THROW(top_k(store, q, 0), InvalidInput);
  auto self = top_k(store, q, 1);
  EXPECT_GE(self.front().score, oracle_score(q, store.entries.front().key) - 1e-12);
}

TEST(Persistence, RoundTripAndByteIdenticalResave) {
  auto store = small_store(4, true);
  store.provenance = {{"task", "node"}};
  const auto a = temp_dir("a");
  const auto b = temp_dir("b");
  save_store(store, a);
  auto back = load_store(a);
  ASSERT_EQ(back.size(), store.size());
  EXPECT_EQ(back.anchors, store.anchors);
  EXPECT_EQ(back.config_hash, store.config_hash);
  EXPECT_EQ(back.provenance, store.provenance);
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& x = store.entries[i];
    const auto& y = back.entries[i];
    EXPECT_EQ(x.toy.master, y.toy.master);
    EXPECT_EQ(x.toy.lineage, y.toy.lineage);
    EXPECT_EQ(x.toy.is_noise_variant, y.toy.is_noise_variant);
    EXPECT_EQ(x.key.env, y.key.env);
    EXPECT_EQ(x.toy.subgraph.ids(), y.toy.subgraph.ids());
    for (std::size_t k = 0; k < x.key.semantic.size(); ++k) EXPECT_NEAR(x.key.semantic[k], y.key.semantic[k], 1e-6);
  }
  save_store(back, b);
  for (const char* f : {"manifest.json", "keys.bin", "values.bin", "graphs.jsonl", "encoder.bin"}) {
    EXPECT_EQ(read_file((a / f).string()), read_file((b / f).string())) << f;
  }
  std::filesystem::remove_all(a);
  std::filesystem::remove_all(b);
}

TEST(Persistence, DetectsTamperingAndMissingFiles) {
  auto store = small_store();
  const auto dir = temp_dir("tamper");
  save_store(store, dir);
  {
    std::ofstream enc(dir / "encoder.bin", std::ios::binary | std::ios::trunc);
    enc << serialize_encoder(Encoder::parameter_free_encoder(3));
  }
  EXPECT_THROW(load_store(dir), ConsistencyError);
  save_store(store, dir);
  {
    std::ofstream keys(dir / "keys.bin", std::ios::binary | std::ios::app);
    keys << "xxxx";
  }
  EXPECT_THROW(load_store(dir), FormatError);
  std::filesystem::remove_all(dir);
  EXPECT_THROW(load_store(dir), NotFound);
}

TEST(Context, CarriesScoresAndPointers) {
  auto store = small_store();
  const auto q = store.entries[3].key;
  auto hits = top_k(store, q, 4);
  auto ctx = make_context(store, hits, true);
  ASSERT_EQ(ctx.retrieved.size(), 4u);
  EXPECT_TRUE(ctx.includes_noise);
  EXPECT_EQ(ctx.retrieved[0].toy, &store.entries[hits[0].entry].toy);
  EXPECT_DOUBLE_EQ(ctx.retrieved[2].score, hits[2].score);
}
