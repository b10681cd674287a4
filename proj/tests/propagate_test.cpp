#include <random>

#include "gtest/gtest.h"
#include "ragraph/propagate.hpp"
#include "ragraph/rng.hpp"
#include "test_util.hpp"

using namespace ragraph;
using namespace ragraph::testing;

namespace {

/// Owns the toys and values a context points into.
struct Fixture {
  std::vector<ToyGraph> toys;
  std::vector<ToyValues> values;

  RetrievalContext context(const std::vector<double>& scores) const {
    RetrievalContext ctx;
    for (std::size_t i = 0; i < scores.size(); ++i) ctx.retrieved.push_back({&toys[i], &values[i], scores[i]});
    return ctx;
  }
};

Fixture masters(const std::vector<Vec>& hidden_aggs, const std::vector<Vec>& output_aggs) {
  Fixture f;
  f.toys.resize(hidden_aggs.size());
  for (std::size_t i = 0; i < hidden_aggs.size(); ++i) {
    ToyValues v;
    v.master_hidden_agg = hidden_aggs[i];
    v.master_output_agg = output_aggs[i];
    f.values.push_back(std::move(v));
  }
  return f;
}

QueryGraph single_node_query(std::size_t dim) {
  auto g = path_graph(1, dim);
  return {0, g, 0, false};
}

}  // namespace

TEST(Golden, WorkedExampleOutputAndFusion) {
  auto f = masters({{0.0}, {0.0}, {0.0}}, {{0, 0, 1}, {0, 0, 1}, {0, 1, 0}});
  auto o = inter_propagate_output(f.context({0.5, 0.7, 0.1}), 3);
  EXPECT_FALSE(o.warning);
  EXPECT_NEAR(o.o_c[0], 0.0, 1e-12);
  EXPECT_NEAR(o.o_c[1], 0.1 / 1.3, 1e-12);
  EXPECT_NEAR(o.o_c[2], 1.2 / 1.3, 1e-12);
  // Printed intermediate rounds o_c to [0, 0.08, 0.92].
  EXPECT_NEAR(o.o_c[1], 0.08, 0.005);
  EXPECT_NEAR(o.o_c[2], 0.92, 0.005);
  auto fused = fuse_decoded(o.o_c, Vec{0.37, 0.32, 0.66}, 0.5);
  EXPECT_NEAR(fused[0], 0.157, 0.005);
  EXPECT_NEAR(fused[1], 0.170, 0.005);
  EXPECT_NEAR(fused[2], 0.673, 0.005);
  auto raw = fuse_decoded(Vec{0, 0.08, 0.92}, Vec{0.37, 0.32, 0.66}, 0.5, false);
  EXPECT_NEAR(raw[0], 0.185, 1e-12);
  EXPECT_NEAR(raw[1], 0.20, 1e-12);
  EXPECT_NEAR(raw[2], 0.79, 1e-12);
}

TEST(IntraPropagate, SingleNodeReturnsOwnVectors) {
  ToyGraph toy{0, 0, path_graph(1, 2), {"base"}, false};
  ToyValues v{{{1.0, 2.0}}, {{0.3, 0.7}}, {}, {}};
  auto agg = intra_propagate(toy, v);
  EXPECT_EQ(agg.hidden, (Vec{1.0, 2.0}));
  EXPECT_EQ(agg.output, (Vec{0.3, 0.7}));
}

TEST(IntraPropagate, OneNeighborIsMean) {
  ToyGraph toy{1, 0, path_graph(2, 1), {"base"}, false};
  ToyValues v{{{2.0}, {4.0}}, {{1.0}, {0.0}}, {}, {}};
  auto agg = intra_propagate(toy, v);
  EXPECT_DOUBLE_EQ(agg.hidden[0], 3.0);
  EXPECT_DOUBLE_EQ(agg.output[0], 0.5);
  ToyValues short_values{{{2.0}}, {{1.0}}, {}, {}};
  EXPECT_THROW(intra_propagate(toy, short_values), InvalidInput);
}

TEST(IntraPropagate, MatchesDenseOracle) {
  std::mt19937_64 rng(21);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto g = random_graph(10, 0.4, 1, seed);
    const auto a = dense_adjacency(g);
    ToyValues v;
    for (std::size_t i = 0; i < g.size(); ++i) {
      v.hidden.push_back(random_vec(4, rng));
      v.output.push_back(random_vec(3, rng));
    }
    for (std::size_t m = 0; m < g.size(); ++m) {
      ToyGraph toy{g.id(m), 0, g, {"base"}, false};
      auto agg = intra_propagate(toy, v);
      double denom = 1.0;
      for (double w : a[m]) denom += w;
      Vec want_h(4, 0.0), want_o(3, 0.0);
      for (std::size_t i = 0; i < g.size(); ++i) {
        const double w = (i == m ? 1.0 : a[m][i]) / denom;
        for (std::size_t k = 0; k < 4; ++k) want_h[k] += w * v.hidden[i][k];
        for (std::size_t k = 0; k < 3; ++k) want_o[k] += w * v.output[i][k];
      }
      for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(agg.hidden[k], want_h[k], 1e-12);
      for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(agg.output[k], want_o[k], 1e-12);
    }
  }
}

TEST(InterPropagate, HiddenMasterTermIsScoreWeighted) {
  const Vec a{1.0, 0.0}, b{0.0, 2.0}, c{4.0, 4.0};
  auto f = masters({a, b, c}, {{1.0}, {1.0}, {1.0}});
  auto q = single_node_query(2);
  Embeddings qh{{0.0, 0.0}};
  // Zero query hidden isolates the master term, scaled by mix.
  auto h = inter_propagate_hidden(q, qh, f.context({0.5, 0.7, 0.1}), 1.0);
  EXPECT_FALSE(h.warning);
  EXPECT_NEAR(h.h_c[0], (0.5 * 1.0 + 0.1 * 4.0) / 1.3, 1e-12);
  EXPECT_NEAR(h.h_c[1], (0.7 * 2.0 + 0.1 * 4.0) / 1.3, 1e-12);
  auto half = inter_propagate_hidden(q, qh, f.context({0.5, 0.7, 0.1}), 0.5);
  EXPECT_NEAR(half.h_c[0], 0.5 * h.h_c[0], 1e-12);
}

TEST(InterPropagate, EqualScoresGiveUnweightedMean) {
  auto f = masters({{3.0}, {6.0}, {9.0}}, {{1.0}, {1.0}, {1.0}});
  auto q = single_node_query(1);
  Embeddings qh{{0.0}};
  auto h = inter_propagate_hidden(q, qh, f.context({0.2, 0.2, 0.2}), 1.0);
  EXPECT_NEAR(h.h_c[0], 6.0, 1e-12);
}

TEST(InterPropagate, FixedPointWhenMasterMatchesQuery) {
  auto g = path_graph(3, 2);
  QueryGraph q{1, g, 0, false};
  Embeddings qh{{1.0, 0.0}, {0.0, 1.0}, {2.0, 2.0}};
  const Vec local{1.0, 1.0};  // (x0 + x1 + x2) / 3
  auto f = masters({local}, {{1.0}});
  auto h = inter_propagate_hidden(q, qh, f.context({0.9}));
  EXPECT_NEAR(h.h_c[0], 1.0, 1e-12);
  EXPECT_NEAR(h.h_c[1], 1.0, 1e-12);
}

TEST(InterPropagate, EmptyContextFallsBack) {
  auto q = single_node_query(2);
  Embeddings qh{{1.0, 2.0}};
  auto h = inter_propagate_hidden(q, qh, RetrievalContext{});
  EXPECT_TRUE(h.warning);
  EXPECT_EQ(h.h_c, (Vec{1.0, 2.0}));
  auto o = inter_propagate_output(RetrievalContext{}, 3);
  EXPECT_TRUE(o.warning);
  EXPECT_EQ(o.o_c, Vec(3, 0.0));
  auto zero = masters({{0.0}}, {{0.0, 0.0}});
  EXPECT_TRUE(inter_propagate_output(zero.context({1.0}), 2).warning);
}

TEST(InterPropagate, OutputScaleInvariant) {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<Vec> outs;
    std::vector<double> scores, scaled_scores;
    for (int m = 0; m < 5; ++m) {
      Vec o(4);
      for (double& x : o) x = uniform01(rng);
      outs.push_back(o);
      scores.push_back(0.1 + uniform01(rng));
      scaled_scores.push_back(scores.back() * 37.5);
    }
    auto f = masters(std::vector<Vec>(5, Vec{0.0}), outs);
    auto a = inter_propagate_output(f.context(scores), 4).o_c;
    auto b = inter_propagate_output(f.context(scaled_scores), 4).o_c;
    for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(a[k], b[k], 1e-12);
  }
}

TEST(Fuse, GammaEndpointsAndLinearity) {
  const Vec o{0.2, 0.8};
  const Vec h{3.0, 1.0};
  const auto dec = Decoder::identity(2);
  auto g1 = fuse(o, h, dec, 1.0);
  EXPECT_NEAR(g1[0], 0.2, 1e-15);
  auto g0 = fuse(o, h, dec, 0.0);
  EXPECT_NEAR(g0[0], 0.75, 1e-15);
  auto raw = fuse(o, h, dec, 0.3, false);
  EXPECT_NEAR(raw[0], 0.3 * 0.2 + 0.7 * 3.0, 1e-15);
  EXPECT_THROW(fuse(o, h, dec, 1.5), InvalidInput);
  EXPECT_THROW(fuse_decoded(o, Vec{1.0}, 0.5), InvalidInput);
  EXPECT_EQ(fuse(o, h, dec, 0.4), fuse(o, h, dec, 0.4));
}
