#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <vector>

#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/linalg.hpp"

namespace ragraph {

/// Composite retrieval weights, ordered [time, structure, environment, semantic].
using SimWeights = std::array<double, 4>;
using SimVector = std::array<double, 4>;

inline constexpr SimWeights kDefaultSimWeights{0.05, 0.05, 0.05, 0.85};

inline double sim_time(Timestamp t_c, Timestamp t_m, double eta) {
  if (!(eta > 0.0)) throw InvalidInput("eta must be positive");
  return std::exp(-eta * std::abs(static_cast<double>(t_c - t_m)));
}

/// Jaccard over sorted id sets; 0 when both are empty.
inline double sim_env(std::span<const NodeId> a, std::span<const NodeId> b) {
  std::size_t inter = 0;
  auto i = a.begin();
  auto j = b.begin();
  while (i != a.end() && j != b.end()) {
    if (*i < *j) {
      ++i;
    } else if (*j < *i) {
      ++j;
    } else {
      ++inter;
      ++i;
      ++j;
    }
  }
  const std::size_t uni = a.size() + b.size() - inter;
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double sim_semantic(std::span<const double> h_c, std::span<const double> h_m) {
  return cosine(h_c, h_m);
}

inline double sim_struct(std::span<const double> s_c, std::span<const double> s_m) {
  return cosine(s_c, s_m);
}

/// Position-aware code of `node`: one entry per anchor, 1/(hops+1) when the
/// anchor is fewer than dis_q hops away, else 0. Anchors absent from `g` or
/// unreachable contribute 0.
inline Vec d2c_code(const Snapshot& g, NodeId node, std::span<const NodeId> anchors, int dis_q) {
  const auto src = g.require_index(node);
  const auto dist = bfs_hops(g, src, dis_q > 0 ? dis_q - 1 : 0);
  Vec code(anchors.size(), 0.0);
  for (std::size_t a = 0; a < anchors.size(); ++a) {
    auto idx = g.index_of(anchors[a]);
    if (!idx) continue;
    const int h = dist[*idx];
    if (h >= 0 && h < dis_q) code[a] = 1.0 / (h + 1.0);
  }
  return code;
}

inline double composite(const SimWeights& w, const SimVector& sims) {
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += w[i] * sims[i];
  return s;
}

}  // namespace ragraph
