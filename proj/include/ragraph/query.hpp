#pragma once

#include <span>
#include <vector>

#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/propagate.hpp"
#include "ragraph/similarity.hpp"
#include "ragraph/store.hpp"
#include "ragraph/tasks.hpp"
#include "ragraph/toy.hpp"

namespace ragraph {

/// A query graph with its encoder output and retrieval key.
struct PreparedQuery {
  QueryGraph graph;
  Embeddings hidden;
  QueryKey key;

  std::span<const double> center_hidden() const { return hidden[graph.subgraph.require_index(graph.center)]; }
};

inline PreparedQuery prepare_query(QueryGraph q, const Encoder& enc, std::span<const NodeId> anchors, int dis_q) {
  PreparedQuery p;
  p.hidden = encode(q.subgraph, enc);
  const auto c = q.subgraph.require_index(q.center);
  p.key.tau = q.tau;
  p.key.env = neighbors(q.subgraph, q.center);
  p.key.scode = d2c_code(q.subgraph, q.center, anchors, dis_q);
  p.key.semantic = p.hidden[c];
  p.graph = std::move(q);
  return p;
}

/// k-hop ego net around `center` in `g`.
inline QueryGraph node_query(const Snapshot& g, NodeId center, int k) {
  auto ego = ego_net(g, center, k);
  return {center, std::move(ego.subgraph), g.t(), false};
}

struct RetrievalPlan {
  std::size_t top_k = 5;
  std::size_t bottom_k = 0;         // least similar entries appended as noise
  bool noise_variants = false;      // admit inner-toy-graph noise variants
  RetrievalParams params;
  EntryFilter filter;               // extra eligibility (e.g. resource-only)
};

/// Top-K context, plus bottom-K noise entries when requested. Noise variants
/// are skipped unless the plan admits them.
inline RetrievalContext retrieve(const ToyStore& store, const QueryKey& key, const RetrievalPlan& plan) {
  EntryFilter eligible = [&plan](const StoreEntry& e) {
    if (e.toy.is_noise_variant && !plan.noise_variants) return false;
    return !plan.filter || plan.filter(e);
  };
  auto hits = top_k(store, key, plan.top_k, plan.params, eligible);
  if (plan.bottom_k > 0) {
    auto low = bottom_k(store, key, plan.bottom_k, plan.params, eligible);
    hits.insert(hits.end(), low.begin(), low.end());
  }
  return make_context(store, hits, plan.bottom_k > 0 || plan.noise_variants);
}

/// The two propagated vectors of a query center: o_c from inter-propagation
/// of stored outputs and h_c from hidden inter-propagation.
struct Propagated {
  Vec o_c;
  Vec h_c;
  bool empty_context = false;
};

inline Propagated propagate_query(const PreparedQuery& q, const RetrievalContext& ctx, std::size_t out_dim,
                                  double mix = 0.5) {
  auto h = inter_propagate_hidden(q.graph, q.hidden, ctx, mix);
  auto o = inter_propagate_output(ctx, out_dim);
  return {std::move(o.o_c), std::move(h.h_c), ctx.empty()};
}

}  // namespace ragraph
