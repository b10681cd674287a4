#pragma once

#include <cmath>
#include <vector>

#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/linalg.hpp"
#include "ragraph/toy.hpp"

namespace ragraph {

/// k-hop context around a center node. Graph-level tasks use a virtual
/// center joined to every other node with weight 1.
struct QueryGraph {
  NodeId center = 0;
  Snapshot subgraph;
  Timestamp tau = 0;
  bool is_virtual_center = false;
};

struct ContextItem {
  const ToyGraph* toy = nullptr;
  const ToyValues* values = nullptr;
  double score = 0.0;
};

/// Retrieved toy graphs with their composite scores. Holds non-owning
/// pointers into a ToyStore, which must outlive the context.
struct RetrievalContext {
  std::vector<ContextItem> retrieved;
  bool includes_noise = false;

  bool empty() const { return retrieved.empty(); }
};

struct MasterAggregate {
  Vec hidden;
  Vec output;
};

/// Aggregates hidden and output vectors of the master's neighbors (and the
/// master itself, self weight 1) into the master, weights normalized to 1.
inline MasterAggregate intra_propagate(const ToyGraph& toy, const ToyValues& values) {
  const auto& g = toy.subgraph;
  if (values.hidden.size() != g.size() || values.output.size() != g.size()) {
    throw InvalidInput("toy values do not cover the toy graph");
  }
  const auto m = g.require_index(toy.master);
  return {aggregate_at(g, m, values.hidden), aggregate_at(g, m, values.output)};
}

struct PropagatedHidden {
  Vec h_c;
  bool warning = false;  // empty context, query-only aggregation used
};

/// h_c = (1 - mix) * [weighted mean over N(c) and c of query hidden]
///     + mix * [sum_m s_hat(m) * master_hidden_agg(m)],
/// where s_hat = score / sum |score|. An empty context (or all-zero scores)
/// degrades to the query-only term.
inline PropagatedHidden inter_propagate_hidden(const QueryGraph& query, const Embeddings& query_hidden,
                                               const RetrievalContext& ctx, double mix = 0.5) {
  const auto& g = query.subgraph;
  if (query_hidden.size() != g.size()) throw InvalidInput("query hidden does not cover the query graph");
  const auto c = g.require_index(query.center);
  Vec local = aggregate_at(g, c, query_hidden);
  double total = 0.0;
  for (const auto& item : ctx.retrieved) total += std::abs(item.score);
  if (ctx.empty() || total == 0.0) return {std::move(local), true};
  Vec master(local.size(), 0.0);
  for (const auto& item : ctx.retrieved) {
    axpy(item.score / total, item.values->master_hidden_agg, master);
  }
  Vec out = scaled(local, 1.0 - mix);
  axpy(mix, master, out);
  return {std::move(out), false};
}

struct PropagatedOutput {
  Vec o_c;
  bool warning = false;  // empty context or zero aggregate
};

/// raw = sum_m score(m) * master_output_agg(m), returned L1-normalized.
inline PropagatedOutput inter_propagate_output(const RetrievalContext& ctx, std::size_t out_dim) {
  Vec raw(out_dim, 0.0);
  if (ctx.empty()) return {std::move(raw), true};
  for (const auto& item : ctx.retrieved) axpy(item.score, item.values->master_output_agg, raw);
  if (norm1(raw) == 0.0) return {std::move(raw), true};
  return {l1_normalized(raw), false};
}

/// gamma * o_c + (1 - gamma) * decoded, optionally L1-normalized (class
/// scores).
inline Vec fuse_decoded(std::span<const double> o_c, std::span<const double> decoded, double gamma,
                        bool normalize = true) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0,1]");
  require_same_size(o_c.size(), decoded.size(), "fuse");
  Vec out = scaled(decoded, 1.0 - gamma);
  axpy(gamma, o_c, out);
  return normalize ? l1_normalized(out) : out;
}

inline Vec fuse(std::span<const double> o_c, std::span<const double> h_c, const Decoder& decoder,
                double gamma, bool normalize = true) {
  return fuse_decoded(o_c, decode(h_c, decoder), gamma, normalize);
}

}  // namespace ragraph
