#pragma once

#include <string>
#include <vector>

#include "ragraph/encoder.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/linalg.hpp"

namespace ragraph {

/// A stored subgraph built around its master node. Augmentations may add
/// synthetic nodes, which get negative ids so they never collide with the
/// resource graph's id universe.
struct ToyGraph {
  NodeId master = 0;
  Timestamp tau = 0;
  Snapshot subgraph;
  std::vector<std::string> lineage;
  bool is_noise_variant = false;
};

/// Retrieval key of a toy graph (or, as QueryKey, of a query center).
struct ToyKey {
  Timestamp tau = 0;
  std::vector<NodeId> env;  // sorted neighbor ids of the master
  Vec scode;
  Vec semantic;
};

using QueryKey = ToyKey;

/// Payload of a toy graph. hidden/output are aligned with
/// toy.subgraph.ids(); the master aggregates are the cached
/// intra-propagation results.
struct ToyValues {
  Embeddings hidden;
  Embeddings output;
  Vec master_hidden_agg;
  Vec master_output_agg;
};

}  // namespace ragraph
