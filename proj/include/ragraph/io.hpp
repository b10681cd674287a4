#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"

namespace ragraph {

using json = nlohmann::json;

// JSON Lines ingestion format, one record per line:
//   {"kind":"node","id":1,"t":0,"x":[...],"y":2}         ("y" may be null)
//   {"kind":"edge","src":1,"dst":2,"t":0,"w":0.5}
//   {"kind":"graph_label","graph":3,"y":1}
// Nodes and edges of multi-graph corpora carry an extra "graph" field.
// Directed edges are symmetrized on load.

namespace detail {

struct SnapshotParts {
  std::vector<std::pair<NodeId, Vec>> nodes;
  std::vector<Edge> edges;
  std::map<NodeId, ClassId> labels;
};

inline FormatError line_error(std::size_t line, const std::string& what) {
  return FormatError("line " + std::to_string(line) + ": " + what);
}

}  // namespace detail

inline DynamicGraph parse_jsonl(std::istream& in) {
  std::map<Timestamp, detail::SnapshotParts> parts;
  DynamicGraph g;
  std::optional<std::size_t> dim;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw detail::line_error(lineno, e.what());
    }
    try {
      const auto kind = rec.at("kind").get<std::string>();
      if (kind == "node") {
        const auto id = rec.at("id").get<NodeId>();
        const auto t = rec.value("t", Timestamp{0});
        auto x = rec.at("x").get<Vec>();
        if (!dim) dim = x.size();
        if (x.size() != *dim) throw detail::line_error(lineno, "inconsistent feature dimension");
        auto& p = parts[t];
        p.nodes.emplace_back(id, std::move(x));
        if (rec.contains("y") && !rec["y"].is_null()) p.labels[id] = rec["y"].get<ClassId>();
        if (rec.contains("graph")) g.graph_of[id] = rec["graph"].get<int>();
      } else if (kind == "edge") {
        const auto t = rec.value("t", Timestamp{0});
        const double w = rec.value("w", 1.0);
        if (!(w > 0.0 && w <= 1.0)) throw detail::line_error(lineno, "edge weight outside (0,1]");
        parts[t].edges.push_back({rec.at("src").get<NodeId>(), rec.at("dst").get<NodeId>(), w});
      } else if (kind == "graph_label") {
        g.graph_labels[rec.at("graph").get<int>()] = rec.at("y").get<ClassId>();
      } else {
        throw detail::line_error(lineno, "unknown record kind '" + kind + "'");
      }
    } catch (const json::exception& e) {
      throw detail::line_error(lineno, e.what());
    }
  }
  for (auto& [t, p] : parts) {
    try {
      g.snapshots.push_back(
          Snapshot::build(t, dim.value_or(0), std::move(p.nodes), p.edges, p.labels));
    } catch (const InvalidInput& e) {
      throw FormatError(e.what());
    }
  }
  return g;
}

inline DynamicGraph load_graph(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw NotFound("cannot open graph file " + path);
  return parse_jsonl(in);
}

inline json node_record(const Snapshot& s, std::size_t i) {
  json rec = {{"kind", "node"}, {"id", s.id(i)}, {"t", s.t()}};
  const auto x = s.features(i);
  rec["x"] = Vec(x.begin(), x.end());
  if (auto y = s.label(s.id(i))) {
    rec["y"] = *y;
  } else {
    rec["y"] = nullptr;
  }
  return rec;
}

inline json edge_record(const Edge& e, Timestamp t) {
  return {{"kind", "edge"}, {"src", e.u}, {"dst", e.v}, {"t", t}, {"w", e.w}};
}

/// Writes node then edge records of one snapshot.
inline void write_snapshot(std::ostream& out, const Snapshot& s,
                           const std::map<NodeId, int>* graph_of = nullptr) {
  for (std::size_t i = 0; i < s.size(); ++i) {
    auto rec = node_record(s, i);
    if (graph_of) {
      if (auto it = graph_of->find(s.id(i)); it != graph_of->end()) rec["graph"] = it->second;
    }
    out << rec.dump() << '\n';
  }
  for (const auto& e : s.edges()) {
    auto rec = edge_record(e, s.t());
    if (graph_of) {
      if (auto it = graph_of->find(e.u); it != graph_of->end()) rec["graph"] = it->second;
    }
    out << rec.dump() << '\n';
  }
}

inline void write_jsonl(std::ostream& out, const DynamicGraph& g) {
  for (const auto& s : g.snapshots) write_snapshot(out, s, g.graph_of.empty() ? nullptr : &g.graph_of);
  for (const auto& [graph, y] : g.graph_labels) {
    out << json{{"kind", "graph_label"}, {"graph", graph}, {"y", y}}.dump() << '\n';
  }
}

inline std::string to_jsonl(const DynamicGraph& g) {
  std::ostringstream os;
  write_jsonl(os, g);
  return os.str();
}

}  // namespace ragraph
