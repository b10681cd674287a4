#pragma once

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/hash.hpp"
#include "ragraph/io.hpp"
#include "ragraph/propagate.hpp"
#include "ragraph/similarity.hpp"
#include "ragraph/toy.hpp"

namespace ragraph {

struct StoreEntry {
  ToyKey key;
  ToyValues values;
  ToyGraph toy;
};

/// Key-value base of toy graphs. Entries are ordered by snapshot, then
/// master id, then variant index; anchors are fixed at build time.
struct ToyStore {
  std::vector<StoreEntry> entries;
  std::vector<NodeId> anchors;
  Encoder encoder;
  std::size_t f1 = 0;
  std::size_t f2 = 0;
  nlohmann::json config;      // build configuration snapshot
  std::string config_hash;    // hash over the build-relevant fields
  nlohmann::json provenance;  // free-form: data hash, split, task

  bool empty() const { return entries.empty(); }
  std::size_t size() const { return entries.size(); }
};

struct RetrievalParams {
  SimWeights weights = kDefaultSimWeights;
  double eta = 0.1;
};

struct ScoredEntry {
  std::size_t entry = 0;
  double score = 0.0;
};

/// Optional eligibility predicate; an empty function admits every entry.
using EntryFilter = std::function<bool(const StoreEntry&)>;

inline SimVector similarities(const QueryKey& q, const ToyKey& m, double eta) {
  return {sim_time(q.tau, m.tau, eta), sim_struct(q.scode, m.scode), sim_env(q.env, m.env),
          sim_semantic(q.semantic, m.semantic)};
}

inline double score(const QueryKey& q, const ToyKey& m, const RetrievalParams& p) {
  return composite(p.weights, similarities(q, m, p.eta));
}

namespace detail {

inline std::vector<ScoredEntry> rank(const ToyStore& store, const QueryKey& q, std::size_t k,
                                     const RetrievalParams& p, const EntryFilter& filter,
                                     bool descending) {
  if (store.empty()) throw EmptyStore();
  if (k < 1) throw InvalidInput("K must be at least 1");
  std::vector<ScoredEntry> all;
  all.reserve(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    if (filter && !filter(store.entries[i])) continue;
    all.push_back({i, score(q, store.entries[i].key, p)});
  }
  const auto take = std::min(k, all.size());
  auto cmp = [descending](const ScoredEntry& a, const ScoredEntry& b) {
    if (a.score != b.score) return descending ? a.score > b.score : a.score < b.score;
    return a.entry < b.entry;
  };
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(take), all.end(), cmp);
  all.resize(take);
  return all;
}

}  // namespace detail

/// Exact scan, highest composite score first; ties by ascending entry index.
inline std::vector<ScoredEntry> top_k(const ToyStore& store, const QueryKey& q, std::size_t k,
                                      const RetrievalParams& p = {}, const EntryFilter& filter = {}) {
  return detail::rank(store, q, k, p, filter, true);
}

/// Lowest composite score first; ties by ascending entry index.
inline std::vector<ScoredEntry> bottom_k(const ToyStore& store, const QueryKey& q, std::size_t k,
                                         const RetrievalParams& p = {}, const EntryFilter& filter = {}) {
  return detail::rank(store, q, k, p, filter, false);
}

inline RetrievalContext make_context(const ToyStore& store, const std::vector<ScoredEntry>& hits,
                                     bool noise = false) {
  RetrievalContext ctx;
  ctx.includes_noise = noise;
  ctx.retrieved.reserve(hits.size());
  for (const auto& h : hits) {
    const auto& e = store.entries[h.entry];
    ctx.retrieved.push_back({&e.toy, &e.values, h.score});
  }
  return ctx;
}

// ---------------------------------------------------------------------------
// Persistence. A store directory holds
//   manifest.json  config, hashes, counts, anchors
//   keys.bin       per entry: scode then semantic, float32 LE
//   values.bin     per entry: (hidden, output) per toy node, then the two
//                  master aggregates, float32 LE
//   graphs.jsonl   per entry: a {"kind":"toy",...} header line followed by
//                  the toy topology in the ingestion format
//   encoder.bin    the frozen encoder in weight-file format
// Files are written to a temporary name and renamed into place.
// ---------------------------------------------------------------------------

namespace detail {

inline void write_atomic(const std::filesystem::path& path, const std::string& bytes) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InputError("short write on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

inline void put_vec(std::string& out, std::span<const double> v) {
  for (double x : v) put_f32(out, x);
}

inline Vec get_vec(std::string_view in, std::size_t& pos, std::size_t n) {
  Vec v(n);
  for (auto& x : v) x = get_f32(in, pos);
  return v;
}

}  // namespace detail

inline nlohmann::json store_manifest(const ToyStore& store) {
  std::size_t rows = 0;
  std::size_t noise = 0;
  std::map<Timestamp, std::size_t> per_snapshot;
  for (const auto& e : store.entries) {
    rows += e.toy.subgraph.size();
    noise += e.toy.is_noise_variant ? 1 : 0;
    ++per_snapshot[e.toy.tau];
  }
  nlohmann::json counts = {{"entries", store.size()}, {"node_rows", rows}, {"noise_variants", noise}};
  nlohmann::json snaps = nlohmann::json::array();
  for (const auto& [t, n] : per_snapshot) snaps.push_back({{"tau", t}, {"entries", n}});
  counts["per_snapshot"] = snaps;
  return {{"format", "ragraph-store/1"},
          {"config", store.config},
          {"config_hash", store.config_hash},
          {"encoder_hash", hash_hex(serialize_encoder(store.encoder))},
          {"f1", store.f1},
          {"f2", store.f2},
          {"anchors", store.anchors},
          {"counts", counts},
          {"provenance", store.provenance}};
}

inline void save_store(const ToyStore& store, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::string keys, values;
  std::ostringstream graphs;
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& e = store.entries[i];
    detail::put_vec(keys, e.key.scode);
    detail::put_vec(keys, e.key.semantic);
    for (std::size_t r = 0; r < e.toy.subgraph.size(); ++r) {
      detail::put_vec(values, e.values.hidden[r]);
      detail::put_vec(values, e.values.output[r]);
    }
    detail::put_vec(values, e.values.master_hidden_agg);
    detail::put_vec(values, e.values.master_output_agg);
    nlohmann::json head = {{"kind", "toy"},
                           {"entry", i},
                           {"master", e.toy.master},
                           {"tau", e.toy.tau},
                           {"lineage", e.toy.lineage},
                           {"noise", e.toy.is_noise_variant},
                           {"nodes", e.toy.subgraph.size()},
                           {"edges", e.toy.subgraph.edge_count()}};
    graphs << head.dump() << '\n';
    write_snapshot(graphs, e.toy.subgraph);
  }
  detail::write_atomic(dir / "keys.bin", keys);
  detail::write_atomic(dir / "values.bin", values);
  detail::write_atomic(dir / "graphs.jsonl", graphs.str());
  detail::write_atomic(dir / "encoder.bin", serialize_encoder(store.encoder));
  detail::write_atomic(dir / "manifest.json", store_manifest(store).dump(2) + "\n");
}

inline ToyStore load_store(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir / "manifest.json")) {
    throw NotFound("no store manifest in " + dir.string());
  }
  ToyStore store;
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(read_file((dir / "manifest.json").string()));
    store.config = manifest.at("config");
    store.config_hash = manifest.at("config_hash").get<std::string>();
    store.f1 = manifest.at("f1").get<std::size_t>();
    store.f2 = manifest.at("f2").get<std::size_t>();
    store.anchors = manifest.at("anchors").get<std::vector<NodeId>>();
    store.provenance = manifest.value("provenance", nlohmann::json::object());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("store manifest: ") + e.what());
  }
  store.encoder = load_weights((dir / "encoder.bin").string());
  if (store.encoder.source_hash != manifest.value("encoder_hash", "")) {
    throw ConsistencyError("store encoder.bin does not match manifest encoder_hash");
  }
  const auto keys = read_file((dir / "keys.bin").string());
  const auto values = read_file((dir / "values.bin").string());
  std::ifstream graphs(dir / "graphs.jsonl");
  if (!graphs) throw NotFound("missing graphs.jsonl in " + dir.string());

  const auto n_entries = manifest.at("counts").at("entries").get<std::size_t>();
  std::size_t kpos = 0, vpos = 0;
  std::string line;
  while (std::getline(graphs, line)) {
    if (line.empty()) continue;
    auto head = nlohmann::json::parse(line);
    if (head.value("kind", "") != "toy") throw FormatError("graphs.jsonl: expected toy header");
    const auto n = head.at("nodes").get<std::size_t>();
    const auto m = head.at("edges").get<std::size_t>();
    std::stringstream body;
    for (std::size_t r = 0; r < n + m && std::getline(graphs, line); ++r) body << line << '\n';
    auto parsed = parse_jsonl(body);
    StoreEntry e;
    e.toy.master = head.at("master").get<NodeId>();
    e.toy.tau = head.at("tau").get<Timestamp>();
    e.toy.lineage = head.at("lineage").get<std::vector<std::string>>();
    e.toy.is_noise_variant = head.at("noise").get<bool>();
    if (parsed.snapshots.size() != 1) throw FormatError("toy topology must be a single snapshot");
    e.toy.subgraph = std::move(parsed.snapshots.front());
    e.key.tau = e.toy.tau;
    e.key.env = neighbors(e.toy.subgraph, e.toy.master);
    e.key.scode = detail::get_vec(keys, kpos, store.anchors.size());
    e.key.semantic = detail::get_vec(keys, kpos, store.f1);
    for (std::size_t r = 0; r < n; ++r) {
      e.values.hidden.push_back(detail::get_vec(values, vpos, store.f1));
      e.values.output.push_back(detail::get_vec(values, vpos, store.f2));
    }
    e.values.master_hidden_agg = detail::get_vec(values, vpos, store.f1);
    e.values.master_output_agg = detail::get_vec(values, vpos, store.f2);
    store.entries.push_back(std::move(e));
  }
  if (store.size() != n_entries || kpos != keys.size() || vpos != values.size()) {
    throw FormatError("store files disagree with manifest counts");
  }
  return store;
}

}  // namespace ragraph
