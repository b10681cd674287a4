// Command-line front end: gen, build-store, retrieve, tune, eval, sweep,
// inspect. Exit codes: 0 ok, 2 input error, 3 consistency error, 4 numeric
// failure.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "ragraph/config.hpp"
#include "ragraph/error.hpp"
#include "ragraph/hash.hpp"
#include "ragraph/io.hpp"
#include "ragraph/pipeline.hpp"
#include "ragraph/store.hpp"
#include "ragraph/tasks.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ragraph;

namespace {

enum class LogLevel { kError = 0, kWarn = 1, kInfo = 2, kDebug = 3 };

LogLevel log_level() {
  static const LogLevel level = [] {
    const char* env = std::getenv("RAGRAPH_LOG");
    const std::string v = env ? env : "warn";
    if (v == "error") return LogLevel::kError;
    if (v == "info") return LogLevel::kInfo;
    if (v == "debug") return LogLevel::kDebug;
    return LogLevel::kWarn;
  }();
  return level;
}

void log(LogLevel level, const std::string& msg) {
  static const char* names[] = {"error", "warn", "info", "debug"};
  if (level <= log_level()) std::cerr << "[" << names[static_cast<int>(level)] << "] " << msg << '\n';
}

struct Globals {
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  std::string out;
};

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

RunConfig load_run_config(const Globals& g) {
  return g.config_path.empty() ? RunConfig{} : load_config(g.config_path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  detail::write_atomic(path, text);
}

/// Run manifest. The hash covers command, config, seeds and the content
/// hashes of the inputs; input paths, timings and outputs are recorded beside
/// it but never hashed, so relocating inputs keeps the hash stable.
struct Manifest {
  json body;
  json inputs_by_path;
  std::string hash;

  Manifest(const std::string& command, const RunConfig& cfg, const std::vector<std::uint64_t>& seeds,
           const std::map<std::string, std::string>& inputs) {
    std::vector<std::string> contents;
    for (const auto& [path, content_hash] : inputs) contents.push_back(content_hash);
    std::sort(contents.begin(), contents.end());
    body = {{"command", command}, {"config", to_json(cfg)}, {"seeds", seeds}, {"input_hashes", contents}};
    inputs_by_path = inputs;
    hash = hash_hex(body.dump());
  }

  void write(const fs::path& path, const std::vector<std::string>& outputs, const json& timings_ms) const {
    json m = body;
    m["inputs"] = inputs_by_path;
    m["manifest_hash"] = hash;
    m["outputs"] = outputs;
    m["timings_ms"] = timings_ms;
    write_text(path, m.dump(2) + "\n");
  }
};

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  std::ostringstream os;
  os.precision(10);
  os << *v;
  return os.str();
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::size_t count) {
  std::vector<std::uint64_t> seeds;
  for (std::size_t i = 0; i < count; ++i) seeds.push_back(first + i);
  return seeds;
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string kind = "sbm";
  SbmParams sbm;
  BipartiteParams bip;
};

int cmd_gen(const Globals& g, const GenArgs& a) {
  if (g.out.empty()) throw InvalidInput("gen needs --out FILE");
  DynamicGraph graph;
  if (a.kind == "sbm") {
    graph = gen_sbm(a.sbm, g.seed);
  } else if (a.kind == "bipartite") {
    graph = gen_dynamic_bipartite(a.bip, g.seed).graph;
  } else {
    throw InvalidInput("unknown --kind '" + a.kind + "' (sbm|bipartite)");
  }
  write_text(g.out, to_jsonl(graph));
  log(LogLevel::kInfo, "wrote " + g.out);
  return 0;
}

struct DataArgs {
  std::string data;
  std::string store;
};

int cmd_build_store(const Globals& g, const DataArgs& a) {
  if (g.out.empty()) throw InvalidInput("build-store needs --out DIR");
  const auto t0 = Clock::now();
  const auto cfg = load_run_config(g);
  const auto data_hash = file_hash(a.data);
  const auto graph = load_graph(a.data);
  const auto store = prepare_store(graph, cfg, g.seed, g.threads, data_hash);
  const double build_ms = ms_since(t0);
  save_store(store, g.out);
  Manifest m("build-store", cfg, {g.seed}, {{a.data, data_hash}});
  m.write(fs::path(g.out) / "run_manifest.json", {"manifest.json", "keys.bin", "values.bin", "graphs.jsonl", "encoder.bin"},
          {{"build", build_ms}, {"total", ms_since(t0)}});
  log(LogLevel::kInfo, "stored " + std::to_string(store.size()) + " toy graphs in " + g.out);
  return 0;
}

struct RetrieveArgs {
  DataArgs io;
  std::string query;
  std::optional<NodeId> node;
  std::optional<Timestamp> snapshot;
  std::size_t top_k = 0;
  std::size_t bottom_k = 0;
  std::vector<double> weights;
  std::optional<double> eta;
};

int cmd_retrieve(const Globals& g, const RetrieveArgs& a) {
  auto cfg = load_run_config(g);
  if (!a.weights.empty()) {
    if (a.weights.size() != 4) throw InvalidInput("--weights takes four comma-separated values");
    std::copy(a.weights.begin(), a.weights.end(), cfg.retrieval.params.weights.begin());
  }
  if (a.eta) cfg.retrieval.params.eta = *a.eta;
  cfg.validate();
  if (a.query.empty() == a.io.data.empty()) throw InvalidInput("retrieve needs exactly one of --query or --data");
  const auto store = load_store(a.io.store);
  // --query FILE is a standalone query graph; --data FILE is a dataset to pick the query node from.
  const auto graph = load_graph(a.query.empty() ? a.io.data : a.query);
  const Snapshot* snap = nullptr;
  for (const auto& s : graph.snapshots) {
    if (!a.snapshot || s.t() == *a.snapshot) snap = &s;
    if (a.snapshot && s.t() == *a.snapshot) break;
  }
  if (!snap || snap->size() == 0) throw NotFound("no snapshot with the requested timestamp");
  NodeId center = 0;
  if (a.node) {
    center = *a.node;
  } else if (!a.query.empty()) {
    center = *std::min_element(snap->ids().begin(), snap->ids().end());
  } else {
    throw InvalidInput("--data needs --node");
  }
  const auto q = prepare_query(node_query(*snap, center, cfg.build.k), store.encoder, store.anchors, cfg.build.dis_q);
  const std::size_t want = a.top_k ? a.top_k : cfg.retrieval.top_k;
  const EntryFilter clean = [](const StoreEntry& e) { return !e.toy.is_noise_variant; };
  json rows = json::array();
  auto emit = [&](const std::vector<ScoredEntry>& hits, const char* list) {
    for (std::size_t r = 0; r < hits.size(); ++r) {
      const auto& e = store.entries[hits[r].entry];
      rows.push_back({{"rank", r + 1},
                      {"list", list},
                      {"entry", hits[r].entry},
                      {"score", hits[r].score},
                      {"master", e.toy.master},
                      {"tau", e.toy.tau},
                      {"lineage", e.toy.lineage},
                      {"sims", similarities(q.key, e.key, cfg.retrieval.params.eta)}});
    }
  };
  emit(top_k(store, q.key, want, cfg.retrieval.params, clean), "top");
  if (a.bottom_k > 0) emit(bottom_k(store, q.key, a.bottom_k, cfg.retrieval.params, clean), "bottom");
  log(LogLevel::kInfo, "query node " + std::to_string(center) + " at t=" + std::to_string(snap->t()));
  if (g.out.empty()) {
    std::cout << rows.dump(2) << '\n';
  } else {
    write_text(g.out, rows.dump(2) + "\n");
  }
  return 0;
}

struct TuneArgs {
  DataArgs io;
  bool noise = false;
  std::optional<std::size_t> bottom_k;
  std::optional<int> epochs;
  std::optional<double> lr;
  bool tune_gamma = false;
};

int cmd_tune(const Globals& g, const TuneArgs& a) {
  if (g.out.empty()) throw InvalidInput("tune needs --out FILE");
  const auto t0 = Clock::now();
  auto cfg = load_run_config(g);
  if (a.bottom_k) cfg.tune.noise_bottom_k = *a.bottom_k;
  if (a.epochs) cfg.tune.epochs = *a.epochs;
  if (a.lr) cfg.tune.learning_rate = *a.lr;
  if (a.tune_gamma) cfg.tune.tune_gamma = true;
  cfg.validate();
  const auto data_hash = file_hash(a.io.data);
  const auto graph = load_graph(a.io.data);
  const auto store = load_store(a.io.store);
  check_store(store, cfg, g.seed, data_hash);
  const auto mode = a.noise ? Mode::kNFT : Mode::kFT;
  const auto r = tune_for(graph, cfg, store, mode, g.seed, g.threads);
  write_text(g.out, serialize_decoder(r.decoder));
  Manifest m("tune " + to_string(mode), cfg, {g.seed},
             {{a.io.data, data_hash}, {a.io.store, store.config_hash}});
  const json side = {{"mode", to_string(mode)},
                     {"gamma", r.gamma},
                     {"loss_trace", r.loss_trace},
                     {"decoder_hash", hash_hex(serialize_decoder(r.decoder))},
                     {"manifest_hash", m.hash}};
  write_text(g.out + ".json", side.dump(2) + "\n");
  m.write(g.out + ".manifest.json", {g.out, g.out + ".json"}, {{"total", ms_since(t0)}});
  return 0;
}

struct EvalArgs {
  DataArgs io;
  std::string decoder;
  std::string mode = "nf";
  std::size_t seeds = 1;
  std::optional<std::size_t> top_k;
  std::optional<double> gamma;
  std::optional<std::size_t> forced_noise;
};

json aggregate(const std::vector<EvalResult>& rs) {
  auto stats = [&](auto get) -> json {
    std::vector<double> v;
    for (const auto& r : rs) {
      if (auto x = get(r)) v.push_back(*x);
    }
    if (v.empty()) return nullptr;
    double mean = 0.0;
    for (double x : v) mean += x / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - mean) * (x - mean) / static_cast<double>(v.size());
    return {{"mean", mean}, {"std", std::sqrt(var)}};
  };
  return {{"accuracy", stats([](const EvalResult& r) { return r.accuracy; })},
          {"recall", stats([](const EvalResult& r) { return r.recall; })},
          {"ndcg", stats([](const EvalResult& r) { return r.ndcg; })}};
}

std::string csv_header(std::size_t k) {
  const auto ks = std::to_string(k);
  return "seed,task,mode,accuracy,recall@" + ks + ",ndcg@" + ks + ",n_test,gamma,manifest_hash\n";
}

std::string csv_row(const std::string& seed, const EvalResult& r, const std::string& manifest_hash) {
  std::ostringstream os;
  os << seed << ',' << to_string(r.task) << ',' << to_string(r.mode) << ',' << fmt(r.accuracy) << ','
     << fmt(r.recall) << ',' << fmt(r.ndcg) << ',' << r.n_test << ',' << fmt(r.gamma) << ',' << manifest_hash
     << '\n';
  return os.str();
}

int cmd_eval(const Globals& g, const EvalArgs& a) {
  if (g.out.empty()) throw InvalidInput("eval needs --out DIR");
  if (a.seeds < 1) throw InvalidInput("--seeds must be >= 1");
  const auto t0 = Clock::now();
  auto cfg = load_run_config(g);
  if (a.top_k) cfg.retrieval.top_k = *a.top_k;
  if (a.gamma) {
    cfg.gamma = *a.gamma;
    cfg.gamma_preset.clear();
  }
  if (a.forced_noise) cfg.eval.forced_noise = *a.forced_noise;
  cfg.validate();
  auto mode = mode_from_string(a.mode);
  const auto data_hash = file_hash(a.io.data);
  const auto graph = load_graph(a.io.data);
  const auto seeds = seed_list(g.seed, a.seeds);

  std::optional<ToyStore> store;
  std::map<std::string, std::string> inputs{{a.io.data, data_hash}};
  if (!a.io.store.empty()) {
    if (a.seeds != 1) throw InvalidInput("--store fixes one seed; use --seeds 1");
    store = load_store(a.io.store);
    check_store(*store, cfg, g.seed, data_hash);
    inputs[a.io.store] = store->config_hash;
  }
  std::optional<TuneResult> tuned;
  if (!a.decoder.empty()) {
    if (a.seeds != 1) throw InvalidInput("--decoder fixes one seed; use --seeds 1");
    tuned = TuneResult{load_decoder(a.decoder), cfg.effective_gamma(), {}};
    const auto side = a.decoder + ".json";
    if (fs::exists(side)) tuned->gamma = json::parse(read_file(side)).value("gamma", tuned->gamma);
    if (!is_tuned(mode)) mode = Mode::kFT;
    inputs[a.decoder] = file_hash(a.decoder);
  }

  Manifest m("eval " + to_string(mode), cfg, seeds, inputs);
  std::vector<EvalResult> results;
  json timings = json::object();
  for (auto seed : seeds) {
    const auto ts = Clock::now();
    EvalInputs in;
    in.store = store ? &*store : nullptr;
    in.tuned = tuned;
    results.push_back(evaluate(graph, cfg, mode, seed, g.threads, std::move(in)));
    timings["seed_" + std::to_string(seed)] = ms_since(ts);
    log(LogLevel::kInfo, "seed " + std::to_string(seed) + " done");
  }

  const auto k = cfg.eval.link_k;
  const auto agg = aggregate(results);
  auto mean_of = [&](const char* key) -> json { return agg[key].is_null() ? json(nullptr) : agg[key]["mean"]; };
  json out = {{"task", to_string(results.front().task)},
              {"mode", to_string(mode)},
              {"accuracy", mean_of("accuracy")},
              {"recall@" + std::to_string(k), mean_of("recall")},
              {"ndcg@" + std::to_string(k), mean_of("ndcg")},
              {"config_hash", config_hash(cfg)},
              {"manifest_hash", m.hash},
              {"seeds", seeds},
              {"aggregate", agg}};
  json per_seed = json::array();
  for (const auto& r : results) per_seed.push_back(to_json(r));
  out["per_seed"] = per_seed;

  std::string csv = csv_header(k);
  for (const auto& r : results) csv += csv_row(std::to_string(r.seed), r, m.hash);
  EvalResult mean_row = results.front();
  mean_row.accuracy = agg["accuracy"].is_null() ? std::nullopt : std::optional<double>(agg["accuracy"]["mean"]);
  mean_row.recall = agg["recall"].is_null() ? std::nullopt : std::optional<double>(agg["recall"]["mean"]);
  mean_row.ndcg = agg["ndcg"].is_null() ? std::nullopt : std::optional<double>(agg["ndcg"]["mean"]);
  std::size_t n = 0;
  for (const auto& r : results) n += r.n_test;
  mean_row.n_test = n;
  csv += csv_row("mean", mean_row, m.hash);

  const fs::path dir(g.out);
  write_text(dir / "result.json", out.dump(2) + "\n");
  write_text(dir / "results.csv", csv);
  timings["total"] = ms_since(t0);
  m.write(dir / "run_manifest.json", {"result.json", "results.csv"}, timings);
  std::cout << out.dump() << '\n';
  return 0;
}

struct SweepArgs {
  DataArgs io;
  std::string mode = "nf";
  std::size_t seeds = 1;
  std::vector<int> ks{1, 2, 3, 4, 5};
  std::vector<std::size_t> top_ks{1, 5, 10, 15, 30, 50};
};

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  return cells;
}

int cmd_sweep(const Globals& g, const SweepArgs& a) {
  if (g.out.empty()) throw InvalidInput("sweep needs --out DIR");
  if (a.seeds < 1) throw InvalidInput("--seeds must be >= 1");
  const auto t0 = Clock::now();
  const auto base = load_run_config(g);
  const auto mode = mode_from_string(a.mode);
  const auto data_hash = file_hash(a.io.data);
  const auto graph = load_graph(a.io.data);
  const auto seeds = seed_list(g.seed, a.seeds);
  Manifest m("sweep " + a.mode, base, seeds, {{a.io.data, data_hash}});

  const auto k_link = base.eval.link_k;
  const std::string header = "cell_hash,k,top_k,seed,task,mode,accuracy,recall@" + std::to_string(k_link) +
                             ",ndcg@" + std::to_string(k_link) + ",manifest_hash";
  const fs::path csv_path = fs::path(g.out) / "sweep.csv";
  std::map<std::string, std::string> rows;  // cell_hash -> row
  if (fs::exists(csv_path)) {
    std::ifstream in(csv_path);
    std::string line;
    std::getline(in, line);
    if (line != header) throw ConsistencyError("existing sweep.csv has a different header; use a fresh --out");
    while (std::getline(in, line)) {
      if (!line.empty()) rows[split_csv_line(line).front()] = line;
    }
  }
  // Rows are kept in grid order so reruns write identical files.
  std::vector<std::string> order;
  std::size_t skipped = 0;
  auto flush = [&] {
    std::string text = header + "\n";
    for (const auto& h : order) {
      if (auto it = rows.find(h); it != rows.end()) text += it->second + "\n";
    }
    write_text(csv_path, text);
  };
  for (int k : a.ks) {
    for (auto seed : seeds) {
      auto cfg = base;
      cfg.build.k = k;
      std::vector<std::pair<std::size_t, std::string>> todo;
      for (auto top_k : a.top_ks) {
        cfg.retrieval.top_k = top_k;
        json cell = {{"config", to_json(cfg)}, {"seed", seed}, {"mode", a.mode}, {"data", data_hash}};
        const auto h = hash_hex(cell.dump());
        order.push_back(h);
        if (rows.count(h)) {
          ++skipped;
        } else {
          todo.emplace_back(top_k, h);
        }
      }
      if (todo.empty()) continue;
      std::optional<ToyStore> store;
      if (mode != Mode::kBaseline) store = prepare_store(graph, cfg, seed, g.threads, data_hash);
      for (const auto& [top_k, h] : todo) {
        cfg.retrieval.top_k = top_k;
        cfg.validate();
        EvalInputs in;
        in.store = store ? &*store : nullptr;
        const auto r = evaluate(graph, cfg, mode, seed, g.threads, std::move(in));
        std::ostringstream row;
        row << h << ',' << k << ',' << top_k << ',' << seed << ',' << to_string(r.task) << ',' << a.mode << ','
            << fmt(r.accuracy) << ',' << fmt(r.recall) << ',' << fmt(r.ndcg) << ',' << m.hash;
        rows[h] = row.str();
      }
      flush();
      log(LogLevel::kInfo, "sweep k=" + std::to_string(k) + " seed=" + std::to_string(seed) + " done");
    }
  }
  flush();
  m.write(fs::path(g.out) / "run_manifest.json", {"sweep.csv"},
          {{"total", ms_since(t0)}, {"skipped_cells", skipped}});
  std::cout << json{{"cells", order.size()}, {"skipped", skipped}, {"csv", csv_path.string()}}.dump() << '\n';
  return 0;
}

struct InspectArgs {
  std::string store;
  std::size_t entry = 0;
};

int cmd_inspect(const Globals& g, const InspectArgs& a) {
  const auto store = load_store(a.store);
  if (a.entry >= store.size()) {
    throw NotFound("entry " + std::to_string(a.entry) + " out of range (store has " + std::to_string(store.size()) +
                   ")");
  }
  const auto& e = store.entries[a.entry];
  json nodes = json::array();
  for (std::size_t i = 0; i < e.toy.subgraph.size(); ++i) {
    nodes.push_back({{"id", e.toy.subgraph.id(i)}, {"hidden", e.values.hidden[i]}, {"output", e.values.output[i]}});
  }
  json out = {{"entry", a.entry},
              {"master", e.toy.master},
              {"tau", e.toy.tau},
              {"lineage", e.toy.lineage},
              {"noise_variant", e.toy.is_noise_variant},
              {"key", {{"tau", e.key.tau}, {"env", e.key.env}, {"scode", e.key.scode}, {"semantic", e.key.semantic}}},
              {"values",
               {{"nodes", nodes},
                {"master_hidden_agg", e.values.master_hidden_agg},
                {"master_output_agg", e.values.master_output_agg}}},
              {"edges", json::array()}};
  for (const auto& ed : e.toy.subgraph.edges()) out["edges"].push_back({ed.u, ed.v, ed.w});
  if (g.out.empty()) {
    std::cout << out.dump(2) << '\n';
  } else {
    write_text(g.out, out.dump(2) + "\n");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Retrieval-augmented graph learning toolkit"};
  app.require_subcommand(1);
  Globals globals;
  app.add_option("--config", globals.config_path, "JSON run configuration")->check(CLI::ExistingFile);
  app.add_option("--seed", globals.seed, "root seed");
  app.add_option("--threads", globals.threads, "worker threads");
  app.add_option("--out", globals.out, "output file or directory");
  app.fallthrough();

  GenArgs gen;
  auto* gen_cmd = app.add_subcommand("gen", "generate a synthetic dataset (JSONL)");
  gen_cmd->add_option("--kind", gen.kind, "sbm|bipartite");
  gen_cmd->add_option("--classes", gen.sbm.classes);
  gen_cmd->add_option("--nodes-per-class", gen.sbm.nodes_per_class);
  gen_cmd->add_option("--p-in", gen.sbm.p_in);
  gen_cmd->add_option("--p-out", gen.sbm.p_out);
  gen_cmd->add_option("--feature-dim", gen.sbm.feature_dim);
  gen_cmd->add_option("--signal", gen.sbm.signal);
  gen_cmd->add_option("--users", gen.bip.users);
  gen_cmd->add_option("--items", gen.bip.items);
  gen_cmd->add_option("--snapshots", gen.bip.snapshots);
  gen_cmd->add_option("--drift", gen.bip.preference_drift);

  DataArgs build;
  auto* build_cmd = app.add_subcommand("build-store", "chunk a resource graph into a toy-graph store");
  build_cmd->add_option("--data", build.data, "dataset JSONL")->required();

  RetrieveArgs ret;
  auto* ret_cmd = app.add_subcommand("retrieve", "top-K toy graphs for one query graph");
  ret_cmd->add_option("--store", ret.io.store)->required();
  ret_cmd->add_option("--query", ret.query, "query graph JSONL; center is --node or its smallest id");
  ret_cmd->add_option("--data", ret.io.data, "dataset JSONL; requires --node");
  ret_cmd->add_option("--node", ret.node);
  ret_cmd->add_option("--snapshot", ret.snapshot);
  ret_cmd->add_option("--topk,--top-k", ret.top_k);
  ret_cmd->add_option("--bottom-k", ret.bottom_k);
  ret_cmd->add_option("--weights", ret.weights, "w_time,w_struct,w_env,w_semantic")->delimiter(',');
  ret_cmd->add_option("--eta", ret.eta);

  TuneArgs tun;
  auto* tune_cmd = app.add_subcommand("tune", "prompt-tune the decoder against a store");
  tune_cmd->add_option("--store", tun.io.store)->required();
  tune_cmd->add_option("--data", tun.io.data)->required();
  tune_cmd->add_flag("--noise", tun.noise, "inject bottomK and noise-variant contexts");
  tune_cmd->add_option("--bottomk", tun.bottom_k);
  tune_cmd->add_option("--epochs", tun.epochs);
  tune_cmd->add_option("--lr", tun.lr);
  tune_cmd->add_flag("--tune-gamma", tun.tune_gamma);

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate on the test split");
  eval_cmd->add_option("--data", ev.io.data)->required();
  eval_cmd->add_option("--store", ev.io.store);
  eval_cmd->add_option("--decoder", ev.decoder);
  eval_cmd->add_option("--mode", ev.mode, "nf|ft|nft|baseline");
  eval_cmd->add_option("--seeds", ev.seeds, "number of consecutive seeds");
  eval_cmd->add_option("--top-k", ev.top_k);
  eval_cmd->add_option("--gamma", ev.gamma);
  eval_cmd->add_option("--forced-noise", ev.forced_noise, "bottom-K entries appended to test contexts");

  SweepArgs sw;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over hops k and topK");
  sweep_cmd->add_option("--data", sw.io.data)->required();
  sweep_cmd->add_option("--mode", sw.mode);
  sweep_cmd->add_option("--seeds", sw.seeds);
  sweep_cmd->add_option("--ks", sw.ks)->delimiter(',');
  sweep_cmd->add_option("--topks", sw.top_ks)->delimiter(',');

  InspectArgs ins;
  auto* inspect_cmd = app.add_subcommand("inspect", "dump a toy graph's keys and values as JSON");
  inspect_cmd->add_option("--store", ins.store)->required();
  inspect_cmd->add_option("--entry", ins.entry);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*gen_cmd) return cmd_gen(globals, gen);
    if (*build_cmd) return cmd_build_store(globals, build);
    if (*ret_cmd) return cmd_retrieve(globals, ret);
    if (*tune_cmd) return cmd_tune(globals, tun);
    if (*eval_cmd) return cmd_eval(globals, ev);
    if (*sweep_cmd) return cmd_sweep(globals, sw);
    if (*inspect_cmd) return cmd_inspect(globals, ins);
  } catch (const ConsistencyError& e) {
    log(LogLevel::kError, e.what());
    return 3;
  } catch (const NumericError& e) {
    log(LogLevel::kError, e.what());
    return 4;
  } catch (const InputError& e) {
    log(LogLevel::kError, e.what());
    return 2;
  } catch (const nlohmann::json::exception& e) {
    log(LogLevel::kError, std::string("malformed JSON: ") + e.what());
    return 2;
  } catch (const fs::filesystem_error& e) {
    log(LogLevel::kError, e.what());
    return 2;
  } catch (const std::exception& e) {
    log(LogLevel::kError, e.what());
    return 1;
  }
  return 0;
}
