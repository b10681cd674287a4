#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "json.hpp"
#include "ragraph/error.hpp"
#include "ragraph/hash.hpp"
#include "ragraph/similarity.hpp"
#include "ragraph/toybuilder.hpp"
#include "ragraph/tuner.hpp"

namespace ragraph {

/// Named gamma values. Node-level presets come first, then graph-level.
inline std::optional<double> gamma_preset(const std::string& name) {
  static const std::map<std::string, double> presets = {
      {"node:PROTEINS", 0.8}, {"node:ENZYMES", 0.5},  {"graph:PROTEINS", 0.5},
      {"graph:COX2", 0.6},    {"graph:ENZYMES", 0.8}, {"graph:BZR", 0.5},
  };
  if (auto it = presets.find(name); it != presets.end()) return it->second;
  return std::nullopt;
}

enum class TaskKind { kAuto, kNode, kGraph, kLink };

inline std::string to_string(TaskKind t) {
  switch (t) {
    case TaskKind::kNode: return "node";
    case TaskKind::kGraph: return "graph";
    case TaskKind::kLink: return "link";
    default: return "auto";
  }
}

inline TaskKind task_from_string(const std::string& s) {
  if (s == "auto") return TaskKind::kAuto;
  if (s == "node") return TaskKind::kNode;
  if (s == "graph") return TaskKind::kGraph;
  if (s == "link") return TaskKind::kLink;
  throw InvalidInput("unknown task '" + s + "'");
}

struct RetrievalConfig {
  std::size_t top_k = 5;
  double mix = 0.5;
  RetrievalParams params;
};

struct EvalConfig {
  std::size_t shots = 5;
  std::size_t link_k = 20;
  std::size_t forced_noise = 0;  // bottom-K entries appended to test contexts
  double train_ratio = 0.5;
  double resource_ratio = 0.3;
  double dyn_resource = 0.6;
  double dyn_train = 0.2;
  double link_eps = 0.0;
};

/// Everything a run depends on besides data and seed.
struct RunConfig {
  TaskKind task = TaskKind::kAuto;
  int encoder_layers = 2;
  double gamma = 0.5;
  std::string gamma_preset;  // overrides gamma when set
  BuildConfig build;
  RetrievalConfig retrieval;
  EvalConfig eval;
  TuneConfig tune;

  double effective_gamma() const {
    if (gamma_preset.empty()) return gamma;
    if (auto g = ragraph::gamma_preset(gamma_preset)) return *g;
    throw InvalidInput("unknown gamma preset '" + gamma_preset + "'");
  }

  void validate() const {
    build.validate();
    tune.validate();
    if (encoder_layers < 1) throw InvalidInput("encoder_layers must be >= 1");
    const double g = effective_gamma();
    if (!(g >= 0.0 && g <= 1.0)) throw InvalidInput("gamma must lie in [0,1]");
    if (retrieval.top_k < 1) throw InvalidInput("top_k must be >= 1");
    if (!(retrieval.mix >= 0.0 && retrieval.mix <= 1.0)) throw InvalidInput("mix must lie in [0,1]");
    if (!(retrieval.params.eta > 0.0)) throw InvalidInput("eta must be > 0");
    if (eval.shots < 1) throw InvalidInput("shots must be >= 1");
    if (eval.link_k < 1) throw InvalidInput("link_k must be >= 1");
  }
};

inline nlohmann::json to_json(const RunConfig& c) {
  nlohmann::json j;
  j["task"] = to_string(c.task);
  j["encoder_layers"] = c.encoder_layers;
  j["gamma"] = c.gamma;
  j["gamma_preset"] = c.gamma_preset;
  j["build"] = to_json(c.build);
  j["retrieval"] = {{"top_k", c.retrieval.top_k},
                    {"mix", c.retrieval.mix},
                    {"weights", c.retrieval.params.weights},
                    {"eta", c.retrieval.params.eta}};
  j["eval"] = {{"shots", c.eval.shots},
               {"link_k", c.eval.link_k},
               {"forced_noise", c.eval.forced_noise},
               {"train_ratio", c.eval.train_ratio},
               {"resource_ratio", c.eval.resource_ratio},
               {"dyn_resource", c.eval.dyn_resource},
               {"dyn_train", c.eval.dyn_train},
               {"link_eps", c.eval.link_eps}};
  j["tune"] = {{"learning_rate", c.tune.learning_rate},
               {"epochs", c.tune.epochs},
               {"add_noise", c.tune.add_noise},
               {"noise_bottom_k", c.tune.noise_bottom_k},
               {"temperature", c.tune.temperature},
               {"tune_gamma", c.tune.tune_gamma}};
  return j;
}

namespace detail {

template <typename T>
void read_opt(const nlohmann::json& j, const char* key, T& dst) {
  if (j.contains(key) && !j[key].is_null()) dst = j[key].get<T>();
}

}  // namespace detail

/// Reads a config object; absent fields keep their defaults. Unknown
/// top-level sections are rejected.
inline RunConfig config_from_json(const nlohmann::json& j) {
  using detail::read_opt;
  RunConfig c;
  if (!j.is_object()) throw FormatError("config must be a JSON object");
  static const std::set<std::string> sections = {"task",  "encoder_layers", "gamma", "gamma_preset",
                                                 "build", "retrieval",      "eval",  "tune"};
  for (const auto& [key, _] : j.items()) {
    if (!sections.count(key)) throw FormatError("unknown config field '" + key + "'");
  }
  try {
    if (j.contains("task")) c.task = task_from_string(j["task"].get<std::string>());
    read_opt(j, "encoder_layers", c.encoder_layers);
    read_opt(j, "gamma", c.gamma);
    read_opt(j, "gamma_preset", c.gamma_preset);
    if (j.contains("build")) {
      const auto& b = j["build"];
      read_opt(b, "k", c.build.k);
      read_opt(b, "K_scale", c.build.K_scale);
      read_opt(b, "alpha", c.build.alpha);
      read_opt(b, "lambda", c.build.lambda);
      read_opt(b, "sigma_scale", c.build.sigma_scale);
      read_opt(b, "eps", c.build.eps);
      read_opt(b, "dis_q", c.build.dis_q);
      read_opt(b, "noise_variants", c.build.noise_variants);
      read_opt(b, "label_outputs", c.build.label_outputs);
      if (b.contains("anchor_count") && b["anchor_count"].is_number()) {
        c.build.anchor_count = b["anchor_count"].get<std::size_t>();
      }
      if (b.contains("store_cap") && b["store_cap"].is_number()) c.build.store_cap = b["store_cap"].get<std::size_t>();
    }
    if (j.contains("retrieval")) {
      const auto& r = j["retrieval"];
      read_opt(r, "top_k", c.retrieval.top_k);
      read_opt(r, "mix", c.retrieval.mix);
      read_opt(r, "eta", c.retrieval.params.eta);
      read_opt(r, "weights", c.retrieval.params.weights);
    }
    if (j.contains("eval")) {
      const auto& e = j["eval"];
      read_opt(e, "shots", c.eval.shots);
      read_opt(e, "link_k", c.eval.link_k);
      read_opt(e, "forced_noise", c.eval.forced_noise);
      read_opt(e, "train_ratio", c.eval.train_ratio);
      read_opt(e, "resource_ratio", c.eval.resource_ratio);
      read_opt(e, "dyn_resource", c.eval.dyn_resource);
      read_opt(e, "dyn_train", c.eval.dyn_train);
      read_opt(e, "link_eps", c.eval.link_eps);
    }
    if (j.contains("tune")) {
      const auto& t = j["tune"];
      read_opt(t, "learning_rate", c.tune.learning_rate);
      read_opt(t, "epochs", c.tune.epochs);
      read_opt(t, "add_noise", c.tune.add_noise);
      read_opt(t, "noise_bottom_k", c.tune.noise_bottom_k);
      read_opt(t, "temperature", c.tune.temperature);
      read_opt(t, "tune_gamma", c.tune.tune_gamma);
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline RunConfig load_config(const std::string& path) {
  try {
    return config_from_json(nlohmann::json::parse(read_file(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("config " + path + ": " + e.what());
  }
}

inline std::string config_hash(const RunConfig& c) { return hash_hex(to_json(c).dump()); }

}  // namespace ragraph
