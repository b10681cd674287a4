#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ragraph/encoder.hpp"
#include "ragraph/error.hpp"
#include "ragraph/linalg.hpp"
#include "ragraph/parallel.hpp"
#include "ragraph/query.hpp"
#include "ragraph/store.hpp"

namespace ragraph {

struct TuneConfig {
  double learning_rate = 0.05;
  int epochs = 100;
  bool add_noise = false;
  std::size_t noise_bottom_k = 5;
  double temperature = 0.1;
  bool tune_gamma = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;

  void validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) throw InvalidInput("learning_rate must be >= 0");
    if (epochs < 0) throw InvalidInput("epochs must be >= 0");
    if (!(temperature > 0.0)) throw InvalidInput("temperature must be > 0");
  }
};

/// One training query reduced to what the decoder sees: the propagated
/// output o_c and hidden h_c of its center.
struct TuneExample {
  Vec o_c;
  Vec h_c;
  ClassId label = -1;
};

/// (anchor, positive, negative) indices into TuneBatch::examples.
struct LinkTriple {
  std::size_t anchor = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

struct TuneBatch {
  enum class Task { kClassification, kLink };
  Task task = Task::kClassification;
  std::vector<TuneExample> examples;
  std::vector<LinkTriple> triples;  // link task only
  std::vector<Vec> prototypes;      // classification targets, index = class
};

/// One-hot targets for C classes.
inline std::vector<Vec> one_hot_prototypes(std::size_t classes) {
  std::vector<Vec> p(classes, Vec(classes, 0.0));
  for (std::size_t c = 0; c < classes; ++c) p[c][c] = 1.0;
  return p;
}

/// gamma * o_c + (1 - gamma) * decode(h_c), before normalization. Cosine
/// losses are invariant to the positive L1 rescale applied by fuse.
inline Vec fused_raw(const TuneExample& ex, const Decoder& dec, double gamma) {
  return fuse(ex.o_c, ex.h_c, dec, gamma, false);
}

namespace detail {

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// d cos(a, b) / d a.
inline Vec cosine_grad(std::span<const double> a, std::span<const double> b) {
  const double na = norm2(a);
  const double nb = norm2(b);
  Vec g(a.size(), 0.0);
  if (na == 0.0 || nb == 0.0) return g;
  const double c = dot(a, b) / (na * nb);
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = b[i] / (na * nb) - c * a[i] / (na * na);
  return g;
}

struct ClassTerm {
  double loss = 0.0;
  Vec grad_u;
};

inline ClassTerm classification_term(std::span<const double> u, ClassId y, const std::vector<Vec>& protos,
                                     double temperature) {
  if (y < 0 || static_cast<std::size_t>(y) >= protos.size()) {
    throw InvalidInput("missing or out-of-range label " + std::to_string(y));
  }
  const auto C = protos.size();
  Vec logits(C);
  for (std::size_t c = 0; c < C; ++c) logits[c] = cosine(u, protos[c]) / temperature;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double l : logits) z += std::exp(l - mx);
  ClassTerm t;
  t.loss = -(logits[static_cast<std::size_t>(y)] - mx - std::log(z));
  t.grad_u.assign(u.size(), 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    const double q = std::exp(logits[c] - mx) / z;
    const double d = (q - (c == static_cast<std::size_t>(y) ? 1.0 : 0.0)) / temperature;
    if (d != 0.0) axpy(d, cosine_grad(u, protos[c]), t.grad_u);
  }
  return t;
}

struct LinkTerm {
  double loss = 0.0;
  Vec grad_anchor, grad_positive, grad_negative;
};

inline LinkTerm link_term(std::span<const double> a, std::span<const double> p, std::span<const double> n) {
  const double delta = cosine(a, p) - cosine(a, n);
  const double dl = -sigmoid(-delta);
  LinkTerm t;
  t.loss = softplus(-delta);
  t.grad_anchor = scaled(cosine_grad(a, p), dl);
  axpy(-dl, cosine_grad(a, n), t.grad_anchor);
  t.grad_positive = scaled(cosine_grad(p, a), dl);
  t.grad_negative = scaled(cosine_grad(n, a), -dl);
  return t;
}

// dL/dM contribution of one fused vector: (1 - gamma) * h (outer) g_u.
inline void accumulate_outer(Matrix& grad, std::span<const double> h, std::span<const double> g_u, double scale) {
  for (std::size_t i = 0; i < grad.rows(); ++i) {
    const double hi = h[i] * scale;
    if (hi == 0.0) continue;
    auto row = grad.row(i);
    for (std::size_t j = 0; j < grad.cols(); ++j) row[j] += hi * g_u[j];
  }
}

}  // namespace detail

/// Mean over examples of -log softmax_c(cos(o, p_c) / T) at the true class.
inline double prompt_loss(const std::vector<Vec>& outputs, const std::vector<ClassId>& labels,
                          const std::vector<Vec>& prototypes, double temperature) {
  if (outputs.size() != labels.size()) throw InvalidInput("one label per output required");
  if (outputs.empty()) throw InvalidInput("prompt_loss needs at least one output");
  if (!(temperature > 0.0)) throw InvalidInput("temperature must be > 0");
  double sum = 0.0;
  for (std::size_t i = 0; i < outputs.size(); ++i) {
    sum += detail::classification_term(outputs[i], labels[i], prototypes, temperature).loss;
  }
  return sum / static_cast<double>(outputs.size());
}

/// Mean over triples of -log sigmoid(cos(o_a, o_p) - cos(o_a, o_n)).
inline double link_prompt_loss(const std::vector<Vec>& outputs, const std::vector<LinkTriple>& triples) {
  if (triples.empty()) throw InvalidInput("link_prompt_loss needs at least one triple");
  double sum = 0.0;
  for (const auto& t : triples) {
    sum += detail::link_term(outputs.at(t.anchor), outputs.at(t.positive), outputs.at(t.negative)).loss;
  }
  return sum / static_cast<double>(triples.size());
}

inline std::vector<Vec> fused_outputs(const TuneBatch& batch, const Decoder& dec, double gamma) {
  std::vector<Vec> u;
  u.reserve(batch.examples.size());
  for (const auto& ex : batch.examples) u.push_back(fused_raw(ex, dec, gamma));
  return u;
}

inline double batch_loss(const TuneBatch& batch, const Decoder& dec, double gamma, double temperature) {
  const auto u = fused_outputs(batch, dec, gamma);
  if (batch.task == TuneBatch::Task::kLink) return link_prompt_loss(u, batch.triples);
  std::vector<ClassId> labels;
  for (const auto& ex : batch.examples) labels.push_back(ex.label);
  return prompt_loss(u, labels, batch.prototypes, temperature);
}

/// Exact gradient of batch_loss with respect to the decoder matrix.
inline Matrix decoder_gradient(const TuneBatch& batch, const Decoder& dec, double gamma, double temperature,
                               std::size_t threads = 1) {
  if (batch.examples.empty()) throw InvalidInput("decoder_gradient needs a nonempty batch");
  const auto u = fused_outputs(batch, dec, gamma);
  const bool link = batch.task == TuneBatch::Task::kLink;
  const std::size_t terms = link ? batch.triples.size() : batch.examples.size();
  if (terms == 0) throw InvalidInput("decoder_gradient needs at least one training term");
  // Per-example dL/du, reduced in index order so threads never change the sum.
  std::vector<Vec> g_u(batch.examples.size(), Vec(dec.out_dim(), 0.0));
  if (link) {
    for (const auto& t : batch.triples) {
      auto lt = detail::link_term(u.at(t.anchor), u.at(t.positive), u.at(t.negative));
      axpy(1.0, lt.grad_anchor, g_u[t.anchor]);
      axpy(1.0, lt.grad_positive, g_u[t.positive]);
      axpy(1.0, lt.grad_negative, g_u[t.negative]);
    }
  } else {
    parallel_for(batch.examples.size(), threads, [&](std::size_t i) {
      g_u[i] = detail::classification_term(u[i], batch.examples[i].label, batch.prototypes, temperature).grad_u;
    });
  }
  Matrix grad(dec.in_dim(), dec.out_dim());
  const double scale = (1.0 - gamma) / static_cast<double>(terms);
  for (std::size_t i = 0; i < batch.examples.size(); ++i) {
    detail::accumulate_outer(grad, batch.examples[i].h_c, g_u[i], scale);
  }
  return grad;
}

struct TuneResult {
  Decoder decoder;
  double gamma = 0.5;
  std::vector<double> loss_trace;  // loss before each epoch's update
};

namespace detail {

inline TuneBatch validation_slice(const TuneBatch& batch) {
  TuneBatch v = batch;
  if (batch.task == TuneBatch::Task::kLink) {
    if (batch.triples.size() < 5) return v;
    v.triples.clear();
    for (std::size_t i = 0; i < batch.triples.size(); i += 5) v.triples.push_back(batch.triples[i]);
  } else {
    if (batch.examples.size() < 5) return v;
    v.examples.clear();
    for (std::size_t i = 0; i < batch.examples.size(); i += 5) v.examples.push_back(batch.examples[i]);
  }
  return v;
}

}  // namespace detail

/// Full-batch gradient descent on the decoder matrix. With tune_gamma, gamma
/// is then picked from {0.1, ..., 0.9} by loss on every 5th example.
inline TuneResult tune(const TuneBatch& batch, Decoder init, double gamma, const TuneConfig& cfg) {
  cfg.validate();
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw InvalidInput("gamma must lie in [0,1]");
  TuneResult r{std::move(init), gamma, {}};
  r.decoder.mode = Decoder::Mode::kTrained;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double loss = batch_loss(batch, r.decoder, gamma, cfg.temperature);
    if (!std::isfinite(loss)) {
      throw NumericError("non-finite prompt loss at epoch " + std::to_string(epoch));
    }
    r.loss_trace.push_back(loss);
    const auto grad = decoder_gradient(batch, r.decoder, gamma, cfg.temperature, cfg.threads);
    if (!all_finite(grad.data())) throw NumericError("non-finite decoder gradient at epoch " + std::to_string(epoch));
    axpy(-cfg.learning_rate, grad.data(), r.decoder.matrix.data());
  }
  if (cfg.tune_gamma) {
    const auto val = detail::validation_slice(batch);
    double best = std::numeric_limits<double>::infinity();
    for (int step = 1; step <= 9; ++step) {
      const double g = step / 10.0;
      const double l = batch_loss(val, r.decoder, g, cfg.temperature);
      if (l < best) {
        best = l;
        r.gamma = g;
      }
    }
  }
  return r;
}

/// Training queries for tune(): prepared query graphs plus their labels
/// (classification) or link triples over the query list.
struct TrainSet {
  std::vector<PreparedQuery> queries;
  std::vector<ClassId> labels;
  std::vector<LinkTriple> triples;
  std::size_t num_classes = 0;
};

/// Retrieves a context for every training query (restricted by the plan's
/// filter, normally resource-only) and propagates it. With add_noise the
/// context also receives bottom-K entries and noise variants become eligible.
inline TuneBatch make_tune_batch(const ToyStore& store, const TrainSet& train, RetrievalPlan plan,
                                 const TuneConfig& cfg, double mix = 0.5) {
  if (cfg.add_noise) {
    plan.bottom_k = cfg.noise_bottom_k;
    plan.noise_variants = true;
  } else {
    plan.bottom_k = 0;
    plan.noise_variants = false;
  }
  const bool link = !train.triples.empty();
  if (!link && train.labels.size() != train.queries.size()) throw InvalidInput("one label per training query required");
  TuneBatch batch;
  batch.task = link ? TuneBatch::Task::kLink : TuneBatch::Task::kClassification;
  batch.triples = train.triples;
  if (!link) batch.prototypes = one_hot_prototypes(train.num_classes);
  batch.examples.resize(train.queries.size());
  parallel_for(train.queries.size(), cfg.threads, [&](std::size_t i) {
    const auto& q = train.queries[i];
    auto ctx = retrieve(store, q.key, plan);
    auto p = propagate_query(q, ctx, store.f2, mix);
    batch.examples[i] = {std::move(p.o_c), std::move(p.h_c), link ? -1 : train.labels[i]};
  });
  return batch;
}

/// Prompt tuning against a frozen store: builds the batch, then runs tune.
inline TuneResult tune(const ToyStore& store, const TrainSet& train, Decoder init, double gamma,
                       const TuneConfig& cfg, const RetrievalPlan& plan, double mix = 0.5) {
  return tune(make_tune_batch(store, train, plan, cfg, mix), std::move(init), gamma, cfg);
}

}  // namespace ragraph
