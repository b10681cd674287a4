#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "ragraph/error.hpp"
#include "ragraph/graph.hpp"
#include "ragraph/hash.hpp"
#include "ragraph/linalg.hpp"

namespace ragraph {

/// Per-node vectors aligned with the index order of the snapshot they were
/// computed on.
using Embeddings = std::vector<Vec>;

/// Frozen message-passing encoder standing in for a pre-trained GNN. Each
/// layer is z <- P z W with P the self-looped, weight-normalized propagation
/// operator (rows sum to 1). Parameter-free encoders use W = I.
struct Encoder {
  int layers = 2;
  std::vector<Matrix> weights;
  bool parameter_free = true;
  std::string source_hash;

  static Encoder parameter_free_encoder(int layers = 2) {
    Encoder e;
    e.layers = layers;
    return e;
  }

  /// 0 when parameter-free (any width accepted).
  std::size_t input_dim() const { return weights.empty() ? 0 : weights.front().rows(); }
  std::size_t output_dim(std::size_t in) const { return weights.empty() ? in : weights.back().cols(); }
};

struct Decoder {
  enum class Mode { kIdentity, kPrototype, kTrained };

  Matrix matrix;  // f1 x f2
  Mode mode = Mode::kIdentity;

  std::size_t in_dim() const { return matrix.rows(); }
  std::size_t out_dim() const { return matrix.cols(); }

  static Decoder identity(std::size_t n) { return {Matrix::identity(n), Mode::kIdentity}; }

  /// Column c is the L2-normalized prototype hidden vector of class c, so
  /// decode(h) gives |h| * cosine(h, prototype_c) per class.
  static Decoder from_prototypes(const std::vector<Vec>& prototypes) {
    if (prototypes.empty()) throw InvalidInput("decoder needs at least one prototype");
    const auto f1 = prototypes.front().size();
    Matrix m(f1, prototypes.size());
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
      require_same_size(prototypes[c].size(), f1, "prototype");
      const auto p = l2_normalized(prototypes[c]);
      for (std::size_t i = 0; i < f1; ++i) m(i, c) = p[i];
    }
    return {std::move(m), Mode::kPrototype};
  }
};

/// One propagation step evaluated at node v: sum over N(v) and v itself of
/// w(u,v) / (1 + sum_u w(u,v)) * z_u, with self-loop weight 1.
inline Vec aggregate_at(const Snapshot& g, std::size_t v, const Embeddings& z) {
  double denom = 1.0;
  for (const auto& n : g.adjacency(v)) denom += n.weight;
  Vec out = scaled(z[v], 1.0 / denom);
  for (const auto& n : g.adjacency(v)) axpy(n.weight / denom, z[n.index], out);
  return out;
}

inline Embeddings propagate_once(const Snapshot& g, const Embeddings& z) {
  Embeddings next(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) next[v] = aggregate_at(g, v, z);
  return next;
}

inline Embeddings encode(const Snapshot& g, const Encoder& enc) {
  if (!enc.parameter_free) {
    if (enc.weights.size() != static_cast<std::size_t>(enc.layers)) {
      throw InvalidInput("encoder weight count does not match layer count");
    }
    require_same_size(g.dim(), enc.input_dim(), "encode");
  }
  Embeddings z(g.size());
  for (std::size_t v = 0; v < g.size(); ++v) {
    auto x = g.features(v);
    z[v].assign(x.begin(), x.end());
  }
  for (int l = 0; l < enc.layers; ++l) {
    z = propagate_once(g, z);
    if (!enc.parameter_free) {
      for (auto& row : z) row = vec_mat(row, enc.weights[static_cast<std::size_t>(l)]);
    }
  }
  return z;
}

inline Vec decode(std::span<const double> hidden, const Decoder& dec) {
  require_same_size(hidden.size(), dec.in_dim(), "decode");
  return vec_mat(hidden, dec.matrix);
}

// Weight file: one JSON header line {"layers":L,"dims":[...],"parameter_free":b}
// followed by row-major little-endian float32 matrices in layer order.

namespace detail {

inline void put_f32(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(v));
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<char>((bits >> (8 * k)) & 0xFF));
}

inline double get_f32(std::string_view in, std::size_t& pos) {
  if (pos + 4 > in.size()) throw FormatError("truncated float32 payload");
  std::uint32_t bits = 0;
  for (int k = 0; k < 4; ++k) {
    bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[pos + k])) << (8 * k);
  }
  pos += 4;
  return static_cast<double>(std::bit_cast<float>(bits));
}

inline std::string serialize_matrices(const nlohmann::json& header, const std::vector<Matrix>& ms) {
  std::string out = header.dump();
  out.push_back('\n');
  for (const auto& m : ms) {
    for (double v : m.data()) put_f32(out, v);
  }
  return out;
}

struct ParsedWeights {
  nlohmann::json header;
  std::vector<Matrix> matrices;
};

inline ParsedWeights parse_weights(std::string_view bytes) {
  if (bytes.empty() || bytes.front() != '{') throw FormatError("weight file: bad magic (expected JSON header)");
  const auto nl = bytes.find('\n');
  if (nl == std::string_view::npos) throw FormatError("weight file: missing header terminator");
  ParsedWeights pw;
  try {
    pw.header = nlohmann::json::parse(bytes.substr(0, nl));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("weight file header: ") + e.what());
  }
  if (!pw.header.is_object() || !pw.header.contains("layers")) {
    throw FormatError("weight file header lacks \"layers\"");
  }
  const bool pf = pw.header.value("parameter_free", false);
  const auto dims = pw.header.value("dims", std::vector<std::size_t>{});
  std::size_t pos = nl + 1;
  if (!pf) {
    const auto layers = pw.header["layers"].get<std::size_t>();
    if (dims.size() != layers + 1) throw FormatError("weight file: dims must have layers+1 entries");
    for (std::size_t l = 0; l < layers; ++l) {
      Matrix m(dims[l], dims[l + 1]);
      for (double& v : m.data()) v = get_f32(bytes, pos);
      pw.matrices.push_back(std::move(m));
    }
  }
  if (pos != bytes.size()) throw FormatError("weight file: trailing bytes after payload");
  return pw;
}

}  // namespace detail

inline std::string serialize_encoder(const Encoder& enc) {
  std::vector<std::size_t> dims;
  if (!enc.parameter_free) {
    dims.push_back(enc.weights.front().rows());
    for (const auto& w : enc.weights) dims.push_back(w.cols());
  }
  nlohmann::json header = {{"layers", enc.layers}, {"dims", dims}, {"parameter_free", enc.parameter_free}};
  return detail::serialize_matrices(header, enc.parameter_free ? std::vector<Matrix>{} : enc.weights);
}

inline Encoder parse_encoder(std::string_view bytes) {
  auto pw = detail::parse_weights(bytes);
  Encoder enc;
  enc.layers = pw.header["layers"].get<int>();
  enc.parameter_free = pw.header.value("parameter_free", false);
  enc.weights = std::move(pw.matrices);
  for (std::size_t l = 1; l < enc.weights.size(); ++l) {
    if (enc.weights[l - 1].cols() != enc.weights[l].rows()) throw FormatError("layer dimensions do not chain");
  }
  enc.source_hash = hash_hex(bytes);
  return enc;
}

inline Encoder load_weights(const std::string& path) { return parse_encoder(read_file(path)); }

inline std::string serialize_decoder(const Decoder& dec) {
  nlohmann::json header = {{"layers", 1}, {"dims", {dec.in_dim(), dec.out_dim()}}, {"parameter_free", false}};
  return detail::serialize_matrices(header, {dec.matrix});
}

inline Decoder parse_decoder(std::string_view bytes) {
  auto pw = detail::parse_weights(bytes);
  if (pw.matrices.size() != 1) throw FormatError("decoder file must hold exactly one matrix");
  return {std::move(pw.matrices.front()), Decoder::Mode::kTrained};
}

inline Decoder load_decoder(const std::string& path) { return parse_decoder(read_file(path)); }

}  // namespace ragraph
