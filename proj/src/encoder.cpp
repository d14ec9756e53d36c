#include "icr/encoder.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "icr/binio.hpp"
#include "icr/lexical.hpp"
#include "icr/rng.hpp"

namespace icr {

namespace {

constexpr char kMagic[8] = {'I', 'C', 'R', 'C', 'K', 'P', 'T', '\0'};
constexpr std::uint32_t kVersion = 1;

EncoderParams init_encoder(std::size_t dim, std::size_t buckets, Rng& rng) {
  EncoderParams e;
  e.dim = dim;
  e.buckets = buckets;
  e.embedding.resize(buckets * dim);
  for (auto& x : e.embedding) x = rng.uniform(-0.05, 0.05);
  e.projection.resize(dim * dim);
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = 0; j < dim; ++j)
      e.projection[i * dim + j] = (i == j ? 1.0 : 0.0) + rng.uniform(-0.01, 0.01);
  e.bias.assign(dim, 0.0);
  return e;
}

void write_encoder(BinWriter& w, const EncoderParams& e) {
  w.f64s(e.embedding);
  w.f64s(e.projection);
  w.f64s(e.bias);
}

EncoderParams read_encoder(BinReader& r, std::size_t dim, std::size_t buckets) {
  EncoderParams e;
  e.dim = dim;
  e.buckets = buckets;
  e.embedding.resize(buckets * dim);
  e.projection.resize(dim * dim);
  e.bias.resize(dim);
  r.f64s(e.embedding);
  r.f64s(e.projection);
  r.f64s(e.bias);
  return e;
}

bool finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace

ModelParams init_model(std::size_t dim, std::size_t buckets, std::uint64_t seed) {
  if (dim == 0) throw std::invalid_argument("encoder dim must be >= 1");
  if (buckets == 0) throw std::invalid_argument("encoder buckets must be >= 1");
  Rng rng(seed);
  ModelParams m;
  m.query = init_encoder(dim, buckets, rng);
  m.example = init_encoder(dim, buckets, rng);
  return m;
}

std::uint32_t token_bucket(std::string_view token, std::size_t buckets) {
  return static_cast<std::uint32_t>(fnv1a64(token) % buckets);
}

TextActivation encode_text_forward(const EncoderParams& enc, std::string_view text) {
  TextActivation act;
  for (const auto& tok : tokenize(text)) act.buckets.push_back(token_bucket(tok, enc.buckets));
  const std::size_t d = enc.dim;
  act.pooled.assign(d, 0.0);
  if (!act.buckets.empty()) {
    for (auto b : act.buckets) {
      auto row = enc.row(b);
      for (std::size_t k = 0; k < d; ++k) act.pooled[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(act.buckets.size());
    for (auto& x : act.pooled) x *= inv;
  }
  act.out.resize(d);
  for (std::size_t i = 0; i < d; ++i) {
    double z = enc.bias[i];
    const double* w = enc.projection.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * act.pooled[j];
    act.out[i] = std::tanh(z);
  }
  return act;
}

Embedding encode_text(const EncoderParams& enc, std::string_view text) { return encode_text_forward(enc, text).out; }

MixedActivation encode_mixed_forward(const EncoderParams& enc, double alpha, double beta, std::string_view text,
                                     std::string_view tree_serialized) {
  MixedActivation act;
  act.text = encode_text_forward(enc, text);
  act.tree = encode_text_forward(enc, tree_serialized);
  act.out.resize(enc.dim);
  for (std::size_t k = 0; k < enc.dim; ++k) act.out[k] = alpha * act.text.out[k] + beta * act.tree.out[k];
  return act;
}

Embedding encode_query_text(const ModelParams& model, std::string_view text, std::string_view tree_serialized) {
  return encode_mixed_forward(model.query, model.alpha1, model.beta1, text, tree_serialized).out;
}

Embedding encode_example_text(const ModelParams& model, std::string_view text, std::string_view tree_serialized) {
  return encode_mixed_forward(model.example, model.alpha2, model.beta2, text, tree_serialized).out;
}

Embedding encode_query(const ModelParams& model, const Query& q, const SyntaxTree& tree) {
  return encode_query_text(model, q.text, serialize_preorder(tree));
}

Embedding encode_example(const ModelParams& model, const ExampleDoc& d, const SyntaxTree& tree) {
  return encode_example_text(model, d.text, serialize_preorder(tree));
}

double sim_tree(std::span<const double> qv, std::span<const double> dv) {
  if (qv.size() != dv.size())
    throw std::invalid_argument("embedding dimension mismatch: " + std::to_string(qv.size()) + " vs " +
                                std::to_string(dv.size()));
  double s = 0.0;
  for (std::size_t i = 0; i < qv.size(); ++i) s += qv[i] * dv[i];
  return s;
}

void EncoderGrad::reset(std::size_t dim) {
  embedding_rows.clear();
  projection.assign(dim * dim, 0.0);
  bias.assign(dim, 0.0);
}

void ModelGrad::reset(const ModelParams& model) {
  query.reset(model.query.dim);
  example.reset(model.example.dim);
  alpha1 = beta1 = alpha2 = beta2 = 0.0;
}

void encode_text_backward(const EncoderParams& enc, const TextActivation& act, std::span<const double> grad_out,
                          EncoderGrad& grad) {
  const std::size_t d = enc.dim;
  std::vector<double> dz(d);
  for (std::size_t i = 0; i < d; ++i) dz[i] = grad_out[i] * (1.0 - act.out[i] * act.out[i]);
  for (std::size_t i = 0; i < d; ++i) {
    grad.bias[i] += dz[i];
    double* gw = grad.projection.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) gw[j] += dz[i] * act.pooled[j];
  }
  if (act.buckets.empty()) return;
  std::vector<double> dp(d, 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double* w = enc.projection.data() + i * d;
    for (std::size_t j = 0; j < d; ++j) dp[j] += w[j] * dz[i];
  }
  const double inv = 1.0 / static_cast<double>(act.buckets.size());
  for (auto b : act.buckets) {
    auto& row = grad.embedding_rows[b];
    if (row.empty()) row.assign(d, 0.0);
    for (std::size_t k = 0; k < d; ++k) row[k] += dp[k] * inv;
  }
}

void encode_mixed_backward(const EncoderParams& enc, double alpha, double beta, const MixedActivation& act,
                           std::span<const double> grad_out, EncoderGrad& grad, double& grad_alpha,
                           double& grad_beta) {
  grad_alpha += sim_tree(grad_out, act.text.out);
  grad_beta += sim_tree(grad_out, act.tree.out);
  std::vector<double> g(grad_out.size());
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = alpha * grad_out[k];
  encode_text_backward(enc, act.text, g, grad);
  for (std::size_t k = 0; k < g.size(); ++k) g[k] = beta * grad_out[k];
  encode_text_backward(enc, act.tree, g, grad);
}

namespace {

void sgd_encoder(EncoderParams& enc, const EncoderGrad& g, double lr) {
  for (const auto& [bucket, row] : g.embedding_rows) {
    double* dst = enc.embedding.data() + static_cast<std::size_t>(bucket) * enc.dim;
    for (std::size_t k = 0; k < enc.dim; ++k) dst[k] -= lr * row[k];
  }
  for (std::size_t i = 0; i < enc.projection.size(); ++i) enc.projection[i] -= lr * g.projection[i];
  for (std::size_t i = 0; i < enc.bias.size(); ++i) enc.bias[i] -= lr * g.bias[i];
}

}  // namespace

void apply_sgd(ModelParams& model, const ModelGrad& grad, double learning_rate, bool freeze_tree_channel) {
  sgd_encoder(model.query, grad.query, learning_rate);
  sgd_encoder(model.example, grad.example, learning_rate);
  model.alpha1 -= learning_rate * grad.alpha1;
  model.alpha2 -= learning_rate * grad.alpha2;
  if (!freeze_tree_channel) {
    model.beta1 -= learning_rate * grad.beta1;
    model.beta2 -= learning_rate * grad.beta2;
  }
}

void AdamOptimizer::update(double* param, const double* g, Moments& mo, std::size_t n) {
  if (mo.m.empty()) mo.m.assign(n, 0.0), mo.v.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    mo.m[i] = b1_ * mo.m[i] + (1 - b1_) * g[i];
    mo.v[i] = b2_ * mo.v[i] + (1 - b2_) * g[i] * g[i];
    param[i] -= lr_ * (mo.m[i] / c1_) / (std::sqrt(mo.v[i] / c2_) + eps_);
  }
}

void AdamOptimizer::update_encoder(EncoderParams& enc, const EncoderGrad& g, EncoderState& st) {
  for (const auto& [bucket, row] : g.embedding_rows)
    update(enc.embedding.data() + static_cast<std::size_t>(bucket) * enc.dim, row.data(), st.rows[bucket], enc.dim);
  update(enc.projection.data(), g.projection.data(), st.projection, enc.projection.size());
  update(enc.bias.data(), g.bias.data(), st.bias, enc.bias.size());
}

void AdamOptimizer::step(ModelParams& model, const ModelGrad& grad, bool freeze_tree_channel) {
  ++t_;
  c1_ = 1 - std::pow(b1_, static_cast<double>(t_));
  c2_ = 1 - std::pow(b2_, static_cast<double>(t_));
  update_encoder(model.query, grad.query, query_);
  update_encoder(model.example, grad.example, example_);
  double p[4] = {model.alpha1, model.beta1, model.alpha2, model.beta2};
  const double g[4] = {grad.alpha1, freeze_tree_channel ? 0.0 : grad.beta1, grad.alpha2,
                       freeze_tree_channel ? 0.0 : grad.beta2};
  update(p, g, scalars_, 4);
  model.alpha1 = p[0];
  model.alpha2 = p[2];
  if (!freeze_tree_channel) {
    model.beta1 = p[1];
    model.beta2 = p[3];
  }
}

bool all_finite(const ModelParams& m) {
  for (const auto* e : {&m.query, &m.example})
    if (!finite(e->embedding) || !finite(e->projection) || !finite(e->bias)) return false;
  return std::isfinite(m.alpha1) && std::isfinite(m.beta1) && std::isfinite(m.alpha2) && std::isfinite(m.beta2);
}

std::string serialize_checkpoint(const ModelParams& m) {
  if (m.query.dim != m.example.dim || m.query.buckets != m.example.buckets)
    throw std::invalid_argument("query and example encoders must share dim and buckets");
  std::ostringstream os(std::ios::binary);
  BinWriter w(os);
  w.bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(kVersion);
  w.u64(m.query.dim);
  w.u64(m.query.buckets);
  w.u32(kHashFnv1a64);
  w.f64(m.alpha1);
  w.f64(m.beta1);
  w.f64(m.alpha2);
  w.f64(m.beta2);
  write_encoder(w, m.query);
  write_encoder(w, m.example);
  return os.str();
}

ModelParams deserialize_checkpoint(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  BinReader r(is);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw FormatError("not a checkpoint file");
  if (auto v = r.u32(); v != kVersion) throw FormatError("unsupported checkpoint version " + std::to_string(v));
  const auto dim = r.u64();
  const auto buckets = r.u64();
  if (dim == 0 || buckets == 0) throw FormatError("checkpoint has empty dimensions");
  if (bytes.size() != 8 + 4 + 8 + 8 + 4 + 32 + 2 * 8 * (buckets * dim + dim * dim + dim))
    throw FormatError("checkpoint size does not match its header");
  if (auto h = r.u32(); h != kHashFnv1a64) throw FormatError("unknown token hash id " + std::to_string(h));
  ModelParams m;
  m.alpha1 = r.f64();
  m.beta1 = r.f64();
  m.alpha2 = r.f64();
  m.beta2 = r.f64();
  m.query = read_encoder(r, dim, buckets);
  m.example = read_encoder(r, dim, buckets);
  return m;
}

std::uint64_t model_fingerprint(const ModelParams& model) { return fnv1a64(serialize_checkpoint(model)); }

std::uint64_t save_checkpoint(const std::string& path, const ModelParams& model) {
  auto bytes = serialize_checkpoint(model);
  write_file_atomic(path, bytes);
  return fnv1a64(bytes);
}

ModelParams load_checkpoint(const std::string& path, std::uint64_t* fingerprint) {
  auto bytes = read_file(path);
  if (fingerprint) *fingerprint = fnv1a64(bytes);
  return deserialize_checkpoint(bytes);
}

}  // namespace icr
