#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "icr/corpus.hpp"
#include "icr/syntax.hpp"

namespace icr {

using Embedding = std::vector<double>;

inline constexpr std::size_t kDefaultDim = 64;
inline constexpr std::size_t kDefaultBuckets = 65536;
inline constexpr std::uint32_t kHashFnv1a64 = 1;  // hash-id recorded in checkpoints

/// Hashed-bag text encoder: mean of bucket embeddings -> affine -> tanh.
struct EncoderParams {
  std::size_t dim = 0;
  std::size_t buckets = 0;
  std::vector<double> embedding;   // buckets x dim, row-major
  std::vector<double> projection;  // dim x dim, row-major (out x in)
  std::vector<double> bias;        // dim

  std::span<const double> row(std::uint32_t bucket) const { return {embedding.data() + bucket * dim, dim}; }
  bool operator==(const EncoderParams&) const = default;
};

/// Two independent encoders and the four mixing scalars:
///   query   = alpha1 * E_q(text) + beta1 * E_q(tree)
///   example = alpha2 * E_d(text) + beta2 * E_d(tree)
struct ModelParams {
  EncoderParams query;
  EncoderParams example;
  double alpha1 = 1.0, beta1 = 1.0, alpha2 = 1.0, beta2 = 1.0;
  bool operator==(const ModelParams&) const = default;
};

ModelParams init_model(std::size_t dim, std::size_t buckets, std::uint64_t seed);

std::uint32_t token_bucket(std::string_view token, std::size_t buckets);

Embedding encode_text(const EncoderParams& enc, std::string_view text);
Embedding encode_query(const ModelParams& model, const Query& q, const SyntaxTree& tree);
Embedding encode_example(const ModelParams& model, const ExampleDoc& d, const SyntaxTree& tree);
/// Same mixing on pre-serialized tree strings.
Embedding encode_query_text(const ModelParams& model, std::string_view text, std::string_view tree_serialized);
Embedding encode_example_text(const ModelParams& model, std::string_view text, std::string_view tree_serialized);

double sim_tree(std::span<const double> qv, std::span<const double> dv);

// ---- forward records and closed-form backward --------------------------------

struct TextActivation {
  std::vector<std::uint32_t> buckets;  // one per token, in token order
  std::vector<double> pooled;          // mean of bucket rows (zeros when no tokens)
  Embedding out;                       // tanh(W pooled + b)
};

TextActivation encode_text_forward(const EncoderParams& enc, std::string_view text);

struct MixedActivation {
  TextActivation text;
  TextActivation tree;
  Embedding out;
};

MixedActivation encode_mixed_forward(const EncoderParams& enc, double alpha, double beta, std::string_view text,
                                     std::string_view tree_serialized);

struct EncoderGrad {
  std::map<std::uint32_t, std::vector<double>> embedding_rows;  // touched rows only
  std::vector<double> projection;
  std::vector<double> bias;

  void reset(std::size_t dim);
};

struct ModelGrad {
  EncoderGrad query;
  EncoderGrad example;
  double alpha1 = 0, beta1 = 0, alpha2 = 0, beta2 = 0;

  void reset(const ModelParams& model);
};

/// Accumulates d(loss)/d(params) given d(loss)/d(out).
void encode_text_backward(const EncoderParams& enc, const TextActivation& act, std::span<const double> grad_out,
                          EncoderGrad& grad);

/// Accumulates encoder and scalar gradients for one mixed encoding.
void encode_mixed_backward(const EncoderParams& enc, double alpha, double beta, const MixedActivation& act,
                           std::span<const double> grad_out, EncoderGrad& grad, double& grad_alpha,
                           double& grad_beta);

void apply_sgd(ModelParams& model, const ModelGrad& grad, double learning_rate, bool freeze_tree_channel = false);

/// Adam with lazy embedding moments: only rows present in a gradient have
/// state and are updated, so untouched buckets cost nothing.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double learning_rate, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(learning_rate), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(ModelParams& model, const ModelGrad& grad, bool freeze_tree_channel = false);
  std::uint64_t steps() const { return t_; }

 private:
  struct Moments {
    std::vector<double> m, v;
  };
  struct EncoderState {
    std::map<std::uint32_t, Moments> rows;
    Moments projection, bias;
  };
  void update(double* param, const double* g, Moments& mo, std::size_t n);
  void update_encoder(EncoderParams& enc, const EncoderGrad& g, EncoderState& st);

  double lr_, b1_, b2_, eps_;
  std::uint64_t t_ = 0;
  double c1_ = 1, c2_ = 1;  // bias corrections for the current step
  EncoderState query_, example_;
  Moments scalars_;  // alpha1, beta1, alpha2, beta2
};

bool all_finite(const ModelParams& model);

// ---- checkpoints -------------------------------------------------------------

std::string serialize_checkpoint(const ModelParams& model);
ModelParams deserialize_checkpoint(const std::string& bytes);
/// Writes model.bin; returns the fingerprint (FNV-1a 64 of the file bytes).
std::uint64_t save_checkpoint(const std::string& path, const ModelParams& model);
ModelParams load_checkpoint(const std::string& path, std::uint64_t* fingerprint = nullptr);
std::uint64_t model_fingerprint(const ModelParams& model);

}  // namespace icr
