#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "icr/corpus.hpp"
#include "icr/encoder.hpp"
#include "icr/lexical.hpp"
#include "icr/syntax.hpp"

namespace icr {

/// The example corpus with parsed trees, addressable by sample_id.
class ExampleStore {
 public:
  ExampleStore() = default;
  ExampleStore(const TaskRegistry& registry, const std::vector<Sample>& samples,
               const AdapterRegistry& adapters = default_adapters());

  std::size_t size() const { return docs_.size(); }
  const std::vector<ExampleDoc>& docs() const { return docs_; }
  const std::vector<Sample>& samples() const { return samples_; }
  const ExampleDoc& doc(std::size_t i) const { return docs_[i]; }
  const std::string& tree(std::size_t i) const { return trees_[i]; }  // serialized example tree
  const std::vector<std::string>& trees() const { return trees_; }
  std::size_t degraded_count() const { return degraded_; }
  /// Index of a sample id, or size() when absent.
  std::size_t find(const std::string& sample_id) const;
  const ExemplarTemplate& exemplar_template(std::size_t i) const { return templates_[i]; }

 private:
  std::vector<Sample> samples_;
  std::vector<ExampleDoc> docs_;
  std::vector<std::string> trees_;
  std::vector<ExemplarTemplate> templates_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::size_t degraded_ = 0;
};

/// Encoded query side of a sample: masked text and the serialized query tree.
struct QueryView {
  Query query;
  std::string tree;
};

QueryView make_query_view(const TaskSpec& task, const Sample& sample, bool masked = true,
                          const AdapterRegistry& adapters = default_adapters());

/// Row-major float32 matrix of example embeddings plus sample ids.
class DenseIndex {
 public:
  DenseIndex() = default;
  DenseIndex(std::size_t dim, std::uint64_t fingerprint) : dim_(dim), fingerprint_(fingerprint) {}

  void add(const std::string& sample_id, std::span<const double> row);

  std::size_t rows() const { return ids_.size(); }
  std::size_t dim() const { return dim_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  const std::vector<std::string>& ids() const { return ids_; }
  std::span<const float> data() const { return data_; }
  std::span<const float> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }

  /// Exact top-L by inner product, ties by sample_id. L is clamped to rows().
  std::vector<ScoredId> search(std::span<const double> query, std::size_t top_l,
                               const std::string& exclude_id = {}) const;
  std::vector<ScoredId> search_serial(std::span<const double> query, std::size_t top_l,
                                      const std::string& exclude_id = {}) const;

  std::string serialize() const;
  static DenseIndex deserialize(const std::string& bytes);
  void save(const std::string& path) const;
  static DenseIndex load(const std::string& path);

  bool operator==(const DenseIndex&) const = default;

 private:
  std::vector<ScoredId> search_impl(std::span<const double> query, std::size_t top_l, const std::string& exclude_id,
                                    bool parallel) const;

  std::size_t dim_ = 0;
  std::uint64_t fingerprint_ = 0;
  std::vector<std::string> ids_;
  std::vector<float> data_;
};

DenseIndex encode_corpus(const ModelParams& model, const ExampleStore& store);
DenseIndex encode_corpus(const ModelParams& model, const std::vector<ExampleDoc>& docs,
                         const std::vector<std::string>& trees);

// ---- prompt assembly ----------------------------------------------------------

enum class Ordering { Similarity, Reverse, Random };

struct OrderingSpec {
  Ordering kind = Ordering::Similarity;
  std::uint64_t seed = 0;  // used by Random

  static OrderingSpec parse(const std::string& s);  // similarity | reverse | random[:seed]
  std::string str() const;
};

using TokenCounter = std::function<std::size_t(std::string_view)>;
std::size_t pipeline_token_count(std::string_view text);

inline constexpr std::size_t kDefaultBudget = 2048;

struct RankedExample {
  std::string sample_id;
  double sim = 0.0;
  std::string text;  // rendered exemplar
};

struct PromptExemplar {
  std::string sample_id;
  double sim = 0.0;
  std::string text;
  std::size_t tokens = 0;
};

struct PromptPlan {
  std::string instruction;
  std::vector<PromptExemplar> exemplars;  // layout order, front to back
  std::string input;
  std::size_t instruction_tokens = 0;
  std::size_t input_tokens = 0;
  std::size_t separator_tokens = 0;  // total charged for segment separators
  std::size_t budget = kDefaultBudget;
  std::size_t reserved_output = 0;
  OrderingSpec ordering;
  std::string text;
  std::size_t total_tokens = 0;

  /// Admitted sample ids sorted, independent of layout.
  std::vector<std::string> admitted_set() const;
  std::uint64_t fingerprint() const { return fnv1a64_text(); }
  std::string to_json() const;

 private:
  std::uint64_t fnv1a64_text() const;
};

struct BudgetError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Admits whole exemplars from `ranked` (descending similarity) while the
/// running total fits, stopping at the first that does not, then lays them
/// out per `ordering`. Throws BudgetError("input exceeds budget") when the
/// instruction and input alone do not fit.
PromptPlan assemble_prompt(const std::string& instruction, const std::vector<RankedExample>& ranked,
                           const std::string& input, std::size_t budget, std::size_t reserved_output,
                           const OrderingSpec& ordering, const TokenCounter& counter = pipeline_token_count);

struct RetrieveConfig {
  std::size_t top_l = 20;
  std::size_t budget = kDefaultBudget;
  std::size_t reserved_output = 128;
  OrderingSpec ordering;
};

struct RetrievalResult {
  std::vector<ScoredId> hits;
  PromptPlan plan;
};

/// mask -> encode_query -> search -> assemble_prompt.
RetrievalResult retrieve_for_test(const ModelParams& model, const DenseIndex& index, const ExampleStore& store,
                                  const TaskRegistry& registry, const Sample& test_sample, const RetrieveConfig& cfg,
                                  const TokenCounter& counter = pipeline_token_count);

}  // namespace icr
