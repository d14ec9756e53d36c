#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "icr/generator_client.hpp"
#include "icr/retrieval.hpp"

namespace icr {

// ---- metrics (all in [0, 1]) ---------------------------------------------------

/// Corpus BLEU-4 over pipeline tokens: uniform weights, brevity penalty, and
/// add-one smoothing of the 2..4-gram counts; 0 when nothing matches.
double bleu4(const std::vector<std::string>& candidates, const std::vector<std::string>& references);
/// Mean per-sample LCS F-measure over pipeline tokens, beta = 1.2.
double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::string>& references);
double rouge_l_single(const std::string& candidate, const std::string& reference, double beta = 1.2);
/// Corpus chrF: character 1..6-grams with whitespace removed, beta = 2,
/// statistics summed over samples, precision/recall averaged over the orders
/// present in both sides.
double chrf(const std::vector<std::string>& candidates, const std::vector<std::string>& references);

/// Drops trailing exact repeats of the last block of lines, keeping one copy.
std::string trim_repetition(const std::string& text);

struct SampleMetrics {
  std::string sample_id;
  double bleu4 = 0, rouge_l = 0, chrf = 0;
};

struct MetricReport {
  std::size_t samples = 0;
  std::size_t failed = 0;
  double bleu4 = 0, rouge_l = 0, chrf = 0;
  std::vector<SampleMetrics> per_sample;

  std::string to_json() const;
};

MetricReport score_outputs(const std::vector<std::string>& ids, const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references);

// ---- generation harness ----------------------------------------------------------

class Generator {
 public:
  virtual ~Generator() = default;
  virtual std::string name() const = 0;
  /// `test` carries the gold output only for mocks that need it; prompts never do.
  virtual std::string generate(const PromptPlan& plan, const Sample& test) = 0;
};

/// Returns the gold output (metric ceiling).
class EchoGenerator : public Generator {
 public:
  std::string name() const override { return "echo"; }
  std::string generate(const PromptPlan&, const Sample& test) override { return test.output; }
};

/// Returns the output of the most similar admitted exemplar.
class NearestExemplarGenerator : public Generator {
 public:
  explicit NearestExemplarGenerator(const ExampleStore& store) : store_(store) {}
  std::string name() const override { return "nearest-exemplar"; }
  std::string generate(const PromptPlan& plan, const Sample& test) override;

 private:
  const ExampleStore& store_;
};

/// Returns the output of a corpus example drawn from (seed, sample id).
class RandomExemplarGenerator : public Generator {
 public:
  RandomExemplarGenerator(const ExampleStore& store, std::uint64_t seed) : store_(store), seed_(seed) {}
  std::string name() const override { return "random-exemplar"; }
  std::string generate(const PromptPlan& plan, const Sample& test) override;

 private:
  const ExampleStore& store_;
  std::uint64_t seed_;
};

class RemoteGenerator : public Generator {
 public:
  RemoteGenerator(std::shared_ptr<GeneratorClient> client, int max_tokens, std::vector<std::string> stop = {"\n\n"})
      : client_(std::move(client)), max_tokens_(max_tokens), stop_(std::move(stop)) {}
  std::string name() const override { return "remote:" + client_->model_name(); }
  std::string generate(const PromptPlan& plan, const Sample&) override {
    return client_->generate(plan.text, max_tokens_, stop_);
  }

 private:
  std::shared_ptr<GeneratorClient> client_;
  int max_tokens_;
  std::vector<std::string> stop_;
};

struct GenerationRecord {
  std::string sample_id;
  std::string prompt_fingerprint;
  std::vector<std::string> admitted;  // sorted ids
  std::vector<std::string> layout;    // ids front to back
  std::string output;
  bool failed = false;
  std::string error;
};

struct GenerationRun {
  std::string run_id;
  std::string generator;
  std::string ordering;
  std::vector<GenerationRecord> records;

  std::string to_jsonl() const;
};

struct EvalResult {
  MetricReport report;
  GenerationRun run;
};

/// retrieve_for_test -> generate -> trim_repetition -> score, per test sample.
/// Generator failures mark the sample failed and exclude it from aggregation.
EvalResult evaluate_run(const std::vector<Sample>& tests, const TaskRegistry& registry, const ModelParams& model,
                        const DenseIndex& index, const ExampleStore& store, Generator& generator,
                        const RetrieveConfig& cfg, std::size_t max_in_flight = 1, const std::string& run_id = "run");

struct OrderAblation {
  std::vector<std::pair<std::string, EvalResult>> runs;  // ordering name -> result
  bool admitted_sets_equal = true;

  std::string to_json() const;
};

OrderAblation order_ablation(const std::vector<Sample>& tests, const TaskRegistry& registry, const ModelParams& model,
                             const DenseIndex& index, const ExampleStore& store, Generator& generator,
                             RetrieveConfig cfg, const std::vector<OrderingSpec>& orderings,
                             std::size_t max_in_flight = 1);

// ---- oracle-based retrieval quality ----------------------------------------------

/// Kendall tau-b; 0 when either side is constant.
double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y);

using Top1Fn = std::function<std::string(const Sample&)>;

/// Fraction of held-out samples whose top-1 retrieved example attains the
/// maximum oracle score over the whole store.
double oracle_agreement(const std::vector<Sample>& heldout, const TaskRegistry& registry, const ExampleStore& store,
                        const Top1Fn& top1);

/// Mean over held-out samples of tau-b between model similarities and oracle
/// scores on a fixed seeded subset of `per_query` store examples.
double mean_kendall_tau(const std::vector<Sample>& heldout, const TaskRegistry& registry, const ExampleStore& store,
                        const ModelParams& model, std::size_t per_query, std::uint64_t seed);

Top1Fn dense_top1(const ModelParams& model, const DenseIndex& index, const TaskRegistry& registry);
Top1Fn bm25_top1(const Bm25Index& bm25, const TaskRegistry& registry);

}  // namespace icr
