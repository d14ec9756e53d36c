#pragma once

#include <atomic>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "icr/corpus.hpp"
#include "icr/lexical.hpp"

namespace icr {

struct ScoredCandidate {
  std::string sample_id;
  double score = 0.0;
  int rank = 0;
  bool operator==(const ScoredCandidate&) const = default;
};

/// Ranks parallel to the input: higher score gets the smaller rank, exact ties
/// are ordered by sample_id so ranks are always a permutation of 1..K.
std::vector<ScoredCandidate> rank_candidates(const std::vector<ScoredId>& scored);

/// Per-token log-probabilities of `continuation` given `context`.
class LogprobSource {
 public:
  virtual ~LogprobSource() = default;
  virtual std::string model_name() const = 0;
  virtual std::vector<double> continuation_logprobs(const std::string& context, const std::string& continuation) = 0;
};

/// Every pipeline token of the continuation gets the same log-probability.
class ConstantLogprobs : public LogprobSource {
 public:
  explicit ConstantLogprobs(double logprob, std::string name = "constant") : logprob_(logprob), name_(std::move(name)) {}
  std::string model_name() const override { return name_; }
  std::vector<double> continuation_logprobs(const std::string&, const std::string& continuation) override;

 private:
  double logprob_;
  std::string name_;
};

class Scorer {
 public:
  virtual ~Scorer() = default;
  virtual std::string model_name() const = 0;
  /// S(d) for one unmasked query and one candidate exemplar.
  virtual double score(const TaskSpec& task, const Query& query, const Sample& query_sample,
                       const ExampleDoc& candidate, const ExemplarTemplate& candidate_template) = 0;
};

/// Single-exemplar scoring prompt: instruction, exemplar, open input slot.
std::string scoring_context(const TaskSpec& task, const Sample& query_sample, const ExampleDoc& candidate,
                            const ExemplarTemplate& candidate_template);

/// Mean log-probability of the gold output under a generator.
class LlmScorer : public Scorer {
 public:
  explicit LlmScorer(std::shared_ptr<LogprobSource> source) : source_(std::move(source)) {}
  std::string model_name() const override { return source_->model_name(); }
  double score(const TaskSpec& task, const Query& query, const Sample& query_sample, const ExampleDoc& candidate,
               const ExemplarTemplate& candidate_template) override;

 private:
  std::shared_ptr<LogprobSource> source_;
};

inline constexpr double kOracleEpsilon = 1e-6;

/// Multiset token F1 between two texts (pipeline tokenizer). Both empty -> 1.
double token_f1(const std::string& prediction, const std::string& gold);
/// ln(F1(candidate output, gold) + eps).
double oracle_score(const Query& query, const ExampleDoc& candidate);

class OracleScorer : public Scorer {
 public:
  std::string model_name() const override { return "oracle-f1"; }
  double score(const TaskSpec&, const Query& query, const Sample&, const ExampleDoc& candidate,
               const ExemplarTemplate&) override {
    return oracle_score(query, candidate);
  }
};

/// Append-only JSONL cache keyed by (query id, candidate id, model).
class ScoreCache {
 public:
  ScoreCache() = default;  // in-memory only
  explicit ScoreCache(std::string path);

  std::optional<double> get(const std::string& query_id, const std::string& candidate_id,
                            const std::string& model) const;
  void put(const std::string& query_id, const std::string& candidate_id, const std::string& model, double score);
  std::size_t size() const;

 private:
  using Key = std::tuple<std::string, std::string, std::string>;
  std::string path_;
  mutable std::mutex mu_;
  std::map<Key, double> entries_;
};

struct ScoringError : std::runtime_error {
  ScoringError(std::string query_id, std::string candidate_id, const std::string& what)
      : std::runtime_error("scoring failed for query " + query_id + ", candidate " + candidate_id + ": " + what),
        query_id(std::move(query_id)),
        candidate_id(std::move(candidate_id)) {}
  std::string query_id;
  std::string candidate_id;
};

struct ScoringStats {
  std::size_t requested = 0;
  std::size_t cache_hits = 0;
  std::size_t peak_in_flight = 0;
};

/// Scores and ranks one query's candidates with at most `max_in_flight`
/// concurrent scorer calls. Completed scores are cached before any failure is
/// rethrown, so an interrupted round resumes where it stopped.
std::vector<ScoredCandidate> score_candidates(Scorer& scorer, ScoreCache& cache, const TaskSpec& task,
                                              const Sample& query_sample, const std::vector<const ExampleDoc*>& cands,
                                              const std::vector<const ExemplarTemplate*>& cand_templates,
                                              std::size_t max_in_flight, ScoringStats* stats = nullptr);

}  // namespace icr
