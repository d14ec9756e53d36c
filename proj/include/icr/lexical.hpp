#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "icr/corpus.hpp"

namespace icr {

/// Lowercased word pieces: split on whitespace and punctuation, at
/// camelCase / acronym boundaries, and between letter and digit runs.
/// Bytes >= 0x80 are treated as caseless letters.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct ScoredId {
  std::string sample_id;
  double score = 0.0;
  bool operator==(const ScoredId&) const = default;
};

/// Score descending, then sample_id ascending.
bool ranks_before(const ScoredId& a, const ScoredId& b);

/// Query terms with multiplicity, in ascending term order. Both the index and
/// brute-force recounts iterate terms in this order so scores agree bitwise.
std::vector<std::pair<std::string, std::uint32_t>> query_terms(const std::vector<std::string>& tokens);

double bm25_idf(std::size_t doc_count, std::size_t df);
double bm25_term_score(double idf, std::uint32_t tf, std::uint32_t doc_len, double avgdl, const Bm25Params& p);

class Bm25Index {
 public:
  struct Posting {
    std::uint32_t doc;
    std::uint32_t tf;
  };

  static Bm25Index build(const std::vector<ExampleDoc>& docs, Bm25Params params = {});

  std::size_t doc_count() const { return ids_.size(); }
  double avgdl() const { return avgdl_; }
  const Bm25Params& params() const { return params_; }
  const std::vector<std::string>& ids() const { return ids_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return lengths_; }
  std::size_t df(const std::string& term) const;
  std::uint32_t tf(const std::string& term, std::size_t doc) const;
  std::size_t vocabulary_size() const { return terms_.size(); }

  /// Score every document; the parallel and serial paths return identical values.
  std::vector<double> score_all(const std::vector<std::string>& query_tokens) const;
  std::vector<double> score_all_serial(const std::vector<std::string>& query_tokens) const;

  std::vector<ScoredId> topk(const std::vector<std::string>& query_tokens, std::size_t k,
                             const std::optional<std::string>& exclude_id = std::nullopt) const;

  void save(const std::string& path) const;
  static Bm25Index load(const std::string& path);
  std::string serialize() const;
  static Bm25Index deserialize(const std::string& bytes);

 private:
  struct ResolvedTerm {
    double idf;
    std::uint32_t qtf;
    const std::vector<Posting>* postings;
  };
  std::vector<ResolvedTerm> resolve(const std::vector<std::string>& query_tokens) const;

  Bm25Params params_;
  std::vector<std::string> ids_;
  std::vector<std::uint32_t> lengths_;
  double avgdl_ = 0.0;
  std::vector<std::string> terms_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
  std::vector<std::vector<Posting>> postings_;  // per term, sorted by doc
};

}  // namespace icr
