#include "icr/feedback.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>
#include <unordered_map>

#include "icr/binio.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

std::vector<ScoredCandidate> rank_candidates(const std::vector<ScoredId>& scored) {
  if (scored.empty()) throw std::invalid_argument("rank_candidates: empty candidate set");
  for (const auto& s : scored)
    if (std::isnan(s.score)) throw std::invalid_argument("rank_candidates: NaN score for " + s.sample_id);
  std::vector<std::size_t> order(scored.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return ranks_before(scored[a], scored[b]); });
  std::vector<ScoredCandidate> out(scored.size());
  for (std::size_t pos = 0; pos < order.size(); ++pos) {
    const auto& s = scored[order[pos]];
    out[order[pos]] = {s.sample_id, s.score, static_cast<int>(pos) + 1};
  }
  return out;
}

std::vector<double> ConstantLogprobs::continuation_logprobs(const std::string&, const std::string& continuation) {
  return std::vector<double>(tokenize(continuation).size(), logprob_);
}

std::string scoring_context(const TaskSpec& task, const Sample& query_sample, const ExampleDoc& candidate,
                            const ExemplarTemplate& candidate_template) {
  std::string ctx = task.instruction();
  ctx += kPromptSeparator;
  ctx += render_exemplar(candidate_template, candidate.input, candidate.output);
  ctx += kPromptSeparator;
  ctx += render_input(task.exemplar_template(), query_sample.input);
  return ctx;
}

double LlmScorer::score(const TaskSpec& task, const Query& query, const Sample& query_sample,
                        const ExampleDoc& candidate, const ExemplarTemplate& candidate_template) {
  if (!query.gold) throw std::invalid_argument("scoring needs an unmasked query (" + query.sample_id + ")");
  auto lps = source_->continuation_logprobs(scoring_context(task, query_sample, candidate, candidate_template),
                                            *query.gold);
  if (lps.empty()) throw std::runtime_error("generator returned no continuation tokens");
  double sum = 0.0;
  for (double lp : lps) sum += lp;
  return sum / static_cast<double>(lps.size());
}

double token_f1(const std::string& prediction, const std::string& gold) {
  const auto p = tokenize(prediction);
  const auto g = tokenize(gold);
  if (p.empty() && g.empty()) return 1.0;
  if (p.empty() || g.empty()) return 0.0;
  std::unordered_map<std::string, int> counts;
  for (const auto& t : g) ++counts[t];
  std::size_t common = 0;
  for (const auto& t : p) {
    auto it = counts.find(t);
    if (it != counts.end() && it->second > 0) {
      --it->second;
      ++common;
    }
  }
  if (common == 0) return 0.0;
  const double precision = static_cast<double>(common) / static_cast<double>(p.size());
  const double recall = static_cast<double>(common) / static_cast<double>(g.size());
  return 2.0 * precision * recall / (precision + recall);
}

double oracle_score(const Query& query, const ExampleDoc& candidate) {
  if (!query.gold) throw std::invalid_argument("oracle scoring needs an unmasked query (" + query.sample_id + ")");
  return std::log(token_f1(candidate.output, *query.gold) + kOracleEpsilon);
}

ScoreCache::ScoreCache(std::string path) : path_(std::move(path)) {
  std::ifstream in(path_);
  if (!in) return;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      entries_[{j.at("query").get<std::string>(), j.at("candidate").get<std::string>(),
                j.at("model").get<std::string>()}] = j.at("score").get<double>();
    } catch (const json::exception&) {
      // A torn final line from an interrupted run is dropped; anything else is corruption.
      if (in.peek() != EOF) throw FormatError(path_ + ": line " + std::to_string(lineno) + ": malformed cache record");
    }
  }
}

std::optional<double> ScoreCache::get(const std::string& query_id, const std::string& candidate_id,
                                      const std::string& model) const {
  std::lock_guard lock(mu_);
  auto it = entries_.find({query_id, candidate_id, model});
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void ScoreCache::put(const std::string& query_id, const std::string& candidate_id, const std::string& model,
                     double score) {
  std::lock_guard lock(mu_);
  entries_[{query_id, candidate_id, model}] = score;
  if (path_.empty()) return;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw std::runtime_error("cannot append to score cache " + path_);
  json j = {{"query", query_id}, {"candidate", candidate_id}, {"model", model}, {"score", score}};
  out << j.dump() << '\n';
}

std::size_t ScoreCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

std::vector<ScoredCandidate> score_candidates(Scorer& scorer, ScoreCache& cache, const TaskSpec& task,
                                              const Sample& query_sample, const std::vector<const ExampleDoc*>& cands,
                                              const std::vector<const ExemplarTemplate*>& cand_templates,
                                              std::size_t max_in_flight, ScoringStats* stats) {
  if (max_in_flight == 0) throw std::invalid_argument("max_in_flight must be >= 1");
  if (cands.size() != cand_templates.size()) throw std::invalid_argument("candidates and templates differ in size");
  const Query query = build_query(task, query_sample);
  const std::string model = scorer.model_name();

  std::vector<ScoredId> scored(cands.size());
  std::vector<std::size_t> pending;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    scored[i].sample_id = cands[i]->sample_id;
    if (auto hit = cache.get(query.sample_id, cands[i]->sample_id, model)) {
      scored[i].score = *hit;
      if (stats) ++stats->cache_hits;
    } else {
      pending.push_back(i);
    }
  }
  if (stats) stats->requested += pending.size();

  std::vector<char> done(cands.size(), 0);
  std::atomic<std::size_t> next{0};
  std::atomic<std::size_t> in_flight{0};
  std::atomic<std::size_t> peak{0};
  std::mutex err_mu;
  std::optional<ScoringError> first_error;
  auto worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= pending.size()) return;
      {
        std::lock_guard lock(err_mu);
        if (first_error) return;
      }
      const std::size_t i = pending[k];
      const std::size_t now = ++in_flight;
      for (std::size_t p = peak.load(); now > p && !peak.compare_exchange_weak(p, now);) {
      }
      try {
        const double s = scorer.score(task, query, query_sample, *cands[i], *cand_templates[i]);
        --in_flight;
        scored[i].score = s;
        done[i] = 1;
      } catch (const std::exception& e) {
        --in_flight;
        std::lock_guard lock(err_mu);
        if (!first_error) first_error.emplace(query.sample_id, cands[i]->sample_id, e.what());
      }
    }
  };
  const std::size_t n_threads = std::min(max_in_flight, pending.size());
  if (n_threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (stats) stats->peak_in_flight = std::max<std::size_t>(stats->peak_in_flight, peak.load());
  // candidate order keeps the cache file independent of completion order
  for (auto i : pending)
    if (done[i]) cache.put(query.sample_id, cands[i]->sample_id, model, scored[i].score);
  if (first_error) throw *first_error;
  return rank_candidates(scored);
}

}  // namespace icr
