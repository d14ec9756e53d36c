#include "icr/lexical.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

#include <omp.h>

#include "icr/binio.hpp"
#include "icr/kernels.hpp"

namespace icr {

namespace {

enum class CharClass { Upper, Lower, Digit, Sep };

CharClass classify(unsigned char c) {
  if (c >= 'A' && c <= 'Z') return CharClass::Upper;
  if ((c >= 'a' && c <= 'z') || c >= 0x80) return CharClass::Lower;
  if (c >= '0' && c <= '9') return CharClass::Digit;
  return CharClass::Sep;
}

constexpr char kMagic[8] = {'I', 'C', 'R', 'B', 'M', '2', '5', '\0'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  const std::size_t n = text.size();
  for (std::size_t i = 0; i < n; ++i) {
    auto c = static_cast<unsigned char>(text[i]);
    CharClass cls = classify(c);
    if (cls == CharClass::Sep) {
      flush();
      continue;
    }
    if (!cur.empty()) {
      CharClass prev = classify(static_cast<unsigned char>(text[i - 1]));
      bool boundary = false;
      if ((prev == CharClass::Digit) != (cls == CharClass::Digit)) boundary = true;
      if (prev == CharClass::Lower && cls == CharClass::Upper) boundary = true;
      // "HTTPServer": split before the last capital of an acronym run
      if (prev == CharClass::Upper && cls == CharClass::Upper && i + 1 < n &&
          classify(static_cast<unsigned char>(text[i + 1])) == CharClass::Lower &&
          static_cast<unsigned char>(text[i + 1]) < 0x80)
        boundary = true;
      if (boundary) flush();
    }
    cur.push_back(cls == CharClass::Upper ? static_cast<char>(c - 'A' + 'a') : static_cast<char>(c));
  }
  flush();
  return out;
}

bool ranks_before(const ScoredId& a, const ScoredId& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.sample_id < b.sample_id;
}

std::vector<std::pair<std::string, std::uint32_t>> query_terms(const std::vector<std::string>& tokens) {
  std::map<std::string, std::uint32_t> counts;
  for (const auto& t : tokens) ++counts[t];
  return {counts.begin(), counts.end()};
}

double bm25_idf(std::size_t doc_count, std::size_t df) {
  const double n = static_cast<double>(doc_count);
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double bm25_term_score(double idf, std::uint32_t tf, std::uint32_t doc_len, double avgdl, const Bm25Params& p) {
  const double f = static_cast<double>(tf);
  const double norm = p.k1 * (1.0 - p.b + p.b * static_cast<double>(doc_len) / avgdl);
  return idf * (f * (p.k1 + 1.0)) / (f + norm);
}

Bm25Index Bm25Index::build(const std::vector<ExampleDoc>& docs, Bm25Params params) {
  if (docs.empty()) throw std::invalid_argument("cannot build a BM25 index over an empty corpus");
  Bm25Index idx;
  idx.params_ = params;
  std::map<std::string, std::vector<Posting>> postings;
  std::uint64_t total_len = 0;
  for (std::uint32_t d = 0; d < docs.size(); ++d) {
    auto toks = tokenize(docs[d].text);
    idx.ids_.push_back(docs[d].sample_id);
    idx.lengths_.push_back(static_cast<std::uint32_t>(toks.size()));
    total_len += toks.size();
    std::map<std::string, std::uint32_t> tf;
    for (auto& t : toks) ++tf[t];
    for (auto& [term, count] : tf) postings[term].push_back({d, count});
  }
  idx.avgdl_ = static_cast<double>(total_len) / static_cast<double>(docs.size());
  for (auto& [term, plist] : postings) {
    idx.term_ids_.emplace(term, static_cast<std::uint32_t>(idx.terms_.size()));
    idx.terms_.push_back(term);
    idx.postings_.push_back(std::move(plist));
  }
  return idx;
}

std::size_t Bm25Index::df(const std::string& term) const {
  auto it = term_ids_.find(term);
  return it == term_ids_.end() ? 0 : postings_[it->second].size();
}

std::uint32_t Bm25Index::tf(const std::string& term, std::size_t doc) const {
  auto it = term_ids_.find(term);
  if (it == term_ids_.end()) return 0;
  const auto& pl = postings_[it->second];
  auto p = std::lower_bound(pl.begin(), pl.end(), doc, [](const Posting& x, std::size_t d) { return x.doc < d; });
  return (p != pl.end() && p->doc == doc) ? p->tf : 0;
}

std::vector<Bm25Index::ResolvedTerm> Bm25Index::resolve(const std::vector<std::string>& query_tokens) const {
  std::vector<ResolvedTerm> out;
  for (const auto& [term, qtf] : query_terms(query_tokens)) {
    auto it = term_ids_.find(term);
    if (it == term_ids_.end()) continue;
    const auto& pl = postings_[it->second];
    out.push_back({bm25_idf(ids_.size(), pl.size()), qtf, &pl});
  }
  return out;
}

std::vector<double> Bm25Index::score_all_serial(const std::vector<std::string>& query_tokens) const {
  std::vector<double> scores(ids_.size(), 0.0);
  for (const auto& rt : resolve(query_tokens)) {
    for (const auto& p : *rt.postings) {
      scores[p.doc] += static_cast<double>(rt.qtf) * bm25_term_score(rt.idf, p.tf, lengths_[p.doc], avgdl_, params_);
    }
  }
  return scores;
}

std::vector<double> Bm25Index::score_all(const std::vector<std::string>& query_tokens) const {
  const auto terms = resolve(query_tokens);
  const std::size_t n = ids_.size();
  std::vector<double> scores(n, 0.0);
  // Each thread owns a contiguous doc range and walks every posting list in
  // term order, so a doc's additions happen in the same order as the serial path.
#pragma omp parallel
  {
    const std::size_t nt = static_cast<std::size_t>(omp_get_num_threads());
    const std::size_t t = static_cast<std::size_t>(omp_get_thread_num());
    const std::size_t lo = n * t / nt, hi = n * (t + 1) / nt;
    for (const auto& rt : terms) {
      const auto& pl = *rt.postings;
      auto it = std::lower_bound(pl.begin(), pl.end(), lo, [](const Posting& x, std::size_t d) { return x.doc < d; });
      for (; it != pl.end() && it->doc < hi; ++it) {
        scores[it->doc] += static_cast<double>(rt.qtf) * bm25_term_score(rt.idf, it->tf, lengths_[it->doc], avgdl_, params_);
      }
    }
  }
  return scores;
}

std::vector<ScoredId> Bm25Index::topk(const std::vector<std::string>& query_tokens, std::size_t k,
                                      const std::optional<std::string>& exclude_id) const {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  auto scores = score_all(query_tokens);
  std::vector<char> skip;
  if (exclude_id) {
    skip.assign(ids_.size(), 0);
    for (std::size_t i = 0; i < ids_.size(); ++i)
      if (ids_[i] == *exclude_id) skip[i] = 1;
  }
  std::vector<ScoredId> out;
  for (auto i : kernels::select_topk(scores, ids_, k, skip)) out.push_back({ids_[i], scores[i]});
  return out;
}

std::string Bm25Index::serialize() const {
  std::ostringstream os(std::ios::binary);
  BinWriter w(os);
  w.bytes(std::string_view(kMagic, sizeof(kMagic)));
  w.u32(kVersion);
  w.u64(ids_.size());
  w.f64(params_.k1);
  w.f64(params_.b);
  for (std::size_t d = 0; d < ids_.size(); ++d) {
    w.str(ids_[d]);
    w.u32(lengths_[d]);
  }
  w.u64(terms_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    w.str(terms_[t]);
    w.u32(static_cast<std::uint32_t>(postings_[t].size()));
    for (const auto& p : postings_[t]) {
      w.u32(p.doc);
      w.u32(p.tf);
    }
  }
  return os.str();
}

Bm25Index Bm25Index::deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  BinReader r(is);
  if (r.bytes(sizeof(kMagic)) != std::string_view(kMagic, sizeof(kMagic))) throw FormatError("not a BM25 index file");
  if (auto v = r.u32(); v != kVersion) throw FormatError("unsupported BM25 index version " + std::to_string(v));
  Bm25Index idx;
  const auto n = r.u64();
  idx.params_.k1 = r.f64();
  idx.params_.b = r.f64();
  std::uint64_t total = 0;
  for (std::uint64_t d = 0; d < n; ++d) {
    idx.ids_.push_back(r.str());
    idx.lengths_.push_back(r.u32());
    total += idx.lengths_.back();
  }
  idx.avgdl_ = n ? static_cast<double>(total) / static_cast<double>(n) : 0.0;
  const auto nterms = r.u64();
  for (std::uint64_t t = 0; t < nterms; ++t) {
    idx.terms_.push_back(r.str());
    idx.term_ids_.emplace(idx.terms_.back(), static_cast<std::uint32_t>(t));
    std::vector<Posting> pl(r.u32());
    for (auto& p : pl) {
      p.doc = r.u32();
      p.tf = r.u32();
      if (p.doc >= n) throw FormatError("posting refers to missing document");
    }
    idx.postings_.push_back(std::move(pl));
  }
  return idx;
}

void Bm25Index::save(const std::string& path) const { write_file_atomic(path, serialize()); }

Bm25Index Bm25Index::load(const std::string& path) { return deserialize(read_file(path)); }

}  // namespace icr
