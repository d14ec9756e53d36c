#include "icr/evalkit.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <limits>
#include <mutex>
#include <numeric>
#include <stdexcept>
#include <thread>
#include <unordered_map>

#include "icr/binio.hpp"
#include "icr/errors.hpp"
#include "icr/feedback.hpp"
#include "icr/rng.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

namespace {

void check_pair_lists(const std::vector<std::string>& c, const std::vector<std::string>& r, const char* metric) {
  if (c.empty()) throw std::invalid_argument(std::string(metric) + ": empty input lists");
  if (c.size() != r.size())
    throw std::invalid_argument(std::string(metric) + ": " + std::to_string(c.size()) + " candidates vs " +
                                std::to_string(r.size()) + " references");
}

using NgramCounts = std::unordered_map<std::string, std::size_t>;

NgramCounts count_ngrams(const std::vector<std::string>& toks, std::size_t n) {
  NgramCounts out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) {
    std::string key;
    for (std::size_t k = 0; k < n; ++k) {
      if (k) key += '\x1f';
      key += toks[i + k];
    }
    ++out[key];
  }
  return out;
}

std::size_t clipped_matches(const NgramCounts& hyp, const NgramCounts& ref) {
  std::size_t m = 0;
  for (const auto& [g, c] : hyp) {
    auto it = ref.find(g);
    if (it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

std::u32string code_points_no_space(const std::string& s) {
  std::u32string out;
  for (std::size_t i = 0; i < s.size();) {
    const auto c = static_cast<unsigned char>(s[i]);
    char32_t cp;
    std::size_t len;
    if (c < 0x80) {
      cp = c;
      len = 1;
    } else if ((c >> 5) == 0x6) {
      cp = c & 0x1F;
      len = 2;
    } else if ((c >> 4) == 0xE) {
      cp = c & 0x0F;
      len = 3;
    } else if ((c >> 3) == 0x1E) {
      cp = c & 0x07;
      len = 4;
    } else {
      cp = c;  // stray byte, kept as-is
      len = 1;
    }
    if (i + len > s.size()) len = 1;
    for (std::size_t k = 1; k < len; ++k) cp = (cp << 6) | (static_cast<unsigned char>(s[i + k]) & 0x3F);
    i += len;
    if (cp == ' ' || cp == '\t' || cp == '\n' || cp == '\r' || cp == '\f' || cp == '\v') continue;
    out.push_back(cp);
  }
  return out;
}

constexpr std::size_t kChrOrder = 6;
constexpr double kChrBeta = 2.0;

struct ChrStats {
  std::array<double, kChrOrder> hyp{}, ref{}, match{};
  void add(const std::string& h, const std::string& r) {
    const auto hc = code_points_no_space(h);
    const auto rc = code_points_no_space(r);
    for (std::size_t n = 1; n <= kChrOrder; ++n) {
      std::unordered_map<std::u32string, std::size_t> hg, rg;
      for (std::size_t i = 0; i + n <= hc.size(); ++i) ++hg[hc.substr(i, n)];
      for (std::size_t i = 0; i + n <= rc.size(); ++i) ++rg[rc.substr(i, n)];
      std::size_t m = 0;
      for (const auto& [g, c] : hg) {
        auto it = rg.find(g);
        if (it != rg.end()) m += std::min(c, it->second);
      }
      hyp[n - 1] += hc.size() >= n ? static_cast<double>(hc.size() - n + 1) : 0.0;
      ref[n - 1] += rc.size() >= n ? static_cast<double>(rc.size() - n + 1) : 0.0;
      match[n - 1] += static_cast<double>(m);
    }
  }
  double score() const {
    double p = 0, r = 0;
    int eff = 0;
    for (std::size_t i = 0; i < kChrOrder; ++i) {
      if (hyp[i] > 0 && ref[i] > 0) {
        p += match[i] / hyp[i];
        r += match[i] / ref[i];
        ++eff;
      }
    }
    if (eff == 0) return 0.0;
    p /= eff;
    r /= eff;
    if (p + r == 0) return 0.0;
    const double f = kChrBeta * kChrBeta;
    return (1 + f) * p * r / (f * p + r);
  }
};

// Runs fn(i) for i in [0, n) on at most `width` threads.
void bounded_for(std::size_t n, std::size_t width, const std::function<void(std::size_t)>& fn) {
  width = std::max<std::size_t>(1, std::min(width, n));
  if (width == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < width; ++t)
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) fn(i);
    });
  for (auto& t : pool) t.join();
}

}  // namespace

double bleu4(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  check_pair_lists(candidates, references, "bleu4");
  std::array<double, 4> correct{}, total{};
  double sys_len = 0, ref_len = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto c = tokenize(candidates[i]);
    const auto r = tokenize(references[i]);
    sys_len += static_cast<double>(c.size());
    ref_len += static_cast<double>(r.size());
    for (std::size_t n = 1; n <= 4; ++n) {
      total[n - 1] += c.size() >= n ? static_cast<double>(c.size() - n + 1) : 0.0;
      correct[n - 1] += static_cast<double>(clipped_matches(count_ngrams(c, n), count_ngrams(r, n)));
    }
  }
  if (std::all_of(correct.begin(), correct.end(), [](double v) { return v == 0; })) return 0.0;
  double log_sum = std::log(correct[0] / total[0]);
  for (std::size_t n = 2; n <= 4; ++n) log_sum += std::log((correct[n - 1] + 1.0) / (total[n - 1] + 1.0));
  const double bp = sys_len < ref_len ? std::exp(1.0 - ref_len / sys_len) : 1.0;
  return bp * std::exp(log_sum / 4.0);
}

double rouge_l_single(const std::string& candidate, const std::string& reference, double beta) {
  const auto c = tokenize(candidate);
  const auto r = tokenize(reference);
  if (c.empty() && r.empty()) return 1.0;
  if (c.empty() || r.empty()) return 0.0;
  std::vector<std::size_t> prev(r.size() + 1, 0), cur(r.size() + 1, 0);
  for (std::size_t i = 1; i <= c.size(); ++i) {
    for (std::size_t j = 1; j <= r.size(); ++j)
      cur[j] = c[i - 1] == r[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    std::swap(prev, cur);
  }
  const double lcs = static_cast<double>(prev[r.size()]);
  if (lcs == 0) return 0.0;
  const double p = lcs / static_cast<double>(c.size());
  const double rc = lcs / static_cast<double>(r.size());
  const double b2 = beta * beta;
  return (1 + b2) * p * rc / (rc + b2 * p);
}

double rouge_l(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  check_pair_lists(candidates, references, "rouge_l");
  double sum = 0;
  for (std::size_t i = 0; i < candidates.size(); ++i) sum += rouge_l_single(candidates[i], references[i]);
  return sum / static_cast<double>(candidates.size());
}

double chrf(const std::vector<std::string>& candidates, const std::vector<std::string>& references) {
  check_pair_lists(candidates, references, "chrf");
  ChrStats stats;
  for (std::size_t i = 0; i < candidates.size(); ++i) stats.add(candidates[i], references[i]);
  return stats.score();
}

std::string trim_repetition(const std::string& text) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  for (;;) {
    auto nl = text.find('\n', start);
    lines.push_back(text.substr(start, nl == std::string::npos ? std::string::npos : nl - start));
    if (nl == std::string::npos) break;
    start = nl + 1;
  }
  const bool trailing_newline = lines.size() > 1 && lines.back().empty();
  if (trailing_newline) lines.pop_back();

  auto repeats = [&](std::size_t k) {
    const std::size_t n = lines.size();
    if (2 * k > n) return false;
    return std::equal(lines.end() - static_cast<std::ptrdiff_t>(k), lines.end(),
                      lines.end() - static_cast<std::ptrdiff_t>(2 * k));
  };
  bool trimmed = false;
  for (std::size_t k = 1; 2 * k <= lines.size(); ++k) {
    if (!repeats(k)) continue;
    while (repeats(k)) lines.resize(lines.size() - k);
    trimmed = true;
    break;
  }
  if (!trimmed) return text;
  std::string out;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (i) out += '\n';
    out += lines[i];
  }
  if (trailing_newline) out += '\n';
  return out;
}

MetricReport score_outputs(const std::vector<std::string>& ids, const std::vector<std::string>& candidates,
                           const std::vector<std::string>& references) {
  MetricReport rep;
  rep.samples = candidates.size();
  rep.bleu4 = bleu4(candidates, references);
  rep.rouge_l = rouge_l(candidates, references);
  rep.chrf = chrf(candidates, references);
  for (std::size_t i = 0; i < candidates.size(); ++i)
    rep.per_sample.push_back({ids[i], bleu4({candidates[i]}, {references[i]}),
                              rouge_l_single(candidates[i], references[i]), chrf({candidates[i]}, {references[i]})});
  return rep;
}

std::string MetricReport::to_json() const {
  json ps = json::array();
  for (const auto& s : per_sample)
    ps.push_back({{"sample_id", s.sample_id}, {"bleu4", s.bleu4}, {"rouge_l", s.rouge_l}, {"chrf", s.chrf}});
  json j = {{"samples", samples},
            {"failed", failed},
            {"bleu4", bleu4},
            {"rouge_l", rouge_l},
            {"chrf", chrf},
            {"bleu4_x100", bleu4 * 100},
            {"rouge_l_x100", rouge_l * 100},
            {"chrf_x100", chrf * 100},
            {"per_sample", ps}};
  return j.dump(2);
}

std::string NearestExemplarGenerator::generate(const PromptPlan& plan, const Sample&) {
  const PromptExemplar* best = nullptr;
  for (const auto& e : plan.exemplars)
    if (!best || e.sim > best->sim || (e.sim == best->sim && e.sample_id < best->sample_id)) best = &e;
  if (!best) return {};
  const auto i = store_.find(best->sample_id);
  if (i == store_.size()) throw std::runtime_error("exemplar " + best->sample_id + " is not in the store");
  return store_.doc(i).output;
}

std::string RandomExemplarGenerator::generate(const PromptPlan&, const Sample& test) {
  if (store_.size() == 0) return {};
  Rng rng(derive_seed(seed_, fnv1a64(test.sample_id)));
  return store_.doc(rng.below(store_.size())).output;
}

std::string GenerationRun::to_jsonl() const {
  std::string out;
  for (const auto& r : records) {
    json j = {{"run_id", run_id},         {"generator", generator}, {"ordering", ordering},
              {"sample_id", r.sample_id}, {"prompt", r.prompt_fingerprint}, {"admitted", r.admitted},
              {"layout", r.layout},       {"output", r.output},     {"failed", r.failed}};
    if (r.failed) j["error"] = r.error;
    out += j.dump() + "\n";
  }
  return out;
}

EvalResult evaluate_run(const std::vector<Sample>& tests, const TaskRegistry& registry, const ModelParams& model,
                        const DenseIndex& index, const ExampleStore& store, Generator& generator,
                        const RetrieveConfig& cfg, std::size_t max_in_flight, const std::string& run_id) {
  if (index.fingerprint() != model_fingerprint(model))
    throw ConfigError("index", "index fingerprint " + hex64(index.fingerprint()) + " does not match the model " +
                                   hex64(model_fingerprint(model)) + "; re-run encode-corpus");
  EvalResult res;
  res.run.run_id = run_id;
  res.run.generator = generator.name();
  res.run.ordering = cfg.ordering.str();
  res.run.records.resize(tests.size());
  bounded_for(tests.size(), max_in_flight, [&](std::size_t i) {
    auto& rec = res.run.records[i];
    rec.sample_id = tests[i].sample_id;
    try {
      auto r = retrieve_for_test(model, index, store, registry, tests[i], cfg);
      rec.prompt_fingerprint = hex64(r.plan.fingerprint());
      rec.admitted = r.plan.admitted_set();
      for (const auto& e : r.plan.exemplars) rec.layout.push_back(e.sample_id);
      rec.output = trim_repetition(generator.generate(r.plan, tests[i]));
    } catch (const std::exception& e) {
      rec.failed = true;
      rec.error = e.what();
    }
  });
  std::vector<std::string> ids, cands, refs;
  for (std::size_t i = 0; i < tests.size(); ++i) {
    if (res.run.records[i].failed) continue;
    ids.push_back(tests[i].sample_id);
    cands.push_back(res.run.records[i].output);
    refs.push_back(tests[i].output);
  }
  if (!cands.empty()) res.report = score_outputs(ids, cands, refs);
  res.report.failed = tests.size() - cands.size();
  return res;
}

std::string OrderAblation::to_json() const {
  json rows = json::array();
  for (const auto& [name, r] : runs)
    rows.push_back({{"ordering", name},
                    {"samples", r.report.samples},
                    {"failed", r.report.failed},
                    {"bleu4", r.report.bleu4},
                    {"rouge_l", r.report.rouge_l},
                    {"chrf", r.report.chrf}});
  return json{{"orderings", rows}, {"admitted_sets_equal", admitted_sets_equal}}.dump(2);
}

OrderAblation order_ablation(const std::vector<Sample>& tests, const TaskRegistry& registry, const ModelParams& model,
                             const DenseIndex& index, const ExampleStore& store, Generator& generator,
                             RetrieveConfig cfg, const std::vector<OrderingSpec>& orderings,
                             std::size_t max_in_flight) {
  OrderAblation out;
  for (const auto& o : orderings) {
    cfg.ordering = o;
    out.runs.emplace_back(o.str(),
                          evaluate_run(tests, registry, model, index, store, generator, cfg, max_in_flight, o.str()));
  }
  for (std::size_t k = 1; k < out.runs.size(); ++k)
    for (std::size_t i = 0; i < tests.size(); ++i)
      if (out.runs[k].second.run.records[i].admitted != out.runs[0].second.run.records[i].admitted)
        out.admitted_sets_equal = false;
  return out;
}

double kendall_tau_b(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("kendall_tau_b: length mismatch");
  const std::size_t n = x.size();
  double concordant = 0, discordant = 0, ties_x = 0, ties_y = 0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0 && dy == 0) {
        ++ties_x;
        ++ties_y;
      } else if (dx == 0) {
        ++ties_x;
      } else if (dy == 0) {
        ++ties_y;
      } else if ((dx > 0) == (dy > 0)) {
        ++concordant;
      } else {
        ++discordant;
      }
    }
  const double n0 = static_cast<double>(n) * static_cast<double>(n - (n > 0)) / 2.0;
  const double denom = std::sqrt((n0 - ties_x) * (n0 - ties_y));
  return denom > 0 ? (concordant - discordant) / denom : 0.0;
}

double oracle_agreement(const std::vector<Sample>& heldout, const TaskRegistry& registry, const ExampleStore& store,
                        const Top1Fn& top1) {
  if (heldout.empty()) throw std::invalid_argument("oracle_agreement: no held-out samples");
  std::size_t agree = 0;
  for (const auto& s : heldout) {
    const auto q = build_query(registry.at(s.task_id), s);
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& d : store.docs()) best = std::max(best, oracle_score(q, d));
    const auto id = top1(s);
    const auto i = store.find(id);
    if (i != store.size() && oracle_score(q, store.doc(i)) == best) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(heldout.size());
}

double mean_kendall_tau(const std::vector<Sample>& heldout, const TaskRegistry& registry, const ExampleStore& store,
                        const ModelParams& model, std::size_t per_query, std::uint64_t seed) {
  if (heldout.empty()) throw std::invalid_argument("mean_kendall_tau: no held-out samples");
  const std::size_t m = std::min(per_query, store.size());
  double sum = 0;
  for (std::size_t h = 0; h < heldout.size(); ++h) {
    const auto& s = heldout[h];
    const auto& task = registry.at(s.task_id);
    const auto view = make_query_view(task, s, true);
    const auto q = build_query(task, s);
    const auto qv = encode_query_text(model, view.query.text, view.tree);
    std::vector<std::size_t> pick(store.size());
    std::iota(pick.begin(), pick.end(), 0);
    Rng rng(derive_seed(seed, h));
    rng.shuffle(pick);
    std::vector<double> sims, oracle;
    for (std::size_t k = 0; k < m; ++k) {
      const auto i = pick[k];
      sims.push_back(sim_tree(qv, encode_example_text(model, store.doc(i).text, store.tree(i))));
      oracle.push_back(oracle_score(q, store.doc(i)));
    }
    sum += kendall_tau_b(sims, oracle);
  }
  return sum / static_cast<double>(heldout.size());
}

Top1Fn dense_top1(const ModelParams& model, const DenseIndex& index, const TaskRegistry& registry) {
  return [&model, &index, &registry](const Sample& s) {
    const auto view = make_query_view(registry.at(s.task_id), s, true);
    return index.search(encode_query_text(model, view.query.text, view.tree), 1, s.sample_id).at(0).sample_id;
  };
}

Top1Fn bm25_top1(const Bm25Index& bm25, const TaskRegistry& registry) {
  return [&bm25, &registry](const Sample& s) {
    const auto q = mask_query(build_query(registry.at(s.task_id), s));
    return bm25.topk(tokenize(q.text), 1, s.sample_id).at(0).sample_id;
  };
}

}  // namespace icr
