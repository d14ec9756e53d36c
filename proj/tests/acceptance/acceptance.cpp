// Acceptance harness: one PASS/FAIL line per criterion.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <unistd.h>
#include <vector>

#include "icr/binio.hpp"
#include "icr/evalkit.hpp"
#include "icr/lexical.hpp"
#include "icr/objective.hpp"
#include "icr/rng.hpp"
#include "icr/synthetic.hpp"
#include "icr/trainer.hpp"
#include "icr/workspace.hpp"

namespace fs = std::filesystem;
using namespace icr;

namespace {

// Tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kGradSeconds = 30.0;
constexpr double kClosedFormTol = 1e-9;
constexpr double kBm25Seconds = 10.0;
constexpr double kDenseSeconds = 5.0;
constexpr double kLearnSeconds = 300.0;
constexpr double kAgreementMargin = 0.10;
constexpr double kTauGain = 0.2;
constexpr double kMetricTol = 1e-4;

struct Outcome {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, double a) {
  char buf[128];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

fs::path scratch_dir(const std::string& name) {
  auto p = fs::temp_directory_path() / ("icr_accept_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string random_words(Rng& rng, std::size_t vocab, std::size_t len) {
  std::string s;
  for (std::size_t i = 0; i < len; ++i) {
    if (i) s += ' ';
    s += "w" + std::to_string(rng.below(vocab));
  }
  return s;
}

// ---- 1 ----------------------------------------------------------------------
Outcome gradient_correctness() {
  const auto t0 = Clock::now();
  double worst = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    const auto inst = make_gradcheck_instance(seed, 8, 3, 4);
    worst = std::max(worst, gradient_check(inst.model, inst.batch, 1.0, 4.0).max_rel_error);
  }
  const double secs = seconds_since(t0);
  return {worst < kGradTol && secs < kGradSeconds,
          "20 configs, max rel err " + fmt("%.3g", worst) + ", " + fmt("%.2fs", secs)};
}

// ---- 2 ----------------------------------------------------------------------
Outcome loss_closed_forms() {
  const double bt = in_batch_tree_loss({{0.3, {0.3, 0.3, 0.3}}}).loss;
  const double rt = ranking_tree_loss({{0.7, 1}, {0.7, 2}}).loss;
  const double e1 = std::abs(bt - std::log(4.0)), e2 = std::abs(rt - 0.5 * std::log(2.0));
  return {e1 <= kClosedFormTol && e2 <= kClosedFormTol,
          "|L_bt - ln4| " + fmt("%.2g", e1) + ", |L_rt - ln2/2| " + fmt("%.2g", e2)};
}

// ---- 3 ----------------------------------------------------------------------
// Exhaustive BM25: recount every document for every query.
std::vector<ScoredId> bm25_oracle(const std::vector<ExampleDoc>& docs, const std::vector<std::string>& query,
                                  std::size_t k) {
  const double k1 = 1.2, b = 0.75;
  std::vector<std::map<std::string, std::uint32_t>> tf(docs.size());
  std::vector<std::size_t> len(docs.size());
  double total = 0;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    const auto toks = tokenize(docs[i].text);
    len[i] = toks.size();
    total += static_cast<double>(toks.size());
    for (const auto& t : toks) ++tf[i][t];
  }
  const double avgdl = total / static_cast<double>(docs.size());
  std::map<std::string, std::uint32_t> qtf;
  for (const auto& t : query) ++qtf[t];
  std::vector<ScoredId> all;
  for (std::size_t i = 0; i < docs.size(); ++i) {
    double s = 0;
    for (const auto& [term, qn] : qtf) {
      std::size_t df = 0;
      for (const auto& m : tf) df += m.count(term);
      if (df == 0) continue;
      const auto it = tf[i].find(term);
      const double f = it == tf[i].end() ? 0.0 : it->second;
      const double n = static_cast<double>(docs.size());
      const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
      s += qn * idf * f * (k1 + 1) / (f + k1 * (1 - b + b * static_cast<double>(len[i]) / avgdl));
    }
    all.push_back({docs[i].sample_id, s});
  }
  std::sort(all.begin(), all.end(), [](const ScoredId& x, const ScoredId& y) {
    return x.score != y.score ? x.score > y.score : x.sample_id < y.sample_id;
  });
  all.resize(std::min(k, all.size()));
  return all;
}

Outcome bm25_exactness() {
  Rng rng(303);
  std::vector<ExampleDoc> docs;
  for (std::size_t i = 0; i < 1000; ++i) {
    // shuffled ids so tie order is not insertion order
    const auto text = random_words(rng, 60, 3 + rng.below(12));
    docs.push_back({"d" + std::to_string((i * 7919) % 1000), "t", text, "", text});
  }
  std::vector<std::vector<std::string>> queries;
  for (int q = 0; q < 50; ++q) queries.push_back(tokenize(random_words(rng, 70, 1 + rng.below(5))));
  const auto t0 = Clock::now();
  const auto idx = Bm25Index::build(docs);
  std::vector<std::vector<ScoredId>> got;
  for (const auto& q : queries) got.push_back(idx.topk(q, 50));
  const double secs = seconds_since(t0);
  std::size_t mismatches = 0, max_err_pos = 0;
  double max_err = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    const auto want = bm25_oracle(docs, queries[q], 50);
    if (want.size() != got[q].size()) {
      ++mismatches;
      continue;
    }
    for (std::size_t r = 0; r < want.size(); ++r) {
      if (want[r].sample_id != got[q][r].sample_id) ++mismatches;
      const double e = std::abs(want[r].score - got[q][r].score);
      if (e > max_err) max_err = e, max_err_pos = r;
    }
  }
  (void)max_err_pos;
  return {mismatches == 0 && max_err < 1e-9 && secs < kBm25Seconds,
          "50 queries x K=50 on 1000 docs, " + std::to_string(mismatches) + " id mismatches, max |dscore| " +
              fmt("%.2g", max_err) + ", " + fmt("%.2fs", secs)};
}

// ---- 4 ----------------------------------------------------------------------
Outcome dense_exactness() {
  Rng rng(404);
  const std::size_t dim = 64;
  DenseIndex idx(dim, 0);
  std::vector<std::vector<double>> rows;
  for (std::size_t i = 0; i < 1000; ++i) {
    std::vector<double> r(dim);
    for (auto& v : r) v = rng.uniform(-1, 1);
    if (i % 97 == 5) std::copy(rows.back().begin(), rows.back().end(), r.begin());  // exact duplicates exercise ties
    rows.push_back(r);
    idx.add("row" + std::to_string((i * 613) % 1000), r);
  }
  std::size_t bad = 0;
  double secs = 0;
  for (int q = 0; q < 100; ++q) {
    std::vector<double> qv(dim);
    for (auto& v : qv) v = rng.uniform(-1, 1);
    const auto t0 = Clock::now();
    const auto got = idx.search(qv, 20);
    secs += seconds_since(t0);
    std::vector<ScoredId> all;
    for (std::size_t i = 0; i < idx.rows(); ++i) {
      double s = 0;
      for (std::size_t k = 0; k < dim; ++k) s += qv[k] * static_cast<double>(static_cast<float>(rows[i][k]));
      all.push_back({idx.ids()[i], s});
    }
    std::sort(all.begin(), all.end(), [](const ScoredId& x, const ScoredId& y) {
      return x.score != y.score ? x.score > y.score : x.sample_id < y.sample_id;
    });
    all.resize(20);
    if (all != got) ++bad;
  }
  return {bad == 0 && secs < kDenseSeconds,
          "100 queries top-20 over 1000x64, " + std::to_string(bad) + " mismatching lists, " + fmt("%.3fs", secs)};
}

// ---- 5, 6 -------------------------------------------------------------------
TrainConfig synthetic_train_config() {
  TrainConfig cfg;
  cfg.K = 10;
  cfg.iterations = 3;
  cfg.epochs = 4;
  cfg.batch_size = 8;
  cfg.dim = 64;
  cfg.buckets = 4096;
  cfg.seed = 13;
  return cfg;
}

struct SyntheticRun {
  SyntheticTask task;
  std::unique_ptr<ExampleStore> store;
  TrainResult full;
  double seconds = 0;
};

SyntheticRun& synthetic_run() {
  static SyntheticRun run = [] {
    SyntheticRun r;
    const auto t0 = Clock::now();
    r.task = make_synthetic_task({});
    r.store = std::make_unique<ExampleStore>(r.task.registry, r.task.train);
    OracleScorer scorer;
    ScoreCache cache;
    r.full = train(synthetic_train_config(), r.task.registry, *r.store, scorer, cache);
    r.seconds = seconds_since(t0);
    return r;
  }();
  return run;
}

double dense_agreement(const SyntheticRun& r, const ModelParams& model) {
  const auto idx = encode_corpus(model, *r.store);
  return oracle_agreement(r.task.test, r.task.registry, *r.store, dense_top1(model, idx, r.task.registry));
}

Outcome learning_effectiveness() {
  auto& r = synthetic_run();
  const auto t0 = Clock::now();
  const double icr = dense_agreement(r, r.full.model);
  const auto bm25 = Bm25Index::build(r.store->docs());
  const double base = oracle_agreement(r.task.test, r.task.registry, *r.store, bm25_top1(bm25, r.task.registry));
  const double tau0 = mean_kendall_tau(r.task.test, r.task.registry, *r.store, r.full.initial, 40, 5);
  const double tau3 = mean_kendall_tau(r.task.test, r.task.registry, *r.store, r.full.model, 40, 5);
  const double secs = r.seconds + seconds_since(t0);
  return {icr >= base + kAgreementMargin && tau3 - tau0 >= kTauGain && secs < kLearnSeconds,
          "top-1 agreement ICR " + fmt("%.3f", icr) + " vs BM25 " + fmt("%.3f", base) + "; tau iter0 " +
              fmt("%.3f", tau0) + " -> iter3 " + fmt("%.3f", tau3) + ", " + fmt("%.1fs", secs)};
}

Outcome ablation_consistency() {
  auto& r = synthetic_run();
  // (a) beta = 0 equals a text-only pipeline
  auto zeroed = r.full.model;
  zeroed.beta1 = zeroed.beta2 = 0.0;
  const auto idx = encode_corpus(zeroed, *r.store);
  std::vector<std::vector<double>> text_rows;
  for (const auto& d : r.store->docs()) {
    auto v = encode_text(zeroed.example, d.text);
    for (auto& x : v) x = static_cast<double>(static_cast<float>(zeroed.alpha2 * x));
    text_rows.push_back(v);
  }
  std::size_t diffs = 0;
  for (const auto& s : r.task.test) {
    const auto q = mask_query(build_query(r.task.registry.at(s.task_id), s));
    auto qv = encode_text(zeroed.query, q.text);
    for (auto& x : qv) x *= zeroed.alpha1;
    std::vector<ScoredId> want;
    for (std::size_t i = 0; i < text_rows.size(); ++i) {
      double dot = 0;
      for (std::size_t k = 0; k < qv.size(); ++k) dot += qv[k] * text_rows[i][k];
      want.push_back({r.store->doc(i).sample_id, dot});
    }
    std::sort(want.begin(), want.end(), [](const ScoredId& x, const ScoredId& y) {
      return x.score != y.score ? x.score > y.score : x.sample_id < y.sample_id;
    });
    want.resize(10);
    const auto view = make_query_view(r.task.registry.at(s.task_id), s, true);
    if (idx.search(encode_query_text(zeroed, view.query.text, view.tree), 10) != want) ++diffs;
  }
  // (b) full model beats the frozen-tree variant
  auto cfg = synthetic_train_config();
  cfg.freeze_tree_channel = true;
  OracleScorer scorer;
  ScoreCache cache;
  const auto frozen = train(cfg, r.task.registry, *r.store, scorer, cache);
  const double full = dense_agreement(r, r.full.model);
  const double text_only = dense_agreement(r, frozen.model);
  return {diffs == 0 && full > text_only,
          std::to_string(diffs) + " beta=0 vs text-only top-10 diffs; agreement full " + fmt("%.3f", full) +
              " vs beta=0 " + fmt("%.3f", text_only)};
}

// ---- 7 ----------------------------------------------------------------------
Outcome prompt_budget_safety() {
  Rng rng(707);
  std::size_t violations = 0, truncated = 0, set_changes = 0, admitted_total = 0, errors = 0;
  for (int draw = 0; draw < 1000; ++draw) {
    const std::size_t budget = 64 + rng.below(2048 - 64 + 1);
    const std::size_t reserved = rng.below(budget / 2);
    const auto instruction = random_words(rng, 200, 1 + rng.below(12));
    const auto input = random_words(rng, 200, 1 + rng.below(40));
    std::vector<RankedExample> ranked;
    const std::size_t n = rng.below(30);
    double sim = 10;
    for (std::size_t i = 0; i < n; ++i) {
      sim -= rng.uniform(0.0, 1.0);
      ranked.push_back({"ex" + std::to_string(i), sim, random_words(rng, 200, 1 + rng.below(200)) + "\n" +
                                                          random_words(rng, 200, 1 + rng.below(60))});
    }
    std::vector<std::vector<std::string>> sets;
    for (const auto& ord : {OrderingSpec{Ordering::Similarity, 0}, OrderingSpec{Ordering::Reverse, 0},
                            OrderingSpec{Ordering::Random, static_cast<std::uint64_t>(draw)}}) {
      PromptPlan plan;
      try {
        plan = assemble_prompt(instruction, ranked, input, budget, reserved, ord);
      } catch (const BudgetError&) {
        // legitimate only when instruction + input alone do not fit
        if (pipeline_token_count(instruction) + pipeline_token_count(input) + reserved <= budget) ++errors;
        sets.push_back({"<budget>"});
        continue;
      }
      if (pipeline_token_count(plan.text) + reserved > budget) ++violations;
      for (const auto& e : plan.exemplars) {
        const auto it = std::find_if(ranked.begin(), ranked.end(), [&](const auto& x) { return x.sample_id == e.sample_id; });
        if (it == ranked.end() || it->text != e.text || plan.text.find(e.text) == std::string::npos) ++truncated;
      }
      admitted_total += plan.exemplars.size();
      sets.push_back(plan.admitted_set());
    }
    if (!(sets[0] == sets[1] && sets[1] == sets[2])) ++set_changes;
  }
  return {violations == 0 && truncated == 0 && set_changes == 0 && errors == 0,
          "1000 draws, " + std::to_string(admitted_total) + " admissions, " + std::to_string(violations) +
              " over budget, " + std::to_string(truncated) + " truncated, " + std::to_string(set_changes) +
              " set changes, " + std::to_string(errors) + " spurious budget errors"};
}

// ---- 8 ----------------------------------------------------------------------
Outcome no_leakage() {
  Rng rng(808);
  TaskRegistry registry;
  registry.add(TaskSpec("leak", "Summarize the snippet.", SegmentKind::code("python"), SegmentKind::natural(),
                        {"Code: ", "Summary: "}));
  std::vector<Sample> samples;
  for (std::size_t i = 0; i < 500; ++i) {
    char sentinel[48];
    std::snprintf(sentinel, sizeof sentinel, "GOLDSENTINEL%06zuX%08llx", i,
                  static_cast<unsigned long long>(rng.next() & 0xffffffffULL));
    const auto a = "v" + std::to_string(rng.below(20)), b = "v" + std::to_string(rng.below(20));
    samples.push_back({"s" + std::to_string(i), "leak", a + " = " + b + "(" + a + ")", std::string(sentinel) + " " + a});
  }
  // every test sample is also in the store, so only masking and self-exclusion keep its gold out
  ExampleStore store(registry, samples);
  const auto model = init_model(32, 2048, 8);
  const auto idx = encode_corpus(model, store);
  RetrieveConfig cfg;
  cfg.top_l = 20;
  std::size_t leaks = 0, exemplars = 0;
  for (const auto& s : samples) {
    const auto r = retrieve_for_test(model, idx, store, registry, s, cfg);
    exemplars += r.plan.exemplars.size();
    const auto sentinel = s.output.substr(0, s.output.find(' '));
    if (r.plan.text.find(sentinel) != std::string::npos) ++leaks;
  }
  return {leaks == 0 && exemplars > 0,
          "500 samples, " + std::to_string(exemplars) + " exemplars admitted, " + std::to_string(leaks) + " leaks"};
}

// ---- 9 ----------------------------------------------------------------------
Outcome metric_sanity() {
  const std::vector<std::string> same = {"the cat sat on the mat", "int add ( int a , int b )"};
  const double ib = bleu4(same, same), ir = rouge_l(same, same), ic = chrf(same, same);
  // reference values: sacrebleu 2.x corpus_bleu(smooth_method="add-k", smooth_value=1) and corpus_chrf()
  const std::vector<std::string> c1 = {"the cat sat on the mat", "a quick brown fox jumps"};
  const std::vector<std::string> r1 = {"the cat is on the mat", "the quick brown fox jumps over"};
  const double b1 = bleu4(c1, r1), ch1 = chrf(c1, r1);
  const double ch2 = chrf({"def add(a, b): return a+b"}, {"def add(x, y): return x + y"});
  // hand LCS: candidate "a c d" against reference "a b c d", P = 1, R = 0.75, beta = 1.2
  const double rl = rouge_l({"a c d"}, {"a b c d"});
  const double rl_want = (1 + 1.44) * 1.0 * 0.75 / (0.75 + 1.44 * 1.0);
  const bool ok = std::abs(ib - 1) < 1e-12 && std::abs(ir - 1) < 1e-12 && std::abs(ic - 1) < 1e-12 &&
                  std::abs(b1 - 0.5075371503596202) < kMetricTol && std::abs(ch1 - 0.6964435407130903) < kMetricTol &&
                  std::abs(ch2 - 0.5437893139712026) < kMetricTol && std::abs(rl - rl_want) < kMetricTol;
  return {ok, "identity " + fmt("%.6f", ib) + "/" + fmt("%.6f", ir) + "/" + fmt("%.6f", ic) + "; BLEU " +
                  fmt("%.6f", b1) + " chrF " + fmt("%.6f", ch1) + ", " + fmt("%.6f", ch2) + " ROUGE-L " +
                  fmt("%.6f", rl)};
}

// ---- 10 ---------------------------------------------------------------------
std::map<std::string, std::string> full_run(const fs::path& dir) {
  SyntheticConfig sc;
  sc.train_per_cluster = 16;
  sc.test_per_cluster = 4;
  write_synthetic_workspace(dir.string(), sc);
  const auto ws = WorkspaceConfig::load((dir / "workspace.json").string());
  const auto registry = ws.load_registry();
  const auto train_set = ws.load_train();
  const auto tests = ws.load_test();
  ExampleStore store(registry, train_set);
  OracleScorer scorer;
  ScoreCache cache(ws.output_dir + "/score_cache.jsonl");
  const auto res = train(ws.train, registry, store, scorer, cache, ws.output_dir);
  const auto idx = encode_corpus(res.model, store);
  idx.save(ws.output_dir + "/index.bin");
  NearestExemplarGenerator gen(store);
  const auto ev = evaluate_run(tests, registry, res.model, idx, store, gen, ws.retrieval, 2);
  write_file_atomic(ws.output_dir + "/report.json", ev.report.to_json());
  write_file_atomic(ws.output_dir + "/run.jsonl", ev.run.to_jsonl());
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(ws.output_dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), ws.output_dir).string()] = read_file(e.path().string());
  return files;
}

Outcome determinism() {
  const auto a = full_run(scratch_dir("det_a"));
  const auto b = full_run(scratch_dir("det_b"));
  std::size_t differing = 0;
  std::string first;
  for (const auto& [name, bytes] : a) {
    const auto it = b.find(name);
    if (it == b.end() || it->second != bytes) {
      if (!differing++) first = " (" + name + ")";
    }
  }
  const bool has_core = a.count("iter_3/model.bin") && a.count("index.bin") && a.count("report.json");
  return {has_core && differing == 0 && a.size() == b.size(),
          std::to_string(a.size()) + " artifacts per run, " + std::to_string(differing) + " differ" + first};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"gradient correctness", gradient_correctness},
      {"loss closed forms", loss_closed_forms},
      {"BM25 exactness", bm25_exactness},
      {"dense search exactness", dense_exactness},
      {"learning effectiveness", learning_effectiveness},
      {"ablation consistency", ablation_consistency},
      {"prompt budget safety", prompt_budget_safety},
      {"no leakage", no_leakage},
      {"metric sanity", metric_sanity},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    std::printf("criterion %2zu %s  %s: %s\n", i + 1, o.pass ? "PASS" : "FAIL", criteria[i].first.c_str(),
                o.detail.c_str());
    std::fflush(stdout);
  }
  fs::remove_all(fs::temp_directory_path() / ("icr_accept_" + std::to_string(::getpid())));
  return failed == 0 ? 0 : 1;
}
