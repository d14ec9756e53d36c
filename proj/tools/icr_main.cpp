// icr: command-line entry point for the retrieval pipeline.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <regex>
#include <string>

#include "CLI11.hpp"
#include "icr/binio.hpp"
#include "icr/errors.hpp"
#include "icr/evalkit.hpp"
#include "icr/generator_client.hpp"
#include "icr/kernels.hpp"
#include "icr/objective.hpp"
#include "icr/synthetic.hpp"
#include "icr/trainer.hpp"
#include "icr/workspace.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace icr;

namespace {

constexpr int kExitConfig = 1;
constexpr int kExitUsage = 2;

struct GlobalOptions {
  std::string config = "workspace.json";
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  std::string out;
};

struct Loaded {
  WorkspaceConfig cfg;
  TaskRegistry registry;
  std::vector<Sample> train;
  std::unique_ptr<ExampleStore> store;
};

WorkspaceConfig load_config(const GlobalOptions& g) {
  auto cfg = WorkspaceConfig::load(g.config);
  if (g.seed) cfg.set_seed(*g.seed);
  if (!g.out.empty()) cfg.output_dir = fs::absolute(g.out).lexically_normal().string();
  return cfg;
}

Loaded load_all(const GlobalOptions& g) {
  Loaded l;
  l.cfg = load_config(g);
  l.registry = l.cfg.load_registry();
  l.train = l.cfg.load_train();
  l.store = std::make_unique<ExampleStore>(l.registry, l.train);
  return l;
}

std::string latest_checkpoint(const std::string& out_dir) {
  const std::regex pattern(R"(iter_(\d+))");
  int best = -1;
  std::string path;
  if (fs::is_directory(out_dir)) {
    for (const auto& e : fs::directory_iterator(out_dir)) {
      std::smatch m;
      const auto name = e.path().filename().string();
      if (!std::regex_match(name, m, pattern) || !fs::exists(e.path() / "model.bin")) continue;
      const int n = std::stoi(m[1]);
      if (n > best) {
        best = n;
        path = (e.path() / "model.bin").string();
      }
    }
  }
  if (path.empty()) throw ConfigError("--checkpoint", "no iter_<n>/model.bin under " + out_dir + "; run train first");
  return path;
}

ModelParams load_model(const std::string& explicit_path, const std::string& out_dir) {
  const auto path = explicit_path.empty() ? latest_checkpoint(out_dir) : explicit_path;
  if (!fs::exists(path)) throw ConfigError("--checkpoint", "file not found: " + path);
  return load_checkpoint(path);
}

DenseIndex load_index(const std::string& out_dir, const ModelParams& model) {
  const auto path = out_dir + "/index.bin";
  if (!fs::exists(path)) throw ConfigError("index", "no index at " + path + "; run encode-corpus first");
  auto idx = DenseIndex::load(path);
  if (idx.fingerprint() != model_fingerprint(model))
    throw ConfigError("index", "index was built from a different checkpoint; run encode-corpus again");
  return idx;
}

std::shared_ptr<GeneratorClient> make_client(const WorkspaceConfig& cfg) {
  std::shared_ptr<ReplayStore> replay;
  if (cfg.generator.replay_mode != ReplayMode::Off)
    replay = std::make_shared<ReplayStore>(cfg.generator.replay_mode, cfg.generator.replay_path);
  return std::make_shared<GeneratorClient>(cfg.generator.endpoint, replay);
}

std::unique_ptr<Scorer> make_scorer(const WorkspaceConfig& cfg) {
  if (cfg.scorer_kind == "oracle") return std::make_unique<OracleScorer>();
  auto client = make_client(cfg);
  client->probe();
  return std::make_unique<LlmScorer>(client);
}

std::unique_ptr<Generator> make_generator(const WorkspaceConfig& cfg, const ExampleStore& store) {
  const auto& k = cfg.generator.kind;
  if (k == "echo") return std::make_unique<EchoGenerator>();
  if (k == "nearest-exemplar") return std::make_unique<NearestExemplarGenerator>(store);
  if (k == "random-exemplar") return std::make_unique<RandomExemplarGenerator>(store, cfg.seed);
  return std::make_unique<RemoteGenerator>(make_client(cfg), cfg.generator.max_tokens);
}

const Sample& find_sample(const Loaded& l, const std::vector<Sample>& tests, const std::string& id) {
  for (const auto& s : tests)
    if (s.sample_id == id) return s;
  for (const auto& s : l.train)
    if (s.sample_id == id) return s;
  throw ConfigError("--sample", "unknown sample id '" + id + "'");
}

std::vector<Sample> tests_if_any(const WorkspaceConfig& cfg) {
  try {
    return cfg.load_test();
  } catch (const ConfigError&) {
    return {};
  }
}

std::string safe_name(const std::string& id) {
  std::string s = id;
  for (auto& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c)) && c != '-' && c != '_' && c != '.') c = '_';
  return s;
}

// ---- verbs ---------------------------------------------------------------------

int cmd_prepare_synthetic(const std::string& dir, const SyntheticConfig& sc) {
  write_synthetic_workspace(dir, sc);
  std::cout << "prepare: wrote synthetic workspace to " << dir << " (" << sc.clusters * sc.train_per_cluster
            << " train, " << sc.clusters * sc.test_per_cluster << " test samples)\n";
  return 0;
}

int cmd_prepare(const GlobalOptions& g) {
  auto l = load_all(g);
  auto tests = tests_if_any(l.cfg);
  std::string lines;
  for (std::size_t i = 0; i < l.store->size(); ++i) {
    const auto& s = l.train[i];
    const auto view = make_query_view(l.registry.at(s.task_id), s, true);
    lines += json{{"sample_id", s.sample_id}, {"query_tree", view.tree}, {"example_tree", l.store->tree(i)}}.dump() +
             "\n";
  }
  const auto dir = l.cfg.output_dir + "/prepared";
  write_file_atomic(dir + "/trees.jsonl", lines);
  json summary = {{"tasks", l.registry.ids()},
                  {"train_samples", l.train.size()},
                  {"test_samples", tests.size()},
                  {"degraded_trees", l.store->degraded_count()}};
  write_file_atomic(dir + "/summary.json", summary.dump(2) + "\n");
  std::cout << "prepare: " << l.train.size() << " train / " << tests.size() << " test samples, "
            << l.store->degraded_count() << " degraded trees -> " << dir << "\n";
  return 0;
}

int cmd_index_bm25(const GlobalOptions& g) {
  auto l = load_all(g);
  const auto idx = Bm25Index::build(l.store->docs());
  const auto path = l.cfg.output_dir + "/bm25.idx";
  idx.save(path);
  std::cout << "index-bm25: " << idx.doc_count() << " docs, " << idx.vocabulary_size() << " terms, avgdl "
            << idx.avgdl() << " -> " << path << "\n";
  return 0;
}

std::string candidates_path(const WorkspaceConfig& cfg, std::size_t it) {
  return cfg.output_dir + "/candidates/iter_" + std::to_string(it) + ".jsonl";
}

int cmd_candidates(const GlobalOptions& g, std::size_t iteration, const std::string& checkpoint) {
  auto l = load_all(g);
  std::optional<Bm25Index> bm25;
  std::optional<ModelParams> model;
  std::optional<DenseIndex> index;
  if (iteration == 0) {
    const auto p = l.cfg.output_dir + "/bm25.idx";
    bm25 = fs::exists(p) ? Bm25Index::load(p) : Bm25Index::build(l.store->docs());
  } else {
    const auto ck = checkpoint.empty() ? l.cfg.output_dir + "/iter_" + std::to_string(iteration) + "/model.bin"
                                       : checkpoint;
    model = load_model(ck, l.cfg.output_dir);
    index = encode_corpus(*model, *l.store);
  }
  if (l.cfg.train.K + 1 > l.store->size())
    std::cerr << "warning: corpus has " << l.store->size() << " examples; returning all "
              << l.store->size() - 1 << " candidates\n";
  const auto views = build_query_views(l.registry, *l.store, true);
  std::string lines;
  for (std::size_t i = 0; i < l.store->size(); ++i) {
    auto ids = select_candidates(iteration, l.registry, *l.store, i, l.cfg.train.K, bm25 ? &*bm25 : nullptr,
                                 model ? &*model : nullptr, index ? &*index : nullptr, &views[i]);
    lines += json{{"query", l.train[i].sample_id}, {"candidates", ids}}.dump() + "\n";
  }
  const auto path = candidates_path(l.cfg, iteration);
  write_file_atomic(path, lines);
  std::cout << "candidates: iteration " << iteration << ", " << l.store->size() << " queries x K=" << l.cfg.train.K
            << " (" << (iteration == 0 ? "bm25" : "dense") << ") -> " << path << "\n";
  return 0;
}

int cmd_score(const GlobalOptions& g, std::size_t iteration) {
  auto l = load_all(g);
  const auto in_path = candidates_path(l.cfg, iteration);
  if (!fs::exists(in_path)) throw ConfigError("--iteration", "no candidates at " + in_path + "; run candidates first");
  auto scorer = make_scorer(l.cfg);
  ScoreCache cache(l.cfg.output_dir + "/score_cache.jsonl");
  ScoringStats stats;
  std::ifstream in(in_path);
  std::string line, out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto j = json::parse(line);
    const auto qi = l.store->find(j.at("query").get<std::string>());
    if (qi == l.store->size()) throw ConfigError("candidates", "unknown query " + j.at("query").get<std::string>());
    std::vector<const ExampleDoc*> docs;
    std::vector<const ExemplarTemplate*> tmpls;
    for (const auto& id : j.at("candidates")) {
      const auto di = l.store->find(id.get<std::string>());
      if (di == l.store->size()) throw ConfigError("candidates", "unknown candidate " + id.get<std::string>());
      docs.push_back(&l.store->doc(di));
      tmpls.push_back(&l.store->exemplar_template(di));
    }
    const auto& s = l.train[qi];
    auto ranked = score_candidates(*scorer, cache, l.registry.at(s.task_id), s, docs, tmpls,
                                   l.cfg.train.max_in_flight, &stats);
    json c = json::array();
    for (const auto& r : ranked) c.push_back({{"sample_id", r.sample_id}, {"score", r.score}, {"rank", r.rank}});
    out += json{{"query", s.sample_id}, {"model", scorer->model_name()}, {"candidates", c}}.dump() + "\n";
  }
  const auto path = l.cfg.output_dir + "/scores/iter_" + std::to_string(iteration) + ".jsonl";
  write_file_atomic(path, out);
  std::cout << "score: " << stats.requested << " scored, " << stats.cache_hits << " from cache -> " << path << "\n";
  return 0;
}

int cmd_train(const GlobalOptions& g, std::optional<std::size_t> iterations, std::optional<std::size_t> epochs) {
  auto l = load_all(g);
  if (iterations) l.cfg.train.iterations = *iterations;
  if (epochs) l.cfg.train.epochs = *epochs;
  l.cfg.train.validate();
  auto scorer = make_scorer(l.cfg);
  ScoreCache cache(l.cfg.output_dir + "/score_cache.jsonl");
  const auto res = train(l.cfg.train, l.registry, *l.store, *scorer, cache, l.cfg.output_dir);
  for (const auto& it : res.iterations)
    std::cerr << "iteration " << it.iteration << ": mean L_total " << it.epoch_loss.back() << " (L_bt "
              << it.epoch_l_bt.back() << ", L_rt " << it.epoch_l_rt.back() << "), " << it.scoring.requested
              << " scored -> " << it.checkpoint << "\n";
  std::cout << "train: " << res.iterations.size() << " checkpoints written under " << l.cfg.output_dir
            << ", final fingerprint " << hex64(res.iterations.back().fingerprint) << "\n";
  return 0;
}

int cmd_encode_corpus(const GlobalOptions& g, const std::string& checkpoint) {
  auto l = load_all(g);
  const auto model = load_model(checkpoint, l.cfg.output_dir);
  const auto idx = encode_corpus(model, *l.store);
  const auto path = l.cfg.output_dir + "/index.bin";
  idx.save(path);
  std::cout << "encode-corpus: " << idx.rows() << " rows x " << idx.dim() << " -> " << path << " (model "
            << hex64(idx.fingerprint()) << ")\n";
  return 0;
}

int cmd_retrieve(const GlobalOptions& g, const std::string& sample_id, std::size_t top, const std::string& checkpoint) {
  auto l = load_all(g);
  const auto model = load_model(checkpoint, l.cfg.output_dir);
  const auto idx = load_index(l.cfg.output_dir, model);
  const auto tests = tests_if_any(l.cfg);
  const auto& s = find_sample(l, tests, sample_id);
  const auto view = make_query_view(l.registry.at(s.task_id), s, true);
  const auto hits = idx.search(encode_query_text(model, view.query.text, view.tree), top, s.sample_id);
  if (hits.size() < top)
    std::cerr << "warning: requested top " << top << " but only " << hits.size() << " examples are available\n";
  json j = json::array();
  for (std::size_t r = 0; r < hits.size(); ++r) {
    j.push_back({{"rank", r + 1}, {"sample_id", hits[r].sample_id}, {"sim", hits[r].score}});
    std::cout << r + 1 << "\t" << hits[r].sample_id << "\t" << hits[r].score << "\n";
  }
  const auto path = l.cfg.output_dir + "/retrieve/" + safe_name(s.sample_id) + ".json";
  write_file_atomic(path, json{{"query", s.sample_id}, {"hits", j}}.dump(2) + "\n");
  std::cout << "retrieve: " << hits.size() << " results -> " << path << "\n";
  return 0;
}

int cmd_assemble(const GlobalOptions& g, const std::string& sample_id, const std::string& ordering,
                 const std::string& checkpoint) {
  auto l = load_all(g);
  if (!ordering.empty()) l.cfg.retrieval.ordering = OrderingSpec::parse(ordering);
  const auto model = load_model(checkpoint, l.cfg.output_dir);
  const auto idx = load_index(l.cfg.output_dir, model);
  const auto tests = tests_if_any(l.cfg);
  const auto& s = find_sample(l, tests, sample_id);
  const auto r = retrieve_for_test(model, idx, *l.store, l.registry, s, l.cfg.retrieval);
  const auto path = l.cfg.output_dir + "/prompts/" + safe_name(s.sample_id) + ".json";
  write_file_atomic(path, r.plan.to_json() + "\n");
  std::cout << "assemble: " << r.plan.exemplars.size() << " exemplars, " << r.plan.total_tokens << "/"
            << r.plan.budget - r.plan.reserved_output << " tokens (" << r.plan.ordering.str() << ") -> " << path
            << "\n";
  return 0;
}

void write_eval(const std::string& dir, const EvalResult& r) {
  write_file_atomic(dir + "/report.json", r.report.to_json() + "\n");
  write_file_atomic(dir + "/run.jsonl", r.run.to_jsonl());
}

std::string ordering_dir(const std::string& name) {
  std::string s = name;
  std::replace(s.begin(), s.end(), ':', '-');
  return s;
}

int cmd_evaluate(const GlobalOptions& g, const std::string& ordering, const std::string& checkpoint) {
  auto l = load_all(g);
  if (!ordering.empty()) l.cfg.retrieval.ordering = OrderingSpec::parse(ordering);
  const auto tests = l.cfg.load_test();
  const auto model = load_model(checkpoint, l.cfg.output_dir);
  const auto idx = load_index(l.cfg.output_dir, model);
  auto gen = make_generator(l.cfg, *l.store);
  const auto res = evaluate_run(tests, l.registry, model, idx, *l.store, *gen, l.cfg.retrieval,
                                l.cfg.generator.endpoint.max_in_flight, l.cfg.retrieval.ordering.str());
  const auto dir = l.cfg.output_dir + "/eval/" + ordering_dir(l.cfg.retrieval.ordering.str());
  write_eval(dir, res);
  std::cout << "evaluate: " << res.report.samples << " samples (" << res.report.failed << " failed), BLEU-4 "
            << res.report.bleu4 * 100 << ", ROUGE-L " << res.report.rouge_l * 100 << ", chrF "
            << res.report.chrf * 100 << " -> " << dir << "\n";
  return 0;
}

int cmd_order_ablation(const GlobalOptions& g, const std::string& checkpoint) {
  auto l = load_all(g);
  const auto tests = l.cfg.load_test();
  const auto model = load_model(checkpoint, l.cfg.output_dir);
  const auto idx = load_index(l.cfg.output_dir, model);
  auto gen = make_generator(l.cfg, *l.store);
  const std::vector<OrderingSpec> orderings = {
      {Ordering::Similarity, 0}, {Ordering::Reverse, 0}, {Ordering::Random, l.cfg.seed}};
  const auto abl = order_ablation(tests, l.registry, model, idx, *l.store, *gen, l.cfg.retrieval, orderings,
                                  l.cfg.generator.endpoint.max_in_flight);
  for (const auto& [name, r] : abl.runs) {
    write_eval(l.cfg.output_dir + "/eval/" + ordering_dir(name), r);
    std::cout << name << "\tBLEU-4 " << r.report.bleu4 * 100 << "\tROUGE-L " << r.report.rouge_l * 100 << "\tchrF "
              << r.report.chrf * 100 << "\n";
  }
  const auto path = l.cfg.output_dir + "/eval/order_ablation.json";
  write_file_atomic(path, abl.to_json() + "\n");
  std::cout << "order-ablation: " << abl.runs.size() << " orderings, admitted sets "
            << (abl.admitted_sets_equal ? "identical" : "DIFFER") << " -> " << path << "\n";
  return abl.admitted_sets_equal ? 0 : 1;
}

int cmd_gradcheck(const GlobalOptions& g, std::size_t trials, std::size_t dim) {
  double gamma1 = 1.0, gamma2 = 4.0;
  std::uint64_t seed = g.seed.value_or(WorkspaceConfig::kDefaultSeed);
  if (fs::exists(g.config)) {
    const auto cfg = load_config(g);
    gamma1 = cfg.train.gamma1;
    gamma2 = cfg.train.gamma2;
    seed = cfg.seed;
  }
  double worst = 0.0;
  std::string where;
  std::size_t checked = 0;
  for (std::size_t t = 0; t < trials; ++t) {
    const auto inst = make_gradcheck_instance(seed + t, dim);
    const auto rep = gradient_check(inst.model, inst.batch, gamma1, gamma2);
    checked += rep.checked;
    if (rep.max_rel_error >= worst) {
      worst = rep.max_rel_error;
      where = rep.worst_parameter;
    }
  }
  const bool ok = worst < 1e-4;
  std::cout << "gradcheck: " << trials << " instances, " << checked << " parameters, max relative error " << worst
            << " (" << where << ") " << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icr: trained example retrieval for in-context prompting"};
  app.require_subcommand(1);
  GlobalOptions g;
  app.add_option("--config", g.config, "workspace config file")->capture_default_str();
  app.add_option("--seed", g.seed, "seed for every stochastic component (default 13)");
  app.add_option("--jobs", g.jobs, "thread bound for parallel sections (0 = OpenMP default)");
  app.add_option("--out", g.out, "output directory (overrides output_dir)");

  auto* prepare = app.add_subcommand("prepare", "validate datasets and parse trees, or generate a synthetic workspace");
  std::string synthetic_dir;
  SyntheticConfig sc;
  prepare->add_option("--synthetic", synthetic_dir, "write a synthetic cluster workspace into this directory");
  prepare->add_option("--clusters", sc.clusters, "synthetic cluster count")->capture_default_str();
  prepare->add_option("--train-per-cluster", sc.train_per_cluster)->capture_default_str();
  prepare->add_option("--test-per-cluster", sc.test_per_cluster)->capture_default_str();

  app.add_subcommand("index-bm25", "build the BM25 index over training examples");

  std::size_t iteration = 0;
  std::string checkpoint;
  auto* candidates = app.add_subcommand("candidates", "select top-K candidates per training query");
  candidates->add_option("--iteration", iteration, "0 = BM25, n >= 1 = dense with iter_n checkpoint")
      ->capture_default_str();
  candidates->add_option("--checkpoint", checkpoint, "model.bin for dense selection");

  auto* score = app.add_subcommand("score", "score and rank a candidates file");
  score->add_option("--iteration", iteration)->capture_default_str();

  std::optional<std::size_t> iterations, epochs;
  auto* trainc = app.add_subcommand("train", "run the iterative training loop");
  trainc->add_option("--iterations", iterations);
  trainc->add_option("--epochs", epochs);

  auto* encode = app.add_subcommand("encode-corpus", "pre-encode the example corpus into a dense index");
  encode->add_option("--checkpoint", checkpoint, "model.bin (default: latest iter_n)");

  std::string sample_id;
  std::size_t top = 5;
  auto* retrieve = app.add_subcommand("retrieve", "top-L examples for one sample");
  retrieve->add_option("--sample", sample_id)->required();
  retrieve->add_option("--top", top)->capture_default_str()->check(CLI::PositiveNumber);
  retrieve->add_option("--checkpoint", checkpoint);

  std::string ordering;
  auto* assemble = app.add_subcommand("assemble", "assemble the budgeted prompt for one sample");
  assemble->add_option("--sample", sample_id)->required();
  assemble->add_option("--ordering", ordering, "similarity | reverse | random[:seed]");
  assemble->add_option("--checkpoint", checkpoint);

  auto* evaluate = app.add_subcommand("evaluate", "generate for the test set and score BLEU-4/ROUGE-L/chrF");
  evaluate->add_option("--ordering", ordering);
  evaluate->add_option("--checkpoint", checkpoint);

  auto* ablation = app.add_subcommand("order-ablation", "evaluate similarity, reverse and random orderings");
  ablation->add_option("--checkpoint", checkpoint);

  std::size_t trials = 20, dim = 8;
  auto* gradcheck = app.add_subcommand("gradcheck", "compare analytic gradients with finite differences");
  gradcheck->add_option("--trials", trials)->capture_default_str();
  gradcheck->add_option("--dim", dim)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    kernels::set_jobs(g.jobs);
    if (g.seed) sc.seed = *g.seed;
    if (*prepare) return synthetic_dir.empty() ? cmd_prepare(g) : cmd_prepare_synthetic(synthetic_dir, sc);
    if (app.got_subcommand("index-bm25")) return cmd_index_bm25(g);
    if (*candidates) return cmd_candidates(g, iteration, checkpoint);
    if (*score) return cmd_score(g, iteration);
    if (*trainc) return cmd_train(g, iterations, epochs);
    if (*encode) return cmd_encode_corpus(g, checkpoint);
    if (*retrieve) return cmd_retrieve(g, sample_id, top, checkpoint);
    if (*assemble) return cmd_assemble(g, sample_id, ordering, checkpoint);
    if (*evaluate) return cmd_evaluate(g, ordering, checkpoint);
    if (*ablation) return cmd_order_ablation(g, checkpoint);
    if (*gradcheck) return cmd_gradcheck(g, trials, dim);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DatasetError& e) {
    std::cerr << "dataset error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
