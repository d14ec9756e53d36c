#include "icr/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <unordered_map>

#include "icr/binio.hpp"
#include "icr/errors.hpp"
#include "icr/rng.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;
namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (K < 2) throw ConfigError("train.K", "must be >= 2");
  if (iterations < 1) throw ConfigError("train.iterations", "must be >= 1");
  if (epochs < 1) throw ConfigError("train.epochs", "must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size", "must be >= 1");
  if (!(learning_rate > 0) || !std::isfinite(learning_rate)) throw ConfigError("train.learning_rate", "must be > 0");
  if (optimizer != "sgd" && optimizer != "adam") throw ConfigError("train.optimizer", "must be sgd or adam");
  if (!(gamma1 >= 0) || !(gamma2 >= 0)) throw ConfigError("train.gamma", "gamma1 and gamma2 must be >= 0");
  if (!(default_sampling_rate > 0)) throw ConfigError("train.sampling_rate", "must be > 0");
  for (const auto& [task, rate] : sampling_rate)
    if (!(rate > 0)) throw ConfigError("datasets." + task + ".sampling_rate", "must be > 0");
  if (dim < 1) throw ConfigError("encoder.dim", "must be >= 1");
  if (buckets < 1) throw ConfigError("encoder.buckets", "must be >= 1");
  if (max_in_flight < 1) throw ConfigError("generator.max_in_flight", "must be >= 1");
}

double TrainConfig::rate_for(const std::string& task_id) const {
  auto it = sampling_rate.find(task_id);
  return it == sampling_rate.end() ? default_sampling_rate : it->second;
}

std::vector<QueryView> build_query_views(const TaskRegistry& registry, const ExampleStore& store, bool masked) {
  std::vector<QueryView> views(store.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto& s = store.samples()[i];
    views[i] = make_query_view(registry.at(s.task_id), s, masked);
  }
  return views;
}

std::vector<std::string> select_candidates(std::size_t iteration, const TaskRegistry& registry,
                                           const ExampleStore& store, std::size_t i, std::size_t K,
                                           const Bm25Index* bm25, const ModelParams* model, const DenseIndex* index,
                                           const QueryView* view) {
  if (store.size() < 2) throw std::invalid_argument("candidate selection needs at least 2 examples");
  const auto& sample = store.samples()[i];
  std::vector<ScoredId> hits;
  if (iteration == 0) {
    if (!bm25) throw std::invalid_argument("iteration 0 needs a BM25 index");
    const auto q = build_query(registry.at(sample.task_id), sample);
    hits = bm25->topk(tokenize(q.text + kSegmentSeparator + *q.gold), K, sample.sample_id);
  } else {
    if (!model || !index) throw std::invalid_argument("iteration >= 1 needs a model and a dense index");
    QueryView local;
    if (!view) {
      local = make_query_view(registry.at(sample.task_id), sample, true);
      view = &local;
    }
    hits = index->search(encode_query_text(*model, view->query.text, view->tree), K, sample.sample_id);
  }
  std::vector<std::string> ids;
  ids.reserve(hits.size());
  for (auto& h : hits) ids.push_back(std::move(h.sample_id));
  return ids;
}

std::vector<std::vector<std::size_t>> build_batches(const std::vector<std::string>& instance_tasks,
                                                    const TrainConfig& cfg, std::size_t batch_size,
                                                    std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch size must be >= 1");
  std::map<std::string, std::vector<std::size_t>> by_task;
  for (std::size_t i = 0; i < instance_tasks.size(); ++i) by_task[instance_tasks[i]].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> pool;
  for (auto& [task, members] : by_task) {
    const double rate = cfg.rate_for(task);
    const auto n = members.size();
    const auto m = static_cast<std::size_t>(std::llround(rate * static_cast<double>(n)));
    if (rate < 1.0) {
      rng.shuffle(members);
      members.resize(std::min(m, n));
      std::sort(members.begin(), members.end());
      pool.insert(pool.end(), members.begin(), members.end());
    } else if (rate == 1.0) {
      pool.insert(pool.end(), members.begin(), members.end());
    } else {
      for (std::size_t k = 0; k < m; ++k) pool.push_back(members[rng.below(n)]);
    }
  }
  rng.shuffle(pool);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < pool.size(); start += batch_size)
    batches.emplace_back(pool.begin() + static_cast<std::ptrdiff_t>(start),
                         pool.begin() + static_cast<std::ptrdiff_t>(std::min(pool.size(), start + batch_size)));
  return batches;
}

TrainingBatch make_training_batch(const std::vector<TrainingInstance>& instances,
                                  const std::vector<std::size_t>& members, const ExampleStore& store,
                                  const std::vector<QueryView>& views) {
  TrainingBatch batch;
  std::unordered_map<std::string, std::size_t> doc_slot;
  for (auto m : members) {
    const auto& inst = instances[m];
    BatchQuery q;
    q.sample_id = store.samples()[inst.sample_index].sample_id;
    q.text = views[inst.sample_index].query.text;
    q.tree = views[inst.sample_index].tree;
    for (const auto& c : inst.candidates) {
      auto [it, fresh] = doc_slot.emplace(c.sample_id, batch.docs.size());
      if (fresh) {
        const auto di = store.find(c.sample_id);
        batch.docs.push_back({c.sample_id, store.doc(di).text, store.tree(di)});
      }
      q.candidates.push_back(it->second);
      q.ranks.push_back(c.rank);
    }
    batch.queries.push_back(std::move(q));
  }
  return batch;
}

ModelParams initial_model(const TrainConfig& cfg) {
  auto m = init_model(cfg.dim, cfg.buckets, derive_seed(cfg.seed, 0x1417));
  if (cfg.freeze_tree_channel) m.beta1 = m.beta2 = 0.0;
  return m;
}

namespace {

json batch_to_json(const TrainingBatch& b) {
  json docs = json::array(), queries = json::array();
  for (const auto& d : b.docs) docs.push_back({{"sample_id", d.sample_id}, {"text", d.text}, {"tree", d.tree}});
  for (const auto& q : b.queries)
    queries.push_back(
        {{"sample_id", q.sample_id}, {"text", q.text}, {"tree", q.tree}, {"candidates", q.candidates}, {"ranks", q.ranks}});
  return {{"queries", queries}, {"docs", docs}};
}

json encoder_config_json(const TrainConfig& cfg) {
  json rates = json::object();
  for (const auto& [k, v] : cfg.sampling_rate) rates[k] = v;
  return {{"K", cfg.K},
          {"iterations", cfg.iterations},
          {"epochs", cfg.epochs},
          {"batch_size", cfg.batch_size},
          {"learning_rate", cfg.learning_rate},
          {"optimizer", cfg.optimizer},
          {"gamma1", cfg.gamma1},
          {"gamma2", cfg.gamma2},
          {"default_sampling_rate", cfg.default_sampling_rate},
          {"sampling_rate", rates},
          {"seed", cfg.seed},
          {"freeze_tree_channel", cfg.freeze_tree_channel}};
}

void write_manifest(const std::string& dir, std::size_t iteration, const ModelParams& model, std::uint64_t fingerprint,
                    const TrainConfig& cfg, const ExampleStore& store, const std::vector<QueryView>& views) {
  json probes = json::array();
  const std::size_t n = std::min(cfg.probe_count, store.size());
  for (std::size_t i = 0; i < n; ++i) {
    probes.push_back({{"kind", "query"},
                      {"sample_id", store.samples()[i].sample_id},
                      {"text", views[i].query.text},
                      {"tree", views[i].tree},
                      {"vector", encode_query_text(model, views[i].query.text, views[i].tree)}});
    probes.push_back({{"kind", "example"},
                      {"sample_id", store.doc(i).sample_id},
                      {"text", store.doc(i).text},
                      {"tree", store.tree(i)},
                      {"vector", encode_example_text(model, store.doc(i).text, store.tree(i))}});
  }
  json j = {{"iteration", iteration},
            {"dim", model.query.dim},
            {"buckets", model.query.buckets},
            {"hash", "fnv1a64"},
            {"alpha1", model.alpha1},
            {"beta1", model.beta1},
            {"alpha2", model.alpha2},
            {"beta2", model.beta2},
            {"fingerprint", hex64(fingerprint)},
            {"train", encoder_config_json(cfg)},
            {"probes", probes}};
  write_file_atomic(dir + "/manifest.json", j.dump(2) + "\n");
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const TaskRegistry& registry, const ExampleStore& store, Scorer& scorer,
                  ScoreCache& cache, const std::string& out_dir, const TrainHooks& hooks) {
  cfg.validate();
  if (store.size() < 2) throw std::invalid_argument("training needs at least 2 examples");
  auto warn = [&](const std::string& msg) {
    if (hooks.warn)
      hooks.warn(msg);
    else
      std::cerr << "warning: " << msg << "\n";
  };
  if (cfg.K + 1 > store.size())
    warn("corpus has " + std::to_string(store.size()) + " examples; using all " + std::to_string(store.size() - 1) +
         " other examples as candidates instead of K=" + std::to_string(cfg.K));

  const auto views = build_query_views(registry, store, true);
  const auto bm25 = Bm25Index::build(store.docs());
  TrainResult result;
  result.model = initial_model(cfg);
  result.initial = result.model;
  ModelParams& model = result.model;
  AdamOptimizer adam(cfg.learning_rate);

  std::ofstream log;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log.open(out_dir + "/train_log.jsonl", std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + out_dir + "/train_log.jsonl");
  }
  auto emit = [&](const json& j) {
    if (log.is_open()) log << j.dump() << '\n';
  };

  std::vector<std::string> instance_tasks(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) instance_tasks[i] = store.samples()[i].task_id;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    IterationSummary summary;
    summary.iteration = it + 1;

    DenseIndex index;
    if (it > 0) index = encode_corpus(model, store);
    std::vector<TrainingInstance> instances(store.size());
    json cand_lines = json::array();
    for (std::size_t i = 0; i < store.size(); ++i) {
      const auto ids = select_candidates(it, registry, store, i, cfg.K, &bm25, &model, &index, &views[i]);
      std::vector<const ExampleDoc*> docs;
      std::vector<const ExemplarTemplate*> tmpls;
      for (const auto& id : ids) {
        const auto di = store.find(id);
        docs.push_back(&store.doc(di));
        tmpls.push_back(&store.exemplar_template(di));
      }
      const auto& sample = store.samples()[i];
      instances[i].sample_index = i;
      instances[i].candidates = score_candidates(scorer, cache, registry.at(sample.task_id), sample, docs, tmpls,
                                                 cfg.max_in_flight, &summary.scoring);
    }

    std::string iter_dir;
    if (!out_dir.empty()) {
      iter_dir = out_dir + "/iter_" + std::to_string(it + 1);
      fs::create_directories(iter_dir);
      std::string lines;
      for (const auto& inst : instances) {
        json c = json::array();
        for (const auto& sc : inst.candidates)
          c.push_back({{"sample_id", sc.sample_id}, {"score", sc.score}, {"rank", sc.rank}});
        lines += json{{"query", store.samples()[inst.sample_index].sample_id},
                      {"source", it == 0 ? "bm25" : "dense"},
                      {"candidates", c}}
                     .dump() +
                 "\n";
      }
      write_file_atomic(iter_dir + "/candidates.jsonl", lines);
    }

    for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
      const auto batches = build_batches(instance_tasks, cfg, cfg.batch_size, derive_seed(cfg.seed, it + 1, ep + 1));
      double sum_total = 0, sum_bt = 0, sum_rt = 0;
      std::size_t step = 0;
      for (const auto& members : batches) {
        const auto batch = make_training_batch(instances, members, store, views);
        auto rep = total_loss(model, batch, cfg.gamma1, cfg.gamma2, true);
        if (!std::isfinite(rep.l_total)) {
          if (!out_dir.empty()) write_file_atomic(out_dir + "/diagnostic_batch.json", batch_to_json(batch).dump(2));
          throw std::runtime_error("non-finite loss at iteration " + std::to_string(it + 1) + ", epoch " +
                                   std::to_string(ep + 1) + ", step " + std::to_string(step + 1) +
                                   (out_dir.empty() ? "" : "; batch dumped to diagnostic_batch.json"));
        }
        if (cfg.optimizer == "adam")
          adam.step(model, rep.grad, cfg.freeze_tree_channel);
        else
          apply_sgd(model, rep.grad, cfg.learning_rate, cfg.freeze_tree_channel);
        ++step;
        sum_total += rep.l_total;
        sum_bt += rep.l_bt;
        sum_rt += rep.l_rt;
        StepRecord rec{it + 1, ep + 1, step, batch.queries.size(), rep.l_bt, rep.l_rt, rep.l_total};
        if (hooks.on_step) hooks.on_step(rec);
        emit({{"type", "step"},
              {"iteration", rec.iteration},
              {"epoch", rec.epoch},
              {"step", rec.step},
              {"queries", rec.queries},
              {"l_bt", rec.l_bt},
              {"l_rt", rec.l_rt},
              {"l_total", rec.l_total}});
      }
      const double denom = step ? static_cast<double>(step) : 1.0;
      summary.epoch_loss.push_back(sum_total / denom);
      summary.epoch_l_bt.push_back(sum_bt / denom);
      summary.epoch_l_rt.push_back(sum_rt / denom);
      emit({{"type", "epoch"},
            {"iteration", it + 1},
            {"epoch", ep + 1},
            {"steps", step},
            {"mean_l_bt", sum_bt / denom},
            {"mean_l_rt", sum_rt / denom},
            {"mean_l_total", sum_total / denom}});
    }
    if (!all_finite(model)) throw std::runtime_error("parameters became non-finite in iteration " + std::to_string(it + 1));

    summary.fingerprint = model_fingerprint(model);
    if (!iter_dir.empty()) {
      summary.checkpoint = iter_dir + "/model.bin";
      save_checkpoint(summary.checkpoint, model);
      write_manifest(iter_dir, it + 1, model, summary.fingerprint, cfg, store, views);
    }
    json rec = {{"type", "iteration"},
                {"iteration", it + 1},
                {"candidates", it == 0 ? "bm25" : "dense"},
                {"scored", summary.scoring.requested},
                {"cache_hits", summary.scoring.cache_hits},
                {"mean_l_bt", summary.epoch_l_bt.back()},
                {"mean_l_rt", summary.epoch_l_rt.back()},
                {"mean_l_total", summary.epoch_loss.back()},
                {"fingerprint", hex64(summary.fingerprint)}};
    if (hooks.iteration_metrics)
      for (const auto& [k, v] : hooks.iteration_metrics(it + 1, model)) rec[k] = v;
    emit(rec);
    result.iterations.push_back(std::move(summary));
  }
  return result;
}

bool verify_checkpoint(const std::string& iter_dir, std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  std::uint64_t fp = 0;
  const auto model = load_checkpoint(iter_dir + "/model.bin", &fp);
  const auto manifest = json::parse(read_file(iter_dir + "/manifest.json"));
  if (manifest.at("fingerprint").get<std::string>() != hex64(fp)) return fail("fingerprint mismatch");
  for (const auto& p : manifest.at("probes")) {
    const auto text = p.at("text").get<std::string>();
    const auto tree = p.at("tree").get<std::string>();
    const auto stored = p.at("vector").get<std::vector<double>>();
    const auto v = p.at("kind") == "query" ? encode_query_text(model, text, tree) : encode_example_text(model, text, tree);
    if (v != stored) return fail("probe " + p.at("sample_id").get<std::string>() + " (" +
                                 p.at("kind").get<std::string>() + ") differs");
  }
  return true;
}

}  // namespace icr
