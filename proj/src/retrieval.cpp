#include "icr/retrieval.hpp"

#include <algorithm>
#include <sstream>
#include <stdexcept>

#include "icr/binio.hpp"
#include "icr/kernels.hpp"
#include "icr/rng.hpp"
#include "json.hpp"

namespace icr {

using nlohmann::json;

namespace {

constexpr char kIndexMagic[8] = {'I', 'C', 'R', 'D', 'E', 'N', 'S', '\0'};
constexpr std::uint32_t kIndexVersion = 1;

}  // namespace

ExampleStore::ExampleStore(const TaskRegistry& registry, const std::vector<Sample>& samples,
                           const AdapterRegistry& adapters)
    : samples_(samples) {
  docs_.reserve(samples.size());
  trees_.resize(samples.size());
  for (const auto& s : samples) {
    if (!by_id_.emplace(s.sample_id, docs_.size()).second)
      throw DatasetError("duplicate sample_id " + s.sample_id);
    docs_.push_back(make_example_doc(s));
    templates_.push_back(registry.at(s.task_id).exemplar_template());
  }
  std::vector<char> degraded(samples.size(), 0);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto tree = example_tree(registry.at(samples[i].task_id), samples[i], adapters);
    degraded[i] = tree.degraded;
    trees_[i] = serialize_preorder(tree);
  }
  degraded_ = static_cast<std::size_t>(std::count(degraded.begin(), degraded.end(), 1));
}

std::size_t ExampleStore::find(const std::string& sample_id) const {
  auto it = by_id_.find(sample_id);
  return it == by_id_.end() ? docs_.size() : it->second;
}

QueryView make_query_view(const TaskSpec& task, const Sample& sample, bool masked, const AdapterRegistry& adapters) {
  QueryView v;
  v.query = build_query(task, sample);
  if (masked) v.query = mask_query(v.query);
  v.tree = serialize_preorder(query_tree(task, sample, adapters));
  return v;
}

void DenseIndex::add(const std::string& sample_id, std::span<const double> row) {
  if (row.size() != dim_)
    throw std::invalid_argument("row dimension " + std::to_string(row.size()) + " != index dim " +
                                std::to_string(dim_));
  ids_.push_back(sample_id);
  for (double x : row) data_.push_back(static_cast<float>(x));
}

std::vector<ScoredId> DenseIndex::search_impl(std::span<const double> query, std::size_t top_l,
                                              const std::string& exclude_id, bool parallel) const {
  if (rows() == 0) throw std::runtime_error("search on an empty index");
  if (top_l == 0) throw std::invalid_argument("top_l must be >= 1");
  if (query.size() != dim_)
    throw std::invalid_argument("query dimension " + std::to_string(query.size()) + " != index dim " +
                                std::to_string(dim_));
  std::vector<double> scores(rows());
  std::vector<char> skip;
  if (!exclude_id.empty()) {
    skip.assign(rows(), 0);
    for (std::size_t i = 0; i < rows(); ++i) skip[i] = ids_[i] == exclude_id;
  }
  std::vector<std::size_t> top;
  if (parallel) {
    kernels::inner_products(data_, dim_, query, scores);
    top = kernels::select_topk(scores, ids_, top_l, skip);
  } else {
    kernels::inner_products_serial(data_, dim_, query, scores);
    top = kernels::select_topk_serial(scores, ids_, top_l, skip);
  }
  std::vector<ScoredId> out;
  out.reserve(top.size());
  for (auto i : top) out.push_back({ids_[i], scores[i]});
  return out;
}

std::vector<ScoredId> DenseIndex::search(std::span<const double> query, std::size_t top_l,
                                         const std::string& exclude_id) const {
  return search_impl(query, top_l, exclude_id, true);
}

std::vector<ScoredId> DenseIndex::search_serial(std::span<const double> query, std::size_t top_l,
                                                const std::string& exclude_id) const {
  return search_impl(query, top_l, exclude_id, false);
}

std::string DenseIndex::serialize() const {
  std::ostringstream os(std::ios::binary);
  BinWriter w(os);
  w.bytes(std::string_view(kIndexMagic, sizeof(kIndexMagic)));
  w.u32(kIndexVersion);
  w.u64(rows());
  w.u64(dim_);
  w.u64(fingerprint_);
  w.f32s(data_);
  for (const auto& id : ids_) w.str(id);
  return os.str();
}

DenseIndex DenseIndex::deserialize(const std::string& bytes) {
  std::istringstream is(bytes, std::ios::binary);
  BinReader r(is);
  if (r.bytes(sizeof(kIndexMagic)) != std::string_view(kIndexMagic, sizeof(kIndexMagic)))
    throw FormatError("not a dense index file");
  if (auto v = r.u32(); v != kIndexVersion) throw FormatError("unsupported index version " + std::to_string(v));
  const auto rows = r.u64();
  const auto dim = r.u64();
  const auto fingerprint = r.u64();
  DenseIndex idx(dim, fingerprint);
  if (rows * idx.dim_ * sizeof(float) > bytes.size()) throw FormatError("index header exceeds file size");
  idx.data_.resize(rows * idx.dim_);
  r.f32s(idx.data_);
  idx.ids_.reserve(rows);
  for (std::uint64_t i = 0; i < rows; ++i) idx.ids_.push_back(r.str());
  return idx;
}

void DenseIndex::save(const std::string& path) const { write_file_atomic(path, serialize()); }
DenseIndex DenseIndex::load(const std::string& path) { return deserialize(read_file(path)); }

DenseIndex encode_corpus(const ModelParams& model, const std::vector<ExampleDoc>& docs,
                         const std::vector<std::string>& trees) {
  if (docs.size() != trees.size()) throw std::invalid_argument("encode_corpus: docs and trees differ in size");
  std::vector<Embedding> rows(docs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < docs.size(); ++i) rows[i] = encode_example_text(model, docs[i].text, trees[i]);
  DenseIndex idx(model.example.dim, model_fingerprint(model));
  for (std::size_t i = 0; i < docs.size(); ++i) idx.add(docs[i].sample_id, rows[i]);
  return idx;
}

DenseIndex encode_corpus(const ModelParams& model, const ExampleStore& store) {
  return encode_corpus(model, store.docs(), store.trees());
}

OrderingSpec OrderingSpec::parse(const std::string& s) {
  if (s == "similarity") return {Ordering::Similarity, 0};
  if (s == "reverse" || s == "reverse_similarity") return {Ordering::Reverse, 0};
  if (s == "random") return {Ordering::Random, 0};
  if (s.rfind("random:", 0) == 0) {
    try {
      std::size_t used = 0;
      auto seed = std::stoull(s.substr(7), &used);
      if (used == s.size() - 7) return {Ordering::Random, seed};
    } catch (const std::exception&) {
    }
  }
  throw std::invalid_argument("unknown ordering '" + s + "' (similarity, reverse, random[:seed])");
}

std::string OrderingSpec::str() const {
  switch (kind) {
    case Ordering::Similarity: return "similarity";
    case Ordering::Reverse: return "reverse";
    case Ordering::Random: return "random:" + std::to_string(seed);
  }
  return "similarity";
}

std::size_t pipeline_token_count(std::string_view text) { return tokenize(text).size(); }

std::vector<std::string> PromptPlan::admitted_set() const {
  std::vector<std::string> ids;
  for (const auto& e : exemplars) ids.push_back(e.sample_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

std::uint64_t PromptPlan::fnv1a64_text() const { return fnv1a64(text); }

std::string PromptPlan::to_json() const {
  json ex = json::array();
  for (const auto& e : exemplars)
    ex.push_back({{"sample_id", e.sample_id}, {"sim", e.sim}, {"tokens", e.tokens}, {"text", e.text}});
  json j = {{"instruction", instruction},
            {"instruction_tokens", instruction_tokens},
            {"exemplars", ex},
            {"input", input},
            {"input_tokens", input_tokens},
            {"separator_tokens", separator_tokens},
            {"budget", budget},
            {"reserved_output", reserved_output},
            {"ordering", ordering.str()},
            {"total_tokens", total_tokens},
            {"fingerprint", hex64(fingerprint())},
            {"text", text}};
  return j.dump(2);
}

PromptPlan assemble_prompt(const std::string& instruction, const std::vector<RankedExample>& ranked,
                           const std::string& input, std::size_t budget, std::size_t reserved_output,
                           const OrderingSpec& ordering, const TokenCounter& counter) {
  if (reserved_output >= budget) throw BudgetError("reserved output length must be below the budget");
  PromptPlan plan;
  plan.instruction = instruction;
  plan.input = input;
  plan.budget = budget;
  plan.reserved_output = reserved_output;
  plan.ordering = ordering;
  plan.instruction_tokens = counter(instruction);
  plan.input_tokens = counter(input);
  const std::size_t sep = counter(kPromptSeparator);
  const std::size_t limit = budget - reserved_output;

  std::size_t used = plan.instruction_tokens + plan.input_tokens + sep;
  if (used > limit) throw BudgetError("input exceeds budget");
  for (const auto& r : ranked) {
    const std::size_t t = counter(r.text);
    if (used + t + sep > limit) break;
    used += t + sep;
    plan.exemplars.push_back({r.sample_id, r.sim, r.text, t});
  }
  plan.separator_tokens = sep * (plan.exemplars.size() + 1);

  // Admission order is descending similarity; similarity layout puts the
  // most similar exemplar last, adjacent to the input.
  switch (ordering.kind) {
    case Ordering::Similarity: std::reverse(plan.exemplars.begin(), plan.exemplars.end()); break;
    case Ordering::Reverse: break;
    case Ordering::Random: {
      Rng rng(ordering.seed);
      rng.shuffle(plan.exemplars);
      break;
    }
  }

  plan.text = instruction;
  for (const auto& e : plan.exemplars) {
    plan.text += kPromptSeparator;
    plan.text += e.text;
  }
  plan.text += kPromptSeparator;
  plan.text += input;
  plan.total_tokens = counter(plan.text);
  if (plan.total_tokens > limit)
    throw BudgetError("token counter is not additive over segments: " + std::to_string(plan.total_tokens) + " > " +
                      std::to_string(limit));
  return plan;
}

RetrievalResult retrieve_for_test(const ModelParams& model, const DenseIndex& index, const ExampleStore& store,
                                  const TaskRegistry& registry, const Sample& test_sample, const RetrieveConfig& cfg,
                                  const TokenCounter& counter) {
  const auto& task = registry.at(test_sample.task_id);
  const auto view = make_query_view(task, test_sample, /*masked=*/true);
  const auto qv = encode_query_text(model, view.query.text, view.tree);
  RetrievalResult res;
  res.hits = index.search(qv, cfg.top_l, test_sample.sample_id);
  std::vector<RankedExample> ranked;
  ranked.reserve(res.hits.size());
  for (const auto& h : res.hits) {
    const auto i = store.find(h.sample_id);
    if (i == store.size()) throw std::runtime_error("index row " + h.sample_id + " is not in the example store");
    const auto& d = store.doc(i);
    ranked.push_back({h.sample_id, h.score, render_exemplar(store.exemplar_template(i), d.input, d.output)});
  }
  res.plan = assemble_prompt(task.instruction(), ranked, render_input(task.exemplar_template(), test_sample.input),
                             cfg.budget, cfg.reserved_output, cfg.ordering, counter);
  return res;
}

}  // namespace icr
