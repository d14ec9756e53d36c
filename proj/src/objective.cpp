#include "icr/objective.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "icr/rng.hpp"

namespace icr {

namespace {

double clamp_sim(double s) { return std::clamp(s, -kSimClamp, kSimClamp); }
double clamp_grad(double s) { return (s >= -kSimClamp && s <= kSimClamp) ? 1.0 : 0.0; }

// log(1 + e^x) without overflow.
double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }
double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

}  // namespace

InBatchLoss in_batch_tree_loss(const std::vector<QuerySims>& batch) {
  InBatchLoss out;
  if (batch.empty()) return out;
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  out.grad.resize(batch.size());
  for (std::size_t q = 0; q < batch.size(); ++q) {
    const auto& qs = batch[q];
    if (qs.negatives.empty()) throw std::invalid_argument("in-batch loss: query " + std::to_string(q) + " has empty Z");
    const double sp = clamp_sim(qs.positive);
    double m = sp;
    for (double s : qs.negatives) m = std::max(m, clamp_sim(s));
    double z = std::exp(sp - m);
    for (double s : qs.negatives) z += std::exp(clamp_sim(s) - m);
    const double lse = m + std::log(z);
    out.loss += (lse - sp) * inv_b;

    auto& g = out.grad[q];
    g.positive = (std::exp(sp - lse) - 1.0) * inv_b * clamp_grad(qs.positive);
    g.negatives.resize(qs.negatives.size());
    for (std::size_t i = 0; i < qs.negatives.size(); ++i) {
      const double s = qs.negatives[i];
      g.negatives[i] = std::exp(clamp_sim(s) - lse) * inv_b * clamp_grad(s);
    }
  }
  return out;
}

RankingLoss ranking_tree_loss(const std::vector<RankedSim>& ranked) {
  const std::size_t n = ranked.size();
  std::vector<char> seen(n + 1, 0);
  for (const auto& r : ranked) {
    if (r.rank < 1 || static_cast<std::size_t>(r.rank) > n)
      throw std::invalid_argument("ranking loss: rank " + std::to_string(r.rank) + " outside 1.." + std::to_string(n));
    if (seen[r.rank]) throw std::invalid_argument("ranking loss: duplicate rank " + std::to_string(r.rank));
    seen[r.rank] = 1;
  }
  RankingLoss out;
  out.grad.assign(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const double w = 1.0 / ranked[i].rank - 1.0 / ranked[j].rank;
      if (w <= 0.0) continue;
      const double diff = clamp_sim(ranked[j].sim) - clamp_sim(ranked[i].sim);
      out.loss += w * softplus(diff);
      const double g = w * sigmoid(diff);
      out.grad[j] += g * clamp_grad(ranked[j].sim);
      out.grad[i] -= g * clamp_grad(ranked[i].sim);
    }
  }
  return out;
}

std::vector<std::size_t> negative_set(const TrainingBatch& batch, std::size_t q) {
  const auto& query = batch.queries[q];
  std::size_t pos = batch.docs.size();
  for (std::size_t c = 0; c < query.candidates.size(); ++c)
    if (query.ranks[c] == 1) pos = query.candidates[c];
  std::vector<std::size_t> z;
  for (std::size_t j = 0; j < batch.docs.size(); ++j)
    if (j != pos && batch.docs[j].sample_id != query.sample_id) z.push_back(j);
  return z;
}

LossReport total_loss(const ModelParams& model, const TrainingBatch& batch, double gamma1, double gamma2,
                      bool with_grad) {
  if (gamma1 < 0 || gamma2 < 0) throw std::invalid_argument("gamma1 and gamma2 must be >= 0");
  const std::size_t nq = batch.queries.size();
  const std::size_t nd = batch.docs.size();
  LossReport rep;
  if (with_grad) rep.grad.reset(model);
  if (nq == 0) return rep;

  for (const auto& q : batch.queries) {
    if (q.candidates.empty() || q.candidates.size() != q.ranks.size())
      throw std::invalid_argument("query " + q.sample_id + ": candidates and ranks must be non-empty and parallel");
    for (auto c : q.candidates)
      if (c >= nd) throw std::out_of_range("query " + q.sample_id + ": candidate index out of range");
    if (std::count(q.ranks.begin(), q.ranks.end(), 1) != 1)
      throw std::invalid_argument("query " + q.sample_id + ": exactly one candidate must have rank 1");
  }

  std::vector<MixedActivation> qa(nq), da(nd);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t b = 0; b < nq; ++b)
    qa[b] = encode_mixed_forward(model.query, model.alpha1, model.beta1, batch.queries[b].text,
                                 batch.queries[b].tree);
#pragma omp parallel for schedule(dynamic)
  for (std::size_t j = 0; j < nd; ++j)
    da[j] = encode_mixed_forward(model.example, model.alpha2, model.beta2, batch.docs[j].text, batch.docs[j].tree);

  std::vector<double> sims(nq * nd);
#pragma omp parallel for
  for (std::size_t b = 0; b < nq; ++b)
    for (std::size_t j = 0; j < nd; ++j) sims[b * nd + j] = sim_tree(qa[b].out, da[j].out);

  // d loss / d sim, dense over (query, doc)
  std::vector<double> ds(nq * nd, 0.0);

  std::vector<QuerySims> bt(nq);
  std::vector<std::vector<std::size_t>> zsets(nq);
  std::vector<std::size_t> positives(nq);
  for (std::size_t b = 0; b < nq; ++b) {
    const auto& q = batch.queries[b];
    for (std::size_t c = 0; c < q.candidates.size(); ++c)
      if (q.ranks[c] == 1) positives[b] = q.candidates[c];
    zsets[b] = negative_set(batch, b);
    bt[b].positive = sims[b * nd + positives[b]];
    for (auto j : zsets[b]) bt[b].negatives.push_back(sims[b * nd + j]);
  }
  auto lbt = in_batch_tree_loss(bt);
  rep.l_bt = lbt.loss;
  for (std::size_t b = 0; b < nq; ++b) {
    ds[b * nd + positives[b]] += gamma1 * lbt.grad[b].positive;
    for (std::size_t i = 0; i < zsets[b].size(); ++i) ds[b * nd + zsets[b][i]] += gamma1 * lbt.grad[b].negatives[i];
  }

  const double inv_q = 1.0 / static_cast<double>(nq);
  for (std::size_t b = 0; b < nq; ++b) {
    const auto& q = batch.queries[b];
    std::vector<RankedSim> rs(q.candidates.size());
    for (std::size_t c = 0; c < rs.size(); ++c) rs[c] = {sims[b * nd + q.candidates[c]], q.ranks[c]};
    auto lrt = ranking_tree_loss(rs);
    rep.l_rt += lrt.loss * inv_q;
    for (std::size_t c = 0; c < rs.size(); ++c) ds[b * nd + q.candidates[c]] += gamma2 * inv_q * lrt.grad[c];
  }
  rep.l_total = gamma1 * rep.l_bt + gamma2 * rep.l_rt;
  if (!with_grad) return rep;

  const std::size_t d = model.query.dim;
  std::vector<std::vector<double>> dq(nq, std::vector<double>(d, 0.0)), dd(nd, std::vector<double>(d, 0.0));
  for (std::size_t b = 0; b < nq; ++b)
    for (std::size_t j = 0; j < nd; ++j) {
      const double g = ds[b * nd + j];
      if (g == 0.0) continue;
      for (std::size_t k = 0; k < d; ++k) {
        dq[b][k] += g * da[j].out[k];
        dd[j][k] += g * qa[b].out[k];
      }
    }
  // Fixed reduction order keeps gradients bitwise reproducible.
  for (std::size_t b = 0; b < nq; ++b)
    encode_mixed_backward(model.query, model.alpha1, model.beta1, qa[b], dq[b], rep.grad.query, rep.grad.alpha1,
                          rep.grad.beta1);
  for (std::size_t j = 0; j < nd; ++j)
    encode_mixed_backward(model.example, model.alpha2, model.beta2, da[j], dd[j], rep.grad.example, rep.grad.alpha2,
                          rep.grad.beta2);
  return rep;
}

GradCheckReport gradient_check(const ModelParams& model, const TrainingBatch& batch, double gamma1, double gamma2,
                               double h, double floor) {
  const auto analytic = total_loss(model, batch, gamma1, gamma2, true).grad;
  ModelParams m = model;
  GradCheckReport rep;
  auto check = [&](double& param, double a, const std::string& name) {
    const double saved = param;
    param = saved + h;
    const double lp = total_loss(m, batch, gamma1, gamma2, false).l_total;
    param = saved - h;
    const double lm = total_loss(m, batch, gamma1, gamma2, false).l_total;
    param = saved;
    const double n = (lp - lm) / (2 * h);
    const double err = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    ++rep.checked;
    if (err > rep.max_rel_error || !std::isfinite(err)) {
      rep.max_rel_error = std::isfinite(err) ? err : std::numeric_limits<double>::infinity();
      rep.worst_parameter = name;
    }
  };
  auto check_encoder = [&](EncoderParams& enc, const EncoderGrad& g, const std::string& tag) {
    const std::size_t d = enc.dim;
    // Embedding rows touched by the batch are exactly the rows with gradient entries.
    for (const auto& [bucket, row] : g.embedding_rows)
      for (std::size_t k = 0; k < d; ++k)
        check(enc.embedding[bucket * d + k], row[k], tag + ".embedding[" + std::to_string(bucket) + "][" +
                                                         std::to_string(k) + "]");
    for (std::size_t i = 0; i < enc.projection.size(); ++i)
      check(enc.projection[i], g.projection[i], tag + ".projection[" + std::to_string(i) + "]");
    for (std::size_t i = 0; i < d; ++i) check(enc.bias[i], g.bias[i], tag + ".bias[" + std::to_string(i) + "]");
  };
  check_encoder(m.query, analytic.query, "query");
  check_encoder(m.example, analytic.example, "example");
  check(m.alpha1, analytic.alpha1, "alpha1");
  check(m.beta1, analytic.beta1, "beta1");
  check(m.alpha2, analytic.alpha2, "alpha2");
  check(m.beta2, analytic.beta2, "beta2");
  return rep;
}

GradCheckInstance make_gradcheck_instance(std::uint64_t seed, std::size_t dim, std::size_t queries,
                                          std::size_t candidates, std::size_t buckets) {
  Rng rng(seed);
  auto unit = [&] { return rng.uniform(); };
  auto pick = [&](std::size_t n) { return rng.below(n); };

  GradCheckInstance inst;
  inst.model = init_model(dim, buckets, rng.next());
  for (auto* e : {&inst.model.query, &inst.model.example}) {
    for (auto& x : e->embedding) x = 2.0 * unit() - 1.0;
    for (auto& x : e->projection) x += 0.6 * (2.0 * unit() - 1.0);
    for (auto& x : e->bias) x = 0.4 * (2.0 * unit() - 1.0);
  }
  inst.model.alpha1 = 0.5 + unit();
  inst.model.beta1 = 0.5 + unit();
  inst.model.alpha2 = 0.5 + unit();
  inst.model.beta2 = 0.5 + unit();

  static const char* kWords[] = {"open", "file", "read", "line", "close", "sort", "list", "map",
                                 "key",  "value", "send", "signal", "kill", "pid", "parse", "json"};
  static const char* kLabels[] = {"ROOT", "Module", "Assign", "Name", "Call", "Args", "BinOp", "Num", "CHUNK", "WORD"};
  auto text = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += std::string(i ? " " : "") + kWords[pick(std::size(kWords))];
    return s;
  };
  auto tree = [&](std::size_t len) {
    std::string s = "ROOT";
    for (std::size_t i = 0; i < len; ++i) s += std::string(" ") + kLabels[pick(std::size(kLabels))];
    return s;
  };

  for (std::size_t i = 0; i < queries * candidates; ++i)
    inst.batch.docs.push_back({"d" + std::to_string(i), text(2 + pick(5)), tree(1 + pick(5))});
  for (std::size_t q = 0; q < queries; ++q) {
    BatchQuery bq;
    bq.sample_id = "q" + std::to_string(q);
    bq.text = text(2 + pick(5));
    bq.tree = tree(1 + pick(5));
    std::vector<int> ranks(candidates);
    for (std::size_t c = 0; c < candidates; ++c) {
      bq.candidates.push_back(q * candidates + c);
      ranks[c] = static_cast<int>(c) + 1;
    }
    rng.shuffle(ranks);
    bq.ranks = ranks;
    inst.batch.queries.push_back(std::move(bq));
  }
  return inst;
}

}  // namespace icr
