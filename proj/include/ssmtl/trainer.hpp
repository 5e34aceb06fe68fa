#ifndef SSMTL_TRAINER_HPP
#define SSMTL_TRAINER_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "ssmtl/augmentation.hpp"
#include "ssmtl/core.hpp"
#include "ssmtl/data_model.hpp"
#include "ssmtl/losses.hpp"
#include "ssmtl/metrics.hpp"
#include "ssmtl/network.hpp"
#include "ssmtl/pseudo_label.hpp"

namespace ssmtl {

enum class Imbalance { Reweight, Resample };

inline std::string_view to_string(Imbalance i) {
  return i == Imbalance::Reweight ? "reweight" : "resample";
}

inline Imbalance parse_imbalance(std::string_view s) {
  if (s == "reweight") return Imbalance::Reweight;
  if (s == "resample") return Imbalance::Resample;
  throw ConfigError("unknown imbalance mode '" + std::string(s) + "' (reweight, resample)");
}

struct TrainConfig {
  int epochs = 30;
  std::size_t batch_size = 64;
  double lr_base = 0.001;   // backbone
  double lr_heads = 0.01;   // all three task heads
  Mode mode = Mode::SsMfar;
  Imbalance imbalance = Imbalance::Reweight;
  LossWeights lambdas;
  ThresholdConfig thresholds;
  AugConfig aug;
  ModelConfig model;  // height/width are overwritten from the training images
  std::uint64_t seed = 0;

  void validate() const {
    if (epochs < 0) throw ConfigError("epochs must be non-negative");
    if (batch_size == 0) throw ConfigError("batch_size must be positive");
    if (!(lr_base > 0.0) || !(lr_heads > 0.0)) throw ConfigError("learning rates must be positive");
    lambdas.validate();
    thresholds.validate();
    aug.validate();
    model.validate();
  }
};

// ---------------------------------------------------------------------------------------------
// Adam

struct AdamHyper {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamMoments {
  Parameters first;
  Parameters second;
};

inline AdamMoments zero_moments(const Parameters& p) { return {zeros_like(p), zeros_like(p)}; }

struct LearningRates {
  double backbone = 0.001;
  double heads = 0.01;

  double of(ParamGroup g) const { return g == ParamGroup::Backbone ? backbone : heads; }
};

/// Bias-corrected Adam update for step t (t >= 1), per-group learning rates.
inline void adam_step(Parameters& params, const Gradients& grads, AdamMoments& moments,
                      const LearningRates& lr, long t, const AdamHyper& h = {}) {
  if (t < 1) throw std::invalid_argument("adam_step: t must be >= 1");
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(t));
  auto update = [&](std::span<double> w, std::span<const double> g, std::span<double> m,
                    std::span<double> v, double rate) {
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      w[i] -= rate * mhat / (std::sqrt(vhat) + h.eps);
    }
  };
  // Parallel traversal of the four identically-shaped layer sets.
  std::vector<Dense*> P, M, V;
  std::vector<const Dense*> G;
  std::vector<ParamGroup> groups;
  params.for_each_layer([&](auto, Dense& d, ParamGroup g) { P.push_back(&d); groups.push_back(g); });
  grads.for_each_layer([&](auto, const Dense& d, auto) { G.push_back(&d); });
  moments.first.for_each_layer([&](auto, Dense& d, auto) { M.push_back(&d); });
  moments.second.for_each_layer([&](auto, Dense& d, auto) { V.push_back(&d); });
  for (std::size_t k = 0; k < P.size(); ++k) {
    const double rate = lr.of(groups[k]);
    update(P[k]->weight.values(), G[k]->weight.values(), M[k]->weight.values(),
           V[k]->weight.values(), rate);
    update(P[k]->bias, G[k]->bias, M[k]->bias, V[k]->bias, rate);
  }
}

// ---------------------------------------------------------------------------------------------
// Epoch schedule

/// Reweight: a uniform permutation. Resample: labeled indices redrawn with replacement in
/// proportion to their class weight, randomly interleaved with the shuffled unlabeled indices.
inline std::vector<std::size_t> make_epoch_schedule(const Dataset& ds, Imbalance mode,
                                                    const ExpressionWeights& class_weights,
                                                    Rng& rng) {
  std::vector<std::size_t> order(ds.size());
  if (mode == Imbalance::Reweight) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    return order;
  }
  std::vector<std::size_t> labeled, unlabeled;
  std::vector<double> w;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& e = ds.samples[i].annotations.expression;
    if (e) {
      labeled.push_back(i);
      w.push_back(class_weights[static_cast<std::size_t>(*e)]);
    } else {
      unlabeled.push_back(i);
    }
  }
  std::vector<std::size_t> drawn;
  drawn.reserve(labeled.size());
  if (!labeled.empty()) {
    std::discrete_distribution<std::size_t> pick(w.begin(), w.end());
    for (std::size_t k = 0; k < labeled.size(); ++k) drawn.push_back(labeled[pick(rng)]);
  }
  std::shuffle(unlabeled.begin(), unlabeled.end(), rng);
  std::vector<char> slot_is_labeled(drawn.size() + unlabeled.size(), 0);
  std::fill_n(slot_is_labeled.begin(), drawn.size(), 1);
  std::shuffle(slot_is_labeled.begin(), slot_is_labeled.end(), rng);
  std::size_t li = 0, ui = 0;
  for (std::size_t k = 0; k < order.size(); ++k)
    order[k] = slot_is_labeled[k] ? drawn[li++] : unlabeled[ui++];
  return order;
}

// ---------------------------------------------------------------------------------------------
// One batch

/// Network input and per-task targets of one batch. Rows [0, weak_count) hold weak views of
/// the contributing samples; the following rows hold strong views of the unlabeled ones.
struct BatchPlan {
  Matrix input;
  std::size_t weak_count = 0;
  std::vector<std::size_t> samples;  // dataset index per weak row

  std::vector<std::size_t> exp_rows;
  std::vector<int> exp_labels;
  std::vector<std::size_t> au_rows;
  Matrix au_targets;
  std::vector<std::size_t> va_rows;
  Matrix va_targets;
  std::vector<std::size_t> unlabeled_weak_rows;
  std::vector<std::size_t> unlabeled_strong_rows;
};

/// Samples with no valid annotation for any task are dropped from the batch entirely. In the
/// semi-supervised modes, every remaining sample without an expression label also gets a
/// strong view.
inline BatchPlan plan_batch(const Split& data, std::span<const std::size_t> batch, Mode mode,
                            const AugConfig& aug, std::uint64_t seed, int epoch,
                            unsigned threads = 1) {
  BatchPlan plan;
  for (std::size_t idx : batch)
    if (validity(data.dataset.samples[idx]).any()) plan.samples.push_back(idx);
  plan.weak_count = plan.samples.size();

  std::vector<std::size_t> strong_samples;
  for (std::size_t r = 0; r < plan.weak_count; ++r) {
    const auto& a = data.dataset.samples[plan.samples[r]].annotations;
    if (a.expression) {
      plan.exp_rows.push_back(r);
      plan.exp_labels.push_back(*a.expression);
    } else if (is_semi_supervised(mode)) {
      plan.unlabeled_weak_rows.push_back(r);
      plan.unlabeled_strong_rows.push_back(plan.weak_count + strong_samples.size());
      strong_samples.push_back(plan.samples[r]);
    }
    if (a.action_units) plan.au_rows.push_back(r);
    if (a.affect) plan.va_rows.push_back(r);
  }
  plan.au_targets = Matrix(plan.au_rows.size(), kNumActionUnits);
  for (std::size_t k = 0; k < plan.au_rows.size(); ++k) {
    const auto& aus = *data.dataset.samples[plan.samples[plan.au_rows[k]]].annotations.action_units;
    for (int u = 0; u < kNumActionUnits; ++u) plan.au_targets(k, u) = aus[u];
  }
  plan.va_targets = Matrix(plan.va_rows.size(), kNumAffectDims);
  for (std::size_t k = 0; k < plan.va_rows.size(); ++k) {
    const auto& va = *data.dataset.samples[plan.samples[plan.va_rows[k]]].annotations.affect;
    plan.va_targets(k, 0) = va[0];
    plan.va_targets(k, 1) = va[1];
  }

  const std::size_t rows = plan.weak_count + strong_samples.size();
  if (rows == 0) return plan;
  const std::size_t dim = data.images[plan.samples.front()].pixels.size();
  plan.input = Matrix(rows, dim);
  parallel_for(rows, threads, [&](std::size_t r) {
    const bool weak = r < plan.weak_count;
    const std::size_t idx = weak ? plan.samples[r] : strong_samples[r - plan.weak_count];
    Rng rng = view_stream(seed, epoch, idx, weak ? View::Weak : View::Strong);
    const Image view = weak ? weak_augment(data.images[idx], aug, rng)
                            : strong_augment(data.images[idx], aug, rng);
    std::copy(view.pixels.begin(), view.pixels.end(), plan.input.row(r).begin());
  });
  return plan;
}

/// Everything the batch loss depends on besides the parameters.
struct LossContext {
  Mode mode = Mode::SsMfar;
  LossWeights lambdas;
  ThresholdConfig thresholds;
  ExpressionWeights class_weights{};
  ActionUnitWeights au_pos_weights{};
  int epoch = 1;
  unsigned threads = 1;
};

struct BatchResult {
  LossBreakdown loss;
  Gradients grads;
  ClassStatAccumulator stats;  // accumulator after this batch's update
  Thresholds thresholds{};
  std::size_t unlabeled = 0;
  std::size_t confident = 0;
  bool has_gradient = false;
};

/// Forward pass, class-statistics update, confidence partition, loss assembly and (optionally)
/// the backward pass for one planned batch.
inline BatchResult evaluate_batch(const Parameters& params, const BatchPlan& plan,
                                  ClassStatAccumulator stats, const LossContext& ctx,
                                  bool with_gradient) {
  BatchResult res;
  res.unlabeled = plan.unlabeled_weak_rows.size();
  if (plan.input.rows() == 0) {
    res.stats = stats;
    res.thresholds = adaptive_thresholds(stats, ctx.epoch, ctx.thresholds);
    if (with_gradient) res.grads = zeros_like(params);
    return res;
  }
  const ForwardPass fp = forward(params, plan.input, ctx.threads);
  const LossWeights eff = effective_weights(ctx.lambdas, ctx.mode);
  HeadGradients up(fp.batch());
  Matrix* g_exp = with_gradient ? &up.exp_logits : nullptr;
  Matrix* g_au = with_gradient ? &up.au_logits : nullptr;
  Matrix* g_va = with_gradient ? &up.va : nullptr;

  LossComponents c;
  c.exp_sup = weighted_cross_entropy(fp.exp_logits, plan.exp_rows, plan.exp_labels,
                                     ctx.class_weights, g_exp, eff.supervised);
  c.au = weighted_bce(fp.au_logits, plan.au_rows, plan.au_targets, ctx.au_pos_weights, g_au);
  c.va = ccc_loss(fp.va, plan.va_rows, plan.va_targets, g_va);

  const Matrix probs = softmax_rows(fp.exp_logits);
  update_class_stats(stats, probs, plan.exp_rows, plan.exp_labels, ctx.thresholds.momentum);
  res.thresholds = adaptive_thresholds(stats, ctx.epoch, ctx.thresholds);
  res.stats = stats;

  if (is_semi_supervised(ctx.mode) && !plan.unlabeled_weak_rows.empty()) {
    const ConfidencePartition part =
        partition_confident(probs, plan.unlabeled_weak_rows, res.thresholds);
    res.confident = part.confident.size();
    // Map weak rows to their strong-view rows.
    std::vector<std::size_t> strong_of(plan.weak_count, 0);
    for (std::size_t k = 0; k < plan.unlabeled_weak_rows.size(); ++k)
      strong_of[plan.unlabeled_weak_rows[k]] = plan.unlabeled_strong_rows[k];
    std::vector<std::size_t> conf_strong, nc_weak, nc_strong;
    for (std::size_t r : part.confident) conf_strong.push_back(strong_of[r]);
    for (std::size_t r : part.non_confident) {
      nc_weak.push_back(r);
      nc_strong.push_back(strong_of[r]);
    }
    c.exp_unsup = unsupervised_ce(fp.exp_logits, conf_strong, part.pseudo_labels, g_exp,
                                  eff.unsupervised);
    c.exp_cons = consistency_loss_logits(fp.exp_logits, nc_weak, nc_strong, g_exp,
                                         eff.consistency);
  }
  res.loss = overall_loss(c, ctx.lambdas, ctx.mode);
  if (!res.loss.finite()) throw DivergenceError("non-finite loss");
  if (with_gradient) {
    res.grads = backward(params, fp, up, ctx.threads);
    res.has_gradient = true;
  }
  return res;
}

struct TrainState {
  Parameters params;
  AdamMoments moments;
  long step = 0;
  int epoch = 0;
  ClassStatAccumulator stats;
  std::uint64_t seed = 0;
};

inline TrainState init_state(const ModelConfig& model, std::uint64_t seed) {
  TrainState s;
  s.params = init_params(model, seed);
  s.moments = zero_moments(s.params);
  s.seed = seed;
  return s;
}

struct StepResult {
  LossBreakdown loss;
  std::size_t unlabeled = 0;
  std::size_t confident = 0;
  bool updated = false;
};

/// Weights the trainer feeds the losses: class weights are dropped under re-sampling.
inline DatasetWeights training_weights(const DatasetStats& stats, Imbalance mode) {
  DatasetWeights w = dataset_weights(stats);
  if (mode == Imbalance::Resample) w.expression.fill(1.0);
  return w;
}

inline StepResult train_step(TrainState& state, const Split& data,
                             std::span<const std::size_t> batch, const TrainConfig& cfg,
                             const DatasetWeights& weights, unsigned threads = 1) {
  const BatchPlan plan = plan_batch(data, batch, cfg.mode, cfg.aug, state.seed, state.epoch, threads);
  LossContext ctx{cfg.mode, cfg.lambdas, cfg.thresholds, weights.expression, weights.au_positive,
                  state.epoch, threads};
  BatchResult br = evaluate_batch(state.params, plan, state.stats, ctx, true);
  state.stats = br.stats;
  StepResult out{br.loss, br.unlabeled, br.confident, false};
  if (plan.input.rows() == 0) return out;  // nothing to learn from: no optimizer step
  ++state.step;
  adam_step(state.params, br.grads, state.moments, {cfg.lr_base, cfg.lr_heads}, state.step);
  out.updated = true;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Prediction and the epoch loop

inline Predictions predict(const Parameters& params, std::span<const Image> images,
                           unsigned threads = 1, std::size_t chunk = 256) {
  Predictions p;
  p.expression.resize(images.size());
  p.au_probs = Matrix(images.size(), kNumActionUnits);
  p.va = Matrix(images.size(), kNumAffectDims);
  for (std::size_t lo = 0; lo < images.size(); lo += chunk) {
    const std::size_t hi = std::min(images.size(), lo + chunk);
    const ForwardPass fp = forward(params, stack_images(images.subspan(lo, hi - lo)), threads);
    for (std::size_t r = 0; r < hi - lo; ++r) {
      p.expression[lo + r] = static_cast<int>(argmax(fp.exp_logits.row(r)));
      for (int u = 0; u < kNumActionUnits; ++u) p.au_probs(lo + r, u) = sigmoid(fp.au_logits(r, u));
      for (int d = 0; d < kNumAffectDims; ++d) p.va(lo + r, d) = fp.va(r, d);
    }
  }
  return p;
}

inline MtlScore evaluate(const Parameters& params, const Split& split, unsigned threads = 1) {
  return mtl_score(predict(params, split.images, threads), split.dataset);
}

struct EpochReport {
  int epoch = 0;
  LossBreakdown loss;  // mean over the epoch's batches
  double confident_fraction = 0.0;
  Thresholds thresholds{};
  MtlScore val;
};

struct TrainResult {
  Parameters params;  // best validation P_MTL
  int best_epoch = 0;
  std::vector<EpochReport> reports;
};

using EpochObserver = std::function<void(const EpochReport&)>;

inline TrainResult run_training(const Split& train, const Split& val, TrainConfig cfg,
                                unsigned threads = 1, const EpochObserver& observer = {}) {
  if (train.size() == 0) throw DataError("training set is empty");
  cfg.model.height = train.images.front().height;
  cfg.model.width = train.images.front().width;
  cfg.validate();
  for (const auto& img : val.images)
    if (img.height != cfg.model.height || img.width != cfg.model.width)
      throw ShapeError("validation images differ in size from training images");

  const DatasetWeights weights = training_weights(dataset_stats(train.dataset), cfg.imbalance);
  const ExpressionWeights sampling_weights = expression_class_weights(dataset_stats(train.dataset));
  TrainState state = init_state(cfg.model, cfg.seed);

  TrainResult result;
  result.params = state.params;
  double best = -std::numeric_limits<double>::infinity();
  for (int ep = 1; ep <= cfg.epochs; ++ep) {
    state.epoch = ep;
    Rng sched_rng(stream_seed(cfg.seed, 0x5c4edu, static_cast<std::uint64_t>(ep)));
    const auto order = make_epoch_schedule(train.dataset, cfg.imbalance, sampling_weights, sched_rng);

    LossBreakdown sum;
    std::size_t batches = 0, unlabeled = 0, confident = 0;
    for (std::size_t lo = 0, b = 0; lo < order.size(); lo += cfg.batch_size, ++b) {
      const std::size_t hi = std::min(order.size(), lo + cfg.batch_size);
      const std::span<const std::size_t> batch(order.data() + lo, hi - lo);
      StepResult sr;
      try {
        sr = train_step(state, train, batch, cfg, weights, threads);
      } catch (const DivergenceError& e) {
        throw DivergenceError("epoch " + std::to_string(ep) + " batch " + std::to_string(b + 1) +
                              ": " + e.what());
      }
      sum.exp_sup += sr.loss.exp_sup;
      sum.exp_unsup += sr.loss.exp_unsup;
      sum.exp_cons += sr.loss.exp_cons;
      sum.au += sr.loss.au;
      sum.va += sr.loss.va;
      sum.exp += sr.loss.exp;
      sum.total += sr.loss.total;
      ++batches;
      unlabeled += sr.unlabeled;
      confident += sr.confident;
    }
    EpochReport rep;
    rep.epoch = ep;
    const double inv = batches ? 1.0 / static_cast<double>(batches) : 0.0;
    rep.loss = {sum.exp_sup * inv, sum.exp_unsup * inv, sum.exp_cons * inv, sum.au * inv,
                sum.va * inv,      sum.exp * inv,       sum.total * inv};
    rep.confident_fraction =
        unlabeled ? static_cast<double>(confident) / static_cast<double>(unlabeled) : 0.0;
    rep.thresholds = adaptive_thresholds(state.stats, ep, cfg.thresholds);
    if (val.size() > 0) rep.val = evaluate(state.params, val, threads);
    if (rep.val.p_mtl > best) {
      best = rep.val.p_mtl;
      result.params = state.params;
      result.best_epoch = ep;
    }
    if (observer) observer(rep);
    result.reports.push_back(std::move(rep));
  }
  return result;
}

}  // namespace ssmtl

#endif  // SSMTL_TRAINER_HPP
