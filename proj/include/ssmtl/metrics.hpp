#ifndef SSMTL_METRICS_HPP
#define SSMTL_METRICS_HPP

#include <span>
#include <vector>

#include "ssmtl/core.hpp"
#include "ssmtl/data_model.hpp"
#include "ssmtl/losses.hpp"

namespace ssmtl {

struct ConfusionCounts {
  std::vector<std::size_t> tp, fp, fn;

  explicit ConfusionCounts(std::size_t classes = 0) : tp(classes), fp(classes), fn(classes) {}
};

struct F1Result {
  double macro = 0.0;
  std::vector<double> per_class;
};

/// F1 = 2PR/(P+R); any zero denominator makes that quantity 0.
inline double f1_from_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
  const double precision = tp + fp == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fp);
  const double recall = tp + fn == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(tp + fn);
  return precision + recall == 0.0 ? 0.0 : 2.0 * precision * recall / (precision + recall);
}

inline F1Result f1_from_confusion(const ConfusionCounts& cc) {
  F1Result r;
  const std::size_t k = cc.tp.size();
  r.per_class.resize(k);
  double sum = 0.0;
  for (std::size_t c = 0; c < k; ++c) sum += (r.per_class[c] = f1_from_counts(cc.tp[c], cc.fp[c], cc.fn[c]));
  r.macro = k == 0 ? 0.0 : sum / static_cast<double>(k);
  return r;
}

/// Unweighted mean of per-class F1 over all `classes`, including classes that never occur.
inline F1Result macro_f1(std::span<const int> pred, std::span<const int> gold, int classes) {
  if (pred.size() != gold.size()) throw std::invalid_argument("macro_f1: length mismatch");
  ConfusionCounts cc(static_cast<std::size_t>(classes));
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || pred[i] >= classes || gold[i] < 0 || gold[i] >= classes)
      throw std::out_of_range("macro_f1: label out of range");
    const auto p = static_cast<std::size_t>(pred[i]);
    const auto g = static_cast<std::size_t>(gold[i]);
    if (p == g) {
      ++cc.tp[p];
    } else {
      ++cc.fp[p];
      ++cc.fn[g];
    }
  }
  return f1_from_confusion(cc);
}

inline constexpr double kAuDecisionThreshold = 0.5;

/// Per-unit binary F1 of the positive class, predictions binarized at 0.5 (ties positive).
/// `gold` rows are aligned with `rows`.
inline F1Result au_macro_f1(const Matrix& probs, std::span<const std::size_t> rows,
                            const Matrix& gold) {
  const std::size_t units = probs.cols();
  ConfusionCounts cc(units);
  for (std::size_t k = 0; k < rows.size(); ++k)
    for (std::size_t u = 0; u < units; ++u) {
      const bool predicted = probs(rows[k], u) >= kAuDecisionThreshold;
      const bool actual = gold(k, u) > 0.5;
      if (predicted && actual) ++cc.tp[u];
      else if (predicted) ++cc.fp[u];
      else if (actual) ++cc.fn[u];
    }
  return f1_from_confusion(cc);
}

struct MtlScore {
  double p_va = 0.0;
  double p_exp = 0.0;
  double p_au = 0.0;
  double p_mtl = 0.0;
  double ccc_valence = 0.0;
  double ccc_arousal = 0.0;
  bool va_defined = false;  // false when fewer than two valid VA samples
  std::vector<double> exp_f1;
  std::vector<double> au_f1;
};

inline double compose_mtl(double p_va, double p_exp, double p_au) { return p_va + p_exp + p_au; }

/// Model outputs for a set of samples (one row per sample).
struct Predictions {
  std::vector<int> expression;
  Matrix au_probs;
  Matrix va;
};

/// Each task is scored on the samples whose annotation for that task is valid.
inline MtlScore mtl_score(const Predictions& pred, const Dataset& gold) {
  const std::size_t n = gold.size();
  if (pred.expression.size() != n || pred.au_probs.rows() != n || pred.va.rows() != n)
    throw std::invalid_argument("mtl_score: prediction count does not match dataset");

  std::vector<int> exp_pred, exp_gold;
  std::vector<std::size_t> au_rows;
  std::vector<double> val_p, val_g, aro_p, aro_g;
  for (std::size_t i = 0; i < n; ++i) {
    const auto& a = gold.samples[i].annotations;
    if (a.expression) {
      exp_pred.push_back(pred.expression[i]);
      exp_gold.push_back(*a.expression);
    }
    if (a.action_units) au_rows.push_back(i);
    if (a.affect) {
      val_p.push_back(pred.va(i, 0));
      val_g.push_back((*a.affect)[0]);
      aro_p.push_back(pred.va(i, 1));
      aro_g.push_back((*a.affect)[1]);
    }
  }
  Matrix au_gold(au_rows.size(), kNumActionUnits);
  for (std::size_t k = 0; k < au_rows.size(); ++k)
    for (int u = 0; u < kNumActionUnits; ++u)
      au_gold(k, u) = (*gold.samples[au_rows[k]].annotations.action_units)[u];

  MtlScore s;
  const F1Result ef = macro_f1(exp_pred, exp_gold, kNumExpressions);
  const F1Result af = au_macro_f1(pred.au_probs, au_rows, au_gold);
  s.p_exp = ef.macro;
  s.exp_f1 = ef.per_class;
  s.p_au = af.macro;
  s.au_f1 = af.per_class;
  const auto cv = ccc(val_p, val_g);
  const auto ca = ccc(aro_p, aro_g);
  if (cv && ca) {
    s.va_defined = true;
    s.ccc_valence = cv->rho;
    s.ccc_arousal = ca->rho;
    s.p_va = (s.ccc_valence + s.ccc_arousal) / 2.0;
  }
  s.p_mtl = compose_mtl(s.p_va, s.p_exp, s.p_au);
  return s;
}

}  // namespace ssmtl

#endif  // SSMTL_METRICS_HPP
