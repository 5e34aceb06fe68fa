#ifndef SSMTL_LOSSES_HPP
#define SSMTL_LOSSES_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "ssmtl/core.hpp"

namespace ssmtl {

inline constexpr double kProbFloor = 1e-8;

// ---------------------------------------------------------------------------------------------
// Probability helpers

inline std::vector<double> softmax(std::span<const double> logits) {
  std::vector<double> p(logits.size());
  if (logits.empty()) return p;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) z += (p[i] = std::exp(logits[i] - mx));
  for (double& v : p) v /= z;
  return p;
}

inline std::vector<double> log_softmax(std::span<const double> logits) {
  std::vector<double> out(logits.size());
  if (logits.empty()) return out;
  const double mx = *std::max_element(logits.begin(), logits.end());
  double z = 0.0;
  for (double v : logits) z += std::exp(v - mx);
  const double lse = mx + std::log(z);
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

inline Matrix softmax_rows(const Matrix& logits) {
  Matrix p(logits.rows(), logits.cols());
  for (std::size_t r = 0; r < logits.rows(); ++r) {
    const auto row = softmax(logits.row(r));
    std::copy(row.begin(), row.end(), p.row(r).begin());
  }
  return p;
}

inline double sigmoid(double z) {
  return z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + e^z) without overflow.
inline double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

/// Floors entries at kProbFloor and renormalizes to sum 1.
inline std::vector<double> floor_normalize(std::span<const double> p) {
  std::vector<double> out(p.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) z += (out[i] = std::max(p[i], kProbFloor));
  for (double& v : out) v /= z;
  return out;
}

// ---------------------------------------------------------------------------------------------
// Supervised terms. `rows` selects the masked-in rows of the batch matrix; per-row labels and
// targets are aligned with `rows`. Each loss is a mean over the selected rows (0 when empty).
// When `grad` is given, scale * d(loss)/d(logits) is added into it.

/// Mean over rows of w[y] * -log softmax(z)[y].
inline double weighted_cross_entropy(const Matrix& logits, std::span<const std::size_t> rows,
                                     std::span<const int> labels,
                                     std::span<const double> class_weights,
                                     Matrix* grad = nullptr, double scale = 1.0) {
  if (labels.size() != rows.size()) throw std::invalid_argument("labels/rows size mismatch");
  if (rows.empty()) return 0.0;
  const double inv_m = 1.0 / static_cast<double>(rows.size());
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const int y = labels[k];
    if (y < 0 || static_cast<std::size_t>(y) >= logits.cols() ||
        static_cast<std::size_t>(y) >= class_weights.size())
      throw std::out_of_range("class label " + std::to_string(y) + " out of range");
    const auto z = logits.row(rows[k]);
    const auto lsm = log_softmax(z);
    const double w = class_weights[static_cast<std::size_t>(y)];
    total += w * -lsm[static_cast<std::size_t>(y)];
    if (grad != nullptr && w != 0.0) {
      auto g = grad->row(rows[k]);
      for (std::size_t c = 0; c < z.size(); ++c) {
        const double target = c == static_cast<std::size_t>(y) ? 1.0 : 0.0;
        g[c] += scale * w * inv_m * (std::exp(lsm[c]) - target);
      }
    }
  }
  return total * inv_m;
}

/// Mean over (row, unit) of -[w_u y log s(z) + (1-y) log(1 - s(z))], in softplus form.
/// `targets` has one row of 0/1 values per selected row.
inline double weighted_bce(const Matrix& logits, std::span<const std::size_t> rows,
                           const Matrix& targets, std::span<const double> pos_weights,
                           Matrix* grad = nullptr, double scale = 1.0) {
  if (targets.rows() != rows.size()) throw std::invalid_argument("targets/rows size mismatch");
  if (rows.empty()) return 0.0;
  const std::size_t units = logits.cols();
  const double inv = 1.0 / static_cast<double>(rows.size() * units);
  double total = 0.0;
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto z = logits.row(rows[k]);
    for (std::size_t u = 0; u < units; ++u) {
      const double y = targets(k, u);
      const double w = pos_weights[u];
      total += w * y * softplus(-z[u]) + (1.0 - y) * softplus(z[u]);
      if (grad != nullptr) {
        const double s = sigmoid(z[u]);
        (*grad)(rows[k], u) += scale * inv * (-w * y * (1.0 - s) + (1.0 - y) * s);
      }
    }
  }
  return total * inv;
}

/// Terms of the concordance correlation coefficient with population (1/n) moments.
struct CccTerms {
  double mean_x = 0.0;
  double mean_y = 0.0;
  double var_x = 0.0;
  double var_y = 0.0;
  double cov_xy = 0.0;
  double rho = 0.0;
};

/// nullopt when fewer than two points are given.
inline std::optional<CccTerms> ccc(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw std::invalid_argument("ccc: length mismatch");
  const std::size_t n = x.size();
  if (n < 2) return std::nullopt;
  CccTerms t;
  for (std::size_t i = 0; i < n; ++i) {
    t.mean_x += x[i];
    t.mean_y += y[i];
  }
  t.mean_x /= static_cast<double>(n);
  t.mean_y /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dx = x[i] - t.mean_x, dy = y[i] - t.mean_y;
    t.var_x += dx * dx;
    t.var_y += dy * dy;
    t.cov_xy += dx * dy;
  }
  t.var_x /= static_cast<double>(n);
  t.var_y /= static_cast<double>(n);
  t.cov_xy /= static_cast<double>(n);
  const double diff = t.mean_x - t.mean_y;
  const double den = t.var_x + t.var_y + diff * diff;
  t.rho = den > 0.0 ? std::clamp(2.0 * t.cov_xy / den, -1.0, 1.0) : 0.0;
  return t;
}

/// Mean over valence and arousal of (1 - ccc(pred, gold)); 0 with fewer than two rows.
/// `gold` has one (valence, arousal) row per selected row.
inline double ccc_loss(const Matrix& va_pred, std::span<const std::size_t> rows, const Matrix& gold,
                       Matrix* grad = nullptr, double scale = 1.0) {
  if (gold.rows() != rows.size()) throw std::invalid_argument("gold/rows size mismatch");
  const std::size_t n = rows.size();
  if (n < 2) return 0.0;
  double loss = 0.0;
  std::vector<double> x(n), y(n);
  for (std::size_t d = 0; d < kNumAffectDims; ++d) {
    for (std::size_t k = 0; k < n; ++k) {
      x[k] = va_pred(rows[k], d);
      y[k] = gold(k, d);
    }
    const CccTerms t = *ccc(x, y);
    loss += 0.5 * (1.0 - t.rho);
    if (grad == nullptr) continue;
    const double diff = t.mean_x - t.mean_y;
    const double den = t.var_x + t.var_y + diff * diff;
    if (!(den > 0.0)) continue;
    const double num = 2.0 * t.cov_xy;
    // d rho / d x_k = (2/n) [ (y_k - ybar) den - num ((x_k - xbar) + (xbar - ybar)) ] / den^2
    const double c = 2.0 / (static_cast<double>(n) * den * den);
    for (std::size_t k = 0; k < n; ++k) {
      const double drho = c * ((y[k] - t.mean_y) * den - num * ((x[k] - t.mean_x) + diff));
      (*grad)(rows[k], d) += scale * -0.5 * drho;
    }
  }
  return loss;
}

// ---------------------------------------------------------------------------------------------
// Semi-supervised terms

/// sum p log(p/q) + q log(q/p) after flooring both at 1e-8 and renormalizing.
inline double symmetric_kl(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) throw std::invalid_argument("symmetric_kl: length mismatch");
  const auto pf = floor_normalize(p);
  const auto qf = floor_normalize(q);
  double acc = 0.0;
  for (std::size_t i = 0; i < pf.size(); ++i) {
    const double lr = std::log(pf[i]) - std::log(qf[i]);
    acc += pf[i] * lr - qf[i] * lr;
  }
  return acc;
}

namespace detail {

// Gradient of symmetric_kl(softmax(a), softmax(b)) with respect to a and b.
inline void symmetric_kl_logit_grad(std::span<const double> a, std::span<const double> b,
                                    std::span<double> ga, std::span<double> gb, double scale) {
  const auto p = softmax(a);
  const auto q = softmax(b);
  const auto pf = floor_normalize(p);
  const auto qf = floor_normalize(q);
  const std::size_t n = p.size();
  std::vector<double> g_pf(n), g_qf(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double lr = std::log(pf[i]) - std::log(qf[i]);
    g_pf[i] = lr + 1.0 - qf[i] / pf[i];
    g_qf[i] = -lr + 1.0 - pf[i] / qf[i];
  }
  // Back through floor + renormalization, then through softmax.
  auto through = [n](const std::vector<double>& raw, const std::vector<double>& normed,
                     const std::vector<double>& g_normed, std::span<double> g_logits, double s) {
    double z = 0.0;
    for (double v : raw) z += std::max(v, kProbFloor);
    double proj = 0.0;
    for (std::size_t k = 0; k < n; ++k) proj += g_normed[k] * normed[k];
    std::vector<double> g_raw(n);
    for (std::size_t i = 0; i < n; ++i) g_raw[i] = raw[i] > kProbFloor ? (g_normed[i] - proj) / z : 0.0;
    double dot = 0.0;
    for (std::size_t i = 0; i < n; ++i) dot += raw[i] * g_raw[i];
    for (std::size_t j = 0; j < n; ++j) g_logits[j] += s * raw[j] * (g_raw[j] - dot);
  };
  through(p, pf, g_pf, ga, scale);
  through(q, qf, g_qf, gb, scale);
}

}  // namespace detail

/// Unweighted mean cross-entropy of strong-view logits against pseudo labels.
inline double unsupervised_ce(const Matrix& strong_logits, std::span<const std::size_t> rows,
                              std::span<const int> pseudo_labels, Matrix* grad = nullptr,
                              double scale = 1.0) {
  const std::vector<double> ones(strong_logits.cols(), 1.0);
  return weighted_cross_entropy(strong_logits, rows, pseudo_labels, ones, grad, scale);
}

/// Mean symmetric KL between aligned rows of two probability matrices, over `rows`.
inline double consistency_loss(const Matrix& weak_probs, const Matrix& strong_probs,
                               std::span<const std::size_t> rows) {
  if (rows.empty()) return 0.0;
  double acc = 0.0;
  for (std::size_t r : rows) acc += symmetric_kl(weak_probs.row(r), strong_probs.row(r));
  return acc / static_cast<double>(rows.size());
}

/// Logit form used in training: weak_rows[k] and strong_rows[k] are two views of one sample,
/// both rows of the same logits matrix. Gradient flows into both views.
inline double consistency_loss_logits(const Matrix& logits, std::span<const std::size_t> weak_rows,
                                      std::span<const std::size_t> strong_rows,
                                      Matrix* grad = nullptr, double scale = 1.0) {
  if (weak_rows.size() != strong_rows.size())
    throw std::invalid_argument("consistency: view count mismatch");
  if (weak_rows.empty()) return 0.0;
  const double inv = 1.0 / static_cast<double>(weak_rows.size());
  double acc = 0.0;
  for (std::size_t k = 0; k < weak_rows.size(); ++k) {
    const auto a = logits.row(weak_rows[k]);
    const auto b = logits.row(strong_rows[k]);
    acc += symmetric_kl(softmax(a), softmax(b));
    if (grad != nullptr && scale != 0.0)
      detail::symmetric_kl_logit_grad(a, b, grad->row(weak_rows[k]), grad->row(strong_rows[k]),
                                      scale * inv);
  }
  return acc * inv;
}

// ---------------------------------------------------------------------------------------------
// Composition

enum class Mode { Mfar, SsMfar, SsMfarNoKl };

inline std::string_view to_string(Mode m) {
  switch (m) {
    case Mode::Mfar: return "MFAR";
    case Mode::SsMfar: return "SS-MFAR";
    case Mode::SsMfarNoKl: return "SS-MFAR-NO-KL";
  }
  return "?";
}

inline Mode parse_mode(std::string_view s) {
  for (auto m : {Mode::Mfar, Mode::SsMfar, Mode::SsMfarNoKl})
    if (to_string(m) == s) return m;
  throw ConfigError("unknown mode '" + std::string(s) + "' (MFAR, SS-MFAR, SS-MFAR-NO-KL)");
}

inline bool is_semi_supervised(Mode m) { return m != Mode::Mfar; }

/// Expression-loss mixing weights (supervised CE, pseudo-label CE, consistency).
struct LossWeights {
  double supervised = 0.5;
  double unsupervised = 1.0;
  double consistency = 0.1;

  void validate() const {
    if (!(supervised >= 0 && unsupervised >= 0 && consistency >= 0))
      throw ConfigError("loss weights must be non-negative");
  }
};

/// Weights actually applied under a mode. MFAR uses the plain per-task sum.
inline LossWeights effective_weights(const LossWeights& w, Mode mode) {
  switch (mode) {
    case Mode::Mfar: return {1.0, 0.0, 0.0};
    case Mode::SsMfar: return w;
    case Mode::SsMfarNoKl: return {w.supervised, w.unsupervised, 0.0};
  }
  return w;
}

struct LossComponents {
  double exp_sup = 0.0;
  double exp_unsup = 0.0;
  double exp_cons = 0.0;
  double au = 0.0;
  double va = 0.0;
};

struct LossBreakdown {
  double exp_sup = 0.0;
  double exp_unsup = 0.0;
  double exp_cons = 0.0;
  double au = 0.0;
  double va = 0.0;
  double exp = 0.0;
  double total = 0.0;

  bool finite() const {
    return std::isfinite(exp_sup) && std::isfinite(exp_unsup) && std::isfinite(exp_cons) &&
           std::isfinite(au) && std::isfinite(va) && std::isfinite(exp) && std::isfinite(total);
  }
};

inline LossBreakdown overall_loss(const LossComponents& c, const LossWeights& w, Mode mode) {
  const LossWeights eff = effective_weights(w, mode);
  LossBreakdown b;
  b.exp_sup = c.exp_sup;
  b.exp_unsup = is_semi_supervised(mode) ? c.exp_unsup : 0.0;
  b.exp_cons = is_semi_supervised(mode) ? c.exp_cons : 0.0;
  b.au = c.au;
  b.va = c.va;
  b.exp = eff.supervised * b.exp_sup + eff.unsupervised * b.exp_unsup +
          eff.consistency * b.exp_cons;
  b.total = b.exp + b.au + b.va;
  return b;
}

}  // namespace ssmtl

#endif  // SSMTL_LOSSES_HPP
