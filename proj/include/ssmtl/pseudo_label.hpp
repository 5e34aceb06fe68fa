#ifndef SSMTL_PSEUDO_LABEL_HPP
#define SSMTL_PSEUDO_LABEL_HPP

#include <array>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

#include "ssmtl/core.hpp"

namespace ssmtl {

struct ThresholdConfig {
  double beta = 0.95;
  double gamma = std::numbers::e;
  double momentum = 0.9;

  void validate() const {
    if (!(beta > 0.0 && beta <= 1.0)) throw ConfigError("beta must lie in (0,1]");
    if (!(gamma > 1.0)) throw ConfigError("gamma must exceed 1");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0,1)");
  }
};

/// Running mean, per expression class, of the probability the model assigns to that class on
/// labeled samples it classifies correctly.
struct ClassStatAccumulator {
  std::array<double, kNumExpressions> mean_confidence;
  std::array<bool, kNumExpressions> seen{};

  ClassStatAccumulator() { mean_confidence.fill(0.5); }
};

using Thresholds = std::array<double, kNumExpressions>;

inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;  // ties keep the lowest index
  return best;
}

/// `probs` rows are softmax outputs; `rows` selects labeled rows, `labels` aligned with `rows`.
/// Each class with at least one correct prediction moves toward the mean of those probabilities.
inline void update_class_stats(ClassStatAccumulator& acc, const Matrix& probs,
                               std::span<const std::size_t> rows, std::span<const int> labels,
                               double momentum) {
  std::array<double, kNumExpressions> sum{};
  std::array<int, kNumExpressions> count{};
  for (std::size_t k = 0; k < rows.size(); ++k) {
    const auto p = probs.row(rows[k]);
    const auto c = static_cast<std::size_t>(labels[k]);
    if (argmax(p) != c) continue;
    sum[c] += p[c];
    ++count[c];
  }
  for (std::size_t c = 0; c < kNumExpressions; ++c) {
    if (count[c] == 0) continue;
    acc.mean_confidence[c] =
        momentum * acc.mean_confidence[c] + (1.0 - momentum) * (sum[c] / count[c]);
    acc.seen[c] = true;
  }
}

/// T[c] = beta * mean_confidence[c] / (1 + gamma^-epoch)
inline Thresholds adaptive_thresholds(const ClassStatAccumulator& acc, int epoch,
                                      const ThresholdConfig& cfg) {
  Thresholds t{};
  const double damp = 1.0 + std::pow(cfg.gamma, -static_cast<double>(epoch));
  for (std::size_t c = 0; c < kNumExpressions; ++c)
    t[c] = cfg.beta * acc.mean_confidence[c] / damp;
  return t;
}

struct ConfidencePartition {
  std::vector<std::size_t> confident;      // row indices
  std::vector<int> pseudo_labels;          // aligned with `confident`
  std::vector<std::size_t> non_confident;  // row indices
};

/// Confident iff the top probability strictly exceeds its class threshold.
inline ConfidencePartition partition_confident(const Matrix& weak_probs,
                                               std::span<const std::size_t> rows,
                                               const Thresholds& thresholds) {
  ConfidencePartition part;
  for (std::size_t r : rows) {
    const auto p = weak_probs.row(r);
    const std::size_t c = argmax(p);
    if (p[c] > thresholds[c]) {
      part.confident.push_back(r);
      part.pseudo_labels.push_back(static_cast<int>(c));
    } else {
      part.non_confident.push_back(r);
    }
  }
  return part;
}

}  // namespace ssmtl

#endif  // SSMTL_PSEUDO_LABEL_HPP
