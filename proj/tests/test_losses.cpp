#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "support.hpp"

using namespace ssmtl;

namespace {

const double kLn2 = std::numbers::ln2;

Matrix rows_of(std::initializer_list<std::vector<double>> rows) {
  Matrix m(rows.size(), rows.begin()->size());
  std::size_t r = 0;
  for (const auto& row : rows) std::copy(row.begin(), row.end(), m.row(r++).begin());
  return m;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = i;
  return r;
}

// Direct textbook formula, written independently of the library.
double ccc_oracle(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < x.size(); ++i) mx += x[i] / n, my += y[i] / n;
  double sx = 0, sy = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += (x[i] - mx) * (x[i] - mx) / n;
    sy += (y[i] - my) * (y[i] - my) / n;
    sxy += (x[i] - mx) * (y[i] - my) / n;
  }
  return 2 * sxy / (sx + sy + (mx - my) * (mx - my));
}

double ce_oracle(std::span<const double> z, int y) {
  double s = 0;
  for (double v : z) s += std::exp(v);
  return -std::log(std::exp(z[static_cast<std::size_t>(y)]) / s);
}

}  // namespace

TEST(CrossEntropy, UniformLogits) {
  const Matrix z(1, 8);
  const std::vector<double> w(8, 1.0);
  EXPECT_NEAR(weighted_cross_entropy(z, all_rows(1), std::vector<int>{3}, w), std::log(8.0), 1e-12);
}

TEST(CrossEntropy, ConfidentAndWeighted) {
  Matrix z(1, 8);
  z(0, 2) = 800.0;
  const std::vector<double> w(8, 1.0);
  EXPECT_NEAR(weighted_cross_entropy(z, all_rows(1), std::vector<int>{2}, w), 0.0, 1e-12);
  const Matrix half = rows_of({{std::log(1.0), std::log(1.0)}});
  EXPECT_NEAR(weighted_cross_entropy(half, all_rows(1), std::vector<int>{0}, std::vector<double>{2.0, 1.0}),
              2 * kLn2, 1e-12);
}

TEST(CrossEntropy, EmptyAndOutOfRange) {
  const Matrix z(2, 8);
  const std::vector<double> w(8, 1.0);
  EXPECT_EQ(weighted_cross_entropy(z, {}, {}, w), 0.0);
  EXPECT_THROW(weighted_cross_entropy(z, all_rows(1), std::vector<int>{8}, w), std::out_of_range);
  EXPECT_THROW(weighted_cross_entropy(z, all_rows(1), std::vector<int>{-1}, w), std::out_of_range);
}

TEST(CrossEntropy, UnitWeightsMatchUnweightedOracle) {
  Rng rng(1);
  const std::vector<double> w(8, 1.0);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix z(4, 8);
    for (double& v : z.values()) v = uniform(rng, -5, 5);
    std::vector<int> y(4);
    double oracle = 0;
    for (std::size_t i = 0; i < 4; ++i) {
      y[i] = uniform_int(rng, 0, 7);
      oracle += ce_oracle(z.row(i), y[i]) / 4;
    }
    EXPECT_NEAR(weighted_cross_entropy(z, all_rows(4), y, w), oracle, 1e-12);
  }
}

TEST(CrossEntropy, WeightedMatchesPerSampleOracle) {
  Rng rng(2);
  std::vector<double> w(8);
  for (double& v : w) v = uniform(rng, 0, 5);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix z(4, 8);
    for (double& v : z.values()) v = uniform(rng, -5, 5);
    const std::vector<std::size_t> rows{0, 2, 3};
    std::vector<int> y(3);
    double oracle = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      y[k] = uniform_int(rng, 0, 7);
      oracle += w[static_cast<std::size_t>(y[k])] * ce_oracle(z.row(rows[k]), y[k]) / 3;
    }
    EXPECT_NEAR(weighted_cross_entropy(z, rows, y, w), oracle, 1e-12);
  }
}

TEST(Bce, Examples) {
  std::vector<double> pw(12, 3.0);
  Matrix z(1, 12);
  Matrix ones(1, 12);
  ones.fill(1.0);
  EXPECT_NEAR(weighted_bce(z, all_rows(1), ones, pw), 3 * kLn2, 1e-12);
  EXPECT_NEAR(weighted_bce(z, all_rows(1), Matrix(1, 12), pw), kLn2, 1e-12);
  z.fill(800.0);
  EXPECT_NEAR(weighted_bce(z, all_rows(1), ones, pw), 0.0, 1e-12);
  EXPECT_EQ(weighted_bce(z, {}, Matrix(0, 12), pw), 0.0);
  z.fill(-800.0);
  EXPECT_TRUE(std::isfinite(weighted_bce(z, all_rows(1), ones, pw)));
}

TEST(Bce, MatchesPerPairOracle) {
  Rng rng(3);
  std::vector<double> pw(12);
  for (double& v : pw) v = uniform(rng, 0.2, 4);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix z(4, 12);
    for (double& v : z.values()) v = uniform(rng, -6, 6);
    const std::vector<std::size_t> rows{1, 3};
    Matrix y(2, 12);
    double oracle = 0;
    for (std::size_t k = 0; k < 2; ++k)
      for (std::size_t u = 0; u < 12; ++u) {
        y(k, u) = bernoulli(rng, 0.5);
        const double s = 1 / (1 + std::exp(-z(rows[k], u)));
        oracle += -(pw[u] * y(k, u) * std::log(s) + (1 - y(k, u)) * std::log(1 - s)) / 24;
      }
    EXPECT_NEAR(weighted_bce(z, rows, y, pw), oracle, 1e-12);
  }
}

TEST(Ccc, Examples) {
  std::vector<double> a{1, -1};
  EXPECT_DOUBLE_EQ(ccc(a, a)->rho, 1.0);
  std::vector<double> z{0, 0}, o{1, 1};
  EXPECT_EQ(ccc(z, o)->rho, 0.0);
  EXPECT_EQ(ccc(z, z)->rho, 0.0);
  std::vector<double> x{0.2, 0.4, 0.6}, y{0.1, 0.5, 0.9};
  EXPECT_NEAR(ccc(x, y)->rho, 32.0 / 43.0, 1e-12);
  EXPECT_NEAR(ccc(x, y)->rho, 0.7442, 1e-4);
  EXPECT_FALSE(ccc(std::vector<double>{1.0}, std::vector<double>{1.0}).has_value());
}

TEST(Ccc, Properties) {
  Rng rng(4);
  for (int trial = 0; trial < 1000; ++trial) {
    const int n = uniform_int(rng, 2, 20);
    std::vector<double> x(n), y(n);
    for (int i = 0; i < n; ++i) x[i] = uniform(rng, -1, 1), y[i] = uniform(rng, -1, 1);
    const double r = ccc(x, y)->rho;
    EXPECT_LE(std::abs(r), 1.0);
    EXPECT_EQ(r, ccc(y, x)->rho);
    EXPECT_NEAR(ccc(x, x)->rho, 1.0, 1e-12);
    EXPECT_NEAR(r, ccc_oracle(x, y), 1e-10);
  }
}

TEST(CccLoss, Examples) {
  const Matrix pred = rows_of({{0.2, 0.3}, {0.4, -0.2}, {0.6, 0.1}});
  const Matrix gold = rows_of({{0.1, 0.3}, {0.5, -0.2}, {0.9, 0.1}});
  const double rho = ccc(std::vector<double>{0.2, 0.4, 0.6}, std::vector<double>{0.1, 0.5, 0.9})->rho;
  EXPECT_NEAR(ccc_loss(pred, all_rows(3), gold), (1 - rho) / 2, 1e-12);
  EXPECT_NEAR(ccc_loss(pred, all_rows(3), gold), 0.1279, 1e-4);
  EXPECT_NEAR(ccc_loss(gold, all_rows(3), gold), 0.0, 1e-12);
  EXPECT_EQ(ccc_loss(pred, {}, Matrix(0, 2)), 0.0);
  EXPECT_EQ(ccc_loss(pred, all_rows(1), rows_of({{0.1, 0.3}})), 0.0);
}

TEST(CccLoss, MaskedRowsAreIgnored) {
  Rng rng(5);
  Matrix pred(6, 2), gold(3, 2), sub(3, 2);
  for (double& v : pred.values()) v = uniform(rng, -1, 1);
  for (double& v : gold.values()) v = uniform(rng, -1, 1);
  const std::vector<std::size_t> rows{0, 3, 5};
  for (std::size_t k = 0; k < 3; ++k) std::copy(pred.row(rows[k]).begin(), pred.row(rows[k]).end(), sub.row(k).begin());
  EXPECT_EQ(ccc_loss(pred, rows, gold), ccc_loss(sub, all_rows(3), gold));
  Matrix g(6, 2);
  ccc_loss(pred, rows, gold, &g);
  for (std::size_t r : {1, 2, 4}) EXPECT_EQ(g(r, 0), 0.0);
}

TEST(SymmetricKl, Examples) {
  const std::vector<double> p{0.5, 0.5}, q{0.25, 0.75};
  const double expected = 0.25 * std::log(2.0) - 0.25 * std::log(2.0 / 3.0);
  EXPECT_NEAR(symmetric_kl(p, q), expected, 1e-12);
  EXPECT_NEAR(symmetric_kl(p, q), 0.2746, 1e-4);
  EXPECT_EQ(symmetric_kl(p, q), symmetric_kl(q, p));
  EXPECT_EQ(symmetric_kl(p, p), 0.0);
}

TEST(SymmetricKl, EmbeddedInEightClasses) {
  std::vector<double> p(8, 0.0), q(8, 0.0);
  p[0] = p[1] = 0.5;
  q[0] = 0.25;
  q[1] = 0.75;
  const Matrix wp = rows_of({p}), sp = rows_of({q});
  EXPECT_NEAR(consistency_loss(wp, sp, all_rows(1)), 0.2746, 1e-4);
  EXPECT_NEAR(consistency_loss(wp, sp, all_rows(1)),
              symmetric_kl(std::vector<double>{0.5, 0.5}, std::vector<double>{0.25, 0.75}), 1e-6);
  EXPECT_EQ(consistency_loss(wp, wp, all_rows(1)), 0.0);
  EXPECT_EQ(consistency_loss(wp, sp, {}), 0.0);
}

TEST(SymmetricKl, NonNegativeAndSymmetric) {
  Rng rng(6);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<double> a(8), b(8);
    for (double& v : a) v = uniform(rng, -4, 4);
    for (double& v : b) v = uniform(rng, -4, 4);
    const auto p = softmax(a), q = softmax(b);
    EXPECT_GE(symmetric_kl(p, q), 0.0);
    EXPECT_EQ(symmetric_kl(p, q), symmetric_kl(q, p));
  }
}

TEST(UnsupervisedCe, Examples) {
  const Matrix z(2, 8);
  EXPECT_EQ(unsupervised_ce(z, {}, {}), 0.0);
  EXPECT_NEAR(unsupervised_ce(z, all_rows(1), std::vector<int>{5}), std::log(8.0), 1e-12);
  Matrix sure(1, 8);
  sure(0, 4) = 900.0;
  EXPECT_NEAR(unsupervised_ce(sure, all_rows(1), std::vector<int>{4}), 0.0, 1e-12);
}

TEST(LogitGradients, MatchCentralDifferences) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix z(4, 8), au(4, 12), va(4, 2);
    for (double& v : z.values()) v = uniform(rng, -3, 3);
    for (double& v : au.values()) v = uniform(rng, -3, 3);
    for (double& v : va.values()) v = uniform(rng, -0.9, 0.9);
    std::vector<double> cw(8), pw(12);
    for (double& v : cw) v = uniform(rng, 0.5, 3);
    for (double& v : pw) v = uniform(rng, 0.5, 3);
    const std::vector<std::size_t> rows{0, 1, 3};
    const std::vector<int> y{1, 6, 2};
    Matrix ay(3, 12), gv = rows_of({{0.1, 0.2}, {-0.4, 0.5}, {0.3, -0.6}});
    for (double& v : ay.values()) v = bernoulli(rng, 0.4);
    auto total = [&](const Matrix& zz, const Matrix& aa, const Matrix& vv) {
      return weighted_cross_entropy(zz, rows, y, cw) + weighted_bce(aa, rows, ay, pw) +
             ccc_loss(vv, rows, gv) + consistency_loss_logits(zz, std::vector<std::size_t>{0, 2},
                                                              std::vector<std::size_t>{1, 3});
    };
    Matrix gz(4, 8), ga(4, 12), gva(4, 2);
    weighted_cross_entropy(z, rows, y, cw, &gz);
    weighted_bce(au, rows, ay, pw, &ga);
    ccc_loss(va, rows, gv, &gva);
    consistency_loss_logits(z, std::vector<std::size_t>{0, 2}, std::vector<std::size_t>{1, 3}, &gz);
    const double h = 1e-5;
    auto check = [&](Matrix& target, const Matrix& grad) {
      for (std::size_t i = 0; i < target.size(); ++i) {
        const double saved = target.values()[i];
        target.values()[i] = saved + h;
        const double lp = total(z, au, va);
        target.values()[i] = saved - h;
        const double lm = total(z, au, va);
        target.values()[i] = saved;
        const double fd = (lp - lm) / (2 * h);
        EXPECT_LE(std::abs(grad.values()[i] - fd) / std::max(1.0, std::abs(fd)), 1e-6);
      }
    };
    check(z, gz);
    check(au, ga);
    check(va, gva);
  }
}

TEST(Overall, Composition) {
  const LossComponents ones{1, 1, 1, 1, 1};
  const LossBreakdown ss = overall_loss(ones, {}, Mode::SsMfar);
  EXPECT_NEAR(ss.exp, 1.6, 1e-12);
  EXPECT_NEAR(ss.total, 3.6, 1e-12);
  const LossBreakdown mf = overall_loss(ones, {}, Mode::Mfar);
  EXPECT_EQ(mf.exp, 1.0);
  EXPECT_EQ(mf.total, 3.0);
  EXPECT_EQ(mf.exp_unsup, 0.0);
  EXPECT_EQ(mf.exp_cons, 0.0);
  const LossBreakdown nk = overall_loss(ones, {}, Mode::SsMfarNoKl);
  EXPECT_NEAR(nk.exp, 1.5, 1e-12);
  EXPECT_EQ(nk.exp_cons, 1.0);
  const LossBreakdown zero = overall_loss({}, {}, Mode::SsMfar);
  EXPECT_EQ(zero.total, 0.0);
}

TEST(Overall, ModeNames) {
  for (Mode m : {Mode::Mfar, Mode::SsMfar, Mode::SsMfarNoKl}) EXPECT_EQ(parse_mode(to_string(m)), m);
  EXPECT_THROW(parse_mode("FIXMATCH"), ConfigError);
}
