#include <gtest/gtest.h>

#include <cmath>

#include "support.hpp"

using namespace ssmtl;

namespace {

ModelConfig tiny() {
  ModelConfig m;
  m.height = 6;
  m.width = 6;
  m.hidden = 4;
  m.features = 5;
  m.head_hidden = 3;
  return m;
}

Matrix random_input(std::size_t n, std::size_t dim, Rng& rng) {
  Matrix x(n, dim);
  for (double& v : x.values()) v = uniform(rng, 0.0, 1.0);
  return x;
}

HeadGradients random_upstream(std::size_t n, Rng& rng) {
  HeadGradients up(n);
  for (double& v : up.exp_logits.values()) v = uniform(rng, -1, 1);
  for (double& v : up.au_logits.values()) v = uniform(rng, -1, 1);
  for (double& v : up.va.values()) v = uniform(rng, -1, 1);
  return up;
}

double contract(const ForwardPass& fp, const HeadGradients& up) {
  double s = 0.0;
  for (std::size_t i = 0; i < up.exp_logits.size(); ++i) s += up.exp_logits.values()[i] * fp.exp_logits.values()[i];
  for (std::size_t i = 0; i < up.au_logits.size(); ++i) s += up.au_logits.values()[i] * fp.au_logits.values()[i];
  for (std::size_t i = 0; i < up.va.size(); ++i) s += up.va.values()[i] * fp.va.values()[i];
  return s;
}

}  // namespace

TEST(Init, DeterministicWithZeroBiases) {
  const ModelConfig m = tiny();
  const Parameters a = init_params(m, 5);
  EXPECT_EQ(a, init_params(m, 5));
  EXPECT_NE(a, init_params(m, 6));
  a.for_each_layer([](auto, const Dense& d, auto) {
    for (double b : d.bias) EXPECT_EQ(b, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(d.in_dim()));
    for (double w : d.weight.values()) EXPECT_LE(std::abs(w), bound);
  });
}

TEST(Init, RejectsZeroHiddenWidth) {
  ModelConfig m = tiny();
  m.hidden = 0;
  EXPECT_THROW(init_params(m, 1), ConfigError);
}

TEST(Forward, FeatureNormAndSquashing) {
  Rng rng(1);
  ModelConfig m;
  m.height = 16;
  m.width = 16;
  const Parameters p = init_params(m, 2);
  const ForwardPass fp = forward(p, random_input(64, 256, rng));
  for (std::size_t s = 0; s < fp.batch(); ++s) {
    double sq = 0.0;
    for (double v : fp.features.row(s)) sq += v * v;
    EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-6);
    for (double v : fp.va.row(s)) {
      EXPECT_GT(v, -1.0);
      EXPECT_LT(v, 1.0);
    }
  }
}

TEST(Forward, ZeroImageWithZeroBiasesStaysFinite) {
  const ModelConfig m = tiny();
  const Parameters p = init_params(m, 3);
  const ForwardPass fp = forward(p, Matrix(2, 36));
  EXPECT_TRUE(all_finite(fp.features.values()));
  EXPECT_TRUE(all_finite(fp.exp_logits.values()));
  EXPECT_TRUE(all_finite(fp.va.values()));
}

TEST(Forward, NonFiniteInputIsDivergence) {
  const Parameters p = init_params(tiny(), 3);
  Matrix x(1, 36);
  x(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(p, x), DivergenceError);
  EXPECT_THROW(forward(p, Matrix(1, 35)), ShapeError);
}

TEST(Forward, ThreadCountDoesNotChangeOutputs) {
  Rng rng(4);
  ModelConfig m;
  const Parameters p = init_params(m, 4);
  const Matrix x = random_input(37, 256, rng);
  const ForwardPass a = forward(p, x, 1);
  const ForwardPass b = forward(p, x, 4);
  EXPECT_EQ(a.exp_logits, b.exp_logits);
  EXPECT_EQ(a.au_logits, b.au_logits);
  EXPECT_EQ(a.va, b.va);
  const HeadGradients up = random_upstream(37, rng);
  EXPECT_EQ(backward(p, a, up, 1), backward(p, b, up, 3));
}

TEST(Softmax, Examples) {
  const std::vector<double> eq(8, 0.3);
  for (double v : softmax(eq)) EXPECT_NEAR(v, 0.125, 1e-15);
  std::vector<double> big(8, 0.0);
  big[0] = 1000.0;
  const auto p = softmax(big);
  EXPECT_NEAR(p[0], 1.0, 1e-12);
  EXPECT_TRUE(all_finite(p));
  const std::vector<double> two{std::log(1.0), std::log(3.0)};
  const auto q = softmax(two);
  EXPECT_NEAR(q[0], 0.25, 1e-15);
  EXPECT_NEAR(q[1], 0.75, 1e-15);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients) {
  Rng rng(5);
  const Parameters p = init_params(tiny(), 5);
  const ForwardPass fp = forward(p, random_input(4, 36, rng));
  const Gradients g = backward(p, fp, HeadGradients(4));
  EXPECT_EQ(g, zeros_like(p));
}

TEST(Backward, ShapeMismatchThrows) {
  Rng rng(6);
  const Parameters p = init_params(tiny(), 5);
  const ForwardPass fp = forward(p, random_input(4, 36, rng));
  EXPECT_THROW(backward(p, fp, HeadGradients(3)), ShapeError);
}

TEST(Backward, DuplicatedSampleDoublesGradient) {
  Rng rng(7);
  const Parameters p = init_params(tiny(), 7);
  const Matrix one = random_input(1, 36, rng);
  Matrix two(2, 36);
  std::copy(one.row(0).begin(), one.row(0).end(), two.row(0).begin());
  std::copy(one.row(0).begin(), one.row(0).end(), two.row(1).begin());
  const HeadGradients up1 = random_upstream(1, rng);
  HeadGradients up2(2);
  for (int r = 0; r < 2; ++r) {
    std::copy(up1.exp_logits.row(0).begin(), up1.exp_logits.row(0).end(), up2.exp_logits.row(r).begin());
    std::copy(up1.au_logits.row(0).begin(), up1.au_logits.row(0).end(), up2.au_logits.row(r).begin());
    std::copy(up1.va.row(0).begin(), up1.va.row(0).end(), up2.va.row(r).begin());
  }
  Gradients g1 = backward(p, forward(p, one), up1);
  Gradients g2 = backward(p, forward(p, two), up2);
  auto a = fixtures::flat_view(g1);
  auto b = fixtures::flat_view(g2);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*b[i], 2.0 * *a[i]);
}

TEST(Backward, MatchesCentralDifferences) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    Parameters p = init_params(tiny(), static_cast<std::uint64_t>(trial));
    for (double* v : fixtures::flat_view(p)) *v += uniform(rng, -0.3, 0.3);
    const Matrix x = random_input(3, 36, rng);
    const HeadGradients up = random_upstream(3, rng);
    Gradients g = backward(p, forward(p, x), up);
    auto params = fixtures::flat_view(p);
    auto grads = fixtures::flat_view(g);
    const double h = 1e-5;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double saved = *params[i];
      *params[i] = saved + h;
      const double lp = contract(forward(p, x), up);
      *params[i] = saved - h;
      const double lm = contract(forward(p, x), up);
      *params[i] = saved;
      const double fd = (lp - lm) / (2 * h);
      EXPECT_LE(std::abs(*grads[i] - fd) / std::max(1.0, std::abs(*grads[i])), 1e-4) << "param " << i;
    }
  }
}

TEST(Checkpoint, RoundTripIsExact) {
  const ModelConfig m = tiny();
  Parameters p = init_params(m, 11);
  const Checkpoint ck = parse_checkpoint(serialize_checkpoint(m, p));
  EXPECT_EQ(ck.model, m);
  EXPECT_EQ(ck.params, p);
}

TEST(Checkpoint, DetectsTamperingAndTruncation) {
  const ModelConfig m = tiny();
  const std::string text = serialize_checkpoint(m, init_params(m, 12));
  std::string bad_hash = text;
  bad_hash.replace(bad_hash.find("hidden 4"), 8, "hidden 5");
  EXPECT_THROW(parse_checkpoint(bad_hash), ShapeError);
  EXPECT_THROW(parse_checkpoint(text.substr(0, text.size() / 2)), DataError);
  EXPECT_THROW(parse_checkpoint("not a checkpoint"), DataError);
}
