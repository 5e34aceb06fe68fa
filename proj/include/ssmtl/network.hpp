#ifndef SSMTL_NETWORK_HPP
#define SSMTL_NETWORK_HPP

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "ssmtl/core.hpp"
#include "ssmtl/image.hpp"

namespace ssmtl {

/// Shapes of the shared backbone (2-layer rectifier perceptron over pixels) and the three heads.
struct ModelConfig {
  int height = 16;
  int width = 16;
  int hidden = 64;       // backbone hidden width
  int features = 32;     // backbone output width, L2-normalized
  int head_hidden = 32;  // hidden width of the expression and valence-arousal heads

  int input_dim() const noexcept { return height * width; }

  void validate() const {
    if (height <= 0 || width <= 0) throw ConfigError("image dimensions must be positive");
    if (hidden <= 0) throw ConfigError("hidden width must be positive");
    if (features <= 0) throw ConfigError("feature width must be positive");
    if (head_hidden <= 0) throw ConfigError("head hidden width must be positive");
  }

  std::string canonical() const {
    return "height=" + std::to_string(height) + ";width=" + std::to_string(width) +
           ";hidden=" + std::to_string(hidden) + ";features=" + std::to_string(features) +
           ";head_hidden=" + std::to_string(head_hidden);
  }

  std::uint64_t hash() const { return fnv1a(canonical()); }

  bool operator==(const ModelConfig&) const = default;
};

/// Fully connected layer, y = W x + b with W stored out x in.
struct Dense {
  Matrix weight;
  std::vector<double> bias;

  Dense() = default;
  Dense(std::size_t out, std::size_t in) : weight(out, in), bias(out, 0.0) {}

  std::size_t out_dim() const noexcept { return weight.rows(); }
  std::size_t in_dim() const noexcept { return weight.cols(); }
  bool operator==(const Dense&) const = default;
};

enum class ParamGroup { Backbone, Heads };

struct Parameters {
  Dense backbone_hidden;
  Dense backbone_out;
  Dense exp_hidden;
  Dense exp_out;
  Dense au_out;
  Dense va_hidden;
  Dense va_out;

  /// Visits every layer in a fixed order: fn(name, layer, group).
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn&& fn) {
    fn("backbone.hidden", self.backbone_hidden, ParamGroup::Backbone);
    fn("backbone.out", self.backbone_out, ParamGroup::Backbone);
    fn("exp.hidden", self.exp_hidden, ParamGroup::Heads);
    fn("exp.out", self.exp_out, ParamGroup::Heads);
    fn("au.out", self.au_out, ParamGroup::Heads);
    fn("va.hidden", self.va_hidden, ParamGroup::Heads);
    fn("va.out", self.va_out, ParamGroup::Heads);
  }
  template <typename Fn>
  void for_each_layer(Fn&& fn) { visit(*this, fn); }
  template <typename Fn>
  void for_each_layer(Fn&& fn) const { visit(*this, fn); }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_layer([&](auto, const Dense& d, auto) { n += d.weight.size() + d.bias.size(); });
    return n;
  }

  bool operator==(const Parameters&) const = default;
};

/// Same shapes as Parameters; holds d(loss)/d(parameter).
using Gradients = Parameters;

inline Parameters zeros_like(const ModelConfig& cfg) {
  cfg.validate();
  const auto in = static_cast<std::size_t>(cfg.input_dim());
  const auto h = static_cast<std::size_t>(cfg.hidden);
  const auto f = static_cast<std::size_t>(cfg.features);
  const auto hh = static_cast<std::size_t>(cfg.head_hidden);
  Parameters p;
  p.backbone_hidden = Dense(h, in);
  p.backbone_out = Dense(f, h);
  p.exp_hidden = Dense(hh, f);
  p.exp_out = Dense(kNumExpressions, hh);
  p.au_out = Dense(kNumActionUnits, f);
  p.va_hidden = Dense(hh, f);
  p.va_out = Dense(kNumAffectDims, hh);
  return p;
}

inline Gradients zeros_like(const Parameters& params) {
  Gradients g = params;
  g.for_each_layer([](auto, Dense& d, auto) {
    d.weight.fill(0.0);
    std::fill(d.bias.begin(), d.bias.end(), 0.0);
  });
  return g;
}

/// Weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases zero.
inline Parameters init_params(const ModelConfig& cfg, std::uint64_t seed) {
  Parameters p = zeros_like(cfg);
  Rng rng(stream_seed(seed, 0x1417u));
  p.for_each_layer([&](auto, Dense& d, auto) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d.in_dim()));
    for (double& w : d.weight.values()) w = uniform(rng, -scale, scale);
  });
  return p;
}

inline Matrix stack_images(std::span<const Image> images) {
  if (images.empty()) return {};
  Matrix x(images.size(), images.front().pixels.size());
  for (std::size_t s = 0; s < images.size(); ++s) {
    if (images[s].pixels.size() != x.cols()) throw ShapeError("images in a batch differ in size");
    std::copy(images[s].pixels.begin(), images[s].pixels.end(), x.row(s).begin());
  }
  return x;
}

inline constexpr double kFeatureNormEps = 1e-8;

/// Cached intermediates of one forward pass; row s of every matrix belongs to input row s.
struct ForwardPass {
  Matrix input;
  Matrix hidden_pre, hidden;
  Matrix raw_features;
  std::vector<double> feature_norm;  // sqrt(|raw|^2 + eps)
  Matrix features;                   // unit-norm backbone output
  Matrix exp_hidden_pre, exp_hidden, exp_logits;
  Matrix au_logits;
  Matrix va_hidden_pre, va_hidden, va_pre, va;

  std::size_t batch() const noexcept { return input.rows(); }
};

/// Upstream gradients of the loss with respect to the head outputs.
struct HeadGradients {
  Matrix exp_logits;
  Matrix au_logits;
  Matrix va;

  explicit HeadGradients(std::size_t batch = 0)
      : exp_logits(batch, kNumExpressions),
        au_logits(batch, kNumActionUnits),
        va(batch, kNumAffectDims) {}
};

namespace detail {

inline void dense_forward(const Dense& layer, const Matrix& in, Matrix& out, unsigned threads) {
  if (in.cols() != layer.in_dim())
    throw ShapeError("layer expects " + std::to_string(layer.in_dim()) + " inputs, got " +
                     std::to_string(in.cols()));
  out = Matrix(in.rows(), layer.out_dim());
  parallel_for(in.rows(), threads, [&](std::size_t s) {
    const auto x = in.row(s);
    auto y = out.row(s);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const auto w = layer.weight.row(o);
      double acc = layer.bias[o];
      for (std::size_t i = 0; i < x.size(); ++i) acc += w[i] * x[i];
      y[o] = acc;
    }
  });
}

inline void relu(const Matrix& pre, Matrix& out) {
  out = pre;
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
}

// Accumulates layer gradients; every sum runs over samples in ascending order.
inline void dense_backward(const Dense& layer, const Matrix& in, const Matrix& d_out, Dense& grad,
                           Matrix* d_in, unsigned threads) {
  const std::size_t batch = in.rows();
  parallel_for(layer.out_dim(), threads, [&](std::size_t o) {
    auto gw = grad.weight.row(o);
    double gb = 0.0;
    for (std::size_t s = 0; s < batch; ++s) {
      const double g = d_out(s, o);
      if (g == 0.0) continue;
      const auto x = in.row(s);
      for (std::size_t i = 0; i < gw.size(); ++i) gw[i] += g * x[i];
      gb += g;
    }
    grad.bias[o] += gb;
  });
  if (d_in == nullptr) return;
  *d_in = Matrix(batch, layer.in_dim());
  parallel_for(batch, threads, [&](std::size_t s) {
    auto dx = d_in->row(s);
    for (std::size_t o = 0; o < layer.out_dim(); ++o) {
      const double g = d_out(s, o);
      if (g == 0.0) continue;
      const auto w = layer.weight.row(o);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += g * w[i];
    }
  });
}

inline void relu_backward(const Matrix& pre, Matrix& grad) {
  auto p = pre.values();
  auto g = grad.values();
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(p[i] > 0.0)) g[i] = 0.0;
}

}  // namespace detail

inline ForwardPass forward(const Parameters& params, Matrix input, unsigned threads = 1) {
  using namespace detail;
  ForwardPass fp;
  fp.input = std::move(input);
  dense_forward(params.backbone_hidden, fp.input, fp.hidden_pre, threads);
  relu(fp.hidden_pre, fp.hidden);
  dense_forward(params.backbone_out, fp.hidden, fp.raw_features, threads);

  const std::size_t n = fp.batch();
  fp.features = fp.raw_features;
  fp.feature_norm.assign(n, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    double sq = 0.0;
    for (double v : fp.raw_features.row(s)) sq += v * v;
    const double norm = std::sqrt(sq + kFeatureNormEps);
    fp.feature_norm[s] = norm;
    for (double& v : fp.features.row(s)) v /= norm;
  }

  dense_forward(params.exp_hidden, fp.features, fp.exp_hidden_pre, threads);
  relu(fp.exp_hidden_pre, fp.exp_hidden);
  dense_forward(params.exp_out, fp.exp_hidden, fp.exp_logits, threads);

  dense_forward(params.au_out, fp.features, fp.au_logits, threads);

  dense_forward(params.va_hidden, fp.features, fp.va_hidden_pre, threads);
  relu(fp.va_hidden_pre, fp.va_hidden);
  dense_forward(params.va_out, fp.va_hidden, fp.va_pre, threads);
  fp.va = fp.va_pre;
  for (double& v : fp.va.values()) v = std::tanh(v);

  if (!all_finite(fp.features.values()) || !all_finite(fp.exp_logits.values()) ||
      !all_finite(fp.au_logits.values()) || !all_finite(fp.va.values()))
    throw DivergenceError("non-finite value in forward pass");
  return fp;
}

/// Exact reverse-mode gradient of sum_s <upstream_s, outputs_s> with respect to every parameter.
inline Gradients backward(const Parameters& params, const ForwardPass& fp,
                          const HeadGradients& upstream, unsigned threads = 1) {
  using namespace detail;
  const std::size_t n = fp.batch();
  if (upstream.exp_logits.rows() != n || upstream.au_logits.rows() != n ||
      upstream.va.rows() != n || upstream.exp_logits.cols() != kNumExpressions ||
      upstream.au_logits.cols() != kNumActionUnits || upstream.va.cols() != kNumAffectDims)
    throw ShapeError("upstream gradients do not match the forward batch");

  Gradients g = zeros_like(params);

  // Expression head.
  Matrix d_exp_hidden, d_feat_exp;
  dense_backward(params.exp_out, fp.exp_hidden, upstream.exp_logits, g.exp_out, &d_exp_hidden,
                 threads);
  relu_backward(fp.exp_hidden_pre, d_exp_hidden);
  dense_backward(params.exp_hidden, fp.features, d_exp_hidden, g.exp_hidden, &d_feat_exp, threads);

  // Action-unit head.
  Matrix d_feat_au;
  dense_backward(params.au_out, fp.features, upstream.au_logits, g.au_out, &d_feat_au, threads);

  // Valence-arousal head: va = tanh(pre).
  Matrix d_va_pre = upstream.va;
  {
    auto d = d_va_pre.values();
    auto y = fp.va.values();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - y[i] * y[i];
  }
  Matrix d_va_hidden, d_feat_va;
  dense_backward(params.va_out, fp.va_hidden, d_va_pre, g.va_out, &d_va_hidden, threads);
  relu_backward(fp.va_hidden_pre, d_va_hidden);
  dense_backward(params.va_hidden, fp.features, d_va_hidden, g.va_hidden, &d_feat_va, threads);

  // Through u = f / sqrt(|f|^2 + eps):  df = du / n - f (f . du) / n^3.
  Matrix d_raw(n, fp.raw_features.cols());
  for (std::size_t s = 0; s < n; ++s) {
    const auto f = fp.raw_features.row(s);
    const double norm = fp.feature_norm[s];
    auto dr = d_raw.row(s);
    double dot = 0.0;
    for (std::size_t k = 0; k < f.size(); ++k) {
      dr[k] = d_feat_exp(s, k) + d_feat_au(s, k) + d_feat_va(s, k);
      dot += f[k] * dr[k];
    }
    const double n3 = norm * norm * norm;
    for (std::size_t k = 0; k < f.size(); ++k) dr[k] = dr[k] / norm - f[k] * dot / n3;
  }

  Matrix d_hidden;
  dense_backward(params.backbone_out, fp.hidden, d_raw, g.backbone_out, &d_hidden, threads);
  relu_backward(fp.hidden_pre, d_hidden);
  dense_backward(params.backbone_hidden, fp.input, d_hidden, g.backbone_hidden, nullptr, threads);
  return g;
}

}  // namespace ssmtl

#endif  // SSMTL_NETWORK_HPP
