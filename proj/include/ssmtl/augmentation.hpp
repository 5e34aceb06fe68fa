#ifndef SSMTL_AUGMENTATION_HPP
#define SSMTL_AUGMENTATION_HPP

#include <cmath>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "ssmtl/core.hpp"
#include "ssmtl/image.hpp"

namespace ssmtl {

enum class StrongOp { Brightness, Contrast, Rotation, Cutout };

inline std::string_view to_string(StrongOp op) {
  switch (op) {
    case StrongOp::Brightness: return "brightness";
    case StrongOp::Contrast: return "contrast";
    case StrongOp::Rotation: return "rotation";
    case StrongOp::Cutout: return "cutout";
  }
  return "?";
}

inline StrongOp parse_strong_op(std::string_view name) {
  for (auto op : {StrongOp::Brightness, StrongOp::Contrast, StrongOp::Rotation, StrongOp::Cutout})
    if (to_string(op) == name) return op;
  throw ConfigError("unknown strong augmentation op '" + std::string(name) + "'");
}

/// Weak view: reflect-pad, random crop back to size, horizontal flip.
/// Strong view: weak view followed by `ops_per_image` ops drawn from `strong_ops`.
struct AugConfig {
  int crop_padding = 2;
  double flip_prob = 0.5;
  std::vector<StrongOp> strong_ops{StrongOp::Brightness, StrongOp::Contrast, StrongOp::Rotation,
                                   StrongOp::Cutout};
  double brightness_max = 0.3;    // additive offset in [-m, m]
  double contrast_max = 0.5;      // scale about the mean by 1 + U[-m, m]
  double rotation_max_deg = 15.0;
  double cutout_max_frac = 0.25;  // fraction of the image area zeroed
  int ops_per_image = 2;

  void validate() const {
    if (crop_padding < 0) throw ConfigError("crop_padding must be non-negative");
    if (!(flip_prob >= 0.0 && flip_prob <= 1.0)) throw ConfigError("flip_prob must lie in [0,1]");
    if (!(brightness_max >= 0.0 && brightness_max <= 1.0))
      throw ConfigError("brightness_max must lie in [0,1]");
    if (!(contrast_max >= 0.0 && contrast_max <= 1.0))
      throw ConfigError("contrast_max must lie in [0,1]");
    if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 15.0))
      throw ConfigError("rotation_max_deg must lie in [0,15]");
    if (!(cutout_max_frac >= 0.0 && cutout_max_frac <= 0.25))
      throw ConfigError("cutout_max_frac must lie in [0,0.25]");
    if (ops_per_image < 0) throw ConfigError("ops_per_image must be non-negative");
  }
};

namespace detail {

inline int reflect_index(int i, int n) {
  if (n == 1) return 0;
  const int period = 2 * (n - 1);
  i = ((i % period) + period) % period;
  return i < n ? i : period - i;
}

inline double bilinear_clamped(const Image& img, double y, double x) {
  y = std::clamp(y, 0.0, img.height - 1.0);
  x = std::clamp(x, 0.0, img.width - 1.0);
  const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
  const int y1 = std::min(y0 + 1, img.height - 1), x1 = std::min(x0 + 1, img.width - 1);
  const double fy = y - y0, fx = x - x0;
  return (1 - fy) * ((1 - fx) * img.at(y0, x0) + fx * img.at(y0, x1)) +
         fy * ((1 - fx) * img.at(y1, x0) + fx * img.at(y1, x1));
}

}  // namespace detail

/// Applies one strong op with an explicit magnitude. The generator is only consumed by
/// cutout (for the patch position).
inline Image apply_strong_op(const Image& img, StrongOp op, double magnitude, Rng& rng) {
  Image out = img;
  switch (op) {
    case StrongOp::Brightness:
      for (double& v : out.pixels) v = clamp01(v + magnitude);
      break;
    case StrongOp::Contrast: {
      double mean = 0.0;
      for (double v : img.pixels) mean += v;
      mean /= static_cast<double>(img.pixels.size());
      for (double& v : out.pixels) v = clamp01(mean + (1.0 + magnitude) * (v - mean));
      break;
    }
    case StrongOp::Rotation: {
      const double rad = magnitude * std::numbers::pi / 180.0;
      const double c = std::cos(rad), s = std::sin(rad);
      const double cy = (img.height - 1) / 2.0, cx = (img.width - 1) / 2.0;
      for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x) {
          const double ry = y - cy, rx = x - cx;
          out.at(y, x) =
              clamp01(detail::bilinear_clamped(img, cy + c * ry - s * rx, cx + s * ry + c * rx));
        }
      break;
    }
    case StrongOp::Cutout: {
      const double area = magnitude * img.height * img.width;
      const int side = static_cast<int>(std::lround(std::sqrt(std::max(0.0, area))));
      const int sh = std::min(side, img.height), sw = std::min(side, img.width);
      const int y0 = uniform_int(rng, 0, img.height - sh);
      const int x0 = uniform_int(rng, 0, img.width - sw);
      for (int y = y0; y < y0 + sh; ++y)
        for (int x = x0; x < x0 + sw; ++x) out.at(y, x) = 0.0;
      break;
    }
  }
  return out;
}

inline Image weak_augment(const Image& img, const AugConfig& cfg, Rng& rng) {
  const int p = cfg.crop_padding;
  const int oy = uniform_int(rng, 0, 2 * p);
  const int ox = uniform_int(rng, 0, 2 * p);
  const bool flip = bernoulli(rng, cfg.flip_prob);
  Image out(img.height, img.width);
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const int sx = flip ? img.width - 1 - x : x;
      out.at(y, x) = clamp01(img.at(detail::reflect_index(y + oy - p, img.height),
                                    detail::reflect_index(sx + ox - p, img.width)));
    }
  return out;
}

inline double draw_magnitude(StrongOp op, const AugConfig& cfg, Rng& rng) {
  switch (op) {
    case StrongOp::Brightness: return uniform(rng, -cfg.brightness_max, cfg.brightness_max);
    case StrongOp::Contrast: return uniform(rng, -cfg.contrast_max, cfg.contrast_max);
    case StrongOp::Rotation: return uniform(rng, -cfg.rotation_max_deg, cfg.rotation_max_deg);
    case StrongOp::Cutout: return uniform(rng, 0.0, cfg.cutout_max_frac);
  }
  return 0.0;
}

inline Image strong_augment(const Image& img, const AugConfig& cfg, Rng& rng) {
  Image out = weak_augment(img, cfg, rng);
  if (cfg.strong_ops.empty()) return out;
  const int n_ops = static_cast<int>(cfg.strong_ops.size());
  for (int k = 0; k < cfg.ops_per_image; ++k) {
    const StrongOp op = cfg.strong_ops[static_cast<std::size_t>(uniform_int(rng, 0, n_ops - 1))];
    out = apply_strong_op(out, op, draw_magnitude(op, cfg, rng), rng);
  }
  return out;
}

enum class View : std::uint64_t { Weak = 1, Strong = 2 };

/// Generator for one view of one sample in one epoch; independent of batch composition.
inline Rng view_stream(std::uint64_t seed, int epoch, std::size_t sample, View view) {
  return Rng(stream_seed(seed, static_cast<std::uint64_t>(epoch), sample,
                         static_cast<std::uint64_t>(view)));
}

}  // namespace ssmtl

#endif  // SSMTL_AUGMENTATION_HPP
