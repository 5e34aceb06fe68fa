#ifndef SSMTL_DATA_MODEL_HPP
#define SSMTL_DATA_MODEL_HPP

#include <array>
#include <filesystem>
#include <numbers>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "ssmtl/core.hpp"
#include "ssmtl/image.hpp"

namespace ssmtl {

// Serialized sentinels for absent annotations.
inline constexpr double kInvalidAffect = -5.0;
inline constexpr int kInvalidLabel = -1;

inline constexpr std::array<int, kNumActionUnits> kActionUnitIds = {1, 2, 4, 6, 7, 10,
                                                                    12, 15, 23, 24, 25, 26};

inline constexpr std::string_view kManifestHeader =
    "image,valence,arousal,expression,au1,au2,au4,au6,au7,au10,au12,au15,au23,au24,au25,au26";

using AffectPoint = std::array<double, kNumAffectDims>;  // (valence, arousal)
using ActionUnits = std::array<std::uint8_t, kNumActionUnits>;

/// Multi-task labels of one sample. An empty optional is an absent (sentinel) annotation;
/// valence/arousal and the 12 action units are absent jointly by construction.
struct AnnotationSet {
  std::optional<AffectPoint> affect;
  std::optional<int> expression;
  std::optional<ActionUnits> action_units;

  bool operator==(const AnnotationSet&) const = default;
};

struct Sample {
  std::string id;
  std::string image_ref;
  AnnotationSet annotations;

  bool operator==(const Sample&) const = default;
};

struct TaskValidity {
  bool va_valid = false;
  bool exp_valid = false;
  bool au_valid = false;

  bool any() const noexcept { return va_valid || exp_valid || au_valid; }
  bool operator==(const TaskValidity&) const = default;
};

inline TaskValidity validity(const AnnotationSet& a) {
  return {a.affect.has_value(), a.expression.has_value(), a.action_units.has_value()};
}

inline TaskValidity validity(const Sample& s) { return validity(s.annotations); }

struct Dataset {
  std::vector<Sample> samples;

  std::size_t size() const noexcept { return samples.size(); }
  bool empty() const noexcept { return samples.empty(); }
  bool operator==(const Dataset&) const = default;
};

namespace detail {

inline double parse_affect_field(std::string_view field, std::size_t line, const char* name) {
  double v = 0.0;
  if (!parse_number(field, v)) throw ParseError(line, std::string(name) + " is not numeric");
  if (v == kInvalidAffect) return v;
  if (!(v >= -1.0 && v <= 1.0))
    throw ParseError(line, std::string(name) + " outside [-1,1] and not the -5 sentinel");
  return v;
}

inline int parse_int_field(std::string_view field, std::size_t line, const std::string& name,
                           int lo, int hi) {
  int v = 0;
  if (!parse_number(field, v)) throw ParseError(line, name + " is not an integer");
  if (v < lo || v > hi)
    throw ParseError(line, name + " = " + std::to_string(v) + " outside [" +
                               std::to_string(lo) + "," + std::to_string(hi) + "]");
  return v;
}

}  // namespace detail

/// Parses the 16-column manifest CSV. Line numbers in errors are 1-based and count the header.
inline Dataset parse_manifest(std::string_view text) {
  Dataset ds;
  auto lines = split(text, '\n');
  if (!lines.empty() && trim(lines.back()).empty()) lines.pop_back();
  if (lines.empty()) throw ParseError(1, "missing header row");
  if (trim(lines.front()) != kManifestHeader) throw ParseError(1, "unexpected header row");

  std::set<std::string, std::less<>> seen;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line = i + 1;
    const auto row = trim(lines[i]);
    if (row.empty()) throw ParseError(line, "empty row");
    const auto fields = split(row, ',');
    if (fields.size() != 16)
      throw ParseError(line, "expected 16 columns, got " + std::to_string(fields.size()));

    Sample s;
    s.image_ref = std::string(trim(fields[0]));
    if (s.image_ref.empty()) throw ParseError(line, "empty image path");
    s.id = s.image_ref;
    if (!seen.insert(s.id).second) throw ParseError(line, "duplicate sample id " + s.id);

    const double valence = detail::parse_affect_field(fields[1], line, "valence");
    const double arousal = detail::parse_affect_field(fields[2], line, "arousal");
    if ((valence == kInvalidAffect) != (arousal == kInvalidAffect))
      throw ParseError(line, "valence and arousal must be invalid together");
    if (valence != kInvalidAffect) s.annotations.affect = AffectPoint{valence, arousal};

    const int expr = detail::parse_int_field(fields[3], line, "expression", -1, kNumExpressions - 1);
    if (expr != kInvalidLabel) s.annotations.expression = expr;

    ActionUnits aus{};
    int invalid_units = 0;
    for (int u = 0; u < kNumActionUnits; ++u) {
      const int v = detail::parse_int_field(fields[4 + u], line,
                                            "au" + std::to_string(kActionUnitIds[u]), -1, 1);
      if (v == kInvalidLabel)
        ++invalid_units;
      else
        aus[u] = static_cast<std::uint8_t>(v);
    }
    if (invalid_units != 0 && invalid_units != kNumActionUnits)
      throw ParseError(line, "action units must be all valid or all -1");
    if (invalid_units == 0) s.annotations.action_units = aus;

    ds.samples.push_back(std::move(s));
  }
  return ds;
}

inline std::string serialize_manifest(const Dataset& ds) {
  std::string out(kManifestHeader);
  out += '\n';
  for (const auto& s : ds.samples) {
    const auto& a = s.annotations;
    out += s.image_ref;
    if (a.affect) {
      out += ',' + format_double((*a.affect)[0]) + ',' + format_double((*a.affect)[1]);
    } else {
      out += ",-5,-5";
    }
    out += ',' + std::to_string(a.expression.value_or(kInvalidLabel));
    for (int u = 0; u < kNumActionUnits; ++u)
      out += ',' + std::to_string(a.action_units ? int((*a.action_units)[u]) : kInvalidLabel);
    out += '\n';
  }
  return out;
}

struct DatasetStats {
  std::size_t total = 0;
  std::size_t exp_valid = 0;
  std::array<std::size_t, kNumExpressions> exp_counts{};
  std::array<std::size_t, kNumActionUnits> au_positive{};
  std::array<std::size_t, kNumActionUnits> au_negative{};
  std::size_t au_valid = 0;
  std::size_t va_valid = 0;

  std::size_t exp_invalid() const noexcept { return total - exp_valid; }
  std::size_t au_invalid() const noexcept { return total - au_valid; }
  std::size_t va_invalid() const noexcept { return total - va_valid; }

  bool operator==(const DatasetStats&) const = default;
};

inline DatasetStats dataset_stats(const Dataset& ds) {
  DatasetStats st;
  st.total = ds.size();
  for (const auto& s : ds.samples) {
    const auto& a = s.annotations;
    if (a.expression) {
      ++st.exp_valid;
      ++st.exp_counts[static_cast<std::size_t>(*a.expression)];
    }
    if (a.action_units) {
      ++st.au_valid;
      for (int u = 0; u < kNumActionUnits; ++u)
        ((*a.action_units)[u] ? st.au_positive : st.au_negative)[u] += 1;
    }
    if (a.affect) ++st.va_valid;
  }
  return st;
}

using ExpressionWeights = std::array<double, kNumExpressions>;
using ActionUnitWeights = std::array<double, kNumActionUnits>;

struct DatasetWeights {
  ExpressionWeights expression{};
  ActionUnitWeights au_positive{};
};

/// Inverse-frequency class weights N_exp / n_exp[c]. Classes with no samples get 0.
inline ExpressionWeights expression_class_weights(const DatasetStats& st) {
  ExpressionWeights w{};
  for (int c = 0; c < kNumExpressions; ++c)
    w[c] = st.exp_counts[c] == 0
               ? 0.0
               : static_cast<double>(st.exp_valid) / static_cast<double>(st.exp_counts[c]);
  return w;
}

/// Negative/positive ratio per action unit; units with no positives fall back to 1.
inline ActionUnitWeights au_positive_weights(const DatasetStats& st) {
  ActionUnitWeights w{};
  for (int u = 0; u < kNumActionUnits; ++u)
    w[u] = st.au_positive[u] == 0
               ? 1.0
               : static_cast<double>(st.au_negative[u]) / static_cast<double>(st.au_positive[u]);
  return w;
}

inline DatasetWeights dataset_weights(const DatasetStats& st) {
  return {expression_class_weights(st), au_positive_weights(st)};
}

inline std::string format_stats(const DatasetStats& st) {
  std::ostringstream os;
  os << "samples=" << st.total << " exp_invalid=" << st.exp_invalid()
     << " va_invalid=" << st.va_invalid() << " au_invalid=" << st.au_invalid() << " exp_counts=[";
  for (int c = 0; c < kNumExpressions; ++c) os << (c ? "," : "") << st.exp_counts[c];
  os << "] au_positive=[";
  for (int u = 0; u < kNumActionUnits; ++u) os << (u ? "," : "") << st.au_positive[u];
  os << "]";
  return os.str();
}

// ---------------------------------------------------------------------------------------------
// Images bound to a dataset.

struct Split {
  Dataset dataset;
  std::vector<Image> images;  // images[i] belongs to dataset.samples[i]

  std::size_t size() const noexcept { return dataset.size(); }
};

inline Split load_split(const std::filesystem::path& manifest) {
  Split split;
  split.dataset = parse_manifest(read_file(manifest));
  const auto root = manifest.parent_path();
  split.images.reserve(split.dataset.size());
  for (const auto& s : split.dataset.samples) {
    split.images.push_back(load_pgm(root / s.image_ref));
    if (split.images.back().height != split.images.front().height ||
        split.images.back().width != split.images.front().width)
      throw ShapeError(s.image_ref + ": image dimensions differ within the dataset");
  }
  return split;
}

inline void save_split(const std::filesystem::path& root, const std::string& manifest_name,
                       const Split& split) {
  namespace fs = std::filesystem;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const fs::path p = root / split.dataset.samples[i].image_ref;
    fs::create_directories(p.parent_path());
    write_file(p, encode_pgm(split.images[i]));
  }
  write_file(root / manifest_name, serialize_manifest(split.dataset));
}

// ---------------------------------------------------------------------------------------------
// Synthetic stand-in data: class-conditioned templates plus nuisance and pixel noise.

struct SynthConfig {
  std::size_t train_count = 2000;
  std::size_t val_count = 500;
  int height = 16;
  int width = 16;
  std::array<double, kNumExpressions> class_priors{1, 1, 1, 1, 1, 1, 1, 1};
  double pixel_noise = 0.2;
  double gain_jitter = 0.2;    // multiplicative illumination, gain in [1-g, 1+g]
  double offset_jitter = 0.1;  // additive illumination
  int max_shift = 1;           // template translation in pixels
  double va_radius = 0.7;
  double va_noise = 0.05;
  double au_on_prob = 0.95;
  double au_off_prob = 0.02;
  double mask_exp = 0.4;
  double mask_va = 0.2;
  double mask_au = 0.2;
  bool mask_val = false;  // validation labels are kept complete unless set

  void validate() const {
    auto rate = [](double r, const char* name) {
      if (!(r >= 0.0 && r <= 1.0))
        throw ConfigError(std::string(name) + " must lie in [0,1]");
    };
    rate(mask_exp, "mask_exp");
    rate(mask_va, "mask_va");
    rate(mask_au, "mask_au");
    rate(au_on_prob, "au_on_prob");
    rate(au_off_prob, "au_off_prob");
    if (height < 4 || width < 4) throw ConfigError("image dimensions must be at least 4x4");
    if (pixel_noise < 0 || gain_jitter < 0 || gain_jitter >= 1 || offset_jitter < 0 ||
        max_shift < 0 || va_noise < 0)
      throw ConfigError("noise/jitter parameters out of range");
    if (!(va_radius > 0.0 && va_radius <= 1.0)) throw ConfigError("va_radius must lie in (0,1]");
    double total = 0.0;
    for (double p : class_priors) {
      if (!(p >= 0.0)) throw ConfigError("class priors must be non-negative");
      total += p;
    }
    if (total <= 0.0) throw ConfigError("class priors must not all be zero");
  }
};

/// Fixed generative structure shared by every split of one seed.
struct SynthModel {
  std::vector<Image> templates;  // one per expression class
  std::array<AffectPoint, kNumExpressions> affect_centers{};
  std::array<std::array<bool, kNumActionUnits>, kNumExpressions> au_pattern{};
};

inline SynthModel make_synth_model(const SynthConfig& cfg, std::uint64_t seed) {
  SynthModel m;
  Rng rng(stream_seed(seed, 0x7e3u));
  const int h = cfg.height, w = cfg.width;
  for (int c = 0; c < kNumExpressions; ++c) {
    // Sum of a few Gaussian blobs of either sign, rescaled into [0.2, 0.8].
    Image t(h, w);
    const int blobs = 4;
    for (int b = 0; b < blobs; ++b) {
      const double cy = uniform(rng, 0.15, 0.85) * (h - 1);
      const double cx = uniform(rng, 0.15, 0.85) * (w - 1);
      const double sigma = uniform(rng, 0.12, 0.25) * std::min(h, w);
      const double amp = uniform(rng, 0.5, 1.0) * (b % 2 == 0 ? 1.0 : -1.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          t.at(y, x) += amp * std::exp(-d2 / (2 * sigma * sigma));
        }
    }
    const auto [lo, hi] = std::minmax_element(t.pixels.begin(), t.pixels.end());
    const double span = std::max(*hi - *lo, 1e-12);
    const double base = *lo;
    for (double& v : t.pixels) v = 0.2 + 0.6 * (v - base) / span;
    m.templates.push_back(std::move(t));

    const double angle = 2.0 * std::numbers::pi * c / kNumExpressions + std::numbers::pi / 8.0;
    m.affect_centers[c] = {cfg.va_radius * std::cos(angle), cfg.va_radius * std::sin(angle)};
  }
  // Each unit is active for a distinct, non-trivial subset of classes.
  for (int u = 0; u < kNumActionUnits; ++u) {
    int active = 0;
    do {
      active = 0;
      for (int c = 0; c < kNumExpressions; ++c) {
        m.au_pattern[c][u] = bernoulli(rng, 0.4);
        active += m.au_pattern[c][u];
      }
    } while (active == 0 || active == kNumExpressions);
  }
  return m;
}

namespace detail {

inline Sample synth_sample(const SynthConfig& cfg, const SynthModel& model, Rng& rng,
                           std::string image_ref, bool apply_masks, Image& image) {
  std::discrete_distribution<int> class_dist(cfg.class_priors.begin(), cfg.class_priors.end());
  const int c = class_dist(rng);

  const int h = cfg.height, w = cfg.width;
  const double gain = uniform(rng, 1.0 - cfg.gain_jitter, 1.0 + cfg.gain_jitter);
  const double offset = uniform(rng, -cfg.offset_jitter, cfg.offset_jitter);
  const int dy = uniform_int(rng, -cfg.max_shift, cfg.max_shift);
  const int dx = uniform_int(rng, -cfg.max_shift, cfg.max_shift);
  std::normal_distribution<double> noise(0.0, 1.0);
  image = Image(h, w);
  const Image& t = model.templates[c];
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const int sy = std::clamp(y - dy, 0, h - 1);
      const int sx = std::clamp(x - dx, 0, w - 1);
      const double v = gain * t.at(sy, sx) + offset + cfg.pixel_noise * noise(rng);
      image.at(y, x) = to_byte(v) / 255.0;  // quantized so in-memory equals the PGM on disk
    }

  AnnotationSet a;
  a.expression = c;
  AffectPoint va = model.affect_centers[c];
  for (double& v : va) v = std::clamp(v + cfg.va_noise * noise(rng), -1.0, 1.0);
  a.affect = va;
  ActionUnits aus{};
  for (int u = 0; u < kNumActionUnits; ++u)
    aus[u] = bernoulli(rng, model.au_pattern[c][u] ? cfg.au_on_prob : cfg.au_off_prob);
  a.action_units = aus;

  // Masks are drawn unconditionally so the stream does not depend on apply_masks.
  const bool drop_exp = bernoulli(rng, cfg.mask_exp);
  const bool drop_va = bernoulli(rng, cfg.mask_va);
  const bool drop_au = bernoulli(rng, cfg.mask_au);
  if (apply_masks) {
    if (drop_exp) a.expression.reset();
    if (drop_va) a.affect.reset();
    if (drop_au) a.action_units.reset();
  }
  Sample s;
  s.id = image_ref;
  s.image_ref = std::move(image_ref);
  s.annotations = a;
  return s;
}

inline Split synth_split(const SynthConfig& cfg, const SynthModel& model, std::uint64_t seed,
                         std::uint64_t split_tag, const std::string& prefix, std::size_t count,
                         bool apply_masks) {
  Split split;
  split.images.resize(count);
  split.dataset.samples.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Rng rng(stream_seed(seed, split_tag, i));
    char name[32];
    std::snprintf(name, sizeof(name), "%06zu.pgm", i);
    split.dataset.samples.push_back(
        synth_sample(cfg, model, rng, prefix + "/" + name, apply_masks, split.images[i]));
  }
  return split;
}

}  // namespace detail

struct SyntheticData {
  Split train;
  Split val;
};

/// Deterministic in (cfg, seed). Masking is applied to the training split (and to validation
/// only when cfg.mask_val is set).
inline SyntheticData generate_synthetic(const SynthConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const SynthModel model = make_synth_model(cfg, seed);
  SyntheticData out;
  out.train = detail::synth_split(cfg, model, seed, 1, "train", cfg.train_count, true);
  out.val = detail::synth_split(cfg, model, seed, 2, "val", cfg.val_count, cfg.mask_val);
  return out;
}

}  // namespace ssmtl

#endif  // SSMTL_DATA_MODEL_HPP
