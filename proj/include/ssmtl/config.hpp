#ifndef SSMTL_CONFIG_HPP
#define SSMTL_CONFIG_HPP

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ssmtl/augmentation.hpp"
#include "ssmtl/core.hpp"
#include "ssmtl/data_model.hpp"
#include "ssmtl/trainer.hpp"

namespace ssmtl {

/// `key = value` lines; `#` starts a comment; blank lines ignored.
struct KeyValueEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

inline std::vector<KeyValueEntry> parse_key_values(std::string_view text) {
  std::vector<KeyValueEntry> out;
  std::size_t line_no = 0;
  for (auto line : split(text, '\n')) {
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    const auto key = trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
    out.push_back({std::string(key), std::string(trim(line.substr(eq + 1))), line_no});
  }
  return out;
}

namespace detail {

using Setter = std::function<void(std::string_view)>;

template <typename T>
Setter number_setter(T& target, const char* key) {
  return [&target, key](std::string_view v) {
    if (!parse_number(v, target)) throw ConfigError(std::string(key) + ": invalid number '" + std::string(v) + "'");
  };
}

inline Setter bool_setter(bool& target, const char* key) {
  return [&target, key](std::string_view v) {
    if (v == "true" || v == "1") target = true;
    else if (v == "false" || v == "0") target = false;
    else throw ConfigError(std::string(key) + ": expected true/false");
  };
}

inline void apply_entries(const std::vector<KeyValueEntry>& entries,
                          const std::map<std::string, Setter, std::less<>>& setters) {
  for (const auto& e : entries) {
    const auto it = setters.find(e.key);
    if (it == setters.end())
      throw ConfigError("line " + std::to_string(e.line) + ": unknown key '" + e.key + "'");
    try {
      it->second(e.value);
    } catch (const ConfigError& err) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + err.what());
    }
  }
}

}  // namespace detail

inline TrainConfig parse_train_config(std::string_view text) {
  using namespace detail;
  TrainConfig c;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"epochs", number_setter(c.epochs, "epochs")},
      {"batch_size", number_setter(c.batch_size, "batch_size")},
      {"lr_base", number_setter(c.lr_base, "lr_base")},
      {"lr_heads", number_setter(c.lr_heads, "lr_heads")},
      {"mode", [&c](std::string_view v) { c.mode = parse_mode(v); }},
      {"imbalance", [&c](std::string_view v) { c.imbalance = parse_imbalance(v); }},
      {"lambda_sup", number_setter(c.lambdas.supervised, "lambda_sup")},
      {"lambda_unsup", number_setter(c.lambdas.unsupervised, "lambda_unsup")},
      {"lambda_cons", number_setter(c.lambdas.consistency, "lambda_cons")},
      {"beta", number_setter(c.thresholds.beta, "beta")},
      {"gamma", number_setter(c.thresholds.gamma, "gamma")},
      {"momentum", number_setter(c.thresholds.momentum, "momentum")},
      {"crop_padding", number_setter(c.aug.crop_padding, "crop_padding")},
      {"flip_prob", number_setter(c.aug.flip_prob, "flip_prob")},
      {"strong_ops",
       [&c](std::string_view v) {
         c.aug.strong_ops.clear();
         if (trim(v).empty()) return;
         for (auto name : split(v, ',')) c.aug.strong_ops.push_back(parse_strong_op(trim(name)));
       }},
      {"brightness_max", number_setter(c.aug.brightness_max, "brightness_max")},
      {"contrast_max", number_setter(c.aug.contrast_max, "contrast_max")},
      {"rotation_max_deg", number_setter(c.aug.rotation_max_deg, "rotation_max_deg")},
      {"cutout_max_frac", number_setter(c.aug.cutout_max_frac, "cutout_max_frac")},
      {"ops_per_image", number_setter(c.aug.ops_per_image, "ops_per_image")},
      {"hidden", number_setter(c.model.hidden, "hidden")},
      {"features", number_setter(c.model.features, "features")},
      {"head_hidden", number_setter(c.model.head_hidden, "head_hidden")},
      {"seed", number_setter(c.seed, "seed")},
  };
  apply_entries(parse_key_values(text), setters);
  c.validate();
  return c;
}

/// Every key with its effective value; feeding this back to parse_train_config reproduces `c`.
inline std::string serialize_train_config(const TrainConfig& c) {
  std::string ops;
  for (std::size_t i = 0; i < c.aug.strong_ops.size(); ++i)
    ops += (i ? "," : "") + std::string(to_string(c.aug.strong_ops[i]));
  std::string out = "# resolved training configuration\n";
  auto put = [&out](const char* k, const std::string& v) { out += std::string(k) + " = " + v + "\n"; };
  put("epochs", std::to_string(c.epochs));
  put("batch_size", std::to_string(c.batch_size));
  put("lr_base", format_double(c.lr_base));
  put("lr_heads", format_double(c.lr_heads));
  put("mode", std::string(to_string(c.mode)));
  put("imbalance", std::string(to_string(c.imbalance)));
  put("lambda_sup", format_double(c.lambdas.supervised));
  put("lambda_unsup", format_double(c.lambdas.unsupervised));
  put("lambda_cons", format_double(c.lambdas.consistency));
  put("beta", format_double(c.thresholds.beta));
  put("gamma", format_double(c.thresholds.gamma));
  put("momentum", format_double(c.thresholds.momentum));
  put("crop_padding", std::to_string(c.aug.crop_padding));
  put("flip_prob", format_double(c.aug.flip_prob));
  put("strong_ops", ops);
  put("brightness_max", format_double(c.aug.brightness_max));
  put("contrast_max", format_double(c.aug.contrast_max));
  put("rotation_max_deg", format_double(c.aug.rotation_max_deg));
  put("cutout_max_frac", format_double(c.aug.cutout_max_frac));
  put("ops_per_image", std::to_string(c.aug.ops_per_image));
  put("hidden", std::to_string(c.model.hidden));
  put("features", std::to_string(c.model.features));
  put("head_hidden", std::to_string(c.model.head_hidden));
  put("seed", std::to_string(c.seed));
  return out;
}

inline SynthConfig parse_synth_config(std::string_view text) {
  using namespace detail;
  SynthConfig c;
  const std::map<std::string, Setter, std::less<>> setters = {
      {"train_count", number_setter(c.train_count, "train_count")},
      {"val_count", number_setter(c.val_count, "val_count")},
      {"height", number_setter(c.height, "height")},
      {"width", number_setter(c.width, "width")},
      {"class_priors",
       [&c](std::string_view v) {
         const auto parts = split(v, ',');
         if (parts.size() != kNumExpressions)
           throw ConfigError("class_priors needs " + std::to_string(kNumExpressions) + " values");
         for (std::size_t i = 0; i < parts.size(); ++i)
           if (!parse_number(parts[i], c.class_priors[i]))
             throw ConfigError("class_priors: invalid number");
       }},
      {"pixel_noise", number_setter(c.pixel_noise, "pixel_noise")},
      {"gain_jitter", number_setter(c.gain_jitter, "gain_jitter")},
      {"offset_jitter", number_setter(c.offset_jitter, "offset_jitter")},
      {"max_shift", number_setter(c.max_shift, "max_shift")},
      {"va_radius", number_setter(c.va_radius, "va_radius")},
      {"va_noise", number_setter(c.va_noise, "va_noise")},
      {"au_on_prob", number_setter(c.au_on_prob, "au_on_prob")},
      {"au_off_prob", number_setter(c.au_off_prob, "au_off_prob")},
      {"mask_exp", number_setter(c.mask_exp, "mask_exp")},
      {"mask_va", number_setter(c.mask_va, "mask_va")},
      {"mask_au", number_setter(c.mask_au, "mask_au")},
      {"mask_val", bool_setter(c.mask_val, "mask_val")},
  };
  apply_entries(parse_key_values(text), setters);
  c.validate();
  return c;
}

}  // namespace ssmtl

#endif  // SSMTL_CONFIG_HPP
