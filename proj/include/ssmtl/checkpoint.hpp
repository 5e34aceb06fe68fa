#ifndef SSMTL_CHECKPOINT_HPP
#define SSMTL_CHECKPOINT_HPP

#include <cstdio>
#include <sstream>
#include <string>

#include "ssmtl/core.hpp"
#include "ssmtl/network.hpp"

namespace ssmtl {

// Text checkpoint, version 1:
//
//   ssmtl-checkpoint 1
//   config_hash <16 hex digits>        FNV-1a of ModelConfig::canonical()
//   height <int>
//   width <int>
//   hidden <int>
//   features <int>
//   head_hidden <int>
//   layer <name> <rows> <cols>         one per layer, in Parameters::visit order
//   <rows*cols weights, row-major, space separated>
//   <rows biases, space separated>
//   end
//
// Values are shortest round-trip decimals, so save/load is exact.

inline constexpr std::string_view kCheckpointMagic = "ssmtl-checkpoint";
inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig model;
  Parameters params;
};

inline std::string hash_hex(std::uint64_t h) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

inline std::string serialize_checkpoint(const ModelConfig& model, const Parameters& params) {
  std::string out = std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion) + "\n";
  out += "config_hash " + hash_hex(model.hash()) + "\n";
  out += "height " + std::to_string(model.height) + "\n";
  out += "width " + std::to_string(model.width) + "\n";
  out += "hidden " + std::to_string(model.hidden) + "\n";
  out += "features " + std::to_string(model.features) + "\n";
  out += "head_hidden " + std::to_string(model.head_hidden) + "\n";
  params.for_each_layer([&](const char* name, const Dense& d, auto) {
    out += std::string("layer ") + name + " " + std::to_string(d.out_dim()) + " " +
           std::to_string(d.in_dim()) + "\n";
    auto put = [&out](std::span<const double> xs) {
      for (std::size_t i = 0; i < xs.size(); ++i) out += (i ? " " : "") + format_double(xs[i]);
      out += "\n";
    };
    put(d.weight.values());
    put(d.bias);
  });
  out += "end\n";
  return out;
}

inline Checkpoint parse_checkpoint(const std::string& text) {
  std::istringstream in(text);
  std::string word;
  int version = 0;
  if (!(in >> word >> version) || word != kCheckpointMagic) throw DataError("not a checkpoint file");
  if (version != kCheckpointVersion)
    throw DataError("unsupported checkpoint version " + std::to_string(version));

  auto expect_int = [&](const char* key) {
    std::string k;
    long long v = 0;
    if (!(in >> k >> v) || k != key) throw DataError(std::string("checkpoint: expected ") + key);
    return static_cast<int>(v);
  };
  std::string key, hash;
  if (!(in >> key >> hash) || key != "config_hash") throw DataError("checkpoint: expected config_hash");
  Checkpoint ck;
  ck.model.height = expect_int("height");
  ck.model.width = expect_int("width");
  ck.model.hidden = expect_int("hidden");
  ck.model.features = expect_int("features");
  ck.model.head_hidden = expect_int("head_hidden");
  try {
    ck.model.validate();
  } catch (const ConfigError& e) {
    throw ShapeError(std::string("checkpoint: ") + e.what());
  }
  if (hash_hex(ck.model.hash()) != hash)
    throw ShapeError("checkpoint: config hash mismatch (file " + hash + ", computed " +
                     hash_hex(ck.model.hash()) + ")");

  ck.params = zeros_like(ck.model);
  ck.params.for_each_layer([&](const char* name, Dense& d, auto) {
    std::string tag, lname;
    std::size_t rows = 0, cols = 0;
    if (!(in >> tag >> lname >> rows >> cols) || tag != "layer" || lname != name)
      throw DataError(std::string("checkpoint: expected layer ") + name);
    if (rows != d.out_dim() || cols != d.in_dim())
      throw ShapeError(std::string("checkpoint: layer ") + name + " has unexpected shape");
    auto read = [&](std::span<double> xs) {
      for (double& x : xs) {
        std::string tok;
        if (!(in >> tok) || !parse_number(tok, x) || !std::isfinite(x))
          throw DataError(std::string("checkpoint: bad value in layer ") + name);
      }
    };
    read(d.weight.values());
    read(d.bias);
  });
  if (!(in >> word) || word != "end") throw DataError("checkpoint: missing end marker");
  return ck;
}

}  // namespace ssmtl

#endif  // SSMTL_CHECKPOINT_HPP
