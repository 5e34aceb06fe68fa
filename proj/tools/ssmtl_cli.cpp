// ssmtl: synthesize data, inspect statistics, train, evaluate, and export training curves.
//
// Exit codes: 0 success, 1 usage or configuration error, 2 data error, 3 divergence.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "ssmtl/ssmtl.hpp"

namespace fs = std::filesystem;
using namespace ssmtl;

namespace {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kDivergence = 3 };

unsigned resolve_threads(std::optional<unsigned> flag) {
  if (flag) return std::max(1u, *flag);
  if (const char* env = std::getenv("SSMTL_THREADS")) {
    unsigned n = 0;
    if (parse_number(env, n) && n > 0) return n;
  }
  return default_thread_count();
}

int cmd_synth(const fs::path& out, const std::optional<fs::path>& config, std::uint64_t seed) {
  const SynthConfig cfg = config ? parse_synth_config(read_file(*config)) : SynthConfig{};
  const SyntheticData data = generate_synthetic(cfg, seed);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
  save_split(out, "train.csv", data.train);
  save_split(out, "val.csv", data.val);
  std::cout << "train: " << format_stats(dataset_stats(data.train.dataset)) << "\n";
  std::cout << "val: " << format_stats(dataset_stats(data.val.dataset)) << "\n";
  return kOk;
}

int cmd_stats(const fs::path& manifest) {
  const Dataset ds = parse_manifest(read_file(manifest));
  const DatasetStats st = dataset_stats(ds);
  const DatasetWeights w = dataset_weights(st);
  std::cout << format_stats(st) << "\n";
  std::cout << "expression_weights=";
  for (int c = 0; c < kNumExpressions; ++c) std::cout << (c ? "," : "") << format_double(w.expression[c]);
  std::cout << "\nau_positive_weights=";
  for (int u = 0; u < kNumActionUnits; ++u) std::cout << (u ? "," : "") << format_double(w.au_positive[u]);
  std::cout << "\n";
  return kOk;
}

int cmd_train(const fs::path& data, const std::optional<fs::path>& config, const fs::path& out,
              unsigned threads) {
  TrainConfig cfg = config ? parse_train_config(read_file(*config)) : TrainConfig{};
  const Split train = load_split(data / "train.csv");
  const Split val = load_split(data / "val.csv");
  if (train.size() == 0) throw DataError("training manifest has no samples");
  cfg.model.height = train.images.front().height;
  cfg.model.width = train.images.front().width;

  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw DataError("cannot create " + out.string() + ": " + ec.message());
  write_file(out / "resolved_config.txt", serialize_train_config(cfg));

  std::ofstream log(out / "epochs.jsonl", std::ios::binary);
  if (!log) throw DataError("cannot write " + (out / "epochs.jsonl").string());
  const TrainResult result = run_training(train, val, cfg, threads, [&](const EpochReport& r) {
    log << epoch_record(r) << '\n';
    log.flush();
    std::cout << "epoch " << r.epoch << " total=" << r.loss.total
              << " confident=" << r.confident_fraction << " p_mtl=" << r.val.p_mtl << "\n";
  });
  write_file(out / "checkpoint.txt", serialize_checkpoint(cfg.model, result.params));
  std::cout << "best epoch " << result.best_epoch << "\n";
  return kOk;
}

int cmd_evaluate(const fs::path& data, const fs::path& checkpoint, const std::string& split,
                 unsigned threads) {
  const Checkpoint ck = parse_checkpoint(read_file(checkpoint));
  const Split s = load_split(data / (split + ".csv"));
  for (const auto& img : s.images)
    if (img.height != ck.model.height || img.width != ck.model.width)
      throw ShapeError("image size " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                       " does not match checkpoint " + std::to_string(ck.model.height) + "x" +
                       std::to_string(ck.model.width));
  const MtlScore score = evaluate(ck.params, s, threads);
  std::cout << to_json(score).dump() << "\n";
  return kOk;
}

int cmd_curves(const fs::path& log, const fs::path& out) {
  write_file(out, log_to_csv(read_file(log)));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Semi-supervised multi-task facial affect training toolkit"};
  app.require_subcommand(1);

  std::string out_dir, data_dir, log_path, checkpoint_path, manifest_path, split = "val";
  std::optional<std::string> config_path;
  std::uint64_t seed = 0;
  std::optional<unsigned> threads;

  auto* synth = app.add_subcommand("synth", "Generate a synthetic train/val dataset");
  synth->add_option("--out", out_dir, "Output directory")->required();
  synth->add_option("--config", config_path, "Synthesis config (key=value)");
  synth->add_option("--seed", seed, "Random seed");

  auto* stats = app.add_subcommand("stats", "Print dataset statistics and imbalance weights");
  stats->add_option("--manifest", manifest_path, "Manifest CSV")->required();

  auto* train = app.add_subcommand("train", "Train a model");
  train->add_option("--data", data_dir, "Directory holding train.csv and val.csv")->required();
  train->add_option("--config", config_path, "Training config (key=value)");
  train->add_option("--out", out_dir, "Output directory")->required();
  train->add_option("--threads", threads, "Worker threads");

  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint on a dataset split");
  eval->add_option("--data", data_dir, "Dataset directory")->required();
  eval->add_option("--checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("--split", split, "Split name (manifest <split>.csv)");
  eval->add_option("--threads", threads, "Worker threads");

  auto* curves = app.add_subcommand("curves", "Convert a training log to CSV");
  curves->add_option("--log", log_path, "Training log (epochs.jsonl)")->required();
  curves->add_option("--out", out_dir, "Output CSV file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  const auto cfg_path = config_path ? std::optional<fs::path>(*config_path) : std::nullopt;
  try {
    if (*synth) return cmd_synth(out_dir, cfg_path, seed);
    if (*stats) return cmd_stats(manifest_path);
    if (*train) return cmd_train(data_dir, cfg_path, out_dir, resolve_threads(threads));
    if (*eval) return cmd_evaluate(data_dir, checkpoint_path, split, resolve_threads(threads));
    if (*curves) return cmd_curves(log_path, out_dir);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  }
  return kUsage;
}
