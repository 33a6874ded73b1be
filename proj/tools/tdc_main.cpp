// tdc: synthetic corpus generation, training, evaluation, prediction and the
// gradient-check harness for the two-view transparent-depth pipeline.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "tdc/data.hpp"
#include "tdc/gradcheck.hpp"
#include "tdc/metrics.hpp"
#include "tdc/png_io.hpp"
#include "tdc/trainer.hpp"

namespace fs = std::filesystem;

namespace {

struct ConfigCli {
  std::string config_path;
  std::map<std::string, std::string> overrides;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "config file (JSON or key=value lines)");
    tdc::TrainConfig probe;
    tdc::for_each_config_key(
        probe,
        [&](const char* name, double*) { add_flag(cmd, name); },
        [&](const char* name, int*) { add_flag(cmd, name); },
        [&](const char* name, bool*) { add_flag(cmd, name); },
        [&](const char* name, std::uint64_t*) { add_flag(cmd, name); });
  }

  tdc::TrainConfig resolve(const tdc::TrainConfig& base) const {
    tdc::TrainConfig cfg =
        config_path.empty() ? base : tdc::TrainConfig::from_file(config_path);
    for (const auto& [key, value] : overrides) cfg.set_key(key, value);
    return cfg;
  }

  bool any() const { return !config_path.empty() || !overrides.empty(); }

 private:
  void add_flag(CLI::App* cmd, const std::string& name) {
    cmd->add_option_function<std::string>(
        "--" + name, [this, name](const std::string& v) { overrides[name] = v; },
        "override config key " + name);
  }
};

tdc::Models models_from_checkpoint(const tdc::Checkpoint& ckpt) {
  tdc::Models models(ckpt.train.network());
  tdc::apply_checkpoint_params(ckpt, models);
  return models;
}

void require_consistent(const tdc::TrainConfig& requested, const tdc::TrainConfig& stored) {
  const auto diff = requested.divergent_fields(stored);
  if (!diff.empty()) {
    std::string fields;
    for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
    throw std::runtime_error("checkpoint/config mismatch on: " + fields);
  }
}

int cmd_synth(int count, std::uint64_t seed, const std::string& out,
              const std::string& params_path, const tdc::CorruptionSpec* corruption,
              int image_size) {
  tdc::SynthParams params;
  if (!params_path.empty()) {
    std::ifstream in(params_path);
    if (!in) throw std::runtime_error("cannot open scene params: " + params_path);
    nlohmann::json j;
    in >> j;
    params = tdc::synth_params_from_json(j);
  }
  if (image_size > 0) params.image_size = image_size;
  if (corruption) params.corruption = *corruption;

  const std::vector<tdc::SceneSample> samples = tdc::synth_corpus(params, count, seed);
  tdc::save_manifest(samples, out);
  nlohmann::json meta = tdc::synth_params_to_json(params);
  meta["count"] = count;
  meta["seed"] = seed;
  std::ofstream meta_out(fs::path(out) / "synth_params.json");
  meta_out << meta.dump(2) << "\n";
  std::printf("wrote %zu samples to %s\n", samples.size(), out.c_str());
  return 0;
}

int cmd_train(const std::string& data, const std::string& out, const ConfigCli& cli,
              const std::string& resume, bool skip_bad) {
  std::vector<tdc::SceneSample> samples = tdc::load_manifest(data, !skip_bad);
  if (resume.empty()) {
    tdc::TrainConfig cfg = cli.resolve(tdc::TrainConfig{});
    tdc::Trainer trainer(std::move(samples), cfg, out);
    trainer.run();
    std::printf("trained %lld iterations, checkpoint in %s\n", trainer.iteration(),
                out.c_str());
    return 0;
  }
  tdc::Checkpoint ckpt = tdc::read_checkpoint(resume);
  if (cli.any()) {
    const tdc::TrainConfig requested = cli.resolve(ckpt.train);
    require_consistent(requested, ckpt.train);
    ckpt.train = requested;  // logistics fields (iterations etc.) may change
  }
  tdc::Trainer trainer(std::move(samples), ckpt, out);
  trainer.run();
  std::printf("resumed to %lld iterations, checkpoint in %s\n", trainer.iteration(),
              out.c_str());
  return 0;
}

int cmd_eval(const std::string& data, const std::string& ckpt_path, const std::string& out,
             const ConfigCli& cli, bool no_maps, bool skip_bad) {
  const tdc::Checkpoint ckpt = tdc::read_checkpoint(ckpt_path);
  if (cli.any()) require_consistent(cli.resolve(ckpt.train), ckpt.train);
  tdc::Models models = models_from_checkpoint(ckpt);
  const std::vector<tdc::SceneSample> samples = tdc::load_manifest(data, !skip_bad);
  const nlohmann::json aggregate =
      tdc::run_eval(samples, models, ckpt.train.planes(), out, !no_maps);
  std::printf("%s\n", aggregate.dump(2).c_str());
  return 0;
}

int cmd_predict(const std::string& data, const std::string& id, const std::string& ckpt_path,
                const std::string& out) {
  const tdc::Checkpoint ckpt = tdc::read_checkpoint(ckpt_path);
  tdc::Models models = models_from_checkpoint(ckpt);
  const std::vector<tdc::SceneSample> samples = tdc::load_manifest(data, true);

  const tdc::SceneSample* sample = nullptr;
  if (id.empty()) {
    sample = &samples.front();
  } else {
    for (const auto& s : samples) {
      if (s.id == id) sample = &s;
    }
    if (!sample) throw std::runtime_error("sample id not found in manifest: " + id);
  }
  const tdc::PipelineOutput result = tdc::run_pipeline(*sample, models, ckpt.train.planes());
  fs::create_directories(out);
  const fs::path dir(out);
  tdc::write_depth_png((dir / (sample->id + "_depth_restored.png")).string(),
                       result.depth_restored);
  tdc::write_depth_png((dir / (sample->id + "_depth_single.png")).string(),
                       result.depth_single);
  tdc::write_depth_png((dir / (sample->id + "_depth_multi.png")).string(), result.depth_multi);
  tdc::write_gray8_png((dir / (sample->id + "_conf_multi.png")).string(), result.conf_multi);
  tdc::write_gray8_png((dir / (sample->id + "_conf_single.png")).string(),
                       result.conf_single);
  std::printf("wrote predictions for '%s' to %s\n", sample->id.c_str(), out.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"transparent-object depth completion (two-view fusion pipeline)"};
  app.require_subcommand(1);

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic corpus");
  int count = 8;
  std::uint64_t seed = 1;
  std::string out_dir = "corpus";
  std::string params_path;
  int image_size = 0;
  double hole = -1.0, bleed = -1.0, sigma = -1.0;
  synth->add_option("--count", count, "number of scenes");
  synth->add_option("--seed", seed, "corpus seed");
  synth->add_option("--out", out_dir, "output directory");
  synth->add_option("--params", params_path, "scene parameter JSON file");
  synth->add_option("--image-size", image_size, "override image size");
  synth->add_option("--hole-fraction", hole, "override corruption hole fraction");
  synth->add_option("--bleed-fraction", bleed, "override background bleed fraction");
  synth->add_option("--noise-sigma", sigma, "override depth noise sigma (m)");

  // train
  auto* train = app.add_subcommand("train", "train from a manifest");
  std::string train_data, train_out = "run", resume;
  bool train_skip_bad = false;
  ConfigCli train_cfg;
  train->add_option("--data", train_data, "manifest path")->required();
  train->add_option("--out", train_out, "output directory");
  train->add_option("--resume", resume, "checkpoint to resume from");
  train->add_flag("--skip-bad", train_skip_bad, "skip invalid manifest samples");
  train_cfg.attach(train);

  // eval
  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a manifest");
  std::string eval_data, eval_ckpt, eval_out = "eval";
  bool no_maps = false, eval_skip_bad = false;
  ConfigCli eval_cfg;
  eval->add_option("--data", eval_data, "manifest path")->required();
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint path")->required();
  eval->add_option("--out", eval_out, "output directory");
  eval->add_flag("--no-maps", no_maps, "skip writing depth/confidence PNGs");
  eval->add_flag("--skip-bad", eval_skip_bad, "skip invalid manifest samples");
  eval_cfg.attach(eval);

  // predict
  auto* predict = app.add_subcommand("predict", "run one sample and write depth maps");
  std::string pred_data, pred_id, pred_ckpt, pred_out = "prediction";
  predict->add_option("--data", pred_data, "manifest path")->required();
  predict->add_option("--id", pred_id, "sample id (default: first sample)");
  predict->add_option("--checkpoint", pred_ckpt, "checkpoint path")->required();
  predict->add_option("--out", pred_out, "output directory");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "run the finite-difference suite");
  bool quiet = false;
  gradcheck->add_flag("--quiet", quiet, "print failures only");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      tdc::CorruptionSpec corruption;
      tdc::CorruptionSpec* cptr = nullptr;
      if (hole >= 0.0 || bleed >= 0.0 || sigma >= 0.0) {
        tdc::SynthParams defaults;
        corruption = defaults.corruption;
        if (hole >= 0.0) corruption.hole_fraction = hole;
        if (bleed >= 0.0) corruption.background_bleed_fraction = bleed;
        if (sigma >= 0.0) corruption.noise_sigma = sigma;
        cptr = &corruption;
      }
      return cmd_synth(count, seed, out_dir, params_path, cptr, image_size);
    }
    if (train->parsed()) return cmd_train(train_data, train_out, train_cfg, resume, train_skip_bad);
    if (eval->parsed()) return cmd_eval(eval_data, eval_ckpt, eval_out, eval_cfg, no_maps, eval_skip_bad);
    if (predict->parsed()) return cmd_predict(pred_data, pred_id, pred_ckpt, pred_out);
    if (gradcheck->parsed()) {
      const int failures = tdc::run_gradient_suite(!quiet);
      if (failures > 0) std::fprintf(stderr, "gradcheck: %d failures\n", failures);
      return failures > 0 ? 1 : 0;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
