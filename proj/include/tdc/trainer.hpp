#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "tdc/data.hpp"
#include "tdc/losses.hpp"
#include "tdc/networks.hpp"
#include "tdc/pipeline.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tdc {

struct TrainConfig {
  // optimization
  double learning_rate = 1e-4;
  int batch_size = 4;
  int iterations = 1000;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 1;
  // depth hypothesis planes
  double d_min = 0.3;
  double d_max = 1.5;
  int plane_count = 45;
  // networks
  int base_channels = 16;
  int feature_stride = 4;
  int feature_channels = 16;
  int injection_scales = 3;
  bool use_injection = true;
  // loss weights
  double lambda1 = 0.8;
  double lambda2 = 0.5;
  double lambda3 = 0.0005;
  // logistics
  int checkpoint_interval = 0;  // 0: final checkpoint only
  int log_interval = 1;

  void validate() const;
  NetworkConfig network() const;
  DepthPlanes planes() const;
  LossWeights weights() const;

  // key=value assignment with parsing; unknown keys are an error
  void set_key(const std::string& key, const std::string& value);
  // JSON object or flat key=value lines, decided by the leading character
  static TrainConfig from_file(const std::string& path);

  nlohmann::json to_json() const;
  static TrainConfig from_json(const nlohmann::json& j);

  // names of fields that differ (iterations and logistics excluded)
  std::vector<std::string> divergent_fields(const TrainConfig& other) const;
};

// enumerates every configurable key with a pointer to its field
void for_each_config_key(TrainConfig& cfg,
                         const std::function<void(const char*, double*)>& on_double,
                         const std::function<void(const char*, int*)>& on_int,
                         const std::function<void(const char*, bool*)>& on_bool,
                         const std::function<void(const char*, std::uint64_t*)>& on_u64);

struct AdamState {
  std::vector<Tensor> m, v;
  long long step = 0;

  void init(const std::vector<Parameter*>& params);
  bool initialized() const { return !m.empty(); }
};

// Standard Adam with bias correction; throws on non-finite gradients naming
// the offending parameter.
void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg);

// --------------------------------------------------------------------------
// Checkpoints: binary file with a JSON header (network+train config, parameter
// names/shapes) followed by raw little-endian float64 parameter data and,
// optionally, the Adam moments.

struct Checkpoint {
  TrainConfig train;
  std::vector<std::pair<std::string, Tensor>> params;
  bool has_optimizer = false;
  std::vector<Tensor> adam_m, adam_v;
  long long adam_step_count = 0;
  long long iteration = 0;
};

void write_checkpoint(const std::string& path, const TrainConfig& cfg, Models& models,
                      const AdamState* adam, long long iteration);
Checkpoint read_checkpoint(const std::string& path);
// verifies identifier and shape agreement exactly, then copies values
void apply_checkpoint_params(const Checkpoint& ckpt, Models& models);

// --------------------------------------------------------------------------

class Trainer {
 public:
  struct StepStats {
    double total = 0.0, restored = 0.0, multi = 0.0, single = 0.0, normal = 0.0;
  };

  Trainer(std::vector<SceneSample> data, const TrainConfig& cfg, std::string out_dir);
  // resume training state (params, moments, iteration) from a checkpoint
  Trainer(std::vector<SceneSample> data, const Checkpoint& ckpt, std::string out_dir);

  StepStats step();  // one optimizer update over the next batch
  void run();        // full loop with CSV logging and checkpointing

  Models& models() { return models_; }
  const DepthPlanes& planes() const { return planes_; }
  const TrainConfig& config() const { return cfg_; }
  long long iteration() const { return iteration_; }
  void save(const std::string& path);

 private:
  std::vector<int> batch_indices();

  std::vector<SceneSample> data_;
  TrainConfig cfg_;
  Models models_;
  DepthPlanes planes_;
  AdamState adam_;
  long long iteration_ = 0;
  std::string out_dir_;
};

// Runs the pipeline over every sample; writes per-sample and aggregate JSON
// reports (restored / single / multi branches) and, when write_maps is set,
// 16-bit depth and 8-bit confidence PNGs. Returns the aggregate report.
nlohmann::json run_eval(const std::vector<SceneSample>& samples, Models& models,
                        const DepthPlanes& planes, const std::string& out_dir,
                        bool write_maps = true);

}  // namespace tdc
