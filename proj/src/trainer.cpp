#include "tdc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tdc/metrics.hpp"
#include "tdc/png_io.hpp"

namespace fs = std::filesystem;

namespace tdc {

void for_each_config_key(TrainConfig& cfg,
                         const std::function<void(const char*, double*)>& on_double,
                         const std::function<void(const char*, int*)>& on_int,
                         const std::function<void(const char*, bool*)>& on_bool,
                         const std::function<void(const char*, std::uint64_t*)>& on_u64) {
  on_double("learning_rate", &cfg.learning_rate);
  on_int("batch_size", &cfg.batch_size);
  on_int("iterations", &cfg.iterations);
  on_double("beta1", &cfg.beta1);
  on_double("beta2", &cfg.beta2);
  on_double("epsilon", &cfg.epsilon);
  on_u64("seed", &cfg.seed);
  on_double("d_min", &cfg.d_min);
  on_double("d_max", &cfg.d_max);
  on_int("plane_count", &cfg.plane_count);
  on_int("base_channels", &cfg.base_channels);
  on_int("feature_stride", &cfg.feature_stride);
  on_int("feature_channels", &cfg.feature_channels);
  on_int("injection_scales", &cfg.injection_scales);
  on_bool("use_injection", &cfg.use_injection);
  on_double("lambda1", &cfg.lambda1);
  on_double("lambda2", &cfg.lambda2);
  on_double("lambda3", &cfg.lambda3);
  on_int("checkpoint_interval", &cfg.checkpoint_interval);
  on_int("log_interval", &cfg.log_interval);
}

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw std::invalid_argument("config: learning_rate must be positive");
  if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
  if (iterations < 0) throw std::invalid_argument("config: iterations must be >= 0");
  if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
    throw std::invalid_argument("config: adam betas must lie in [0,1)");
  }
  if (epsilon <= 0.0) throw std::invalid_argument("config: epsilon must be positive");
  if (!(d_min > 0.0) || !(d_max > d_min)) {
    throw std::invalid_argument("config: need 0 < d_min < d_max");
  }
  network().validate();
  weights().validate();
  planes().validate();
}

NetworkConfig TrainConfig::network() const {
  NetworkConfig n;
  n.base_channels = base_channels;
  n.feature_stride = feature_stride;
  n.feature_channels = feature_channels;
  n.injection_scales = injection_scales;
  n.plane_count = plane_count;
  n.use_injection = use_injection;
  n.init_seed = seed;
  return n;
}

DepthPlanes TrainConfig::planes() const { return {d_min, d_max, plane_count}; }

LossWeights TrainConfig::weights() const { return {lambda1, lambda2, lambda3}; }

namespace {

bool parse_bool(const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw std::invalid_argument("expected a boolean, got '" + v + "'");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

void TrainConfig::set_key(const std::string& key, const std::string& value) {
  bool found = false;
  for_each_config_key(
      *this,
      [&](const char* name, double* field) {
        if (key == name) {
          *field = std::stod(value);
          found = true;
        }
      },
      [&](const char* name, int* field) {
        if (key == name) {
          *field = std::stoi(value);
          found = true;
        }
      },
      [&](const char* name, bool* field) {
        if (key == name) {
          *field = parse_bool(value);
          found = true;
        }
      },
      [&](const char* name, std::uint64_t* field) {
        if (key == name) {
          *field = std::stoull(value);
          found = true;
        }
      });
  if (!found) throw std::invalid_argument("unknown config key: " + key);
}

nlohmann::json TrainConfig::to_json() const {
  nlohmann::json j;
  auto& self = const_cast<TrainConfig&>(*this);
  for_each_config_key(
      self, [&](const char* name, double* f) { j[name] = *f; },
      [&](const char* name, int* f) { j[name] = *f; },
      [&](const char* name, bool* f) { j[name] = *f; },
      [&](const char* name, std::uint64_t* f) { j[name] = *f; });
  return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
  TrainConfig cfg;
  // reject unknown keys first
  std::vector<std::string> known;
  for_each_config_key(
      cfg, [&](const char* name, double*) { known.emplace_back(name); },
      [&](const char* name, int*) { known.emplace_back(name); },
      [&](const char* name, bool*) { known.emplace_back(name); },
      [&](const char* name, std::uint64_t*) { known.emplace_back(name); });
  for (const auto& item : j.items()) {
    if (std::find(known.begin(), known.end(), item.key()) == known.end()) {
      throw std::invalid_argument("unknown config key: " + item.key());
    }
  }
  for_each_config_key(
      cfg,
      [&](const char* name, double* f) { if (j.contains(name)) *f = j.at(name).get<double>(); },
      [&](const char* name, int* f) { if (j.contains(name)) *f = j.at(name).get<int>(); },
      [&](const char* name, bool* f) { if (j.contains(name)) *f = j.at(name).get<bool>(); },
      [&](const char* name, std::uint64_t* f) {
        if (j.contains(name)) *f = j.at(name).get<std::uint64_t>();
      });
  return cfg;
}

TrainConfig TrainConfig::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string trimmed = trim(text);
  if (!trimmed.empty() && trimmed[0] == '{') {
    return from_json(nlohmann::json::parse(trimmed));
  }
  TrainConfig cfg;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line is not key=value: '" + t + "'");
    }
    cfg.set_key(trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
  return cfg;
}

std::vector<std::string> TrainConfig::divergent_fields(const TrainConfig& other) const {
  std::vector<std::string> diff;
  auto& a = const_cast<TrainConfig&>(*this);
  auto& b = const_cast<TrainConfig&>(other);
  // logistics fields may differ between a checkpoint and a resumed run
  const auto logistics = [](const std::string& k) {
    return k == "iterations" || k == "checkpoint_interval" || k == "log_interval";
  };
  std::vector<std::pair<std::string, std::string>> left, right;
  const auto collect = [&](TrainConfig& c, std::vector<std::pair<std::string, std::string>>& out) {
    for_each_config_key(
        c,
        [&](const char* n, double* f) { out.emplace_back(n, std::to_string(*f)); },
        [&](const char* n, int* f) { out.emplace_back(n, std::to_string(*f)); },
        [&](const char* n, bool* f) { out.emplace_back(n, *f ? "1" : "0"); },
        [&](const char* n, std::uint64_t* f) { out.emplace_back(n, std::to_string(*f)); });
  };
  collect(a, left);
  collect(b, right);
  for (size_t i = 0; i < left.size(); ++i) {
    if (!logistics(left[i].first) && left[i].second != right[i].second) {
      diff.push_back(left[i].first);
    }
  }
  return diff;
}

// ---------------------------------------------------------------------------
// Adam

void AdamState::init(const std::vector<Parameter*>& params) {
  m.clear();
  v.clear();
  for (const Parameter* p : params) {
    m.emplace_back(p->value.shape());
    v.emplace_back(p->value.shape());
  }
  step = 0;
}

void adam_step(const std::vector<Parameter*>& params, AdamState& state,
               const TrainConfig& cfg) {
  if (!state.initialized()) state.init(params);
  if (state.m.size() != params.size()) {
    throw std::invalid_argument("adam_step: optimizer state does not match parameter list");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t i = 0; i < params.size(); ++i) {
    Parameter& p = *params[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (int k = 0; k < p.numel(); ++k) {
      const double g = p.grad[k];
      if (!std::isfinite(g)) {
        throw std::runtime_error("adam_step: non-finite gradient in parameter '" + p.name + "'");
      }
      m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g;
      v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g * g;
      const double mhat = m[k] / bc1;
      const double vhat = v[k] / bc2;
      p.value[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.epsilon);
    }
  }
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

constexpr char kMagic[8] = {'T', 'D', 'C', 'K', 'P', 'T', '1', '\n'};

void write_doubles(std::ofstream& out, const Tensor& t) {
  out.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(sizeof(double)) * t.numel());
}

Tensor read_doubles(std::ifstream& in, std::vector<int> shape) {
  Tensor t(std::move(shape));
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double)) * t.numel());
  if (!in) throw std::runtime_error("checkpoint: truncated data section");
  return t;
}

}  // namespace

void write_checkpoint(const std::string& path, const TrainConfig& cfg, Models& models,
                      const AdamState* adam, long long iteration) {
  const std::vector<Parameter*> params = models.parameters();
  nlohmann::json header;
  header["format"] = 1;
  header["train"] = cfg.to_json();
  header["iteration"] = iteration;
  nlohmann::json plist = nlohmann::json::array();
  for (const Parameter* p : params) {
    plist.push_back({{"name", p->name}, {"shape", p->value.shape()}});
  }
  header["params"] = plist;
  header["optimizer"] = {{"present", adam != nullptr && adam->initialized()},
                         {"step", adam ? adam->step : 0}};

  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(kMagic, sizeof(kMagic));
    const std::string h = header.dump();
    const std::uint64_t hsize = h.size();
    out.write(reinterpret_cast<const char*>(&hsize), sizeof(hsize));
    out.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const Parameter* p : params) write_doubles(out, p->value);
    if (adam != nullptr && adam->initialized()) {
      for (const Tensor& t : adam->m) write_doubles(out, t);
      for (const Tensor& t : adam->v) write_doubles(out, t);
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
  }
  fs::rename(tmp, path);
}

Checkpoint read_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::string(magic, 8) != std::string(kMagic, 8)) {
    throw std::runtime_error("not a checkpoint file: " + path);
  }
  std::uint64_t hsize = 0;
  in.read(reinterpret_cast<char*>(&hsize), sizeof(hsize));
  std::string htext(hsize, '\0');
  in.read(htext.data(), static_cast<std::streamsize>(hsize));
  if (!in) throw std::runtime_error("checkpoint: truncated header");
  const nlohmann::json header = nlohmann::json::parse(htext);

  Checkpoint ckpt;
  ckpt.train = TrainConfig::from_json(header.at("train"));
  ckpt.iteration = header.value("iteration", 0LL);
  for (const auto& pj : header.at("params")) {
    ckpt.params.emplace_back(pj.at("name").get<std::string>(), Tensor());
  }
  std::vector<std::vector<int>> shapes;
  for (const auto& pj : header.at("params")) shapes.push_back(pj.at("shape").get<std::vector<int>>());
  for (size_t i = 0; i < ckpt.params.size(); ++i) {
    ckpt.params[i].second = read_doubles(in, shapes[i]);
  }
  ckpt.has_optimizer = header.at("optimizer").at("present").get<bool>();
  ckpt.adam_step_count = header.at("optimizer").at("step").get<long long>();
  if (ckpt.has_optimizer) {
    for (size_t i = 0; i < shapes.size(); ++i) ckpt.adam_m.push_back(read_doubles(in, shapes[i]));
    for (size_t i = 0; i < shapes.size(); ++i) ckpt.adam_v.push_back(read_doubles(in, shapes[i]));
  }
  return ckpt;
}

void apply_checkpoint_params(const Checkpoint& ckpt, Models& models) {
  const std::vector<Parameter*> params = models.parameters();
  if (params.size() != ckpt.params.size()) {
    throw std::runtime_error("checkpoint: expected " + std::to_string(params.size()) +
                             " parameters, file holds " + std::to_string(ckpt.params.size()));
  }
  for (size_t i = 0; i < params.size(); ++i) {
    if (params[i]->name != ckpt.params[i].first) {
      throw std::runtime_error("checkpoint: parameter name mismatch at index " +
                               std::to_string(i) + ": expected '" + params[i]->name +
                               "', file holds '" + ckpt.params[i].first + "'");
    }
    if (!params[i]->value.same_shape(ckpt.params[i].second)) {
      throw std::runtime_error("checkpoint: shape mismatch for '" + params[i]->name + "': " +
                               params[i]->value.shape_str() + " vs " +
                               ckpt.params[i].second.shape_str());
    }
    params[i]->value = ckpt.params[i].second;
  }
}

// ---------------------------------------------------------------------------
// Trainer

Trainer::Trainer(std::vector<SceneSample> data, const TrainConfig& cfg, std::string out_dir)
    : data_(std::move(data)), cfg_(cfg), models_((cfg.validate(), cfg.network())),
      planes_(cfg.planes()), out_dir_(std::move(out_dir)) {
  if (data_.empty()) throw std::invalid_argument("trainer: no training samples");
  adam_.init(models_.parameters());
}

Trainer::Trainer(std::vector<SceneSample> data, const Checkpoint& ckpt, std::string out_dir)
    : data_(std::move(data)), cfg_(ckpt.train), models_(ckpt.train.network()),
      planes_(ckpt.train.planes()), iteration_(ckpt.iteration), out_dir_(std::move(out_dir)) {
  if (data_.empty()) throw std::invalid_argument("trainer: no training samples");
  apply_checkpoint_params(ckpt, models_);
  if (ckpt.has_optimizer) {
    adam_.m = ckpt.adam_m;
    adam_.v = ckpt.adam_v;
    adam_.step = ckpt.adam_step_count;
  } else {
    adam_.init(models_.parameters());
  }
}

std::vector<int> Trainer::batch_indices() {
  const int n = static_cast<int>(data_.size());
  const int batch = std::min(cfg_.batch_size, n);
  const long long batches_per_epoch = std::max(1, n / batch);
  const long long epoch = iteration_ / batches_per_epoch;
  const int pos = static_cast<int>(iteration_ % batches_per_epoch) * batch;

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(cfg_.seed + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(epoch + 1));
  rng.shuffle(order);
  return {order.begin() + pos, order.begin() + pos + batch};
}

Trainer::StepStats Trainer::step() {
  const std::vector<int> batch = batch_indices();
  const double inv_batch = 1.0 / static_cast<double>(batch.size());
  models_.zero_grad();

  StepStats stats;
  for (int idx : batch) {
    const SceneSample& sample = data_[idx];
    Tape tape;
    PipelineVars vars = forward_pipeline(tape, sample, models_, planes_);
    LossTerms terms = total_loss(tape, vars, sample.gt_depth, sample.mask, cfg_.weights(),
                                 sample.rig.ref_intrinsics);
    const double loss = terms.total->value[0];
    if (!std::isfinite(loss)) {
      throw std::runtime_error("training aborted: non-finite loss on sample '" + sample.id +
                               "' at iteration " + std::to_string(iteration_));
    }
    tape.backward(tape.scale(terms.total, inv_batch));
    stats.total += loss * inv_batch;
    stats.restored += terms.restored->value[0] * inv_batch;
    stats.multi += terms.multi->value[0] * inv_batch;
    stats.single += terms.single->value[0] * inv_batch;
    stats.normal += terms.normal->value[0] * inv_batch;
  }
  adam_step(models_.parameters(), adam_, cfg_);
  ++iteration_;
  return stats;
}

void Trainer::save(const std::string& path) {
  write_checkpoint(path, cfg_, models_, &adam_, iteration_);
}

void Trainer::run() {
  fs::create_directories(out_dir_);
  const std::string log_path = (fs::path(out_dir_) / "train_log.csv").string();
  const bool fresh = iteration_ == 0;
  std::ofstream log(log_path, fresh ? std::ios::trunc : std::ios::app);
  if (!log) throw std::runtime_error("cannot write training log: " + log_path);
  if (fresh) log << "iteration,total,restored,multi,single,normal\n";

  const std::string ckpt_path = (fs::path(out_dir_) / "checkpoint.tdc").string();
  while (iteration_ < cfg_.iterations) {
    const StepStats s = step();
    if (cfg_.log_interval > 0 && iteration_ % cfg_.log_interval == 0) {
      char line[256];
      std::snprintf(line, sizeof(line), "%lld,%.12g,%.12g,%.12g,%.12g,%.12g\n", iteration_,
                    s.total, s.restored, s.multi, s.single, s.normal);
      log << line;
      log.flush();
    }
    if (cfg_.checkpoint_interval > 0 && iteration_ % cfg_.checkpoint_interval == 0) {
      save(ckpt_path);
    }
  }
  save(ckpt_path);
}

// ---------------------------------------------------------------------------
// evaluation

nlohmann::json run_eval(const std::vector<SceneSample>& samples, Models& models,
                        const DepthPlanes& planes, const std::string& out_dir,
                        bool write_maps) {
  if (samples.empty()) throw std::invalid_argument("run_eval: no samples");
  fs::create_directories(fs::path(out_dir) / "reports");
  if (write_maps) fs::create_directories(fs::path(out_dir) / "maps");

  std::vector<MetricReport> restored, single, multi;
  for (const SceneSample& s : samples) {
    const PipelineOutput out = run_pipeline(s, models, planes);
    const MetricReport rr = evaluate(out.depth_restored, s.gt_depth, s.mask);
    const MetricReport rs = evaluate(out.depth_single, s.gt_depth, s.mask);
    const MetricReport rm = evaluate(out.depth_multi, s.gt_depth, s.mask);
    restored.push_back(rr);
    single.push_back(rs);
    multi.push_back(rm);

    nlohmann::json report{{"id", s.id},
                          {"restored", rr.to_json()},
                          {"single", rs.to_json()},
                          {"multi", rm.to_json()}};
    std::ofstream rout(fs::path(out_dir) / "reports" / (s.id + ".json"));
    rout << report.dump(2) << "\n";

    if (write_maps) {
      const fs::path maps = fs::path(out_dir) / "maps";
      write_depth_png((maps / (s.id + "_depth_restored.png")).string(), out.depth_restored);
      write_depth_png((maps / (s.id + "_depth_single.png")).string(), out.depth_single);
      write_depth_png((maps / (s.id + "_depth_multi.png")).string(), out.depth_multi);
      write_gray8_png((maps / (s.id + "_conf_multi.png")).string(), out.conf_multi);
      write_gray8_png((maps / (s.id + "_conf_single.png")).string(), out.conf_single);
    }
  }

  nlohmann::json aggregate{{"samples", samples.size()},
                           {"restored", aggregate_reports(restored).to_json()},
                           {"single", aggregate_reports(single).to_json()},
                           {"multi", aggregate_reports(multi).to_json()}};
  std::ofstream aout(fs::path(out_dir) / "report.json");
  if (!aout) throw std::runtime_error("cannot write report in " + out_dir);
  aout << aggregate.dump(2) << "\n";
  return aggregate;
}

}  // namespace tdc
