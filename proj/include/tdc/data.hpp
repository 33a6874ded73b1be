#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tdc/geometry.hpp"
#include "tdc/rng.hpp"
#include "tdc/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tdc {

// One training/eval item. Depths in meters, raw_depth 0 where invalid,
// mask 1 on transparent pixels.
struct SceneSample {
  Tensor rgb_ref, rgb_src;   // [3,H,W] in [0,1]
  Tensor raw_depth;          // [H,W]
  Tensor gt_depth;           // [H,W]
  Tensor mask;               // [H,W] in {0,1}
  CameraRig rig;
  std::string id;

  void validate() const;
};

struct Primitive {
  enum class Kind { kPlane, kSphere, kBox };
  Kind kind = Kind::kPlane;
  Mat3 rotation;          // local -> reference-camera frame
  Vec3 position;          // in the reference-camera frame, meters
  // plane: half extents in local x/y (0 = unbounded); sphere: x = radius;
  // box: half extents
  Vec3 size;
  double checker_scale = 0.1;  // checkerboard period, meters
  Vec3 color_a{0.8, 0.8, 0.8};
  Vec3 color_b{0.2, 0.2, 0.2};
  bool transparent = false;
};

struct CorruptionSpec {
  double hole_fraction = 0.0;
  double background_bleed_fraction = 0.0;
  double noise_sigma = 0.0;  // meters

  void validate() const;
};

// Analytic scene in the reference-camera frame.
struct SceneSpec {
  std::vector<Primitive> primitives;
  CameraRig rig;
  CorruptionSpec corruption;
  std::uint64_t seed = 0;
};

enum class View { kRef, kSrc };

struct RenderResult {
  Tensor rgb;               // [3,H,W]
  Tensor depth;             // [H,W] first-hit depth (transparent surfaces included)
  Tensor mask;              // [H,W] 1 where the first hit is transparent
  Tensor background_depth;  // [H,W] first opaque hit, ignoring transparent surfaces
  Tensor hit_id;            // [H,W] primitive index of the first hit
};

// Ray casting against the analytic primitives; Lambertian checkerboard
// shading, transparent surfaces alpha-blended (alpha 0.35) over whatever lies
// behind them. Throws if any ray escapes the scene.
RenderResult render_scene(const SceneSpec& spec, View view);

// Sensor model: outside the mask gaussian noise only; inside the mask each
// pixel independently becomes a hole (0), the background depth, or gt+noise.
Tensor corrupt_depth(const Tensor& gt_depth, const Tensor& mask,
                     const Tensor& background_depth, const CorruptionSpec& spec,
                     std::uint64_t seed);

SceneSample make_sample(const SceneSpec& spec, const std::string& id);

// Randomized desk scene: textured backdrop, opaque clutter, 1-2 transparent
// objects in front. Guaranteed non-empty mask.
struct SynthParams {
  int image_size = 96;
  double focal = 110.0;
  double baseline = 0.10;
  double d_min = 0.3, d_max = 1.5;
  CorruptionSpec corruption{0.3, 0.3, 0.003};
};
SceneSpec make_random_scene(const SynthParams& params, std::uint64_t seed);

// count scenes with per-index seeds derived from seed; sample ids scene_00000...
std::vector<SceneSample> synth_corpus(const SynthParams& params, int count,
                                      std::uint64_t seed);

nlohmann::json synth_params_to_json(const SynthParams& params);
SynthParams synth_params_from_json(const nlohmann::json& j);

nlohmann::json scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(const nlohmann::json& j);

// Manifest-driven dataset IO. PNG codecs: rgb 8-bit, depth 16-bit grayscale
// millimeters (0 = invalid), mask 8-bit (>127 -> 1).
std::vector<SceneSample> load_manifest(const std::string& manifest_path, bool strict = true);
nlohmann::json save_sample(const SceneSample& sample, const std::string& dir);
void save_manifest(const std::vector<SceneSample>& samples, const std::string& dir);

}  // namespace tdc
