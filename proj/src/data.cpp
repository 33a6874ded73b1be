#include "tdc/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "tdc/png_io.hpp"

namespace fs = std::filesystem;

namespace tdc {

namespace {

constexpr double kAlpha = 0.35;        // transparent surface blend weight
constexpr double kAmbient = 0.25;
constexpr double kRayEpsilon = 1e-9;
constexpr int kMaxBlendDepth = 8;

const Vec3 kLightDir = Vec3{-0.3, -0.5, -0.85}.normalized();  // toward the light

struct RayHit {
  bool ok = false;
  double t = std::numeric_limits<double>::infinity();
  int prim = -1;
  Vec3 point;
  Vec3 normal;  // outward, not yet oriented against the ray
};

bool intersect_sphere(const Primitive& p, const Vec3& o, const Vec3& d, double tmin,
                      double& t_out, Vec3& n_out) {
  const Vec3 oc = o - p.position;
  const double a = d.dot(d);
  const double b = 2.0 * oc.dot(d);
  const double c = oc.dot(oc) - p.size.x * p.size.x;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return false;
  const double s = std::sqrt(disc);
  const double t1 = (-b - s) / (2.0 * a);
  const double t2 = (-b + s) / (2.0 * a);
  double t = t1 > tmin ? t1 : (t2 > tmin ? t2 : -1.0);
  if (t < 0.0) return false;
  t_out = t;
  n_out = (o + d * t - p.position) * (1.0 / p.size.x);
  return true;
}

bool intersect_plane(const Primitive& p, const Vec3& o, const Vec3& d, double tmin,
                     double& t_out, Vec3& n_out) {
  const Vec3 n = p.rotation * Vec3{0.0, 0.0, 1.0};
  const double denom = d.dot(n);
  if (std::fabs(denom) < 1e-12) return false;
  const double t = (p.position - o).dot(n) / denom;
  if (t <= tmin) return false;
  if (p.size.x > 0.0 && p.size.y > 0.0) {
    const Vec3 local = p.rotation.transposed() * (o + d * t - p.position);
    if (std::fabs(local.x) > p.size.x || std::fabs(local.y) > p.size.y) return false;
  }
  t_out = t;
  n_out = n;
  return true;
}

bool intersect_box(const Primitive& p, const Vec3& o, const Vec3& d, double tmin,
                   double& t_out, Vec3& n_out) {
  const Mat3 rt = p.rotation.transposed();
  const Vec3 ol = rt * (o - p.position);
  const Vec3 dl = rt * d;
  const double olv[3] = {ol.x, ol.y, ol.z};
  const double dlv[3] = {dl.x, dl.y, dl.z};
  const double ext[3] = {p.size.x, p.size.y, p.size.z};
  double tlo = -std::numeric_limits<double>::infinity();
  double thi = std::numeric_limits<double>::infinity();
  for (int i = 0; i < 3; ++i) {
    if (std::fabs(dlv[i]) < 1e-12) {
      if (std::fabs(olv[i]) > ext[i]) return false;
      continue;
    }
    double t1 = (-ext[i] - olv[i]) / dlv[i];
    double t2 = (ext[i] - olv[i]) / dlv[i];
    if (t1 > t2) std::swap(t1, t2);
    tlo = std::max(tlo, t1);
    thi = std::min(thi, t2);
  }
  if (tlo > thi) return false;
  const double t = tlo > tmin ? tlo : (thi > tmin ? thi : -1.0);
  if (t < 0.0) return false;
  // face normal from the dominant local coordinate of the hit point
  const Vec3 pl = ol + dl * t;
  const double plv[3] = {pl.x, pl.y, pl.z};
  int axis = 0;
  double best = -1.0;
  for (int i = 0; i < 3; ++i) {
    const double rel = std::fabs(plv[i]) / ext[i];
    if (rel > best) {
      best = rel;
      axis = i;
    }
  }
  Vec3 nl{0.0, 0.0, 0.0};
  (axis == 0 ? nl.x : axis == 1 ? nl.y : nl.z) = plv[axis] > 0.0 ? 1.0 : -1.0;
  t_out = t;
  n_out = p.rotation * nl;
  return true;
}

RayHit nearest_hit(const SceneSpec& spec, const Vec3& o, const Vec3& d, double tmin,
                   bool opaque_only) {
  RayHit hit;
  for (size_t i = 0; i < spec.primitives.size(); ++i) {
    const Primitive& p = spec.primitives[i];
    if (opaque_only && p.transparent) continue;
    double t;
    Vec3 n;
    bool ok = false;
    switch (p.kind) {
      case Primitive::Kind::kSphere: ok = intersect_sphere(p, o, d, tmin, t, n); break;
      case Primitive::Kind::kPlane: ok = intersect_plane(p, o, d, tmin, t, n); break;
      case Primitive::Kind::kBox: ok = intersect_box(p, o, d, tmin, t, n); break;
    }
    if (ok && t < hit.t) {
      hit.ok = true;
      hit.t = t;
      hit.prim = static_cast<int>(i);
      hit.normal = n;
    }
  }
  if (hit.ok) hit.point = o + d * hit.t;
  return hit;
}

Vec3 checker_albedo(const Primitive& p, const Vec3& point) {
  const Vec3 local = p.rotation.transposed() * (point - p.position);
  const double s = p.checker_scale;
  const long parity = static_cast<long>(std::floor(local.x / s)) +
                      static_cast<long>(std::floor(local.y / s)) +
                      static_cast<long>(std::floor(local.z / s));
  return (parity & 1) == 0 ? p.color_a : p.color_b;
}

Vec3 shade(const SceneSpec& spec, const RayHit& hit, const Vec3& ray_dir) {
  const Primitive& p = spec.primitives[hit.prim];
  Vec3 n = hit.normal;
  if (n.dot(ray_dir) > 0.0) n = n * -1.0;  // face the viewer
  const double lambert = std::max(0.0, n.dot(kLightDir));
  const Vec3 albedo = checker_albedo(p, hit.point);
  return albedo * (kAmbient + (1.0 - kAmbient) * lambert);
}

Vec3 trace_color(const SceneSpec& spec, const Vec3& o, const Vec3& d, double tmin,
                 int depth) {
  const RayHit hit = nearest_hit(spec, o, d, tmin, false);
  if (!hit.ok) {
    throw std::runtime_error(
        "render_scene: a ray missed every primitive; scenes must guarantee full "
        "coverage (e.g. with a backdrop plane)");
  }
  const Vec3 surface = shade(spec, hit, d);
  if (spec.primitives[hit.prim].transparent && depth < kMaxBlendDepth) {
    const Vec3 behind = trace_color(spec, o, d, hit.t + 1e-6, depth + 1);
    return surface * kAlpha + behind * (1.0 - kAlpha);
  }
  return surface;
}

}  // namespace

void CorruptionSpec::validate() const {
  if (hole_fraction < 0.0 || hole_fraction > 1.0 || background_bleed_fraction < 0.0 ||
      background_bleed_fraction > 1.0) {
    throw std::invalid_argument("corruption: fractions must be within [0,1]");
  }
  if (hole_fraction + background_bleed_fraction > 1.0) {
    throw std::invalid_argument(
        "corruption: hole_fraction + background_bleed_fraction exceeds 1");
  }
  if (noise_sigma < 0.0) throw std::invalid_argument("corruption: negative noise sigma");
}

RenderResult render_scene(const SceneSpec& spec, View view) {
  if (spec.primitives.empty()) throw std::invalid_argument("render_scene: no primitives");
  spec.rig.validate();
  bool any_transparent = false, any_opaque = false;
  for (const Primitive& p : spec.primitives) (p.transparent ? any_transparent : any_opaque) = true;
  if (!any_transparent || !any_opaque) {
    throw std::invalid_argument(
        "render_scene: scene needs at least one transparent primitive and one opaque "
        "background surface");
  }

  const Intrinsics& k = view == View::kRef ? spec.rig.ref_intrinsics : spec.rig.src_intrinsics;
  Vec3 origin{0.0, 0.0, 0.0};
  Mat3 to_world = Mat3::identity();
  if (view == View::kSrc) {
    const RelativePose inv = spec.rig.ref_to_src.inverse();
    origin = inv.translation;
    to_world = inv.rotation;
  }

  RenderResult out;
  out.rgb = Tensor({3, k.height, k.width});
  out.depth = Tensor({k.height, k.width});
  out.mask = Tensor({k.height, k.width});
  out.background_depth = Tensor({k.height, k.width});
  out.hit_id = Tensor({k.height, k.width});

  for (int v = 0; v < k.height; ++v) {
    for (int u = 0; u < k.width; ++u) {
      // view-frame direction with unit z, so the ray parameter is the view depth
      const Vec3 dir = to_world * Vec3{(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
      const RayHit first = nearest_hit(spec, origin, dir, kRayEpsilon, false);
      if (!first.ok) {
        throw std::runtime_error(
            "render_scene: a ray missed every primitive; scenes must guarantee full "
            "coverage (e.g. with a backdrop plane)");
      }
      const RayHit opaque = nearest_hit(spec, origin, dir, kRayEpsilon, true);
      if (!opaque.ok) {
        throw std::runtime_error(
            "render_scene: no opaque surface behind a transparent primitive");
      }
      out.depth.at(v, u) = first.t;
      out.background_depth.at(v, u) = opaque.t;
      out.mask.at(v, u) = spec.primitives[first.prim].transparent ? 1.0 : 0.0;
      out.hit_id.at(v, u) = first.prim;
      const Vec3 color = trace_color(spec, origin, dir, kRayEpsilon, 0);
      out.rgb.at(0, v, u) = std::clamp(color.x, 0.0, 1.0);
      out.rgb.at(1, v, u) = std::clamp(color.y, 0.0, 1.0);
      out.rgb.at(2, v, u) = std::clamp(color.z, 0.0, 1.0);
    }
  }
  return out;
}

Tensor corrupt_depth(const Tensor& gt_depth, const Tensor& mask,
                     const Tensor& background_depth, const CorruptionSpec& spec,
                     std::uint64_t seed) {
  spec.validate();
  check_same_shape(gt_depth, mask, "corrupt_depth");
  check_same_shape(gt_depth, background_depth, "corrupt_depth");

  Rng rng(seed);
  Tensor raw(gt_depth.shape());
  for (int i = 0; i < gt_depth.numel(); ++i) {
    if (mask[i] > 0.5) {
      const double u = rng.uniform();
      if (u < spec.hole_fraction) {
        raw[i] = 0.0;
      } else if (u < spec.hole_fraction + spec.background_bleed_fraction) {
        raw[i] = background_depth[i];
      } else {
        raw[i] = std::max(0.0, gt_depth[i] + spec.noise_sigma * rng.normal());
      }
    } else {
      raw[i] = std::max(0.0, gt_depth[i] + spec.noise_sigma * rng.normal());
    }
  }
  return raw;
}

void SceneSample::validate() const {
  if (rgb_ref.rank() != 3 || rgb_ref.dim(0) != 3) {
    throw std::invalid_argument("sample '" + id + "': rgb_ref must be [3,H,W]");
  }
  const int H = rgb_ref.dim(1), W = rgb_ref.dim(2);
  if (!rgb_src.same_shape(rgb_ref)) {
    throw std::invalid_argument("sample '" + id + "': rgb_src shape " + rgb_src.shape_str() +
                                " differs from rgb_ref " + rgb_ref.shape_str());
  }
  for (const Tensor* m : {&raw_depth, &gt_depth, &mask}) {
    if (m->rank() != 2 || m->dim(0) != H || m->dim(1) != W) {
      throw std::invalid_argument("sample '" + id + "': map shape " + m->shape_str() +
                                  " does not match image " + rgb_ref.shape_str());
    }
  }
  rig.validate(1e-6);
  if (rig.ref_intrinsics.width != W || rig.ref_intrinsics.height != H) {
    throw std::invalid_argument("sample '" + id + "': intrinsics size disagrees with images");
  }
  int masked = 0;
  for (int i = 0; i < mask.numel(); ++i) {
    if (mask[i] > 0.5) {
      ++masked;
      if (!(gt_depth[i] > 0.0)) {
        throw std::invalid_argument("sample '" + id +
                                    "': non-positive ground-truth depth inside the mask");
      }
    }
  }
  if (masked == 0) throw std::invalid_argument("sample '" + id + "': empty mask");
}

SceneSample make_sample(const SceneSpec& spec, const std::string& id) {
  const RenderResult ref = render_scene(spec, View::kRef);
  const RenderResult src = render_scene(spec, View::kSrc);
  SceneSample sample;
  sample.rgb_ref = ref.rgb;
  sample.rgb_src = src.rgb;
  sample.gt_depth = ref.depth;
  sample.mask = ref.mask;
  sample.raw_depth = corrupt_depth(ref.depth, ref.mask, ref.background_depth,
                                   spec.corruption, spec.seed);
  sample.rig = spec.rig;
  sample.id = id;
  sample.validate();
  return sample;
}

// ---------------------------------------------------------------------------
// randomized desk scenes

namespace {

Primitive random_backdrop(Rng& rng) {
  Primitive p;
  p.kind = Primitive::Kind::kPlane;
  p.rotation = Mat3::rotation_x(rng.uniform(-0.12, 0.12)) *
               Mat3::rotation_y(rng.uniform(-0.12, 0.12));
  p.position = {rng.uniform(-0.05, 0.05), rng.uniform(-0.05, 0.05), rng.uniform(1.22, 1.42)};
  p.size = {0.0, 0.0, 0.0};  // unbounded: guarantees full ray coverage
  p.checker_scale = rng.uniform(0.05, 0.10);
  p.color_a = {rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95), rng.uniform(0.55, 0.95)};
  p.color_b = {rng.uniform(0.05, 0.40), rng.uniform(0.05, 0.40), rng.uniform(0.05, 0.40)};
  p.transparent = false;
  return p;
}

Primitive random_object(Rng& rng, double half_extent_scale, double z_lo, double z_hi,
                        double spread, bool transparent) {
  Primitive p;
  const double z = rng.uniform(z_lo, z_hi);
  const double half = z * half_extent_scale;
  p.position = {rng.uniform(-spread, spread) * half, rng.uniform(-spread, spread) * half, z};
  p.rotation = Mat3::rotation_y(rng.uniform(0.0, 0.8)) * Mat3::rotation_x(rng.uniform(0.0, 0.8));
  if (rng.uniform() < 0.5) {
    p.kind = Primitive::Kind::kSphere;
    p.size = {rng.uniform(0.09, 0.15), 0.0, 0.0};
  } else {
    p.kind = Primitive::Kind::kBox;
    p.size = {rng.uniform(0.06, 0.11), rng.uniform(0.06, 0.11), rng.uniform(0.06, 0.11)};
  }
  p.checker_scale = rng.uniform(0.03, 0.07);
  p.transparent = transparent;
  if (transparent) {
    p.color_a = {rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.9), rng.uniform(0.6, 0.9)};
    p.color_b = {rng.uniform(0.35, 0.6), rng.uniform(0.35, 0.6), rng.uniform(0.35, 0.6)};
  } else {
    p.color_a = {rng.uniform(0.5, 0.95), rng.uniform(0.5, 0.95), rng.uniform(0.5, 0.95)};
    p.color_b = {rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45), rng.uniform(0.05, 0.45)};
  }
  return p;
}

SceneSpec random_scene_attempt(const SynthParams& params, std::uint64_t seed) {
  Rng rng(seed);
  SceneSpec spec;
  spec.seed = seed;
  spec.corruption = params.corruption;

  Intrinsics k;
  k.fx = k.fy = params.focal;
  k.width = k.height = params.image_size;
  k.cx = k.cy = (params.image_size - 1) / 2.0;
  spec.rig.ref_intrinsics = k;
  spec.rig.src_intrinsics = k;
  spec.rig.ref_to_src.rotation = Mat3::rotation_y(rng.uniform(-0.02, 0.02));
  spec.rig.ref_to_src.translation = {-params.baseline * rng.uniform(0.9, 1.1),
                                     rng.uniform(-0.01, 0.01), 0.0};

  const double half_scale = (params.image_size / 2.0) / params.focal;
  spec.primitives.push_back(random_backdrop(rng));
  const int n_opaque = 1 + rng.index(2);
  for (int i = 0; i < n_opaque; ++i) {
    spec.primitives.push_back(random_object(rng, half_scale, 0.85, 1.15, 0.6, false));
  }
  const int n_transparent = 1 + rng.index(2);
  for (int i = 0; i < n_transparent; ++i) {
    spec.primitives.push_back(random_object(rng, half_scale, 0.55, 0.85, 0.35, true));
  }
  return spec;
}

}  // namespace

SceneSpec make_random_scene(const SynthParams& params, std::uint64_t seed) {
  for (int attempt = 0; attempt < 8; ++attempt) {
    SceneSpec spec = random_scene_attempt(params, seed + 1000003ULL * attempt);
    const RenderResult ref = render_scene(spec, View::kRef);
    int masked = 0;
    for (int i = 0; i < ref.mask.numel(); ++i) masked += ref.mask[i] > 0.5 ? 1 : 0;
    if (masked > 0) return spec;
  }
  throw std::runtime_error("make_random_scene: no visible transparent object after 8 attempts");
}

std::vector<SceneSample> synth_corpus(const SynthParams& params, int count,
                                      std::uint64_t seed) {
  std::vector<SceneSample> samples;
  for (int i = 0; i < count; ++i) {
    const std::uint64_t scene_seed = seed ^ (0x9e3779b97f4a7c15ULL * (i + 1));
    const SceneSpec spec = make_random_scene(params, scene_seed);
    char id[32];
    std::snprintf(id, sizeof(id), "scene_%05d", i);
    samples.push_back(make_sample(spec, id));
  }
  return samples;
}

nlohmann::json synth_params_to_json(const SynthParams& p) {
  return {{"image_size", p.image_size},
          {"focal", p.focal},
          {"baseline", p.baseline},
          {"d_min", p.d_min},
          {"d_max", p.d_max},
          {"hole_fraction", p.corruption.hole_fraction},
          {"background_bleed_fraction", p.corruption.background_bleed_fraction},
          {"noise_sigma", p.corruption.noise_sigma}};
}

SynthParams synth_params_from_json(const nlohmann::json& j) {
  SynthParams p;
  p.image_size = j.value("image_size", p.image_size);
  p.focal = j.value("focal", p.focal);
  p.baseline = j.value("baseline", p.baseline);
  p.d_min = j.value("d_min", p.d_min);
  p.d_max = j.value("d_max", p.d_max);
  p.corruption.hole_fraction = j.value("hole_fraction", p.corruption.hole_fraction);
  p.corruption.background_bleed_fraction =
      j.value("background_bleed_fraction", p.corruption.background_bleed_fraction);
  p.corruption.noise_sigma = j.value("noise_sigma", p.corruption.noise_sigma);
  return p;
}

// ---------------------------------------------------------------------------
// JSON serialization

namespace {

nlohmann::json intrinsics_to_json(const Intrinsics& k) {
  return {{"fx", k.fx}, {"fy", k.fy}, {"cx", k.cx},
          {"cy", k.cy}, {"width", k.width}, {"height", k.height}};
}

Intrinsics intrinsics_from_json(const nlohmann::json& j) {
  Intrinsics k;
  k.fx = j.at("fx").get<double>();
  k.fy = j.at("fy").get<double>();
  k.cx = j.at("cx").get<double>();
  k.cy = j.at("cy").get<double>();
  k.width = j.at("width").get<int>();
  k.height = j.at("height").get<int>();
  return k;
}

nlohmann::json pose_to_json(const RelativePose& p) {
  return {{"rotation", std::vector<double>(p.rotation.m, p.rotation.m + 9)},
          {"translation", {p.translation.x, p.translation.y, p.translation.z}}};
}

RelativePose pose_from_json(const nlohmann::json& j) {
  RelativePose p;
  p.rotation = Mat3::from_rows(j.at("rotation").get<std::vector<double>>());
  const auto t = j.at("translation").get<std::vector<double>>();
  if (t.size() != 3) throw std::invalid_argument("translation must have 3 entries");
  p.translation = {t[0], t[1], t[2]};
  return p;
}

nlohmann::json vec3_to_json(const Vec3& v) { return {v.x, v.y, v.z}; }

Vec3 vec3_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::invalid_argument("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

const char* kind_name(Primitive::Kind k) {
  switch (k) {
    case Primitive::Kind::kPlane: return "plane";
    case Primitive::Kind::kSphere: return "sphere";
    case Primitive::Kind::kBox: return "box";
  }
  return "plane";
}

Primitive::Kind kind_from_name(const std::string& name) {
  if (name == "plane") return Primitive::Kind::kPlane;
  if (name == "sphere") return Primitive::Kind::kSphere;
  if (name == "box") return Primitive::Kind::kBox;
  throw std::invalid_argument("unknown primitive kind: " + name);
}

}  // namespace

nlohmann::json scene_spec_to_json(const SceneSpec& spec) {
  nlohmann::json prims = nlohmann::json::array();
  for (const Primitive& p : spec.primitives) {
    prims.push_back({{"kind", kind_name(p.kind)},
                     {"rotation", std::vector<double>(p.rotation.m, p.rotation.m + 9)},
                     {"position", vec3_to_json(p.position)},
                     {"size", vec3_to_json(p.size)},
                     {"checker_scale", p.checker_scale},
                     {"color_a", vec3_to_json(p.color_a)},
                     {"color_b", vec3_to_json(p.color_b)},
                     {"transparent", p.transparent}});
  }
  return {{"seed", spec.seed},
          {"corruption",
           {{"hole_fraction", spec.corruption.hole_fraction},
            {"background_bleed_fraction", spec.corruption.background_bleed_fraction},
            {"noise_sigma", spec.corruption.noise_sigma}}},
          {"rig",
           {{"ref_intrinsics", intrinsics_to_json(spec.rig.ref_intrinsics)},
            {"src_intrinsics", intrinsics_to_json(spec.rig.src_intrinsics)},
            {"ref_to_src", pose_to_json(spec.rig.ref_to_src)}}},
          {"primitives", prims}};
}

SceneSpec scene_spec_from_json(const nlohmann::json& j) {
  SceneSpec spec;
  spec.seed = j.value("seed", 0ULL);
  if (j.contains("corruption")) {
    const auto& c = j.at("corruption");
    spec.corruption.hole_fraction = c.value("hole_fraction", 0.0);
    spec.corruption.background_bleed_fraction = c.value("background_bleed_fraction", 0.0);
    spec.corruption.noise_sigma = c.value("noise_sigma", 0.0);
  }
  const auto& rig = j.at("rig");
  spec.rig.ref_intrinsics = intrinsics_from_json(rig.at("ref_intrinsics"));
  spec.rig.src_intrinsics = intrinsics_from_json(rig.at("src_intrinsics"));
  spec.rig.ref_to_src = pose_from_json(rig.at("ref_to_src"));
  for (const auto& pj : j.at("primitives")) {
    Primitive p;
    p.kind = kind_from_name(pj.at("kind").get<std::string>());
    p.rotation = Mat3::from_rows(pj.at("rotation").get<std::vector<double>>());
    p.position = vec3_from_json(pj.at("position"));
    p.size = vec3_from_json(pj.at("size"));
    p.checker_scale = pj.at("checker_scale").get<double>();
    p.color_a = vec3_from_json(pj.at("color_a"));
    p.color_b = vec3_from_json(pj.at("color_b"));
    p.transparent = pj.at("transparent").get<bool>();
    spec.primitives.push_back(p);
  }
  return spec;
}

// ---------------------------------------------------------------------------
// manifest IO

nlohmann::json save_sample(const SceneSample& sample, const std::string& dir) {
  sample.validate();
  fs::create_directories(dir);
  const std::string base = sample.id;
  const auto path = [&](const std::string& suffix) { return base + "_" + suffix + ".png"; };
  write_rgb_png((fs::path(dir) / path("rgb_ref")).string(), sample.rgb_ref);
  write_rgb_png((fs::path(dir) / path("rgb_src")).string(), sample.rgb_src);
  write_depth_png((fs::path(dir) / path("raw_depth")).string(), sample.raw_depth);
  write_depth_png((fs::path(dir) / path("gt_depth")).string(), sample.gt_depth);
  write_mask_png((fs::path(dir) / path("mask")).string(), sample.mask);
  return {{"id", sample.id},
          {"rgb_ref", path("rgb_ref")},
          {"rgb_src", path("rgb_src")},
          {"raw_depth", path("raw_depth")},
          {"gt_depth", path("gt_depth")},
          {"mask", path("mask")},
          {"ref_intrinsics", intrinsics_to_json(sample.rig.ref_intrinsics)},
          {"src_intrinsics", intrinsics_to_json(sample.rig.src_intrinsics)},
          {"ref_to_src", pose_to_json(sample.rig.ref_to_src)}};
}

void save_manifest(const std::vector<SceneSample>& samples, const std::string& dir) {
  nlohmann::json entries = nlohmann::json::array();
  for (const SceneSample& s : samples) entries.push_back(save_sample(s, dir));
  nlohmann::json manifest{{"samples", entries}};
  std::ofstream out(fs::path(dir) / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest in " + dir);
  out << manifest.dump(2) << "\n";
}

std::vector<SceneSample> load_manifest(const std::string& manifest_path, bool strict) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("cannot open manifest: " + manifest_path);
  nlohmann::json manifest;
  in >> manifest;
  const fs::path dir = fs::path(manifest_path).parent_path();

  std::vector<SceneSample> samples;
  for (const auto& j : manifest.at("samples")) {
    const std::string id = j.value("id", "<missing id>");
    try {
      SceneSample s;
      s.id = j.at("id").get<std::string>();
      s.rgb_ref = read_rgb_png((dir / j.at("rgb_ref").get<std::string>()).string());
      s.rgb_src = read_rgb_png((dir / j.at("rgb_src").get<std::string>()).string());
      s.raw_depth = read_depth_png((dir / j.at("raw_depth").get<std::string>()).string());
      s.gt_depth = read_depth_png((dir / j.at("gt_depth").get<std::string>()).string());
      s.mask = read_mask_png((dir / j.at("mask").get<std::string>()).string());
      s.rig.ref_intrinsics = intrinsics_from_json(j.at("ref_intrinsics"));
      s.rig.src_intrinsics = intrinsics_from_json(j.at("src_intrinsics"));
      s.rig.ref_to_src = pose_from_json(j.at("ref_to_src"));
      s.validate();
      samples.push_back(std::move(s));
    } catch (const std::exception& e) {
      const std::string msg = "manifest sample '" + id + "': " + e.what();
      if (strict) throw std::runtime_error(msg);
      std::cerr << "[load_manifest] skipping " << msg << "\n";
    }
  }
  return samples;
}

}  // namespace tdc
