#include "tdc/geometry.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace tdc {

double Vec3::norm() const { return std::sqrt(x * x + y * y + z * z); }

Vec3 Vec3::normalized() const {
  const double n = norm();
  return {x / n, y / n, z / n};
}

Mat3 Mat3::rotation_y(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Mat3 r;
  r.m[0] = c;  r.m[1] = 0; r.m[2] = s;
  r.m[3] = 0;  r.m[4] = 1; r.m[5] = 0;
  r.m[6] = -s; r.m[7] = 0; r.m[8] = c;
  return r;
}

Mat3 Mat3::rotation_x(double radians) {
  const double c = std::cos(radians), s = std::sin(radians);
  Mat3 r;
  r.m[0] = 1; r.m[1] = 0; r.m[2] = 0;
  r.m[3] = 0; r.m[4] = c; r.m[5] = -s;
  r.m[6] = 0; r.m[7] = s; r.m[8] = c;
  return r;
}

Mat3 Mat3::from_rows(const std::vector<double>& rows9) {
  if (rows9.size() != 9) throw std::invalid_argument("rotation must have 9 entries");
  Mat3 r;
  for (int i = 0; i < 9; ++i) r.m[i] = rows9[i];
  return r;
}

Mat3 Mat3::operator*(const Mat3& o) const {
  Mat3 r;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double s = 0.0;
      for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
      r.m[i * 3 + j] = s;
    }
  }
  return r;
}

Mat3 Mat3::transposed() const {
  Mat3 r;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) r.m[i * 3 + j] = m[j * 3 + i];
  return r;
}

double Mat3::det() const {
  return m[0] * (m[4] * m[8] - m[5] * m[7]) - m[1] * (m[3] * m[8] - m[5] * m[6]) +
         m[2] * (m[3] * m[7] - m[4] * m[6]);
}

void Intrinsics::validate() const {
  if (width <= 0 || height <= 0) throw std::invalid_argument("intrinsics: non-positive image size");
  if (fx <= 0.0 || fy <= 0.0) throw std::invalid_argument("intrinsics: focal lengths must be positive");
  if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
    throw std::invalid_argument("intrinsics: principal point outside the image");
  }
}

Intrinsics Intrinsics::scaled(int stride) const {
  if (stride < 1 || width % stride != 0 || height % stride != 0) {
    throw std::invalid_argument("intrinsics: image size " + std::to_string(width) + "x" +
                                std::to_string(height) + " not divisible by stride " +
                                std::to_string(stride));
  }
  const double s = static_cast<double>(stride);
  return {fx / s, fy / s, cx / s, cy / s, width / stride, height / stride};
}

void RelativePose::validate(double tol) const {
  const Mat3 rtr = rotation.transposed() * rotation;
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double expect = i == j ? 1.0 : 0.0;
      if (std::fabs(rtr.m[i * 3 + j] - expect) > tol) {
        throw std::invalid_argument("relative pose: rotation is not orthonormal");
      }
    }
  }
  if (std::fabs(rotation.det() - 1.0) > tol) {
    throw std::invalid_argument("relative pose: rotation determinant is not +1");
  }
}

RelativePose RelativePose::inverse() const {
  const Mat3 rt = rotation.transposed();
  const Vec3 t = rt * translation;
  return {rt, {-t.x, -t.y, -t.z}};
}

void CameraRig::validate(double pose_tol) const {
  ref_intrinsics.validate();
  src_intrinsics.validate();
  ref_to_src.validate(pose_tol);
}

void DepthPlanes::validate() const {
  if (!(d_min > 0.0) || !(d_max > d_min)) {
    throw std::invalid_argument("depth planes: need 0 < d_min < d_max");
  }
  if (count < 2) throw std::invalid_argument("depth planes: count must be >= 2");
}

std::vector<double> DepthPlanes::depths() const {
  std::vector<double> d(count);
  for (int i = 0; i < count; ++i) d[i] = depth(i);
  return d;
}

Tensor warp_coords(const CameraRig& rig, double plane_depth, int height, int width) {
  if (!(plane_depth > 0.0)) throw std::invalid_argument("warp_coords: plane depth must be positive");
  Tensor coords({height, width, 2});
  const Intrinsics& kr = rig.ref_intrinsics;
  const Intrinsics& ks = rig.src_intrinsics;
  const RelativePose& pose = rig.ref_to_src;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Vec3 p = kr.back_project(u, v, plane_depth);
      const Vec3 q = pose.apply(p);
      if (q.z <= 0.0) {
        coords.at(v, u, 0) = kBehindCameraCoord;
        coords.at(v, u, 1) = kBehindCameraCoord;
        continue;
      }
      ks.project(q, coords.at(v, u, 0), coords.at(v, u, 1));
    }
  }
  return coords;
}

Tensor warp_coords_depth_gradient(const CameraRig& rig, double plane_depth, int height,
                                  int width) {
  if (!(plane_depth > 0.0)) throw std::invalid_argument("warp_coords: plane depth must be positive");
  Tensor grad({height, width, 2});
  const Intrinsics& kr = rig.ref_intrinsics;
  const Intrinsics& ks = rig.src_intrinsics;
  const RelativePose& pose = rig.ref_to_src;
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Vec3 ray{(u - kr.cx) / kr.fx, (v - kr.cy) / kr.fy, 1.0};
      const Vec3 q = pose.apply(ray * plane_depth);
      if (q.z <= 0.0) continue;  // sentinel region is constant
      const Vec3 dq = pose.rotation * ray;
      const double inv_z2 = 1.0 / (q.z * q.z);
      grad.at(v, u, 0) = ks.fx * (dq.x * q.z - q.x * dq.z) * inv_z2;
      grad.at(v, u, 1) = ks.fy * (dq.y * q.z - q.y * dq.z) * inv_z2;
    }
  }
  return grad;
}

Var warp_feature_volume(Tape& tape, Var src_features, const CameraRig& rig,
                        const DepthPlanes& planes, int feature_stride) {
  planes.validate();
  const CameraRig scaled{rig.ref_intrinsics.scaled(feature_stride),
                         rig.src_intrinsics.scaled(feature_stride), rig.ref_to_src};
  const int h = scaled.ref_intrinsics.height;
  const int w = scaled.ref_intrinsics.width;
  const int channels = src_features->value.dim(0);
  std::vector<Var> slices;
  slices.reserve(planes.count);
  for (int n = 0; n < planes.count; ++n) {
    Var coords = tape.constant(warp_coords(scaled, planes.depth(n), h, w));
    Var slice = tape.bilinear_sample(src_features, coords);
    slices.push_back(tape.reshape(slice, {channels, 1, h, w}));
  }
  return tape.concat(slices, 1);
}

namespace {

struct NormalScratch {
  Vec3 n;          // oriented unit normal
  Vec3 what;       // unoriented unit cross product
  double wnorm;    // |a x b|
  double sign;     // orientation factor applied to what
  bool degenerate;
};

inline Vec3 pixel_ray(const Intrinsics& k, int u, int v) {
  return {(u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0};
}

NormalScratch normal_at(const Tensor& depth, const Intrinsics& k, int u, int v) {
  const double d00 = depth.at(v, u);
  const double d10 = depth.at(v, u + 1);
  const double d01 = depth.at(v + 1, u);
  const Vec3 p00 = pixel_ray(k, u, v) * d00;
  const Vec3 a = pixel_ray(k, u + 1, v) * d10 - p00;
  const Vec3 b = pixel_ray(k, u, v + 1) * d01 - p00;
  const Vec3 w = a.cross(b);
  const double wn = w.norm();
  NormalScratch s;
  s.wnorm = wn;
  if (wn < 1e-18) {
    s.n = {0.0, 0.0, -1.0};
    s.what = {0.0, 0.0, 0.0};
    s.sign = 1.0;
    s.degenerate = true;
    return s;
  }
  s.what = w * (1.0 / wn);
  s.sign = s.what.z > 0.0 ? -1.0 : 1.0;
  s.n = s.what * s.sign;
  s.degenerate = false;
  return s;
}

}  // namespace

Tensor normals_from_depth(const Tensor& depth, const Intrinsics& intrinsics) {
  if (depth.rank() != 2) throw std::invalid_argument("normals: depth must be [H,W]");
  const int H = depth.dim(0), W = depth.dim(1);
  if (H < 2 || W < 2) throw std::invalid_argument("normals: depth map must be at least 2x2");
  Tensor normals({3, H, W});
  auto store = [&](int u, int v, const Vec3& n) {
    normals.at(0, v, u) = n.x;
    normals.at(1, v, u) = n.y;
    normals.at(2, v, u) = n.z;
  };
  for (int v = 0; v < H - 1; ++v) {
    for (int u = 0; u < W - 1; ++u) store(u, v, normal_at(depth, intrinsics, u, v).n);
  }
  // borders replicate the inward neighbor
  for (int v = 0; v < H - 1; ++v) {
    store(W - 1, v, {normals.at(0, v, W - 2), normals.at(1, v, W - 2), normals.at(2, v, W - 2)});
  }
  for (int u = 0; u < W; ++u) {
    store(u, H - 1, {normals.at(0, H - 2, u), normals.at(1, H - 2, u), normals.at(2, H - 2, u)});
  }
  return normals;
}

Var normals_from_depth(Tape& tape, Var depth, const Intrinsics& intrinsics) {
  Tensor value = normals_from_depth(depth->value, intrinsics);
  const Intrinsics k = intrinsics;
  return tape.make_node(std::move(value), [depth, k](Node& self) {
    const Tensor& d = depth->value;
    const int H = d.dim(0), W = d.dim(1);
    // fold replicated-border gradients onto their source pixels, in reverse
    // of the forward copy order so the corner routes through the last column
    Tensor g(self.grad);
    for (int u = 0; u < W; ++u) {
      for (int c = 0; c < 3; ++c) g.at(c, H - 2, u) += g.at(c, H - 1, u);
    }
    for (int v = 0; v < H - 1; ++v) {
      for (int c = 0; c < 3; ++c) g.at(c, v, W - 2) += g.at(c, v, W - 1);
    }
    for (int v = 0; v < H - 1; ++v) {
      for (int u = 0; u < W - 1; ++u) {
        const Vec3 gn{g.at(0, v, u), g.at(1, v, u), g.at(2, v, u)};
        if (gn.x == 0.0 && gn.y == 0.0 && gn.z == 0.0) continue;
        const NormalScratch s = normal_at(d, k, u, v);
        if (s.degenerate) continue;  // zero gradient for degenerate pixels
        const double d00 = d.at(v, u);
        const double d10 = d.at(v, u + 1);
        const double d01 = d.at(v + 1, u);
        const Vec3 r00 = pixel_ray(k, u, v);
        const Vec3 r10 = pixel_ray(k, u + 1, v);
        const Vec3 r01 = pixel_ray(k, u, v + 1);
        const Vec3 p00 = r00 * d00;
        const Vec3 a = r10 * d10 - p00;
        const Vec3 b = r01 * d01 - p00;
        // dn/dd = sign * (wd - what (what . wd)) / |w| for wd = dw/dd
        auto accumulate = [&](const Vec3& da, const Vec3& db, double& out) {
          const Vec3 wd = da.cross(b) + a.cross(db);
          const Vec3 dn = (wd - s.what * s.what.dot(wd)) * (s.sign / s.wnorm);
          out += gn.dot(dn);
        };
        const Vec3 zero{0.0, 0.0, 0.0};
        accumulate({-r00.x, -r00.y, -r00.z}, {-r00.x, -r00.y, -r00.z}, depth->grad.at(v, u));
        accumulate(r10, zero, depth->grad.at(v, u + 1));
        accumulate(zero, r01, depth->grad.at(v + 1, u));
      }
    }
  });
}

}  // namespace tdc
