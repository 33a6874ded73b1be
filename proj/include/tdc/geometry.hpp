#pragma once

#include <vector>

#include "tdc/autodiff.hpp"
#include "tdc/tensor.hpp"

namespace tdc {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  Vec3 cross(const Vec3& o) const {
    return {y * o.z - z * o.y, z * o.x - x * o.z, x * o.y - y * o.x};
  }
  double norm() const;
  Vec3 normalized() const;
};

struct Mat3 {
  // row-major
  double m[9] = {1, 0, 0, 0, 1, 0, 0, 0, 1};

  static Mat3 identity() { return Mat3{}; }
  static Mat3 rotation_y(double radians);
  static Mat3 rotation_x(double radians);
  static Mat3 from_rows(const std::vector<double>& rows9);

  Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  Mat3 operator*(const Mat3& o) const;
  Mat3 transposed() const;
  double det() const;
};

struct Intrinsics {
  double fx = 0.0, fy = 0.0, cx = 0.0, cy = 0.0;
  int width = 0, height = 0;

  void validate() const;  // fx,fy > 0; principal point inside the image
  Intrinsics scaled(int stride) const;
  Vec3 back_project(double u, double v, double depth) const {
    return {depth * (u - cx) / fx, depth * (v - cy) / fy, depth};
  }
  // caller guarantees p.z > 0
  void project(const Vec3& p, double& u, double& v) const {
    u = fx * p.x / p.z + cx;
    v = fy * p.y / p.z + cy;
  }
};

// Maps reference-camera coordinates to source-camera coordinates.
struct RelativePose {
  Mat3 rotation;
  Vec3 translation;

  void validate(double tol = 1e-10) const;  // orthonormal, det +1
  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
  RelativePose inverse() const;
};

struct CameraRig {
  Intrinsics ref_intrinsics;
  Intrinsics src_intrinsics;
  RelativePose ref_to_src;

  void validate(double pose_tol = 1e-10) const;
};

// N fronto-parallel hypothesis planes at equal depth intervals.
struct DepthPlanes {
  double d_min = 0.0, d_max = 0.0;
  int count = 0;

  void validate() const;  // 0 < d_min < d_max, count >= 2
  double depth(int i) const {
    return d_min + i * (d_max - d_min) / (count - 1);
  }
  double spacing() const { return (d_max - d_min) / (count - 1); }
  std::vector<double> depths() const;
};

// coordinate emitted for points that project behind the source camera;
// far enough outside any image that sampling returns zero
inline constexpr double kBehindCameraCoord = -1.0e6;

// Per-pixel source-image coordinates of the reference grid back-projected to
// plane_depth and reprojected through the source camera. Output [H,W,2], (u,v).
Tensor warp_coords(const CameraRig& rig, double plane_depth, int height, int width);

// analytic d(coords)/d(plane_depth), same layout as warp_coords
Tensor warp_coords_depth_gradient(const CameraRig& rig, double plane_depth, int height,
                                  int width);

// src_features [C,h,w] on the feature grid (image grid downsampled by
// feature_stride); output [C,N,h,w], one warped slice per hypothesis plane.
Var warp_feature_volume(Tape& tape, Var src_features, const CameraRig& rig,
                        const DepthPlanes& planes, int feature_stride);

// Forward-difference surface normals, unit length, z-component negative.
// Border rows/cols replicate their inward neighbor; degenerate pixels get
// (0,0,-1). Output [3,H,W].
Tensor normals_from_depth(const Tensor& depth, const Intrinsics& intrinsics);
Var normals_from_depth(Tape& tape, Var depth, const Intrinsics& intrinsics);

}  // namespace tdc
