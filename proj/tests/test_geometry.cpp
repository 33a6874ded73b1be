#include <doctest.h>

#include <cmath>

#include "tdc/autodiff.hpp"
#include "tdc/geometry.hpp"
#include "tdc/rng.hpp"

using namespace tdc;

namespace {

CameraRig identity_rig(int size, double f) {
  CameraRig rig;
  rig.ref_intrinsics = {f, f, (size - 1) / 2.0, (size - 1) / 2.0, size, size};
  rig.src_intrinsics = rig.ref_intrinsics;
  return rig;
}

}  // namespace

TEST_CASE("identity rig warps every pixel to itself at every depth") {
  const CameraRig rig = identity_rig(8, 50.0);
  for (double d : {0.3, 0.7, 1.5}) {
    const Tensor c = warp_coords(rig, d, 8, 8);
    for (int v = 0; v < 8; ++v) {
      for (int u = 0; u < 8; ++u) {
        CHECK(c.at(v, u, 0) == doctest::Approx(u).epsilon(1e-14));
        CHECK(c.at(v, u, 1) == doctest::Approx(v).epsilon(1e-14));
      }
    }
  }
}

TEST_CASE("pure baseline produces the fx*b/d disparity") {
  CameraRig rig = identity_rig(16, 100.0);
  rig.ref_to_src.translation = {0.1, 0.0, 0.0};
  const Tensor c = warp_coords(rig, 1.0, 16, 16);
  for (int v = 0; v < 16; ++v) {
    for (int u = 0; u < 16; ++u) {
      CHECK(c.at(v, u, 0) == doctest::Approx(u + 10.0).epsilon(1e-10));
      CHECK(c.at(v, u, 1) == doctest::Approx(static_cast<double>(v)).epsilon(1e-10));
    }
  }
}

TEST_CASE("points behind the source camera produce sentinel coords") {
  CameraRig rig = identity_rig(4, 10.0);
  rig.ref_to_src.translation = {0.0, 0.0, -2.0};  // source 2m ahead of the plane
  const Tensor c = warp_coords(rig, 1.0, 4, 4);
  for (int i = 0; i < c.numel(); ++i) CHECK(c[i] == kBehindCameraCoord);
  CHECK_THROWS_AS(warp_coords(rig, 0.0, 4, 4), std::invalid_argument);
  CHECK_THROWS_AS(warp_coords(rig, -1.0, 4, 4), std::invalid_argument);
}

TEST_CASE("reprojection consistency for points on a hypothesis plane") {
  // a 3D point on plane depth d: project into ref, warp at d, compare with
  // its direct projection into src
  CameraRig rig = identity_rig(32, 60.0);
  rig.ref_to_src.rotation = Mat3::rotation_y(0.08) * Mat3::rotation_x(-0.03);
  rig.ref_to_src.translation = {-0.12, 0.02, 0.015};
  Rng rng(31);
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const double d = rng.uniform(0.4, 1.4);
    const Vec3 p{rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2), d};
    double u_ref, v_ref;
    rig.ref_intrinsics.project(p, u_ref, v_ref);
    if (u_ref < 0 || u_ref > 31 || v_ref < 0 || v_ref > 31) continue;
    const Vec3 q = rig.ref_to_src.apply(p);
    if (q.z <= 0.0) continue;
    double u_src, v_src;
    rig.src_intrinsics.project(q, u_src, v_src);

    // warp the (non-integer) ref pixel manually through the same plane
    const Vec3 bp = rig.ref_intrinsics.back_project(u_ref, v_ref, d);
    const Vec3 bq = rig.ref_to_src.apply(bp);
    double u_w, v_w;
    rig.src_intrinsics.project(bq, u_w, v_w);
    CHECK(std::fabs(u_w - u_src) < 1e-8);
    CHECK(std::fabs(v_w - v_src) < 1e-8);
    ++checked;
  }
  CHECK(checked > 100);
}

TEST_CASE("depth planes are equally spaced") {
  const DepthPlanes planes{0.3, 1.5, 45};
  planes.validate();
  const double spacing = planes.spacing();
  for (int i = 0; i + 1 < planes.count; ++i) {
    CHECK(std::fabs((planes.depth(i + 1) - planes.depth(i)) - spacing) < 1e-12);
  }
  CHECK(planes.depth(0) == doctest::Approx(0.3));
  CHECK(planes.depth(44) == doctest::Approx(1.5));
  CHECK_THROWS_AS((DepthPlanes{0.0, 1.0, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DepthPlanes{1.0, 0.5, 4}.validate()), std::invalid_argument);
  CHECK_THROWS_AS((DepthPlanes{0.5, 1.0, 1}.validate()), std::invalid_argument);
}

TEST_CASE("warp_feature_volume with the identity rig copies the features") {
  Rng rng(37);
  Tensor feat({3, 8, 8});
  for (int i = 0; i < feat.numel(); ++i) feat[i] = rng.uniform(-1.0, 1.0);
  const CameraRig rig = identity_rig(16, 40.0);
  const DepthPlanes planes{0.3, 1.5, 5};
  Tape t;
  Var vol = warp_feature_volume(t, t.constant(feat), rig, planes, 2);
  CHECK(vol->value.shape() == std::vector<int>{3, 5, 8, 8});
  for (int c = 0; c < 3; ++c) {
    for (int n = 0; n < 5; ++n) {
      for (int y = 0; y < 8; ++y) {
        for (int x = 0; x < 8; ++x) {
          CHECK(vol->value.at(c, n, y, x) == doctest::Approx(feat.at(c, y, x)).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("warp_feature_volume keeps a constant image constant in bounds") {
  CameraRig rig = identity_rig(16, 40.0);
  rig.ref_to_src.translation = {-0.05, 0.0, 0.0};
  const DepthPlanes planes{0.4, 1.2, 4};
  Tape t;
  Var vol = warp_feature_volume(t, t.constant(Tensor::full({1, 8, 8}, 3.25)), rig, planes, 2);
  int interior = 0;
  for (int n = 0; n < 4; ++n) {
    const Tensor coords = warp_coords(
        {rig.ref_intrinsics.scaled(2), rig.src_intrinsics.scaled(2), rig.ref_to_src},
        planes.depth(n), 8, 8);
    for (int y = 0; y < 8; ++y) {
      for (int x = 0; x < 8; ++x) {
        const double u = coords.at(y, x, 0), v = coords.at(y, x, 1);
        if (u >= 0.0 && u <= 7.0 && v >= 0.0 && v <= 7.0) {
          CHECK(vol->value.at(0, n, y, x) == doctest::Approx(3.25).epsilon(1e-12));
          ++interior;
        }
      }
    }
  }
  CHECK(interior > 0);
}

TEST_CASE("constant depth yields fronto-parallel normals") {
  const Intrinsics k{50.0, 50.0, 3.5, 3.5, 8, 8};
  const Tensor n = normals_from_depth(Tensor::full({8, 8}, 1.0), k);
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      CHECK(n.at(0, y, x) == doctest::Approx(0.0));
      CHECK(n.at(1, y, x) == doctest::Approx(0.0));
      CHECK(n.at(2, y, x) == doctest::Approx(-1.0));
    }
  }
}

TEST_CASE("45-degree plane normals match the analytic normal") {
  // plane x = z - z0 has normal (1,0,-1)/sqrt(2); depth z(u) solves the ray
  // equation z * (u-cx)/fx = z - z0
  const Intrinsics k{80.0, 80.0, 7.5, 7.5, 16, 16};
  const double z0 = 1.0;
  Tensor depth({16, 16});
  for (int v = 0; v < 16; ++v) {
    for (int u = 0; u < 16; ++u) {
      const double a = (u - k.cx) / k.fx;
      depth.at(v, u) = z0 / (1.0 - a);
    }
  }
  const Tensor n = normals_from_depth(depth, k);
  const double s = 1.0 / std::sqrt(2.0);
  for (int v = 0; v < 15; ++v) {
    for (int u = 0; u < 15; ++u) {
      CHECK(std::fabs(n.at(0, v, u) - s) < 1e-6);
      CHECK(std::fabs(n.at(1, v, u) - 0.0) < 1e-6);
      CHECK(std::fabs(n.at(2, v, u) + s) < 1e-6);
    }
  }
}

TEST_CASE("normals stay unit length under a depth spike") {
  const Intrinsics k{50.0, 50.0, 3.5, 3.5, 8, 8};
  Tensor depth = Tensor::full({8, 8}, 1.0);
  depth.at(4, 4) = 5.0;
  const Tensor n = normals_from_depth(depth, k);
  CHECK(n.all_finite());
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      const double len = std::sqrt(n.at(0, y, x) * n.at(0, y, x) +
                                   n.at(1, y, x) * n.at(1, y, x) +
                                   n.at(2, y, x) * n.at(2, y, x));
      CHECK(std::fabs(len - 1.0) < 1e-10);
      CHECK(n.at(2, y, x) <= 0.0);
    }
  }
}

TEST_CASE("pose and intrinsics invariants are enforced") {
  Intrinsics k{50.0, 50.0, 3.5, 3.5, 8, 8};
  CHECK_NOTHROW(k.validate());
  k.cx = 9.0;
  CHECK_THROWS_AS(k.validate(), std::invalid_argument);
  k = {0.0, 50.0, 3.5, 3.5, 8, 8};
  CHECK_THROWS_AS(k.validate(), std::invalid_argument);

  RelativePose pose;
  CHECK_NOTHROW(pose.validate());
  pose.rotation.m[0] = 1.1;
  CHECK_THROWS_AS(pose.validate(), std::invalid_argument);

  // rotations compose to a valid pose and invert exactly
  RelativePose r{Mat3::rotation_y(0.3) * Mat3::rotation_x(-0.2), {0.1, -0.05, 0.02}};
  CHECK_NOTHROW(r.validate());
  const RelativePose inv = r.inverse();
  const Vec3 p{0.3, -0.1, 1.2};
  const Vec3 round = inv.apply(r.apply(p));
  CHECK(round.x == doctest::Approx(p.x).epsilon(1e-12));
  CHECK(round.y == doctest::Approx(p.y).epsilon(1e-12));
  CHECK(round.z == doctest::Approx(p.z).epsilon(1e-12));
}

TEST_CASE("scaled intrinsics demand divisibility") {
  const Intrinsics k{100.0, 100.0, 47.5, 47.5, 96, 96};
  const Intrinsics s = k.scaled(4);
  CHECK(s.width == 24);
  CHECK(s.fx == doctest::Approx(25.0));
  CHECK_THROWS_AS(k.scaled(5), std::invalid_argument);
}
