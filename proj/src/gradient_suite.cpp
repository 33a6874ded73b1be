#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "tdc/gradcheck.hpp"
#include "tdc/geometry.hpp"
#include "tdc/losses.hpp"
#include "tdc/networks.hpp"
#include "tdc/pipeline.hpp"
#include "tdc/rng.hpp"

namespace tdc {

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int i = 0; i < t.numel(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// random linear functional makes every output component load-bearing
Var project(Tape& t, Var x, Rng& rng) {
  Tensor r(x->value.shape());
  for (int i = 0; i < r.numel(); ++i) r[i] = rng.uniform(-1.0, 1.0);
  return t.sum(t.mul(x, t.constant(std::move(r))));
}

struct Suite {
  bool verbose;
  int failures = 0;
  int checks = 0;

  void report(const std::string& name, const GradCheckReport& r, double tol = 1e-5) {
    ++checks;
    const bool ok = r.pass(tol);
    if (!ok) ++failures;
    if (verbose || !ok) {
      std::printf("[%s] %-38s max_rel_err=%.3e (%d components%s%s)\n", ok ? "PASS" : "FAIL",
                  name.c_str(), r.max_rel_err, r.components, r.worst.empty() ? "" : ", worst ",
                  r.worst.c_str());
    }
  }

  void plain(const std::string& name, bool ok, const std::string& detail) {
    ++checks;
    if (!ok) ++failures;
    if (verbose || !ok) {
      std::printf("[%s] %-38s %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
    }
  }
};

}  // namespace

int run_gradient_suite(bool verbose) {
  Suite suite{verbose};
  Rng rng(20240817);

  const auto check_unary = [&](const std::string& name, std::vector<int> shape,
                               const std::function<Var(Tape&, Var)>& op, double lo = -1.0,
                               double hi = 1.0) {
    Parameter x("x", random_tensor(shape, rng, lo, hi));
    const std::uint64_t seed = rng.next_u64();
    // the projection must be identical on every re-evaluation
    const auto build = [&, seed](Tape& t) {
      Rng local(seed);
      return project(t, op(t, t.watch(x)), local);
    };
    suite.report(name, finite_difference_check(build, {&x}));
  };

  // elementwise
  check_unary("relu", {3, 4}, [](Tape& t, Var x) { return t.relu(x); });
  check_unary("abs", {3, 4}, [](Tape& t, Var x) { return t.abs(x); });
  check_unary("scale", {3, 4}, [](Tape& t, Var x) { return t.scale(x, -2.5); });
  check_unary("softmax_axis0", {4, 3, 2}, [](Tape& t, Var x) { return t.softmax(x, 0); });
  check_unary("softmax_axis1", {3, 5, 2}, [](Tape& t, Var x) { return t.softmax(x, 1); });
  check_unary("softmax_axis2", {2, 3, 4}, [](Tape& t, Var x) { return t.softmax(x, 2); });
  check_unary("mean", {4, 4}, [](Tape& t, Var x) { return t.mean(x); });
  check_unary("upsample2d_nearest", {2, 3, 3}, [](Tape& t, Var x) { return t.upsample2d_nearest(x, 2); });
  check_unary("upsample3d_nearest", {2, 2, 3, 3}, [](Tape& t, Var x) { return t.upsample3d_nearest(x, 2); });
  check_unary("upsample2d_bilinear", {2, 3, 3}, [](Tape& t, Var x) { return t.upsample2d_bilinear(x, 4); });
  check_unary("maxpool3d", {2, 4, 4, 4}, [](Tape& t, Var x) { return t.maxpool3d(x, 2, 2); });
  check_unary("maxpool3d_stride1", {1, 3, 3, 3}, [](Tape& t, Var x) { return t.maxpool3d(x, 2, 1); });
  check_unary("avg_pool2d", {2, 6, 6}, [](Tape& t, Var x) { return t.avg_pool2d(x, 2, 2); });
  check_unary("pad_crop3d", {2, 3, 3, 3}, [](Tape& t, Var x) {
    return t.crop3d_end(t.pad3d_end(x, 1, 2, 1), 3, 4, 3);
  });
  check_unary("expect_axis0", {4, 3, 3}, [](Tape& t, Var x) {
    return t.expect_axis0(x, {0.3, 0.5, 0.9, 1.3});
  });

  // binary elementwise + structure ops
  {
    Parameter a("a", random_tensor({3, 4}, rng));
    Parameter b("b", random_tensor({3, 4}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var sum = t.add(t.mul(t.watch(a), t.watch(b)), t.sub(t.watch(a), t.watch(b)));
      return project(t, sum, local);
    };
    suite.report("add_sub_mul", finite_difference_check(build, {&a, &b}));
  }
  {
    Parameter a("a", random_tensor({2, 3, 3}, rng));
    Parameter b("b", random_tensor({3, 3, 3}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var cat = t.concat({t.watch(a), t.watch(b)}, 0);
      return project(t, t.slice_axis0(cat, 1, 3), local);
    };
    suite.report("concat_slice", finite_difference_check(build, {&a, &b}));
  }

  // convolutions
  {
    Parameter x("x", random_tensor({2, 5, 5}, rng));
    Parameter w("w", random_tensor({3, 2, 3, 3}, rng));
    Parameter bias("bias", random_tensor({3}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var y = t.bias_channels(t.conv2d(t.watch(x), t.watch(w), 1, 1), t.watch(bias));
      return project(t, y, local);
    };
    suite.report("conv2d_s1p1_bias", finite_difference_check(build, {&x, &w, &bias}));
  }
  {
    Parameter x("x", random_tensor({2, 6, 6}, rng));
    Parameter w("w", random_tensor({2, 2, 3, 3}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, t.conv2d(t.watch(x), t.watch(w), 2, 0), local);
    };
    suite.report("conv2d_s2p0", finite_difference_check(build, {&x, &w}));
  }
  {
    Parameter x("x", random_tensor({2, 4, 4, 4}, rng));
    Parameter w("w", random_tensor({2, 2, 3, 3, 3}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, t.conv3d(t.watch(x), t.watch(w), 1, 1), local);
    };
    suite.report("conv3d_s1p1", finite_difference_check(build, {&x, &w}));
  }
  {
    Parameter x("x", random_tensor({1, 4, 4, 4}, rng));
    Parameter w("w", random_tensor({2, 1, 3, 3, 3}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, t.conv3d(t.watch(x), t.watch(w), 2, 1), local);
    };
    suite.report("conv3d_s2p1", finite_difference_check(build, {&x, &w}));
  }

  // bilinear sampling: gradients w.r.t. both the feature map and the coords;
  // coordinates kept away from the integer lattice where the op kinks
  {
    Parameter feat("feat", random_tensor({2, 5, 5}, rng));
    Tensor coords({4, 4, 2});
    for (int i = 0; i < 16; ++i) {
      double u = rng.uniform(-1.5, 5.5);
      double v = rng.uniform(-1.5, 5.5);
      if (std::fabs(u - std::round(u)) < 0.05) u += 0.11;
      if (std::fabs(v - std::round(v)) < 0.05) v += 0.11;
      coords[2 * i] = u;
      coords[2 * i + 1] = v;
    }
    Parameter cp("coords", coords);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, t.bilinear_sample(t.watch(feat), t.watch(cp)), local);
    };
    suite.report("bilinear_sample", finite_difference_check(build, {&feat, &cp}));
  }

  // depth-map normals
  {
    Intrinsics k{40.0, 42.0, 2.6, 2.4, 6, 5};
    Parameter depth("depth", random_tensor({5, 6}, rng, 0.6, 1.4));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, normals_from_depth(t, t.watch(depth), k), local);
    };
    suite.report("normals_from_depth", finite_difference_check(build, {&depth}));
  }

  // warp coordinate derivative w.r.t. the plane depth (analytic vs central FD)
  {
    CameraRig rig;
    rig.ref_intrinsics = {30.0, 30.0, 3.5, 3.5, 8, 8};
    rig.src_intrinsics = rig.ref_intrinsics;
    rig.ref_to_src.rotation = Mat3::rotation_y(0.05);
    rig.ref_to_src.translation = {-0.1, 0.02, 0.01};
    const double d = 0.9, h = 1e-5;
    const Tensor analytic = warp_coords_depth_gradient(rig, d, 8, 8);
    const Tensor up = warp_coords(rig, d + h, 8, 8);
    const Tensor down = warp_coords(rig, d - h, 8, 8);
    double max_err = 0.0;
    for (int i = 0; i < analytic.numel(); ++i) {
      const double fd = (up[i] - down[i]) / (2.0 * h);
      max_err = std::max(max_err, std::fabs(fd - analytic[i]) /
                                      std::max({1.0, std::fabs(fd), std::fabs(analytic[i])}));
    }
    suite.plain("warp_coords_ddepth", max_err < 1e-5,
                "max_rel_err=" + std::to_string(max_err));
  }

  // cost volume aggregation and the fusion equations
  {
    Parameter f_ref("f_ref", random_tensor({3, 4, 4}, rng));
    Parameter f_warp("f_warp", random_tensor({3, 4, 4, 4}, rng));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, build_cost_volume(t, t.watch(f_ref), t.watch(f_warp)), local);
    };
    suite.report("build_cost_volume", finite_difference_check(build, {&f_ref, &f_warp}));
  }
  {
    DepthPlanes planes{0.3, 1.5, 4};
    Parameter prob("prob", random_tensor({4, 3, 3}, rng, 0.05, 1.0));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var p = t.softmax(t.watch(prob), 0);
      return project(t, depth_regression(t, p, planes), local);
    };
    suite.report("depth_regression", finite_difference_check(build, {&prob}));
  }
  {
    Parameter dm("d_multi", random_tensor({3, 3}, rng, 0.3, 1.5));
    Parameter ds("d_single", random_tensor({3, 3}, rng, 0.3, 1.5));
    Parameter cm("c_multi", random_tensor({3, 3}, rng, 0.1, 0.9));
    Parameter cs("c_single", random_tensor({3, 3}, rng, 0.1, 0.9));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(
          t, refine_depth(t, t.watch(dm), t.watch(ds), t.watch(cm), t.watch(cs)), local);
    };
    suite.report("refine_depth", finite_difference_check(build, {&dm, &ds, &cm, &cs}));
  }

  // every network, full parameter set, tiny inputs (feature grid 8x8, N=4)
  NetworkConfig tiny;
  tiny.base_channels = 2;
  tiny.feature_stride = 2;
  tiny.feature_channels = 3;
  tiny.injection_scales = 3;
  tiny.plane_count = 4;
  tiny.init_seed = 7;

  {
    Models nets(tiny);
    const Tensor rgb = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    const Tensor raw = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
    Tensor mask({1, 16, 16});
    for (int i = 0; i < mask.numel(); ++i) mask[i] = rng.uniform() < 0.4 ? 1.0 : 0.0;
    std::vector<Parameter*> params;
    nets.single_view.collect(params);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var prob = nets.single_view.forward(t, t.constant(rgb), t.constant(raw), t.constant(mask));
      return project(t, prob, local);
    };
    suite.report("single_view_net(all params)", finite_difference_check(build, params));
  }
  {
    Models nets(tiny);
    const Tensor img = random_tensor({3, 16, 16}, rng, 0.0, 1.0);
    std::vector<Parameter*> params;
    nets.spp.collect(params);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, nets.spp.forward(t, t.constant(img)), local);
    };
    suite.report("spp_extractor(all params)", finite_difference_check(build, params));
  }
  {
    Models nets(tiny);
    const Tensor cost = random_tensor({3, 4, 8, 8}, rng);
    const Tensor prob = random_tensor({4, 8, 8}, rng, 0.0, 1.0);
    std::vector<Parameter*> params;
    nets.injection.collect(params);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, nets.injection.forward(t, t.constant(cost), t.constant(prob)), local);
    };
    suite.report("injection_net(all params)", finite_difference_check(build, params));
  }
  {
    // gradient must reach both injection inputs
    Models nets(tiny);
    Parameter cost("cost", random_tensor({3, 4, 8, 8}, rng));
    Parameter prob("prob", random_tensor({4, 8, 8}, rng, 0.05, 1.0));
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, nets.injection.forward(t, t.watch(cost), t.watch(prob)), local);
    };
    const GradCheckReport r = finite_difference_check(build, {&cost, &prob});
    suite.report("injection_net(inputs)", r);

    nets.zero_grad();
    cost.zero_grad();
    prob.zero_grad();
    Tape t;
    Rng local(seed);
    t.backward(project(t, nets.injection.forward(t, t.watch(cost), t.watch(prob)), local));
    double cost_g = 0.0, prob_g = 0.0;
    for (int i = 0; i < cost.grad.numel(); ++i) cost_g += std::fabs(cost.grad[i]);
    for (int i = 0; i < prob.grad.numel(); ++i) prob_g += std::fabs(prob.grad[i]);
    suite.plain("injection_net(grad reaches inputs)", cost_g > 0.0 && prob_g > 0.0,
                "|dcost|=" + std::to_string(cost_g) + " |dprob|=" + std::to_string(prob_g));
  }
  {
    Models nets(tiny);
    const Tensor cost = random_tensor({3, 4, 8, 8}, rng);
    std::vector<Parameter*> params;
    nets.regularizer.collect(params);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      return project(t, nets.regularizer.forward(t, t.constant(cost)), local);
    };
    suite.report("cost_regularizer(all params)", finite_difference_check(build, params));
  }
  {
    Models nets(tiny);
    const Tensor feat = random_tensor({3, 8, 8}, rng);
    Tensor prob_raw = random_tensor({4, 8, 8}, rng);
    std::vector<Parameter*> params;
    nets.confidence.collect(params);
    const std::uint64_t seed = rng.next_u64();
    const auto build = [&](Tape& t) {
      Rng local(seed);
      Var prob = t.softmax(t.constant(prob_raw), 0);
      auto [cm, cs] = nets.confidence.forward(t, t.constant(feat), prob);
      return t.add(project(t, cm, local), project(t, cs, local));
    };
    suite.report("confidence_head(all params)", finite_difference_check(build, params));
  }

  // end-to-end: total loss through the whole pipeline, 10 random parameters,
  // synthetic 16x16 sample (feature grid 8x8)
  {
    Models nets(tiny);
    Rng srng(99);
    SceneSample sample;
    const int S = 16;
    sample.rgb_ref = random_tensor({3, S, S}, srng, 0.0, 1.0);
    sample.rgb_src = random_tensor({3, S, S}, srng, 0.0, 1.0);
    sample.gt_depth = random_tensor({S, S}, srng, 0.4, 1.4);
    sample.raw_depth = random_tensor({S, S}, srng, 0.4, 1.4);
    sample.mask = Tensor({S, S});
    for (int i = 0; i < S * S; ++i) sample.mask[i] = srng.uniform() < 0.3 ? 1.0 : 0.0;
    sample.rig.ref_intrinsics = {20.0, 20.0, 7.5, 7.5, S, S};
    sample.rig.src_intrinsics = sample.rig.ref_intrinsics;
    sample.rig.ref_to_src.rotation = Mat3::rotation_y(0.01);
    sample.rig.ref_to_src.translation = {-0.08, 0.0, 0.0};
    sample.id = "gradcheck";
    const DepthPlanes planes{0.3, 1.5, tiny.plane_count};
    const LossWeights weights;

    std::vector<Parameter*> all = nets.parameters();
    std::vector<Parameter*> chosen;
    Rng pick(4242);
    for (int i = 0; i < 10; ++i) {
      chosen.push_back(all[pick.index(static_cast<int>(all.size()))]);
    }
    const auto build = [&](Tape& t) {
      PipelineVars vars = forward_pipeline(t, sample, nets, planes);
      LossTerms terms =
          total_loss(t, vars, sample.gt_depth, sample.mask, weights, sample.rig.ref_intrinsics);
      return terms.total;
    };
    // full finite differences over whole tensors would be slow; check one
    // component per chosen parameter
    for (Parameter* p : all) p->zero_grad();
    {
      Tape t;
      t.backward(build(t));
    }
    double max_rel = 0.0;
    std::string worst;
    Rng comp(777);
    const double step = 1e-4;
    for (Parameter* p : chosen) {
      const int k = comp.index(p->numel());
      const double saved = p->value[k];
      const auto eval = [&]() {
        Tape t;
        return build(t)->value[0];
      };
      p->value[k] = saved + step;
      const double up = eval();
      p->value[k] = saved - step;
      const double down = eval();
      p->value[k] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double rel = std::fabs(fd - p->grad[k]) /
                         std::max({1.0, std::fabs(fd), std::fabs(p->grad[k])});
      if (rel > max_rel) {
        max_rel = rel;
        worst = p->name;
      }
    }
    suite.plain("pipeline_total_loss(10 params)", max_rel < 1e-4,
                "max_rel_err=" + std::to_string(max_rel) + " worst=" + worst);
  }

  if (verbose) {
    std::printf("gradient suite: %d checks, %d failures\n", suite.checks, suite.failures);
  }
  return suite.failures;
}

}  // namespace tdc
