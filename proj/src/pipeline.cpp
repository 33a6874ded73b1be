#include "tdc/pipeline.hpp"

#include <stdexcept>
#include <string>

namespace tdc {

namespace {

Var checked(Var v, const char* stage) {
  if (!v->value.all_finite()) {
    throw std::runtime_error(std::string("pipeline aborted: stage '") + stage +
                             "' produced non-finite values");
  }
  return v;
}

// [h,w] grid map -> [H,W] image map
Var to_full_res(Tape& t, Var grid, int stride) {
  const int h = grid->value.dim(0), w = grid->value.dim(1);
  if (stride == 1) return grid;
  Var up = t.upsample2d_bilinear(t.reshape(grid, {1, h, w}), stride);
  return t.reshape(up, {h * stride, w * stride});
}

}  // namespace

Var depth_regression(Tape& t, Var prob, const DepthPlanes& planes) {
  planes.validate();
  if (prob->value.rank() != 3 || prob->value.dim(0) != planes.count) {
    throw std::invalid_argument("depth_regression: plane count mismatch, volume " +
                                prob->value.shape_str() + " vs " +
                                std::to_string(planes.count) + " planes");
  }
  return t.expect_axis0(prob, planes.depths());
}

Var build_cost_volume(Tape& t, Var f_ref, Var f_src_warped) {
  const Tensor& r = f_ref->value;
  const Tensor& s = f_src_warped->value;
  if (r.rank() != 3 || s.rank() != 4 || r.dim(0) != s.dim(0) || r.dim(1) != s.dim(2) ||
      r.dim(2) != s.dim(3)) {
    throw std::invalid_argument("build_cost_volume: reference " + r.shape_str() +
                                " does not match warped volume " + s.shape_str());
  }
  const int C = r.dim(0), N = s.dim(1), h = r.dim(1), w = r.dim(2);
  const int plane_elems = h * w;

  Tensor cost({C, N, h, w});
  for (int c = 0; c < C; ++c) {
    const double* ref = r.data() + c * plane_elems;
    for (int n = 0; n < N; ++n) {
      const double* warped = s.data() + (c * N + n) * plane_elems;
      double* out = cost.data() + (c * N + n) * plane_elems;
      for (int i = 0; i < plane_elems; ++i) {
        const double d = (ref[i] - warped[i]) * 0.5;
        out[i] = d * d;
      }
    }
  }
  return t.make_node(std::move(cost), [f_ref, f_src_warped, C, N, plane_elems](Node& self) {
    for (int c = 0; c < C; ++c) {
      const double* ref = f_ref->value.data() + c * plane_elems;
      double* dref = f_ref->grad.data() + c * plane_elems;
      for (int n = 0; n < N; ++n) {
        const int base = (c * N + n) * plane_elems;
        const double* warped = f_src_warped->value.data() + base;
        double* dwarped = f_src_warped->grad.data() + base;
        const double* g = self.grad.data() + base;
        for (int i = 0; i < plane_elems; ++i) {
          const double d = (ref[i] - warped[i]) * 0.5 * g[i];
          dref[i] += d;
          dwarped[i] -= d;
        }
      }
    }
  });
}

Var refine_depth(Tape& t, Var d_multi, Var d_single, Var c_multi, Var c_single) {
  check_same_shape(d_multi->value, d_single->value, "refine_depth");
  check_same_shape(d_multi->value, c_multi->value, "refine_depth");
  check_same_shape(d_multi->value, c_single->value, "refine_depth");
  return t.add(t.mul(c_multi, d_multi), t.mul(c_single, d_single));
}

PipelineVars forward_pipeline(Tape& t, const SceneSample& sample, Models& models,
                              const DepthPlanes& planes) {
  sample.validate();
  planes.validate();
  if (models.config.plane_count != planes.count) {
    throw std::invalid_argument("forward_pipeline: network expects " +
                                std::to_string(models.config.plane_count) +
                                " planes, got " + std::to_string(planes.count));
  }
  const int stride = models.config.feature_stride;
  const int H = sample.gt_depth.dim(0), W = sample.gt_depth.dim(1);

  // raw depth normalized to [0,1] over the plane range; invalid pixels stay 0
  Tensor raw_norm({1, H, W});
  const double range = planes.d_max - planes.d_min;
  for (int i = 0; i < H * W; ++i) {
    const double d = sample.raw_depth[i];
    raw_norm[i] = d > 0.0 ? (d - planes.d_min) / range : 0.0;
  }

  PipelineVars out;
  Var rgb_ref = t.constant(sample.rgb_ref);
  Var rgb_src = t.constant(sample.rgb_src);
  Var raw = t.constant(std::move(raw_norm));
  Var mask = t.reshape(t.constant(sample.mask), {1, H, W});

  out.prob_single = checked(models.single_view.forward(t, rgb_ref, raw, mask), "single_view_net");
  Var d_single = checked(depth_regression(t, out.prob_single, planes), "depth_regression(single)");

  Var f_ref = checked(models.spp.forward(t, rgb_ref), "spp_extractor(ref)");
  Var f_src = checked(models.spp.forward(t, rgb_src), "spp_extractor(src)");
  Var warped = checked(warp_feature_volume(t, f_src, sample.rig, planes, stride),
                       "warp_feature_volume");
  Var cost = checked(build_cost_volume(t, f_ref, warped), "build_cost_volume");
  Var enhanced = checked(models.injection.forward(t, cost, out.prob_single), "injection_net");
  Var scores = checked(models.regularizer.forward(t, enhanced), "cost_regularizer");
  out.prob_multi = checked(t.softmax(scores, 0), "softmax(multi)");
  Var d_multi = checked(depth_regression(t, out.prob_multi, planes), "depth_regression(multi)");

  auto [c_multi, c_single] = models.confidence.forward(t, f_ref, out.prob_multi);
  checked(c_multi, "confidence_head");
  Var restored = checked(refine_depth(t, d_multi, d_single, c_multi, c_single), "refine_depth");

  out.depth_single = to_full_res(t, d_single, stride);
  out.depth_multi = to_full_res(t, d_multi, stride);
  out.depth_restored = to_full_res(t, restored, stride);
  out.conf_multi = to_full_res(t, c_multi, stride);
  out.conf_single = to_full_res(t, c_single, stride);
  return out;
}

PipelineOutput run_pipeline(const SceneSample& sample, Models& models,
                            const DepthPlanes& planes) {
  Tape tape;
  PipelineVars vars = forward_pipeline(tape, sample, models, planes);
  PipelineOutput out;
  out.depth_single = vars.depth_single->value;
  out.depth_multi = vars.depth_multi->value;
  out.depth_restored = vars.depth_restored->value;
  out.conf_multi = vars.conf_multi->value;
  out.conf_single = vars.conf_single->value;
  out.prob_single = vars.prob_single->value;
  out.prob_multi = vars.prob_multi->value;
  return out;
}

}  // namespace tdc
