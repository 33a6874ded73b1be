#pragma once

#include "tdc/autodiff.hpp"
#include "tdc/data.hpp"
#include "tdc/geometry.hpp"
#include "tdc/networks.hpp"

namespace tdc {

// Tape handles for everything the losses and diagnostics consume. Depths and
// confidences are at full image resolution; the volumes stay on the feature
// grid.
struct PipelineVars {
  Var depth_single = nullptr;
  Var depth_multi = nullptr;
  Var depth_restored = nullptr;
  Var conf_multi = nullptr;
  Var conf_single = nullptr;
  Var prob_single = nullptr;  // [N,h,w]
  Var prob_multi = nullptr;   // [N,h,w]
};

struct PipelineOutput {
  Tensor depth_single, depth_multi, depth_restored;
  Tensor conf_multi, conf_single;
  Tensor prob_single, prob_multi;
};

// D = sum_i d_i * P(i): per-pixel expectation over the hypothesis planes.
Var depth_regression(Tape& t, Var prob, const DepthPlanes& planes);

// Two-view variance aggregation with the reference feature broadcast over
// planes: cost = ((f_ref - f_src_warped) / 2)^2.
Var build_cost_volume(Tape& t, Var f_ref, Var f_src_warped);

// Confidence-weighted fusion: D = c_multi*d_multi + c_single*d_single.
Var refine_depth(Tape& t, Var d_multi, Var d_single, Var c_multi, Var c_single);

PipelineVars forward_pipeline(Tape& t, const SceneSample& sample, Models& models,
                              const DepthPlanes& planes);

PipelineOutput run_pipeline(const SceneSample& sample, Models& models,
                            const DepthPlanes& planes);

}  // namespace tdc
