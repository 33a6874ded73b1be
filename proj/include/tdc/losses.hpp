#pragma once

#include "tdc/autodiff.hpp"
#include "tdc/geometry.hpp"
#include "tdc/pipeline.hpp"

namespace tdc {

struct LossWeights {
  double lambda1 = 0.8;    // multi-view term
  double lambda2 = 0.5;    // single-view term
  double lambda3 = 0.0005; // normal term

  void validate() const;
};

// mean |pred - gt| over mask > 0.5 pixels; throws on an empty mask or
// non-positive gt inside the mask
Var masked_l1(Tape& t, Var pred, const Tensor& gt, const Tensor& mask);

// mean over masked pixels of the L1 distance between predicted and
// ground-truth surface normals
Var normal_loss(Tape& t, Var pred_depth, const Tensor& gt_depth, const Tensor& mask,
                const Intrinsics& intrinsics);

struct LossTerms {
  Var total = nullptr;
  Var restored = nullptr;
  Var multi = nullptr;
  Var single = nullptr;
  Var normal = nullptr;
};

// L = L_restored + l1*L_multi + l2*L_single + l3*L_normal; the normal term
// attaches to the single-view branch only.
LossTerms total_loss(Tape& t, const PipelineVars& out, const Tensor& gt_depth,
                     const Tensor& mask, const LossWeights& weights,
                     const Intrinsics& intrinsics);

}  // namespace tdc
