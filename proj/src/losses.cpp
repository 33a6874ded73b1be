#include "tdc/losses.hpp"

#include <algorithm>
#include <stdexcept>

namespace tdc {

void LossWeights::validate() const {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw std::invalid_argument("loss weights must be non-negative");
  }
}

namespace {

// per-pixel weight 1/count inside the mask, 0 outside
Tensor mask_weights(const Tensor& gt, const Tensor& mask, const char* op) {
  check_same_shape(gt, mask, op);
  int count = 0;
  for (int i = 0; i < mask.numel(); ++i) {
    if (mask[i] > 0.5) {
      if (!(gt[i] > 0.0)) {
        throw std::invalid_argument(std::string(op) +
                                    ": non-positive ground truth inside the mask");
      }
      ++count;
    }
  }
  if (count == 0) throw std::invalid_argument(std::string(op) + ": empty mask");
  Tensor w(mask.shape());
  const double inv = 1.0 / count;
  for (int i = 0; i < mask.numel(); ++i) w[i] = mask[i] > 0.5 ? inv : 0.0;
  return w;
}

}  // namespace

Var masked_l1(Tape& t, Var pred, const Tensor& gt, const Tensor& mask) {
  check_same_shape(pred->value, gt, "masked_l1");
  Tensor w = mask_weights(gt, mask, "masked_l1");
  Var diff = t.abs(t.sub(pred, t.constant(gt)));
  return t.sum(t.mul(diff, t.constant(std::move(w))));
}

Var normal_loss(Tape& t, Var pred_depth, const Tensor& gt_depth, const Tensor& mask,
                const Intrinsics& intrinsics) {
  check_same_shape(pred_depth->value, gt_depth, "normal_loss");
  Tensor w = mask_weights(gt_depth, mask, "normal_loss");
  const int H = gt_depth.dim(0), W = gt_depth.dim(1);
  Tensor w3({3, H, W});
  for (int c = 0; c < 3; ++c) {
    std::copy_n(w.data(), H * W, w3.data() + c * H * W);
  }
  Var n_pred = normals_from_depth(t, pred_depth, intrinsics);
  Var n_gt = t.constant(normals_from_depth(gt_depth, intrinsics));
  Var diff = t.abs(t.sub(n_pred, n_gt));
  return t.sum(t.mul(diff, t.constant(std::move(w3))));
}

LossTerms total_loss(Tape& t, const PipelineVars& out, const Tensor& gt_depth,
                     const Tensor& mask, const LossWeights& weights,
                     const Intrinsics& intrinsics) {
  weights.validate();
  LossTerms terms;
  terms.restored = masked_l1(t, out.depth_restored, gt_depth, mask);
  terms.multi = masked_l1(t, out.depth_multi, gt_depth, mask);
  terms.single = masked_l1(t, out.depth_single, gt_depth, mask);
  terms.normal = normal_loss(t, out.depth_single, gt_depth, mask, intrinsics);
  terms.total = t.add(t.add(terms.restored, t.scale(terms.multi, weights.lambda1)),
                      t.add(t.scale(terms.single, weights.lambda2),
                            t.scale(terms.normal, weights.lambda3)));
  return terms;
}

}  // namespace tdc
