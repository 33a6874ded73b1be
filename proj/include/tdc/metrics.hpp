#pragma once

#include <string>
#include <vector>

#include "tdc/tensor.hpp"

#include <nlohmann/json_fwd.hpp>

namespace tdc {

// Masked depth metrics; rmse/mae in meters, deltas in percent.
struct MetricReport {
  double rmse = 0.0;
  double rel = 0.0;
  double mae = 0.0;
  double delta_105 = 0.0;
  double delta_110 = 0.0;
  double delta_125 = 0.0;
  long evaluated_pixels = 0;
  long excluded_pixels = 0;  // masked pixels with non-positive ground truth

  nlohmann::json to_json() const;
  static MetricReport from_json(const nlohmann::json& j);
};

// Over mask > 0.5 pixels with gt > 0: RMSE, REL = mean(|d|/gt), MAE, and
// delta_tau = 100 * fraction with max(pred/gt, gt/pred) < tau. Masked pixels
// with non-positive gt are excluded and tallied. Throws on an empty mask.
MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& mask);

// Pixel-count-weighted mean of per-sample reports (weights = evaluated_pixels).
MetricReport aggregate_reports(const std::vector<MetricReport>& reports);

}  // namespace tdc
