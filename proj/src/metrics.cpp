#include "tdc/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include <nlohmann/json.hpp>

#include "tdc/autodiff.hpp"

namespace tdc {

MetricReport evaluate(const Tensor& pred, const Tensor& gt, const Tensor& mask) {
  check_same_shape(pred, gt, "evaluate");
  check_same_shape(pred, mask, "evaluate");

  double se = 0.0, ae = 0.0, rel = 0.0;
  long n = 0, excluded = 0;
  long in105 = 0, in110 = 0, in125 = 0;
  for (int i = 0; i < pred.numel(); ++i) {
    if (mask[i] <= 0.5) continue;
    const double g = gt[i];
    if (!(g > 0.0)) {
      ++excluded;
      continue;
    }
    const double p = pred[i];
    const double d = p - g;
    se += d * d;
    ae += std::fabs(d);
    rel += std::fabs(d) / g;
    const double ratio =
        p > 0.0 ? std::max(p / g, g / p) : std::numeric_limits<double>::infinity();
    if (ratio < 1.05) ++in105;
    if (ratio < 1.10) ++in110;
    if (ratio < 1.25) ++in125;
    ++n;
  }
  if (n + excluded == 0) throw std::invalid_argument("evaluate: empty mask");
  if (n == 0) throw std::invalid_argument("evaluate: no masked pixel has valid ground truth");

  MetricReport r;
  r.rmse = std::sqrt(se / n);
  r.mae = ae / n;
  r.rel = rel / n;
  r.delta_105 = 100.0 * in105 / n;
  r.delta_110 = 100.0 * in110 / n;
  r.delta_125 = 100.0 * in125 / n;
  r.evaluated_pixels = n;
  r.excluded_pixels = excluded;
  return r;
}

MetricReport aggregate_reports(const std::vector<MetricReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("aggregate_reports: no reports");
  MetricReport agg;
  double weight = 0.0;
  for (const MetricReport& r : reports) {
    const double w = static_cast<double>(r.evaluated_pixels);
    agg.rmse += w * r.rmse;
    agg.rel += w * r.rel;
    agg.mae += w * r.mae;
    agg.delta_105 += w * r.delta_105;
    agg.delta_110 += w * r.delta_110;
    agg.delta_125 += w * r.delta_125;
    agg.evaluated_pixels += r.evaluated_pixels;
    agg.excluded_pixels += r.excluded_pixels;
    weight += w;
  }
  if (weight <= 0.0) throw std::invalid_argument("aggregate_reports: zero evaluated pixels");
  agg.rmse /= weight;
  agg.rel /= weight;
  agg.mae /= weight;
  agg.delta_105 /= weight;
  agg.delta_110 /= weight;
  agg.delta_125 /= weight;
  return agg;
}

nlohmann::json MetricReport::to_json() const {
  return nlohmann::json{{"rmse", rmse},
                        {"rel", rel},
                        {"mae", mae},
                        {"delta_105", delta_105},
                        {"delta_110", delta_110},
                        {"delta_125", delta_125},
                        {"evaluated_pixels", evaluated_pixels},
                        {"excluded_pixels", excluded_pixels}};
}

MetricReport MetricReport::from_json(const nlohmann::json& j) {
  MetricReport r;
  r.rmse = j.at("rmse").get<double>();
  r.rel = j.at("rel").get<double>();
  r.mae = j.at("mae").get<double>();
  r.delta_105 = j.at("delta_105").get<double>();
  r.delta_110 = j.at("delta_110").get<double>();
  r.delta_125 = j.at("delta_125").get<double>();
  r.evaluated_pixels = j.at("evaluated_pixels").get<long>();
  r.excluded_pixels = j.at("excluded_pixels").get<long>();
  return r;
}

}  // namespace tdc
