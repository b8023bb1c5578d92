#include "ppsam/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "ppsam/error.hpp"

namespace ppsam {

namespace {

struct OverlapCounts {
  std::size_t intersection = 0;
  std::size_t gt = 0;
  std::size_t pred = 0;
};

OverlapCounts count_overlap(const BinaryMask& gt, const BinaryMask& pred) {
  if (gt.dims() != pred.dims()) {
    throw Error(ErrorCode::ShapeMismatch, "masks differ in shape: " + std::to_string(gt.height()) + "x" +
                                              std::to_string(gt.width()) + " vs " + std::to_string(pred.height()) +
                                              "x" + std::to_string(pred.width()));
  }
  OverlapCounts c;
  const auto a = gt.data();
  const auto b = pred.data();
  for (std::size_t i = 0; i < a.size(); ++i) {
    c.gt += a[i];
    c.pred += b[i];
    c.intersection += a[i] & b[i];
  }
  return c;
}

}  // namespace

DiceScore dice(const BinaryMask& gt, const BinaryMask& pred) {
  const auto c = count_overlap(gt, pred);
  if (c.gt + c.pred == 0) return {100.0};
  return {200.0 * static_cast<double>(c.intersection) / static_cast<double>(c.gt + c.pred)};
}

double iou(const BinaryMask& gt, const BinaryMask& pred) {
  const auto c = count_overlap(gt, pred);
  const auto uni = c.gt + c.pred - c.intersection;
  if (uni == 0) return 1.0;
  return static_cast<double>(c.intersection) / static_cast<double>(uni);
}

SoftOverlap soft_dice_and_iou(std::span<const double> probabilities, const BinaryMask& gt) {
  return soft_dice_and_iou(probabilities, gt, {}, {});
}

SoftOverlap soft_dice_and_iou(std::span<const double> probabilities, const BinaryMask& gt,
                              std::span<double> d_soft_dice, std::span<double> d_soft_iou) {
  if (probabilities.size() != gt.size()) {
    throw Error(ErrorCode::ShapeMismatch, "probability map has " + std::to_string(probabilities.size()) +
                                              " entries, mask has " + std::to_string(gt.size()));
  }
  if ((!d_soft_dice.empty() && d_soft_dice.size() != gt.size()) ||
      (!d_soft_iou.empty() && d_soft_iou.size() != gt.size())) {
    throw Error(ErrorCode::ShapeMismatch, "gradient buffer size does not match mask");
  }
  const auto y = gt.data();
  double inter = 0.0;
  double sum_p = 0.0;
  double sum_y = 0.0;
  for (std::size_t i = 0; i < probabilities.size(); ++i) {
    inter += probabilities[i] * y[i];
    sum_p += probabilities[i];
    sum_y += y[i];
  }
  const double dice_den = sum_p + sum_y + kSoftEpsilon;
  const double iou_den = sum_p + sum_y - inter + kSoftEpsilon;
  SoftOverlap out{2.0 * inter / dice_den, inter / iou_den};

  if (!d_soft_dice.empty()) {
    const double inv = 1.0 / (dice_den * dice_den);
    for (std::size_t i = 0; i < y.size(); ++i) d_soft_dice[i] = (2.0 * y[i] * dice_den - 2.0 * inter) * inv;
  }
  if (!d_soft_iou.empty()) {
    // d(iou)/dp_i = (y_i * den - inter * (1 - y_i)) / den^2
    const double inv = 1.0 / (iou_den * iou_den);
    for (std::size_t i = 0; i < y.size(); ++i) d_soft_iou[i] = (y[i] * iou_den - inter * (1.0 - y[i])) * inv;
  }
  return out;
}

CurvePoint aggregate_runs(std::span<const double> per_run_values, int perturbation_level) {
  if (per_run_values.empty()) throw Error(ErrorCode::EmptyRuns, "no run scores to aggregate");
  std::vector<double> sorted(per_run_values.begin(), per_run_values.end());
  std::sort(sorted.begin(), sorted.end());
  const double n = static_cast<double>(sorted.size());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  const double mean = sum / n;
  double sq = 0.0;
  for (double v : sorted) sq += (v - mean) * (v - mean);
  CurvePoint point;
  point.perturbation_level = perturbation_level;
  point.mean_dice = mean;
  point.std_dice = sorted.size() == 1 ? 0.0 : std::sqrt(sq / n);
  point.run_count = static_cast<int>(sorted.size());
  return point;
}

CurvePoint aggregate_runs(std::span<const DiceScore> per_run_scores, int perturbation_level) {
  std::vector<double> values;
  values.reserve(per_run_scores.size());
  for (const auto& s : per_run_scores) values.push_back(s.value);
  return aggregate_runs(std::span<const double>(values), perturbation_level);
}

}  // namespace ppsam
