#pragma once

#include <span>
#include <vector>

#include "ppsam/geometry.hpp"

namespace ppsam {

/// DICE as a percentage in [0, 100].
struct DiceScore {
  double value = 0.0;
};

struct CurvePoint {
  int perturbation_level = 0;
  double mean_dice = 0.0;
  double std_dice = 0.0;
  int run_count = 0;
};

/// Smoothing term of the soft overlap measures.
inline constexpr double kSoftEpsilon = 1e-6;

/// 2|Y∩P| / (|Y|+|P|) * 100. Two empty masks score 100 (agreement on absence).
DiceScore dice(const BinaryMask& gt, const BinaryMask& pred);

/// |Y∩P| / |Y∪P| as a fraction; 1 when both are empty.
double iou(const BinaryMask& gt, const BinaryMask& pred);

struct SoftOverlap {
  double soft_dice = 0.0;
  double soft_iou = 0.0;
};

/// Differentiable overlap of a probability map with a binary target.
SoftOverlap soft_dice_and_iou(std::span<const double> probabilities, const BinaryMask& gt);

/// Same as above and also writes d(soft_dice)/dp and d(soft_iou)/dp.
/// Either gradient span may be empty to skip it.
SoftOverlap soft_dice_and_iou(std::span<const double> probabilities, const BinaryMask& gt,
                              std::span<double> d_soft_dice, std::span<double> d_soft_iou);

/// Population mean and standard deviation. Inputs are summed in sorted order so
/// the result does not depend on run order. Throws EmptyRuns.
CurvePoint aggregate_runs(std::span<const DiceScore> per_run_scores, int perturbation_level = 0);
CurvePoint aggregate_runs(std::span<const double> per_run_values, int perturbation_level = 0);

}  // namespace ppsam
