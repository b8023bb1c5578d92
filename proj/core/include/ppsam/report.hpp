#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ppsam/sweep.hpp"

namespace ppsam {

/// A published number the report is compared against.
struct ReferenceValue {
  std::string name;
  int shots = 0;
  int level_px = 0;
  double value = 0.0;  // DICE points
  std::string provenance;
};

/// Published k-shot DICE at 50 px and the claimed gains over the CNN baseline
/// at 25 and 50 px.
const std::vector<ReferenceValue>& sota_reference_dice();
const std::vector<ReferenceValue>& sota_reference_improvement();

/// Claimed DICE gain of a k-shot model over zero-shot at one level.
struct FewshotClaim {
  int from_shots = 0;
  int to_shots = 0;
  int level_px = 0;
  double delta = 0.0;
  std::string provenance;
};
const std::vector<FewshotClaim>& fewshot_claims();

struct SotaRow {
  std::string test_set;
  int shots = 0;
  int level_px = 0;
  std::optional<double> measured_dice;
  std::optional<double> reference_dice;
  double reference_improvement = 0.0;
  std::optional<double> implied_baseline;     // reference_dice - reference_improvement
  std::optional<double> measured_improvement;  // measured_dice - implied_baseline
};

struct FewshotAnnotation {
  std::string test_set;
  FewshotClaim claim;
  std::optional<double> measured_delta;
};

/// Finds the curve for a shot count: model ids equal to or ending in "-<label>".
const RobustnessCurve* find_shot_curve(const std::vector<RobustnessCurve>& curves, const std::string& test_set,
                                       int shots);
std::optional<double> value_at(const RobustnessCurve& curve, int level_px);

std::vector<SotaRow> sota_rows(const std::vector<RobustnessCurve>& curves);
std::vector<FewshotAnnotation> fewshot_annotations(const std::vector<RobustnessCurve>& curves);

void write_sota_csv(const std::filesystem::path& path, const std::vector<SotaRow>& rows);
void write_fewshot_csv(const std::filesystem::path& path, const std::vector<FewshotAnnotation>& rows);

/// DICE-vs-level line plot, one series per (model_id, test_set).
void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<RobustnessCurve>& curves);

}  // namespace ppsam
