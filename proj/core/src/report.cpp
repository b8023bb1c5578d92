#include "ppsam/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "ppsam/data.hpp"
#include "ppsam/error.hpp"

namespace ppsam {

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  return out;
}

std::string fmt2(std::optional<double> v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", *v);
  return buf;
}

std::vector<std::string> test_sets_of(const std::vector<RobustnessCurve>& curves) {
  std::vector<std::string> out;
  for (const auto& c : curves) {
    if (std::find(out.begin(), out.end(), c.test_set) == out.end()) out.push_back(c.test_set);
  }
  return out;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

}  // namespace

const std::vector<ReferenceValue>& sota_reference_dice() {
  static const std::vector<ReferenceValue> values = {
      {"fine-tuned 1-shot DICE", 1, 50, 74.5, "published variable-perturbation fine-tuning, 1-shot, 50 px"},
      {"fine-tuned 5-shot DICE", 5, 50, 77.0, "published variable-perturbation fine-tuning, 5-shot, 50 px"},
      {"fine-tuned 10-shot DICE", 10, 50, 81.6, "published variable-perturbation fine-tuning, 10-shot, 50 px"},
  };
  return values;
}

const std::vector<ReferenceValue>& sota_reference_improvement() {
  static const std::vector<ReferenceValue> values = {
      {"gain over PVT-CASCADE", 1, 50, 26.0, "published gain over PVT-CASCADE, 1-shot, 50 px"},
      {"gain over PVT-CASCADE", 5, 50, 7.0, "published gain over PVT-CASCADE, 5-shot, 50 px"},
      {"gain over PVT-CASCADE", 10, 50, 5.0, "published gain over PVT-CASCADE, 10-shot, 50 px"},
      {"gain over PVT-CASCADE", 1, 25, 32.0, "published gain over PVT-CASCADE, 1-shot, 25 px"},
      {"gain over PVT-CASCADE", 5, 25, 11.0, "published gain over PVT-CASCADE, 5-shot, 25 px"},
      {"gain over PVT-CASCADE", 10, 25, 9.0, "published gain over PVT-CASCADE, 10-shot, 25 px"},
  };
  return values;
}

const std::vector<FewshotClaim>& fewshot_claims() {
  static const std::vector<FewshotClaim> claims = {
      {0, 1, 50, 20.0, "published 1-shot gain over zero-shot at 50 px"},
      {0, 1, 100, 37.0, "published 1-shot gain over zero-shot at 100 px"},
      {0, 50, 100, 60.0, "published 50-shot gain over zero-shot at 100 px"},
  };
  return claims;
}

const RobustnessCurve* find_shot_curve(const std::vector<RobustnessCurve>& curves, const std::string& test_set,
                                       int shots) {
  const std::string label = shot_label(shots);
  const std::string suffix = "-" + label;
  for (const auto& c : curves) {
    if (c.test_set != test_set) continue;
    const auto& id = c.model_id;
    if (id == label || (id.size() > suffix.size() && id.compare(id.size() - suffix.size(), suffix.size(), suffix) == 0)) {
      return &c;
    }
  }
  return nullptr;
}

std::optional<double> value_at(const RobustnessCurve& curve, int level_px) {
  for (const auto& p : curve.points) {
    if (p.perturbation_level == level_px) return p.mean_dice;
  }
  return std::nullopt;
}

std::vector<SotaRow> sota_rows(const std::vector<RobustnessCurve>& curves) {
  std::vector<SotaRow> rows;
  for (const auto& test_set : test_sets_of(curves)) {
    for (const auto& gain : sota_reference_improvement()) {
      SotaRow row;
      row.test_set = test_set;
      row.shots = gain.shots;
      row.level_px = gain.level_px;
      row.reference_improvement = gain.value;
      if (const auto* c = find_shot_curve(curves, test_set, gain.shots)) row.measured_dice = value_at(*c, gain.level_px);
      for (const auto& ref : sota_reference_dice()) {
        if (ref.shots == gain.shots && ref.level_px == gain.level_px) row.reference_dice = ref.value;
      }
      if (row.reference_dice) row.implied_baseline = *row.reference_dice - gain.value;
      if (row.implied_baseline && row.measured_dice) row.measured_improvement = *row.measured_dice - *row.implied_baseline;
      rows.push_back(row);
    }
  }
  return rows;
}

std::vector<FewshotAnnotation> fewshot_annotations(const std::vector<RobustnessCurve>& curves) {
  std::vector<FewshotAnnotation> out;
  for (const auto& test_set : test_sets_of(curves)) {
    for (const auto& claim : fewshot_claims()) {
      FewshotAnnotation a{test_set, claim, std::nullopt};
      const auto* from = find_shot_curve(curves, test_set, claim.from_shots);
      const auto* to = find_shot_curve(curves, test_set, claim.to_shots);
      if (from && to) {
        const auto a_val = value_at(*from, claim.level_px);
        const auto b_val = value_at(*to, claim.level_px);
        if (a_val && b_val) a.measured_delta = *b_val - *a_val;
      }
      out.push_back(a);
    }
  }
  return out;
}

void write_sota_csv(const std::filesystem::path& path, const std::vector<SotaRow>& rows) {
  auto out = open_out(path);
  out << "test_set,shots,level_px,measured_dice,reference_dice,reference_improvement,implied_baseline_dice,"
         "measured_improvement\n";
  for (const auto& r : rows) {
    out << r.test_set << ',' << r.shots << ',' << r.level_px << ',' << fmt2(r.measured_dice) << ','
        << fmt2(r.reference_dice) << ',' << fmt2(r.reference_improvement) << ',' << fmt2(r.implied_baseline) << ','
        << fmt2(r.measured_improvement) << '\n';
  }
}

void write_fewshot_csv(const std::filesystem::path& path, const std::vector<FewshotAnnotation>& rows) {
  auto out = open_out(path);
  out << "test_set,from,to,level_px,measured_delta,claimed_delta\n";
  for (const auto& r : rows) {
    out << r.test_set << ',' << shot_label(r.claim.from_shots) << ',' << shot_label(r.claim.to_shots) << ','
        << r.claim.level_px << ',' << fmt2(r.measured_delta) << ',' << fmt2(r.claim.delta) << '\n';
  }
}

void write_svg_plot(const std::filesystem::path& path, const std::string& title,
                    const std::vector<RobustnessCurve>& curves) {
  constexpr double kW = 720, kH = 480, kLeft = 64, kRight = 220, kTop = 40, kBottom = 56;
  const double plot_w = kW - kLeft - kRight;
  const double plot_h = kH - kTop - kBottom;
  int max_level = 0;
  for (const auto& c : curves) {
    for (const auto& p : c.points) max_level = std::max(max_level, p.perturbation_level);
  }
  if (max_level == 0) max_level = 100;
  auto sx = [&](double level) { return kLeft + plot_w * level / max_level; };
  auto sy = [&](double dice) { return kTop + plot_h * (1.0 - std::clamp(dice, 0.0, 100.0) / 100.0); };
  static const char* palette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
      << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << kLeft << "\" y=\"24\" font-size=\"15\">" << xml_escape(title) << "</text>\n";
  for (int d = 0; d <= 100; d += 20) {
    svg << "<line x1=\"" << kLeft << "\" x2=\"" << kLeft + plot_w << "\" y1=\"" << sy(d) << "\" y2=\"" << sy(d)
        << "\" stroke=\"#ddd\"/>\n";
    svg << "<text x=\"" << kLeft - 8 << "\" y=\"" << sy(d) + 4 << "\" text-anchor=\"end\">" << d << "</text>\n";
  }
  const int tick = max_level <= 50 ? 5 : 10;
  for (int l = 0; l <= max_level; l += tick) {
    svg << "<text x=\"" << sx(l) << "\" y=\"" << kTop + plot_h + 18 << "\" text-anchor=\"middle\">" << l
        << "</text>\n";
  }
  svg << "<rect x=\"" << kLeft << "\" y=\"" << kTop << "\" width=\"" << plot_w << "\" height=\"" << plot_h
      << "\" fill=\"none\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << kLeft + plot_w / 2 << "\" y=\"" << kH - 16
      << "\" text-anchor=\"middle\">prompt perturbation at inference (px)</text>\n";
  svg << "<text transform=\"translate(18," << kTop + plot_h / 2 << ") rotate(-90)\" text-anchor=\"middle\">DICE (%)</text>\n";

  const bool many_sets = test_sets_of(curves).size() > 1;
  for (std::size_t i = 0; i < curves.size(); ++i) {
    const auto& c = curves[i];
    const char* colour = palette[i % std::size(palette)];
    svg << "<polyline fill=\"none\" stroke=\"" << colour << "\" stroke-width=\"2\" points=\"";
    for (const auto& p : c.points) svg << sx(p.perturbation_level) << ',' << sy(p.mean_dice) << ' ';
    svg << "\"/>\n";
    for (const auto& p : c.points) {
      svg << "<circle cx=\"" << sx(p.perturbation_level) << "\" cy=\"" << sy(p.mean_dice) << "\" r=\"2.5\" fill=\""
          << colour << "\"/>\n";
    }
    const double ly = kTop + 12 + 18.0 * static_cast<double>(i);
    const double lx = kLeft + plot_w + 14;
    svg << "<line x1=\"" << lx << "\" x2=\"" << lx + 20 << "\" y1=\"" << ly << "\" y2=\"" << ly << "\" stroke=\""
        << colour << "\" stroke-width=\"2\"/>\n";
    const std::string name = many_sets ? c.model_id + " / " + c.test_set : c.model_id;
    svg << "<text x=\"" << lx + 26 << "\" y=\"" << ly + 4 << "\">" << xml_escape(name) << "</text>\n";
  }
  svg << "</svg>\n";
  auto out = open_out(path);
  out << svg.str();
}

}  // namespace ppsam
