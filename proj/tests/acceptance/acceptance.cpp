// Acceptance checks, one PASS/FAIL line per criterion. Exit code is the number of failures.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <sstream>
#include <string>

#include "ppsam/error.hpp"
#include "ppsam/evaluate.hpp"
#include "ppsam/finetune.hpp"
#include "ppsam/metrics.hpp"
#include "ppsam/surrogate.hpp"
#include "ppsam/sweep.hpp"
#include "ppsam/synthetic.hpp"
#include "ppsam_cli/commands.hpp"
#include "test_support.hpp"

using namespace ppsam;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool ok = true;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

int failures = 0;

void report(int id, const std::string& name, double limit_s, const std::function<Outcome()>& body) {
  const auto t0 = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - t0).count();
  if (limit_s > 0 && secs >= limit_s) {
    o.ok = false;
    o.detail += " [over time limit of " + std::to_string(static_cast<int>(limit_s)) + " s]";
  }
  if (!o.ok) ++failures;
  std::printf("%s criterion %d: %s (%.1f s) %s\n", o.ok ? "PASS" : "FAIL", id, name.c_str(), secs, o.detail.c_str());
  std::fflush(stdout);
}

Outcome geometry_suite() {
  std::mt19937_64 rng(1001);
  int bbox_mismatch = 0;
  for (int i = 0; i < 500; ++i) {
    std::uniform_int_distribution<int> side(1, 96);
    const auto m = ppsam::testing::random_blob_mask(rng, side(rng), side(rng));
    if (!(extract_bbox(m) == ppsam::testing::scan_bbox(m))) ++bbox_mismatch;
  }
  int monotone_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    std::uniform_int_distribution<int> dim(2, 400);
    const Dimensions d{dim(rng), dim(rng)};
    std::uniform_int_distribution<int> xs(0, d.width - 1), ys(0, d.height - 1), ps(0, 150);
    int x0 = xs(rng), x1 = xs(rng), y0 = ys(rng), y1 = ys(rng), p1 = ps(rng), p2 = ps(rng);
    if (x0 > x1) std::swap(x0, x1);
    if (y0 > y1) std::swap(y0, y1);
    if (p1 > p2) std::swap(p1, p2);
    const BoundingBox b{x0, y0, x1 + 1, y1 + 1};
    const auto a = perturb_fixed(b, p1, d);
    const auto c = perturb_fixed(b, p2, d);
    if (!c.contains(a) || !a.contains(b)) ++monotone_fail;
  }
  int identity_fail = 0;
  GeometryRng g(5);
  for (int i = 0; i < 1000; ++i) {
    std::uniform_int_distribution<int> xs(0, 200);
    const int x = xs(rng), y = xs(rng);
    const BoundingBox b{x, y, x + 1 + xs(rng) / 4, y + 1 + xs(rng) / 4};
    if (!(perturb_variable(b, 0, g, {260, 260}) == b)) ++identity_fail;
  }
  std::ostringstream s;
  s << "bbox mismatches " << bbox_mismatch << "/500, monotonicity failures " << monotone_fail
    << "/1000, variable(0) non-identity " << identity_fail << "/1000";
  return {bbox_mismatch == 0 && monotone_fail == 0 && identity_fail == 0, s.str()};
}

Outcome metric_suite() {
  std::mt19937_64 rng(2002);
  int dice_fail = 0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = ppsam::testing::random_blob_mask(rng, 24, 24, true);
    const auto b = ppsam::testing::random_blob_mask(rng, 24, 24, true);
    const double ab = dice(a, b).value;
    bool ok = ab == dice(b, a).value && dice(a, a).value == 100.0 &&
              std::abs(ab - ppsam::testing::count_dice(a, b)) < 1e-9;
    BinaryMask inv(a.height(), a.width());
    for (int r = 0; r < a.height(); ++r) {
      for (int c = 0; c < a.width(); ++c) inv.set(r, c, !a.at(r, c));
    }
    if (!a.empty_foreground() && !inv.empty_foreground()) ok = ok && dice(a, inv).value == 0.0;
    if (!ok) ++dice_fail;
  }
  double worst = 0;
  std::normal_distribution<double> n(0, 2);
  for (int t = 0; t < 50; ++t) {
    const auto gt = ppsam::testing::random_blob_mask(rng, 8, 8);
    std::vector<double> z(64), grad(64);
    for (auto& v : z) v = n(rng);
    training_loss(z, gt, {}, grad);
    for (std::size_t i = 0; i < z.size(); ++i) {
      const double h = 1e-6;
      auto up = z, dn = z;
      up[i] += h;
      dn[i] -= h;
      const double fd = (training_loss(up, gt, {}).total - training_loss(dn, gt, {}).total) / (2 * h);
      worst = std::max(worst, std::abs(fd - grad[i]) / std::max(1e-4, std::abs(fd)));
    }
  }
  std::ostringstream s;
  s << "dice property failures " << dice_fail << "/1000, worst relative gradient error " << worst;
  return {dice_fail == 0 && worst < 1e-4, s.str()};
}

Outcome analytic_sweep() {
  ppsam::testing::TempDir dir("accept_oracle");
  const Dimensions d{256, 256};
  std::mt19937_64 rng(3003);
  std::vector<BoundingBox> rects;
  for (int i = 0; i < 50; ++i) {
    std::uniform_int_distribution<int> ext(4, 120), pos(0, 255);
    const int w = ext(rng), h = ext(rng);
    const int x = std::min(pos(rng), d.width - w), y = std::min(pos(rng), d.height - h);
    rects.push_back({x, y, x + w, y + h});
    char id[16];
    std::snprintf(id, sizeof(id), "r%03d", i);
    ppsam::testing::write_rect_sample(dir.path(), "rects", id, d, rects.back());
  }
  SegmenterSpec model;
  model.backend = Backend::Oracle;
  model.input_resolution = 256;
  SweepSpec spec;
  spec.runs = {0};
  RunConfig run;
  run.fewshot.k = FewShotSpec::kZeroShot;
  run.input_resolution = 256;
  SweepData data;
  data.test_sets = {load_manifest(dir.path(), "rects")};
  const auto curve = run_sweep(spec, expand_runs(run, spec), model, "oracle", data).at(0);
  double worst = 0;
  bool monotone = true;
  for (std::size_t l = 0; l < curve.points.size(); ++l) {
    const int p = curve.points[l].perturbation_level;
    double expect = 0;
    for (const auto& r : rects) {
      const double a = static_cast<double>(r.area());
      expect += 200.0 * a / (a + ppsam::testing::expanded_area(r, p, d));
    }
    expect /= static_cast<double>(rects.size());
    worst = std::max(worst, std::abs(curve.points[l].mean_dice - expect));
    if (l > 0 && curve.points[l].mean_dice > curve.points[l - 1].mean_dice) monotone = false;
  }
  std::ostringstream s;
  s << curve.points.size() << " levels, max |measured - closed form| " << worst
    << (monotone ? ", monotone non-increasing" : ", NOT monotone");
  return {curve.points.size() == 21 && worst < 1e-6 && monotone, s.str()};
}

Outcome freeze_semantics() {
  ppsam::testing::TempDir dir("accept_freeze");
  SyntheticOptions o;
  o.size = {64, 64};
  o.min_extent = 6;
  o.max_extent = 16;
  o.distractor_reach = 12;
  o.count = 6;
  write_synthetic_dataset(dir.path(), "d", o);
  const auto all = load_manifest(dir.path(), "d");
  auto [train_set, val] = carve_validation(all, 1.0 / 6.0, 0);
  const std::vector<FreezePolicy> policies = {
      {true, true, false}, {false, true, true}, {false, true, false}, {true, true, true}};
  std::ostringstream s;
  bool ok = true;
  for (const auto& policy : policies) {
    SegmenterSpec spec;
    spec.input_resolution = 64;
    SurrogateSegmenter m(spec);
    std::array<std::vector<float>, 3> before;
    for (auto g : kAllGroups) before[static_cast<int>(g)].assign(m.parameters(g).begin(), m.parameters(g).end());
    RunConfig c;
    c.freeze = policy;
    c.epochs = 1;  // 5 training samples, batch size 1: 5 steps
    c.input_resolution = 64;
    c.learning_rate = 1e-3;
    train(m, train_set, c, val);
    s << policy.label() << ":";
    for (auto g : kAllGroups) {
      const auto after = m.parameters(g);
      const bool same = std::equal(after.begin(), after.end(), before[static_cast<int>(g)].begin());
      const bool good = policy.trainable(g) ? !same : same;
      ok = ok && good;
      s << (same ? " same" : " changed");
    }
    s << "; ";
  }
  s << "steps per config " << train_set.size();
  return {ok && train_set.size() == 5, s.str()};
}

/// Shared synthetic shapes dataset: 200 training samples (10% held out for
/// checkpoint selection) and 50 test samples.
struct ShapesData {
  ppsam::testing::TempDir dir{"accept_shapes"};
  DatasetManifest pool, validation, test;

  ShapesData() {
    SyntheticOptions o;
    o.count = 200;
    o.seed = 1;
    o.id_prefix = "tr";
    write_synthetic_dataset(dir.path(), "train", o);
    o.count = 50;
    o.seed = 2;
    o.id_prefix = "te";
    write_synthetic_dataset(dir.path(), "test", o);
    std::tie(pool, validation) = carve_validation(load_manifest(dir.path(), "train"), 0.1, 7);
    test = load_manifest(dir.path(), "test", DatasetRole::Test);
  }
};

RunConfig surrogate_run() {
  RunConfig c;
  c.input_resolution = 256;
  c.learning_rate = 1e-2;
  return c;
}

std::string fmt(double v) {
  char b[32];
  std::snprintf(b, sizeof(b), "%.2f", v);
  return b;
}

Outcome perturbation_trend(const ShapesData& d) {
  SegmenterSpec model;
  model.input_resolution = 256;
  SweepSpec spec;
  spec.levels = {50};
  SweepData data{d.pool, d.validation, {d.test}};
  auto variable = surrogate_run();
  variable.epochs = 3;
  variable.train_perturbation = PerturbationPolicy::variable(50);
  auto none = variable;
  none.train_perturbation = PerturbationPolicy::none();
  std::vector<double> v_runs, n_runs;
  SweepOptions opts;
  opts.on_run = [&](std::uint64_t, const std::string&, const std::vector<double>& dice) { v_runs.push_back(dice[0]); };
  const auto v = run_sweep(spec, expand_runs(variable, spec), model, "variable", data, opts).at(0).points.at(0);
  opts.on_run = [&](std::uint64_t, const std::string&, const std::vector<double>& dice) { n_runs.push_back(dice[0]); };
  const auto n = run_sweep(spec, expand_runs(none, spec), model, "none", data, opts).at(0).points.at(0);
  int wins = 0;
  std::ostringstream s;
  s << "per-seed DICE@50 variable/none:";
  for (std::size_t i = 0; i < v_runs.size(); ++i) {
    wins += v_runs[i] > n_runs[i];
    s << " " << fmt(v_runs[i]) << "/" << fmt(n_runs[i]);
  }
  s << "; wins " << wins << "/5; mean " << fmt(v.mean_dice) << " vs " << fmt(n.mean_dice);
  return {wins >= 4 && v.mean_dice > n.mean_dice && v_runs.size() == 5, s.str()};
}

Outcome fewshot_trend(const ShapesData& d) {
  SegmenterSpec model;
  model.input_resolution = 256;
  SweepSpec spec;
  SweepData data{d.pool, d.validation, {d.test}};
  auto curve_for = [&](int k, int epochs) {
    auto c = surrogate_run();
    c.epochs = epochs;
    c.fewshot.k = k;
    return run_sweep(spec, expand_runs(c, spec), model, shot_label(k), data).at(0);
  };
  const auto zero = curve_for(FewShotSpec::kZeroShot, 1);
  const auto one = curve_for(1, 20);
  const auto fifty = curve_for(50, 20);
  bool ok = true;
  std::ostringstream s;
  s << "mean DICE k50/k1/zero at";
  for (std::size_t l = 0; l < zero.points.size(); ++l) {
    const double f = fifty.points[l].mean_dice, o = one.points[l].mean_dice, z = zero.points[l].mean_dice;
    ok = ok && f > o && o > z;
    if (zero.points[l].perturbation_level % 25 == 0) {
      s << " " << zero.points[l].perturbation_level << "px " << fmt(f) << "/" << fmt(o) << "/" << fmt(z);
    }
    if (!(f > o && o > z)) s << " [order violated at " << zero.points[l].perturbation_level << " px]";
  }
  return {ok && zero.points.size() == 21, s.str()};
}

Outcome determinism() {
  ppsam::testing::TempDir dir("accept_determinism");
  SyntheticOptions o;
  o.size = {64, 64};
  o.min_extent = 6;
  o.max_extent = 16;
  o.distractor_reach = 12;
  o.count = 12;
  write_synthetic_dataset(dir.path(), "d", o);
  const auto config = parse_config(
      R"({"train_set":"d","input_resolution":64,"epochs":4,"k":5,"learning_rate":0.01,"run_seed":3})", dir.path());
  const cli::CommandOptions first{dir / "out1", true, nullptr};
  const cli::CommandOptions second{dir / "out2", true, nullptr};
  const auto a = cli::cmd_finetune(config, first);
  const auto b = cli::cmd_finetune(config, second);
  const auto log_a = ppsam::testing::slurp(first.out_root / a.artifacts.at("log"));
  const auto log_b = ppsam::testing::slurp(second.out_root / b.artifacts.at("log"));
  const bool same_ckpt = ppsam::testing::slurp(first.out_root / a.artifacts.at("checkpoint")) ==
                         ppsam::testing::slurp(second.out_root / b.artifacts.at("checkpoint"));
  const bool ok = log_a == log_b && !log_a.empty() && a.config_fingerprint == b.config_fingerprint &&
                  a.experiment_id == b.experiment_id;
  std::ostringstream s;
  s << "logs " << (log_a == log_b ? "identical" : "differ") << ", fingerprints "
    << (a.config_fingerprint == b.config_fingerprint ? "identical" : "differ") << ", checkpoints "
    << (same_ckpt ? "identical" : "differ");
  return {ok && same_ckpt, s.str()};
}

}  // namespace

int main() {
  report(1, "geometry oracle suite", 10, geometry_suite);
  report(2, "metric suite", 30, metric_suite);
  report(3, "analytic sweep equivalence", 60, analytic_sweep);
  report(4, "freeze semantics", 60, freeze_semantics);
  {
    const ShapesData shapes;
    report(5, "variable perturbation beats none at 50 px", 600, [&] { return perturbation_trend(shapes); });
    report(6, "k=50 > k=1 > zero-shot at every level", 600, [&] { return fewshot_trend(shapes); });
  }
  report(7, "finetune determinism", 0, determinism);
  std::printf("SKIPPED criterion 8: foundation-mode reproduction needs published weights and clinical data "
              "(not gating)\n");
  return failures;
}
