#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>

#include "ppsam/data.hpp"
#include "ppsam/error.hpp"
#include "ppsam/synthetic.hpp"
#include "test_support.hpp"

using namespace ppsam;
using ppsam::testing::TempDir;
using ppsam::testing::write_file;
using ppsam::testing::write_rect_sample;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected ppsam::Error";
  return ErrorCode::Io;
}

DatasetManifest fake_manifest(int n, const std::string& name = "fake") {
  DatasetManifest m;
  m.name = name;
  for (int i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "id%03d", i);
    m.records.push_back({id, std::string(id) + ".png", std::string(id) + ".png", {8, 8}});
  }
  return m;
}

std::set<std::string> ids_of(const DatasetManifest& m) {
  std::set<std::string> s;
  for (const auto& r : m.records) s.insert(r.sample_id);
  return s;
}

}  // namespace

TEST(LoadManifest, ThreePairsSorted) {
  TempDir dir("manifest");
  for (const char* id : {"c", "a", "b"}) write_rect_sample(dir.path(), "set", id, {12, 10}, {2, 2, 5, 5});
  const auto m = load_manifest(dir.path(), "set");
  ASSERT_EQ(m.size(), 3u);
  EXPECT_EQ(m.records[0].sample_id, "a");
  EXPECT_EQ(m.records[1].sample_id, "b");
  EXPECT_EQ(m.records[2].sample_id, "c");
  EXPECT_EQ(m.records[0].original_size, (Dimensions{12, 10}));
}

TEST(LoadManifest, MissingPairListsBothFiles) {
  TempDir dir("missing");
  write_rgb(dir / "set/images/a.jpg", RgbImage{4, 4, std::vector<std::uint8_t>(48, 9)});
  write_gray(dir / "set/masks/b.jpg", GrayImage{4, 4, std::vector<std::uint8_t>(16, 255)});
  try {
    load_manifest(dir.path(), "set");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MissingPair);
    const std::string msg = e.what();
    EXPECT_NE(msg.find("a.jpg"), std::string::npos) << msg;
    EXPECT_NE(msg.find("b.jpg"), std::string::npos) << msg;
  }
}

TEST(LoadManifest, EmptyDataset) {
  TempDir dir("empty");
  std::filesystem::create_directories(dir / "set/images");
  std::filesystem::create_directories(dir / "set/masks");
  EXPECT_EQ(code_of([&] { load_manifest(dir.path(), "set"); }), ErrorCode::EmptyDataset);
}

TEST(SplitTrainTest, EightyTwentyIsDisjointAndComplete) {
  const auto m = fake_manifest(10);
  std::vector<std::string> ids;
  for (const auto& r : m.records) ids.push_back(r.sample_id);
  std::mt19937_64 rng(4);
  std::shuffle(ids.begin(), ids.end(), rng);
  const std::vector<std::string> train(ids.begin(), ids.begin() + 8), test(ids.begin() + 8, ids.end());
  const auto [tr, te] = split_train_test(m, train, test);
  EXPECT_EQ(tr.size(), 8u);
  EXPECT_EQ(te.size(), 2u);
  const auto a = ids_of(tr), b = ids_of(te);
  for (const auto& id : a) EXPECT_EQ(b.count(id), 0u);
  std::set<std::string> all = a;
  all.insert(b.begin(), b.end());
  EXPECT_EQ(all, ids_of(m));
}

TEST(SplitTrainTest, FromFileAndErrors) {
  TempDir dir("split");
  const auto m = fake_manifest(4);
  write_file(dir / "split.json", R"({"train": ["id000", "id001", "id002"], "test": ["id003"]})");
  const auto [tr, te] = split_train_test(m, dir / "split.json");
  EXPECT_EQ(tr.size(), 3u);
  EXPECT_EQ(te.size(), 1u);

  const std::vector<std::string> all{"id000", "id001", "id002", "id003"};
  EXPECT_EQ(code_of([&] { split_train_test(m, all, {}); }), ErrorCode::EmptyDataset);
  EXPECT_EQ(code_of([&] { split_train_test(m, {"id000", "nope"}, {"id001", "id002", "id003"}); }),
            ErrorCode::UnknownId);
  EXPECT_EQ(code_of([&] { split_train_test(m, {"id000", "id001"}, {"id001", "id002", "id003"}); }),
            ErrorCode::OverlappingSplit);
}

TEST(SampleFewshot, FullIsIdentityAndSeedsAreDeterministic) {
  const auto m = fake_manifest(900);
  const auto full = sample_fewshot(m, {FewShotSpec::kFullShot, 3});
  EXPECT_EQ(ids_of(full), ids_of(m));
  const auto a = sample_fewshot(m, {1, 1});
  const auto b = sample_fewshot(m, {1, 1});
  const auto c = sample_fewshot(m, {1, 2});
  ASSERT_EQ(a.size(), 1u);
  EXPECT_EQ(a.records[0].sample_id, b.records[0].sample_id);
  EXPECT_NE(a.records[0].sample_id, c.records[0].sample_id);
}

TEST(SampleFewshot, SelectionFrequencyIsUniform) {
  const auto m = fake_manifest(10);
  std::map<std::string, int> hits;
  constexpr int trials = 10000;
  for (int s = 0; s < trials; ++s) {
    const auto pick = sample_fewshot(m, {5, static_cast<std::uint64_t>(s)});
    ASSERT_EQ(pick.size(), 5u);
    ASSERT_EQ(ids_of(pick).size(), 5u);
    for (const auto& r : pick.records) ++hits[r.sample_id];
  }
  // Each record is picked with probability 1/2 per trial.
  const double sigma = std::sqrt(trials * 0.5 * 0.5);
  for (const auto& [id, n] : hits) EXPECT_LT(std::abs(n - trials * 0.5), 3 * sigma) << id;
  EXPECT_EQ(hits.size(), 10u);
}

TEST(SampleFewshot, Errors) {
  const auto m = fake_manifest(3);
  EXPECT_EQ(code_of([&] { sample_fewshot(m, {5, 0}); }), ErrorCode::InsufficientData);
  EXPECT_EQ(code_of([&] { sample_fewshot(m, {0, 0}); }), ErrorCode::ConfigError);
  EXPECT_EQ(code_of([&] { validate(FewShotSpec{7, 0}); }), ErrorCode::ConfigError);
}

TEST(CarveValidation, DeterministicDisjointTenPercent) {
  const auto m = fake_manifest(200);
  const auto [pool, val] = carve_validation(m, 0.1, 9);
  EXPECT_EQ(val.size(), 20u);
  EXPECT_EQ(pool.size(), 180u);
  for (const auto& id : ids_of(val)) EXPECT_EQ(ids_of(pool).count(id), 0u);
  const auto [pool2, val2] = carve_validation(m, 0.1, 9);
  EXPECT_EQ(ids_of(val), ids_of(val2));
}

TEST(PrepareSample, BinaryMaskAtTargetIsUnchanged) {
  TempDir dir("prep");
  write_rect_sample(dir.path(), "set", "x", {32, 32}, {3, 4, 20, 30});
  const auto rec = load_manifest(dir.path(), "set").records.at(0);
  const auto s = prepare_sample(rec, {32, 32}, 0.5, Normalization{});
  EXPECT_EQ(s.mask, load_original_mask(rec, 0.5));
  EXPECT_EQ(s.image.channels, 3);
  EXPECT_EQ(s.image.dims(), (Dimensions{32, 32}));
  EXPECT_FLOAT_EQ(s.image.data[0], 128.0f);
}

TEST(PrepareSample, FullForegroundUpsamples) {
  TempDir dir("full");
  write_rect_sample(dir.path(), "set", "x", {512, 512}, {0, 0, 512, 512});
  const auto rec = load_manifest(dir.path(), "set").records.at(0);
  const auto s = prepare_sample(rec, {1024, 1024}, 0.5, Normalization{});
  EXPECT_EQ(s.mask.count(), 1024u * 1024u);
  EXPECT_EQ(s.original_size, (Dimensions{512, 512}));
}

TEST(PrepareSample, SoftMaskBinarizedAtFractionOfPeak) {
  TempDir dir("soft");
  write_rgb(dir / "set/images/x.png", RgbImage{2, 2, std::vector<std::uint8_t>(12, 0)});
  write_gray(dir / "set/masks/x.png", GrayImage{2, 2, {200, 100, 101, 0}});
  const auto rec = load_manifest(dir.path(), "set").records.at(0);
  const auto m = load_original_mask(rec, 0.5);
  EXPECT_EQ(std::vector<std::uint8_t>(m.data().begin(), m.data().end()), (std::vector<std::uint8_t>{1, 0, 1, 0}));
}

TEST(Resize, CheckerboardNearestRoundTripMatchesOracle) {
  GrayImage board{240, 240, std::vector<std::uint8_t>(240 * 240)};
  for (int r = 0; r < 240; ++r) {
    for (int c = 0; c < 240; ++c) board.data[r * 240 + c] = ((r / 12 + c / 12) % 2) ? 255 : 0;
  }
  const auto down = resize_nearest(board, {100, 100});
  const auto up = resize_nearest(down, {240, 240});
  // Independent oracle: nearest source index floor(dst * src / dst_size).
  auto nn = [](const GrayImage& src, int h, int w) {
    GrayImage out{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w)};
    for (int r = 0; r < h; ++r) {
      for (int c = 0; c < w; ++c) {
        const int sr = std::min(src.height - 1, r * src.height / h);
        const int sc = std::min(src.width - 1, c * src.width / w);
        out.data[r * w + c] = src.data[sr * src.width + sc];
      }
    }
    return out;
  };
  const auto expect = nn(nn(board, 100, 100), 240, 240);
  auto count = [](const GrayImage& g) { return std::count(g.data.begin(), g.data.end(), 255); };
  const double a = static_cast<double>(count(up));
  const double b = static_cast<double>(count(expect));
  EXPECT_LT(std::abs(a - b) / b, 0.05);
}

TEST(RestoreToOriginal, ConstantMaps) {
  ProbabilityMap ones{64, 64, std::vector<float>(64 * 64, 1.0f)};
  EXPECT_EQ(restore_to_original(ones, {37, 21}, 0.5).count(), 37u * 21u);
  ProbabilityMap low{64, 64, std::vector<float>(64 * 64, 0.4f)};
  EXPECT_EQ(restore_to_original(low, {37, 21}, 0.5).count(), 0u);
}

TEST(RestoreToOriginal, MatchesBilinearOracle) {
  // Smooth random field at 1024, restored to 384x288 and compared to a
  // per-pixel half-pixel-centre bilinear oracle.
  const int n = 1024;
  ProbabilityMap map{n, n, std::vector<float>(static_cast<std::size_t>(n) * n)};
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0, 6.28);
  const double p1 = u(rng), p2 = u(rng);
  for (int r = 0; r < n; ++r) {
    for (int c = 0; c < n; ++c) {
      map.data[r * n + c] = static_cast<float>(0.5 + 0.45 * std::sin(c * 0.013 + p1) * std::cos(r * 0.021 + p2));
    }
  }
  const Dimensions out{384, 288};
  const auto got = restore_to_original(map, out, 0.5);
  auto sample = [&](double y, double x) {
    y = std::clamp(y, 0.0, n - 1.0);
    x = std::clamp(x, 0.0, n - 1.0);
    const int y0 = static_cast<int>(std::floor(y)), x0 = static_cast<int>(std::floor(x));
    const int y1 = std::min(n - 1, y0 + 1), x1 = std::min(n - 1, x0 + 1);
    const double fy = y - y0, fx = x - x0;
    auto at = [&](int rr, int cc) { return static_cast<double>(map.data[rr * n + cc]); };
    return (1 - fy) * ((1 - fx) * at(y0, x0) + fx * at(y0, x1)) + fy * ((1 - fx) * at(y1, x0) + fx * at(y1, x1));
  };
  long disagree = 0;
  for (int r = 0; r < out.height; ++r) {
    for (int c = 0; c < out.width; ++c) {
      const double v = sample((r + 0.5) * n / out.height - 0.5, (c + 0.5) * n / out.width - 0.5);
      disagree += (v > 0.5) != got.at(r, c);
    }
  }
  EXPECT_LE(static_cast<double>(disagree) / static_cast<double>(out.area()), 0.001);
}

TEST(ManifestCache, RoundTrip) {
  TempDir dir("cache");
  for (const char* id : {"a", "b"}) write_rect_sample(dir.path(), "set", id, {9, 7}, {1, 1, 3, 3});
  const auto m = load_manifest(dir.path(), "set");
  write_manifest_cache(dir / "m.jsonl", m);
  const auto back = read_manifest_cache(dir / "m.jsonl", "set");
  EXPECT_EQ(back.records, m.records);
}

TEST(ProbeImageSize, PngAndJpegHeaders) {
  TempDir dir("probe");
  write_rgb(dir / "a.png", RgbImage{13, 17, std::vector<std::uint8_t>(13 * 17 * 3, 1)});
  write_rgb(dir / "b.jpg", RgbImage{21, 11, std::vector<std::uint8_t>(21 * 11 * 3, 1)});
  EXPECT_EQ(probe_image_size(dir / "a.png"), (Dimensions{17, 13}));
  EXPECT_EQ(probe_image_size(dir / "b.jpg"), (Dimensions{11, 21}));
  write_file(dir / "c.png", "not an image");
  EXPECT_EQ(code_of([&] { probe_image_size(dir / "c.png"); }), ErrorCode::CorruptFile);
}

TEST(Synthetic, DeterministicAndTargetOnly) {
  SyntheticOptions o;
  o.count = 3;
  o.seed = 5;
  const auto a = make_synthetic_sample(o, 1);
  const auto b = make_synthetic_sample(o, 1);
  EXPECT_EQ(a.image.data, b.image.data);
  EXPECT_EQ(a.mask.data, b.mask.data);
  EXPECT_GT(std::count(a.mask.data.begin(), a.mask.data.end(), 255), 0);
  o.empty_masks = 1;
  const auto empty = make_synthetic_sample(o, 2);
  EXPECT_EQ(std::count(empty.mask.data.begin(), empty.mask.data.end(), 255), 0);
}

TEST(LoadManifest, ThousandPairLayoutWithPublishedSplit) {
  // A 1000-image dataset split 900/100 by a split file.
  TempDir dir("thousand");
  std::vector<std::string> train_ids, test_ids;
  for (int i = 0; i < 1000; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "img%04d", i);
    write_rect_sample(dir.path(), "polyps", id, {8, 8}, {1, 1, 4, 4});
    (i % 10 == 3 ? test_ids : train_ids).push_back(id);
  }
  const auto m = load_manifest(dir.path(), "polyps");
  ASSERT_EQ(m.size(), 1000u);
  std::string doc = R"({"train": [)";
  for (std::size_t i = 0; i < train_ids.size(); ++i) doc += (i ? ",\"" : "\"") + train_ids[i] + "\"";
  doc += R"(], "test": [)";
  for (std::size_t i = 0; i < test_ids.size(); ++i) doc += (i ? ",\"" : "\"") + test_ids[i] + "\"";
  doc += "]}";
  write_file(dir / "split.json", doc);
  const auto [tr, te] = split_train_test(m, dir / "split.json");
  EXPECT_EQ(tr.size(), 900u);
  EXPECT_EQ(te.size(), 100u);
  std::set<std::string> both = ids_of(tr);
  for (const auto& id : ids_of(te)) EXPECT_TRUE(both.insert(id).second) << id;
  EXPECT_EQ(both, ids_of(m));
}
