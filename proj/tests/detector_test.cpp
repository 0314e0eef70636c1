#include <gtest/gtest.h>

#include "oracles.hpp"
#include "ressam/detector.hpp"
#include "ressam/synth.hpp"

using namespace ressam;

namespace {

BScanFrame blocks(int w, int h) {
  // Left half 0, right half 1, with a 0.5 square in the middle of the right.
  std::vector<double> v;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) v.push_back(x < w / 2 ? 0.0 : (x >= 3 * w / 4 - 2 && x < 3 * w / 4 + 2 && y >= h / 2 - 2 && y < h / 2 + 2) ? 0.5 : 1.0);
  return BScanFrame("blocks", w, h, std::move(v));
}

Mask random_mask(Rng& rng, int w, int h) {
  Mask m("m", w, h);
  const double p = rng.uniform(0.01, 0.3);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rng.uniform() < p) m.set(x, y);
  if (m.empty()) m.set(static_cast<int>(rng.below(w)), static_cast<int>(rng.below(h)));
  return m;
}

}  // namespace

TEST(Prompts, ParseSwitchesLists) {
  const PromptSet p = parse_prompts("3,4; pos:1,2;neg:5,6;7,8");
  ASSERT_EQ(p.positives.size(), 2u);
  EXPECT_EQ(p.positives[0], (Point{3, 4}));
  ASSERT_EQ(p.negatives.size(), 2u);
  EXPECT_EQ(p.negatives[1], (Point{7, 8}));
  EXPECT_TRUE(parse_prompts("").positives.empty());
  EXPECT_THROW(parse_prompts("1;2"), Error);
  EXPECT_THROW(parse_prompts("pos:a,b"), Error);
}

TEST(Prompts, ValidateBounds) {
  PromptSet p{{{0, 0}}, {{10, 0}}};
  EXPECT_THROW(p.validate(10, 10), Error);
  EXPECT_NO_THROW(p.validate(11, 10));
}

TEST(RegionGrow, FloodStaysInTolerance) {
  const BScanFrame f = blocks(20, 12);
  const Mask m = region_grow(f, {{{2, 2}}, {}}, 0.1, 1);
  EXPECT_EQ(m.count(), 10u * 12u);
  EXPECT_EQ(bounding_rect(m), (Region{0, 9, 0, 11}));
}

TEST(RegionGrow, NegativesCarveOutButNotThroughPositives) {
  const BScanFrame f = blocks(20, 12);
  // Wide tolerance joins everything; the negative grows back over the frame
  // but positive seed pixels stay in.
  const Mask m = region_grow(f, {{{2, 2}, {17, 1}}, {{12, 1}}}, 2.0, 1);
  EXPECT_TRUE(m.at(2, 2));
  EXPECT_TRUE(m.at(17, 1));
  EXPECT_FALSE(m.at(12, 1));
  // A negative placed on a positive seed is ignored.
  const Mask same = region_grow(f, {{{2, 2}}, {{2, 2}}}, 0.1, 1);
  EXPECT_EQ(same.count(), 120u);
}

TEST(RegionGrow, RequiresPositive) {
  const BScanFrame f = blocks(8, 8);
  EXPECT_THROW(region_grow(f, {}, 0.1), Error);
  EXPECT_THROW(region_grow(f, {{{1, 1}}, {}}, -1.0), Error);
  EXPECT_THROW(region_grow(f, {{{9, 1}}, {}}, 0.1), Error);
}

TEST(RectMath, BoundingRectIsMinimal) {
  Rng rng(21);
  for (int trial = 0; trial < 300; ++trial) {
    const int w = 1 + static_cast<int>(rng.below(20)), h = 1 + static_cast<int>(rng.below(20));
    const Mask m = random_mask(rng, w, h);
    const Region r = bounding_rect(m);
    bool left = false, right = false, top = false, bottom = false;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!m.at(x, y)) continue;
        ASSERT_TRUE(r.contains(x, y));
        left |= x == r.x1;
        right |= x == r.x2;
        top |= y == r.y1;
        bottom |= y == r.y2;
      }
    EXPECT_TRUE(left && right && top && bottom);
  }
  EXPECT_THROW(bounding_rect(Mask("e", 3, 3)), Error);
}

TEST(RectMath, ComponentRectsCoverMask) {
  Mask m("m", 6, 4);
  m.set(0, 0);
  m.set(1, 0);
  m.set(4, 2);
  m.set(5, 3);
  m.set(4, 3);
  const auto rects = component_rects(m);
  ASSERT_EQ(rects.size(), 2u);
  EXPECT_EQ(rects[0], (Region{0, 1, 0, 0}));
  EXPECT_EQ(rects[1], (Region{4, 5, 2, 3}));
}

TEST(Detector, PatchAroundOwnsCentre) {
  EXPECT_EQ(patch_around(10, 10, {4, 3, 1}), (Region{8, 11, 9, 11}));
  EXPECT_EQ(patch_around(0, 0, {5, 5, 1}).x1, -2);
  const Region r = patch_around(7, 3, {6, 9, 1});
  EXPECT_EQ(r.width(), 6);
  EXPECT_EQ(r.height(), 9);
}

TEST(Merge, HandLayouts) {
  const PatchSpec spec{4, 4, 1};
  Heatmap map;
  // Centres 2 apart overlap; a third centre far away stays alone.
  map.points = {{5, 5, 3.0}, {7, 5, 2.0}, {20, 20, 9.0}, {12, 5, 0.5}};
  const auto out = merge_anomalous_patches(map, 1.0, spec, 30, 30);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_TRUE(out[0].primary);
  EXPECT_FALSE(out[1].primary);
  EXPECT_EQ(out[0].rect, (Region{18, 21, 18, 21}));
  EXPECT_EQ(out[1].rect, (Region{3, 8, 3, 6}));
  EXPECT_EQ(out[1].centers, 2u);
  EXPECT_DOUBLE_EQ(out[1].mean_center_score, 2.5);
  EXPECT_TRUE(merge_anomalous_patches(map, 10.0, spec, 30, 30).empty());

  // Windows that only touch at a corner still merge.
  map.points = {{5, 5, 2.0}, {9, 9, 2.0}};
  EXPECT_EQ(merge_anomalous_patches(map, 1.0, spec, 30, 30).size(), 1u);
  // One pixel of gap keeps them apart.
  map.points = {{5, 5, 2.0}, {10, 9, 2.0}};
  EXPECT_EQ(merge_anomalous_patches(map, 1.0, spec, 30, 30).size(), 2u);
}

TEST(Merge, AgreesWithPaintedUnionFind) {
  Rng rng(99);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = 20 + static_cast<int>(rng.below(40)), h = 20 + static_cast<int>(rng.below(40));
    const PatchSpec spec{2 + static_cast<int>(rng.below(8)), 2 + static_cast<int>(rng.below(8)), 1};
    Heatmap map;
    std::set<std::pair<int, int>> used;
    const int count = 1 + static_cast<int>(rng.below(25));
    for (int i = 0; i < count; ++i) {
      const int x = static_cast<int>(rng.below(w)), y = static_cast<int>(rng.below(h));
      if (!used.insert({y, x}).second) continue;
      map.points.push_back({x, y, rng.uniform(0, 2)});
    }
    std::sort(map.points.begin(), map.points.end(),
              [](const ScoredPoint& a, const ScoredPoint& b) { return std::pair{a.y, a.x} < std::pair{b.y, b.x}; });
    const double beta = 0.8;
    std::vector<oracle::Rect> windows;
    std::vector<double> scores;
    for (const auto& p : map.points) {
      if (p.score <= beta) continue;
      const Region r = patch_around(p.x, p.y, spec);
      windows.push_back({std::max(r.x1, 0), std::min(r.x2, w - 1), std::max(r.y1, 0), std::min(r.y2, h - 1)});
      scores.push_back(p.score);
    }
    const auto expected = oracle::merge_by_paint(windows, scores, w, h);
    const auto got = merge_anomalous_patches(map, beta, spec, w, h);
    ASSERT_EQ(got.size(), expected.size()) << "trial " << trial;
    std::vector<oracle::Group> mine;
    for (const auto& g : got) {
      mine.push_back({{g.rect.x1, g.rect.x2, g.rect.y1, g.rect.y2}, g.centers, 0.0});
    }
    std::sort(mine.begin(), mine.end());
    for (std::size_t i = 0; i < mine.size(); ++i) {
      EXPECT_EQ(mine[i].rect, expected[i].rect) << "trial " << trial;
      EXPECT_EQ(mine[i].centers, expected[i].centers) << "trial " << trial;
    }
    for (std::size_t i = 1; i < got.size(); ++i) EXPECT_GE(got[i - 1].mean_center_score, got[i].mean_center_score);
    if (!got.empty()) { EXPECT_TRUE(got.front().primary); }
  }
}

TEST(Heatmap, FindAndArgmax) {
  Heatmap map;
  map.points = {{0, 0, 1.0}, {2, 0, 5.0}, {1, 1, 5.0}};
  ASSERT_NE(map.find(1, 1), nullptr);
  EXPECT_EQ(map.find(1, 0), nullptr);
  EXPECT_EQ(map.argmax()->x, 2);
  EXPECT_EQ(Heatmap{}.argmax(), nullptr);
}

class DetectFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    SceneSpec scene;
    scene.width = scene.height = 64;
    for (int i = 0; i < 4; ++i) scene.frames.push_back({"n" + std::to_string(i), {}});
    scene.frames.push_back({"pipe", {{Category::pipe, {20, 44, 24, 44}, 1.2}}});
    const auto syn = synth_generate(scene, 3);
    for (const auto& f : syn.frames) frames_.push_back(preprocess(f, {}));
    ReservoirConfig rc;
    rc.n = 8;
    rc.lambda = 1.0;
    weights_.emplace(build_reservoir(rc));
    bank_.emplace(build_bank(std::span(frames_).first(4), *weights_, {12, 12, 6}, 1.0));
  }
  static std::vector<BScanFrame> frames_;
  static std::optional<ReservoirWeights> weights_;
  static std::optional<FeatureBank> bank_;
};
std::vector<BScanFrame> DetectFixture::frames_;
std::optional<ReservoirWeights> DetectFixture::weights_;
std::optional<FeatureBank> DetectFixture::bank_;

TEST_F(DetectFixture, ScoresEveryFittingCentreOfCandidate) {
  const Region cand{0, 20, 30, 40};
  const auto map = score_candidate_region(frames_[4], cand, *bank_, *weights_, bank_->spec(), 1.0, 2);
  for (const auto& p : map.points) {
    EXPECT_TRUE(cand.contains(p.x, p.y));
    EXPECT_TRUE(patch_around(p.x, p.y, bank_->spec()).inside(64, 64));
    EXPECT_EQ((p.x - cand.x1) % 2, 0);
  }
  const auto* p = map.find(10, 30);
  ASSERT_NE(p, nullptr);
  const auto f = fit_patch(frames_[4].view(patch_around(10, 30, bank_->spec())), *weights_, 1.0);
  EXPECT_EQ(p->score, anomaly_score(f, *bank_));
  EXPECT_EQ(map.find(2, 30), nullptr);  // window would leave the frame
}

TEST_F(DetectFixture, EndToEndOnPipe) {
  PromptSet prompts{{{32, 34}, {30, 30}}, {{5, 55}}};
  DetectConfig cfg;
  cfg.tol = 0.25;
  const auto r = detect(frames_[4], prompts, *bank_, *weights_, cfg);
  EXPECT_EQ(r.status, DetectStatus::ok);
  ASSERT_TRUE(r.candidate);
  EXPECT_EQ(r.beta, *bank_->beta());
  EXPECT_EQ(r.fingerprint, weights_->fingerprint());
  EXPECT_EQ(r.segmenter, "region_grow");
  ASSERT_FALSE(r.finals.empty());
  EXPECT_TRUE(r.finals.front().primary);
  ASSERT_TRUE(r.finals.front().feature);
  EXPECT_EQ(r.finals.front().feature->length(), 17);
  for (const auto& f : r.finals) EXPECT_TRUE(f.rect.inside(64, 64));

  // Identical inputs, identical output.
  const auto again = detect(frames_[4], prompts, *bank_, *weights_, cfg);
  ASSERT_EQ(again.heatmap.points.size(), r.heatmap.points.size());
  for (std::size_t i = 0; i < r.heatmap.points.size(); ++i)
    EXPECT_EQ(again.heatmap.points[i].score, r.heatmap.points[i].score);
}

TEST_F(DetectFixture, NoPositiveMeansNoCandidate) {
  const auto r = detect(frames_[4], {}, *bank_, *weights_);
  EXPECT_EQ(r.status, DetectStatus::no_candidate);
  EXPECT_TRUE(r.finals.empty());
}

TEST_F(DetectFixture, BetaOverrideControlsFinals) {
  PromptSet prompts{{{32, 34}}, {}};
  DetectConfig cfg;
  cfg.tol = 0.25;
  cfg.beta = 1e9;
  EXPECT_TRUE(detect(frames_[4], prompts, *bank_, *weights_, cfg).finals.empty());
  cfg.beta = -1.0;
  const auto all = detect(frames_[4], prompts, *bank_, *weights_, cfg);
  ASSERT_EQ(all.finals.size(), 1u);  // every centre is hot, so one merged block
}

TEST_F(DetectFixture, RefusesMismatchedReservoir) {
  ReservoirConfig other;
  other.n = 8;
  other.seed = 1234;
  EXPECT_THROW(detect(frames_[4], {{{32, 34}}, {}}, *bank_, build_reservoir(other)), Error);
}

TEST_F(DetectFixture, ExternalMask) {
  const fs::path dir = fs::temp_directory_path() / "ressam_test_masks";
  fs::create_directories(dir);
  Gray8Image img{64, 64, std::vector<std::uint8_t>(64 * 64, 0)};
  for (int y = 26; y <= 40; ++y)
    for (int x = 22; x <= 42; ++x) img.pixels[static_cast<std::size_t>(y) * 64 + x] = 255;
  write_file_bytes(dir / "pipe.pgm", encode_pgm(img));
  DetectConfig cfg;
  cfg.external_mask_dir = dir;
  const auto r = detect(frames_[4], {}, *bank_, *weights_, cfg);
  EXPECT_EQ(r.segmenter, "external");
  ASSERT_TRUE(r.candidate);
  EXPECT_EQ(*r.candidate, (Region{22, 42, 26, 40}));
  img.width = 32;
  img.pixels.resize(32 * 64);
  write_file_bytes(dir / "pipe.pgm", encode_pgm(img));
  EXPECT_THROW(detect(frames_[4], {}, *bank_, *weights_, cfg), Error);
}
