#ifndef RESSAM_DETECTOR_HPP
#define RESSAM_DETECTOR_HPP

#include <algorithm>
#include <filesystem>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "ressam/bank.hpp"
#include "ressam/categorizer.hpp"
#include "ressam/frame.hpp"
#include "ressam/parallel.hpp"
#include "ressam/reservoir.hpp"
#include "ressam/segmenter.hpp"

namespace ressam {

/// Window owned by a centre: [x - floor(X/2), x + ceil(X/2) - 1], same for y.
inline Region patch_around(int cx, int cy, const PatchSpec& spec) {
  return {cx - spec.win_x / 2, cx + (spec.win_x + 1) / 2 - 1, cy - spec.win_y / 2, cy + (spec.win_y + 1) / 2 - 1};
}

struct ScoredPoint {
  int x = 0;
  int y = 0;
  double score = 0.0;
};

/// Anomaly likelihood at each scored centre, in scan order.
struct Heatmap {
  Region region;
  std::vector<ScoredPoint> points;

  const ScoredPoint* find(int x, int y) const {
    auto it = std::lower_bound(points.begin(), points.end(), std::pair{y, x}, [](const ScoredPoint& p, auto key) {
      return std::pair{p.y, p.x} < key;
    });
    return it != points.end() && it->x == x && it->y == y ? &*it : nullptr;
  }

  /// First maximum in scan order.
  const ScoredPoint* argmax() const {
    auto it = std::max_element(points.begin(), points.end(),
                               [](const ScoredPoint& a, const ScoredPoint& b) { return a.score < b.score; });
    return it == points.end() ? nullptr : &*it;
  }
};

/// Scores every `stride`-th point of `candidate` whose centred patch fits
/// inside the frame; other points are left out of the heatmap.
inline Heatmap score_candidate_region(const BScanFrame& frame, const Region& candidate, const FeatureBank& bank,
                                      const ReservoirWeights& w, const PatchSpec& spec, double lambda,
                                      int stride = 1) {
  if (!candidate.inside(frame.width(), frame.height())) {
    throw Error("candidate region lies outside frame '" + frame.id + "'");
  }
  if (bank.fingerprint() != w.fingerprint()) throw Error("bank and reservoir fingerprints differ");
  if (stride < 1) throw Error("scoring stride must be >= 1");
  spec.validate();
  Heatmap map;
  map.region = candidate;
  for (int y = candidate.y1; y <= candidate.y2; y += stride) {
    for (int x = candidate.x1; x <= candidate.x2; x += stride) {
      if (patch_around(x, y, spec).inside(frame.width(), frame.height())) map.points.push_back({x, y, 0.0});
    }
  }
  parallel_for(map.points.size(), [&](std::size_t i) {
    auto& p = map.points[i];
    const DynamicFeature f = fit_patch(frame.view(patch_around(p.x, p.y, spec)), w, lambda);
    p.score = anomaly_score(f, bank);
  });
  return map;
}

struct FinalRegion {
  Region rect;
  double mean_center_score = 0.0;  // over the component's anomalous centres
  double confidence = 0.0;         // mean heatmap score inside rect
  std::size_t centers = 0;
  bool primary = false;
  std::optional<DynamicFeature> feature;  // region refit, filled by detect()
};

/// Anomalous centres expand to their windows; windows that overlap or touch
/// (including diagonally) are merged, and each group becomes its bounding
/// rectangle. Sorted by descending mean centre score; the first is primary.
inline std::vector<FinalRegion> merge_anomalous_patches(const Heatmap& heatmap, double beta, const PatchSpec& spec,
                                                        int frame_width, int frame_height) {
  std::vector<const ScoredPoint*> hot;
  for (const auto& p : heatmap.points) {
    if (classify(p.score, beta) == Label::abnormal) hot.push_back(&p);
  }
  if (hot.empty()) return {};
  const Region frame_box{0, frame_width - 1, 0, frame_height - 1};
  auto window = [&](const ScoredPoint* p) {
    Region r = patch_around(p->x, p->y, spec);
    return Region{std::max(r.x1, frame_box.x1), std::min(r.x2, frame_box.x2), std::max(r.y1, frame_box.y1),
                  std::min(r.y2, frame_box.y2)};
  };
  std::vector<Region> rects;
  rects.reserve(hot.size());
  for (const auto* p : hot) rects.push_back(window(p));

  std::vector<std::size_t> parent(hot.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto root = [&](std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  };
  // Sweep in x1 order; two windows touch when their gaps are <= 0 on both axes.
  std::vector<std::size_t> order(hot.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rects[a].x1 < rects[b].x1; });
  int widest = 0;
  for (const auto& r : rects) widest = std::max(widest, r.width());
  for (std::size_t oi = 0; oi < order.size(); ++oi) {
    const Region& a = rects[order[oi]];
    for (std::size_t oj = oi + 1; oj < order.size(); ++oj) {
      const Region& b = rects[order[oj]];
      if (b.x1 > a.x1 + widest) break;
      if (b.x1 <= a.x2 + 1 && a.x1 <= b.x2 + 1 && b.y1 <= a.y2 + 1 && a.y1 <= b.y2 + 1) {
        parent[root(order[oi])] = root(order[oj]);
      }
    }
  }

  std::vector<FinalRegion> out;
  std::vector<std::size_t> root_slot(hot.size(), SIZE_MAX);
  for (std::size_t i = 0; i < hot.size(); ++i) {
    const std::size_t r = root(i);
    if (root_slot[r] == SIZE_MAX) {
      root_slot[r] = out.size();
      out.push_back({rects[i], 0.0, 0.0, 0, false, std::nullopt});
    }
    FinalRegion& g = out[root_slot[r]];
    g.rect = bounding_union(g.rect, rects[i]);
    g.mean_center_score += hot[i]->score;
    ++g.centers;
  }
  for (auto& g : out) {
    g.mean_center_score /= static_cast<double>(g.centers);
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& p : heatmap.points) {
      if (g.rect.contains(p.x, p.y)) {
        sum += p.score;
        ++count;
      }
    }
    g.confidence = count ? sum / static_cast<double>(count) : g.mean_center_score;
  }
  std::sort(out.begin(), out.end(), [](const FinalRegion& a, const FinalRegion& b) {
    if (a.mean_center_score != b.mean_center_score) return a.mean_center_score > b.mean_center_score;
    return std::pair{a.rect.y1, a.rect.x1} < std::pair{b.rect.y1, b.rect.x1};
  });
  out.front().primary = true;
  return out;
}

struct DetectConfig {
  double tol = 0.15;    // region-growing tolerance, normalized units
  int smooth_k = 3;     // median pre-smoothing for region growing
  int score_stride = 1;
  std::optional<double> beta;  // overrides the bank's calibrated threshold
  std::optional<std::filesystem::path> external_mask_dir;
  bool region_features = true;  // refit each final region for categorization
  std::optional<double> region_lambda;  // ridge term for region features (default: the bank's)
};

enum class DetectStatus { ok, no_candidate };

struct DetectionResult {
  std::string frame_id;
  int frame_width = 0;
  int frame_height = 0;
  DetectStatus status = DetectStatus::ok;
  std::string message;
  PromptSet prompts;
  std::optional<Region> candidate;
  Heatmap heatmap;
  std::vector<FinalRegion> finals;
  double beta = 0.0;
  // Echo of everything that shaped the result.
  DetectConfig config;
  PatchSpec spec;
  double lambda = 0.0;
  ReservoirConfig reservoir;
  std::uint64_t fingerprint = 0;
  std::string segmenter;  // "region_grow" or "external"
};

/// Segment -> bounding rectangle -> per-point scoring -> merge.
inline DetectionResult detect(const BScanFrame& frame, const PromptSet& prompts, const FeatureBank& bank,
                              const ReservoirWeights& w, const DetectConfig& config = {}) {
  if (bank.fingerprint() != w.fingerprint()) {
    throw Error("bank reservoir " + hex64(bank.fingerprint()) + " does not match loaded reservoir " +
                hex64(w.fingerprint()));
  }
  DetectionResult res;
  res.frame_id = frame.id;
  res.frame_width = frame.width();
  res.frame_height = frame.height();
  res.prompts = prompts;
  res.config = config;
  res.spec = bank.spec();
  res.lambda = bank.lambda();
  res.reservoir = w.config();
  res.fingerprint = w.fingerprint();
  if (config.beta) {
    res.beta = *config.beta;
  } else if (bank.beta()) {
    res.beta = *bank.beta();
  } else {
    throw Error("bank carries no calibrated threshold and none was given");
  }

  Mask mask;
  if (config.external_mask_dir) {
    res.segmenter = "external";
    mask = load_external_mask(frame.id, *config.external_mask_dir / (frame.id + ".pgm"), frame.width(), frame.height());
  } else {
    res.segmenter = "region_grow";
    if (prompts.positives.empty()) {
      res.status = DetectStatus::no_candidate;
      res.message = "no positive prompt given";
      return res;
    }
    mask = region_grow(frame, prompts, config.tol, config.smooth_k);
  }
  if (mask.empty()) {
    res.status = DetectStatus::no_candidate;
    res.message = "segmentation produced no region";
    return res;
  }
  res.candidate = bounding_rect(mask);
  res.heatmap = score_candidate_region(frame, *res.candidate, bank, w, bank.spec(), bank.lambda(), config.score_stride);
  if (!res.heatmap.points.empty()) {
    res.finals = merge_anomalous_patches(res.heatmap, res.beta, bank.spec(), frame.width(), frame.height());
  }
  if (config.region_features) {
    for (auto& f : res.finals) {
      if (f.rect.width() >= 2 && f.rect.height() >= 2) {
        f.feature = fit_region_feature(frame, f.rect, w, config.region_lambda.value_or(bank.lambda())).feature;
      }
    }
  }
  return res;
}

}  // namespace ressam

#endif
