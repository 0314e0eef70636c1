#ifndef RESSAM_EVAL_HPP
#define RESSAM_EVAL_HPP

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ressam/bank.hpp"
#include "ressam/categorizer.hpp"
#include "ressam/detector.hpp"
#include "ressam/frame.hpp"
#include "ressam/preprocess.hpp"
#include "ressam/reservoir.hpp"
#include "ressam/rng.hpp"
#include "ressam/segmenter.hpp"

namespace ressam {

/// Intersection over union with inclusive pixel bounds.
inline double iou(const Region& a, const Region& b) {
  const long long iw = std::min(a.x2, b.x2) - std::max(a.x1, b.x1) + 1;
  const long long ih = std::min(a.y2, b.y2) - std::max(a.y1, b.y1) + 1;
  if (iw <= 0 || ih <= 0) return 0.0;
  const long long inter = iw * ih;
  return static_cast<double>(inter) / static_cast<double>(a.area() + b.area() - inter);
}

struct Detection {
  std::string frame_id;
  Region rect;
  double score = 0.0;
};

struct MatchRecord {
  std::string frame_id;
  Region rect;
  double score = 0.0;
  double iou = 0.0;  // against the matched truth, else the best truth in the frame
  bool correct = false;
};

struct F1Result {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::vector<MatchRecord> records;  // in matching order
};

/// Greedy matching by descending score. Each detection takes the unmatched
/// truth of its frame with the highest IoU, if that IoU exceeds `thresh`.
/// No truths and no detections scores 1.
inline F1Result detection_f1(std::span<const Detection> detections, std::span<const GroundTruthRegion> truths,
                             double thresh = 0.5) {
  F1Result out;
  std::vector<std::size_t> order(detections.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return detections[a].score > detections[b].score; });
  std::vector<bool> taken(truths.size(), false);
  for (std::size_t d : order) {
    const Detection& det = detections[d];
    MatchRecord rec{det.frame_id, det.rect, det.score, 0.0, false};
    std::optional<std::size_t> best;
    double best_iou = -1.0;
    for (std::size_t t = 0; t < truths.size(); ++t) {
      if (truths[t].frame_id != det.frame_id) continue;
      const double v = iou(det.rect, truths[t].rect);
      rec.iou = std::max(rec.iou, v);
      if (!taken[t] && v > best_iou) {
        best_iou = v;
        best = t;
      }
    }
    if (best && best_iou > thresh) {
      taken[*best] = true;
      rec.iou = best_iou;
      rec.correct = true;
      ++out.tp;
    } else {
      ++out.fp;
    }
    out.records.push_back(std::move(rec));
  }
  out.fn = truths.size() - out.tp;
  if (detections.empty() && truths.empty()) {
    out.precision = out.recall = out.f1 = 1.0;
    return out;
  }
  out.precision = detections.empty() ? 0.0 : static_cast<double>(out.tp) / static_cast<double>(detections.size());
  out.recall = truths.empty() ? 0.0 : static_cast<double>(out.tp) / static_cast<double>(truths.size());
  const double denom = out.precision + out.recall;
  out.f1 = denom > 0 ? 2.0 * out.precision * out.recall / denom : 0.0;
  return out;
}

/// Mann-Whitney AUC with midranks for ties.
inline double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("auroc: scores and labels differ in length");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] != 0 && labels[order[k]] != 1) throw Error("auroc: labels must be 0 or 1");
      if (labels[order[k]] == 1) {
        rank_sum += midrank;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw Error("auroc needs both positive and negative samples");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

struct PromptConfig {
  int n_pos = 5;
  int n_neg = 5;

  void validate() const {
    if (n_pos < 1) throw Error("prompt config needs at least one positive");
    if (n_neg < 0) throw Error("prompt config negative count must be >= 0");
  }
  friend bool operator==(const PromptConfig&, const PromptConfig&) = default;
};

inline std::string to_string(const PromptConfig& c) { return std::to_string(c.n_pos) + "/" + std::to_string(c.n_neg); }

inline PromptConfig parse_prompt_config(std::string_view text) {
  const auto slash = text.find('/');
  PromptConfig c;
  auto parse = [](std::string_view s, int& v) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    return ec == std::errc() && ptr == s.data() + s.size();
  };
  if (slash == std::string_view::npos || !parse(text.substr(0, slash), c.n_pos) ||
      !parse(text.substr(slash + 1), c.n_neg)) {
    throw Error("bad prompt config '" + std::string(text) + "', expected POS/NEG");
  }
  c.validate();
  return c;
}

inline std::vector<PromptConfig> parse_prompt_configs(std::string_view text) {
  std::vector<PromptConfig> out;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(',', start);
    if (end == std::string_view::npos) end = text.size();
    if (end > start) out.push_back(parse_prompt_config(text.substr(start, end - start)));
    start = end + 1;
  }
  if (out.empty()) throw Error("no prompt configs given");
  return out;
}

/// Positives uniform inside `target`; negatives uniform over pixels at least
/// `margin` away from every rectangle in `avoid`. Empty when no pixel
/// qualifies for a requested negative.
inline std::optional<PromptSet> sample_prompts(const Region& target, std::span<const Region> avoid, int width,
                                               int height, PromptConfig config, int margin, Rng& rng) {
  config.validate();
  PromptSet out;
  for (int i = 0; i < config.n_pos; ++i) {
    out.positives.push_back({rng.uniform_int(target.x1, target.x2), rng.uniform_int(target.y1, target.y2)});
  }
  if (config.n_neg == 0) return out;
  std::vector<Point> allowed;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const bool near = std::any_of(avoid.begin(), avoid.end(), [&](const Region& r) {
        return x >= r.x1 - margin && x <= r.x2 + margin && y >= r.y1 - margin && y <= r.y2 + margin;
      });
      if (!near) allowed.push_back({x, y});
    }
  }
  if (allowed.empty()) return std::nullopt;
  for (int i = 0; i < config.n_neg; ++i) out.negatives.push_back(allowed[rng.below(allowed.size())]);
  return out;
}

struct Dataset {
  std::vector<BScanFrame> frames;
  std::vector<GroundTruthRegion> truths;
};

/// `count` frame ids drawn without replacement from frames carrying no truth,
/// returned sorted.
inline std::vector<std::string> choose_bank_frames(const Dataset& data, std::size_t count, std::uint64_t seed) {
  std::set<std::string> labelled;
  for (const auto& t : data.truths) labelled.insert(t.frame_id);
  std::vector<std::string> pool;
  for (const auto& f : data.frames) {
    if (!labelled.contains(f.id)) pool.push_back(f.id);
  }
  std::sort(pool.begin(), pool.end());
  if (pool.size() < count) {
    throw Error("dataset has " + std::to_string(pool.size()) + " non-target frames, " + std::to_string(count) +
                " requested for the bank");
  }
  Rng rng(mix_seed(seed, 0xBA4C));
  shuffle(pool, rng);
  pool.resize(count);
  std::sort(pool.begin(), pool.end());
  return pool;
}

struct ExperimentConfig {
  PreprocessConfig preprocess;
  bool apply_preprocess = true;
  ReservoirConfig reservoir;
  PatchSpec spec;
  BankOptions bank;
  DetectConfig detect;
  int negative_margin = 5;
  double iou_threshold = 0.5;
  bool primary_only = true;  // one detection per prompt set
  bool categorize = true;
  int clusters = 5;
  Linkage linkage = Linkage::average;
  bool standardize = true;
};

struct ConfigReport {
  PromptConfig prompts;
  std::optional<double> auc;  // per heatmap point vs truth membership
  std::size_t heatmap_points = 0;
  F1Result detection;
  std::size_t evaluated = 0;
  std::vector<std::string> skipped;
  std::vector<DetectionResult> results;  // one per evaluated truth, in evaluation order
  std::vector<std::size_t> result_truth;  // truth index per result
};

struct CategorizationReport {
  PromptConfig source;
  std::vector<RegionFeature> regions;
  std::vector<int> truth;  // category index per region
  ClusterAssignment assignment;
  double accuracy = 0.0;
  double ari = 0.0;
  double nmi = 0.0;
};

struct EvalReport {
  std::uint64_t seed = 0;
  ExperimentConfig config;
  std::uint64_t fingerprint = 0;
  std::vector<std::string> bank_frames;
  std::size_t bank_size = 0;
  double beta = 0.0;
  std::vector<ConfigReport> configs;
  std::optional<CategorizationReport> categorization;
};

/// Category index as used for clustering truth labels.
inline int category_index(Category c) {
  for (std::size_t i = 0; i < std::size(kAllCategories); ++i) {
    if (kAllCategories[i] == c) return static_cast<int>(i);
  }
  return -1;
}

/// Clusters the region features of each result's primary region against the
/// category of the truth it was prompted on.
inline CategorizationReport categorize_primaries(const ConfigReport& run, std::span<const GroundTruthRegion> truths,
                                                 int k, Linkage linkage, bool standardize_features) {
  CategorizationReport rep;
  rep.source = run.prompts;
  for (std::size_t i = 0; i < run.results.size(); ++i) {
    const DetectionResult& r = run.results[i];
    if (r.finals.empty() || !r.finals.front().feature) continue;
    rep.regions.push_back({r.frame_id, r.finals.front().rect, *r.finals.front().feature});
    rep.truth.push_back(category_index(truths[run.result_truth[i]].category));
  }
  if (rep.regions.size() < static_cast<std::size_t>(k)) {
    throw Error("only " + std::to_string(rep.regions.size()) + " regions available for " + std::to_string(k) +
                " clusters");
  }
  Eigen::MatrixXd x = stack_features(rep.regions);
  if (standardize_features) x = standardize(x);
  rep.assignment = agglomerative(x, k, linkage);
  rep.accuracy = clustering_accuracy(rep.assignment.labels, rep.truth);
  rep.ari = ari(rep.assignment.labels, rep.truth);
  rep.nmi = nmi(rep.assignment.labels, rep.truth);
  return rep;
}

using ProgressFn = std::function<void(const std::string&)>;

/// Builds the bank from `bank_frames`, then prompts and detects every
/// labelled frame outside the bank once per prompt config.
inline EvalReport run_experiment(const Dataset& data, const std::vector<std::string>& bank_frames,
                                 std::span<const PromptConfig> configs, const ExperimentConfig& cfg,
                                 std::uint64_t seed, const ProgressFn& progress = {}) {
  auto say = [&](const std::string& s) {
    if (progress) progress(s);
  };
  if (configs.empty()) throw Error("no prompt configs given");
  for (const auto& c : configs) c.validate();

  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < data.frames.size(); ++i) {
    if (!index.emplace(data.frames[i].id, i).second) throw Error("duplicate frame id '" + data.frames[i].id + "'");
  }
  const std::set<std::string> bank_ids(bank_frames.begin(), bank_frames.end());
  for (const auto& t : data.truths) {
    if (!index.contains(t.frame_id)) throw Error("truth refers to unknown frame '" + t.frame_id + "'");
    if (bank_ids.contains(t.frame_id)) throw Error("bank frame '" + t.frame_id + "' carries ground truth");
  }

  std::vector<BScanFrame> frames;
  frames.reserve(data.frames.size());
  for (const auto& f : data.frames) frames.push_back(cfg.apply_preprocess ? preprocess(f, cfg.preprocess) : f);

  std::vector<BScanFrame> bank_input;
  for (const auto& id : bank_frames) {
    auto it = index.find(id);
    if (it == index.end()) throw Error("bank frame '" + id + "' not in dataset");
    bank_input.push_back(frames[it->second]);
  }

  EvalReport report;
  report.seed = seed;
  report.config = cfg;
  report.bank_frames = bank_frames;
  const ReservoirWeights w = build_reservoir(cfg.reservoir);
  report.fingerprint = w.fingerprint();
  say("building bank from " + std::to_string(bank_input.size()) + " frames");
  const FeatureBank bank = build_bank(bank_input, w, cfg.spec, cfg.reservoir.lambda, cfg.bank);
  report.bank_size = bank.size();
  report.beta = cfg.detect.beta.value_or(bank.beta().value_or(0.0));

  // Evaluation set: labelled frames in dataset order, each truth separately.
  std::vector<std::size_t> eval_truths;
  std::set<std::string> eval_frames;
  for (std::size_t t = 0; t < data.truths.size(); ++t) {
    eval_truths.push_back(t);
    eval_frames.insert(data.truths[t].frame_id);
  }
  std::stable_sort(eval_truths.begin(), eval_truths.end(), [&](std::size_t a, std::size_t b) {
    return index.at(data.truths[a].frame_id) < index.at(data.truths[b].frame_id);
  });
  for (const auto& id : bank_ids) {
    if (eval_frames.contains(id)) throw Error("bank and evaluation frames overlap at '" + id + "'");
  }

  for (std::size_t ci = 0; ci < configs.size(); ++ci) {
    ConfigReport run;
    run.prompts = configs[ci];
    std::vector<Detection> detections;
    std::vector<GroundTruthRegion> scored_truths;
    std::set<std::string> scored_frames;
    std::vector<double> point_scores;
    std::vector<int> point_labels;
    for (std::size_t ti : eval_truths) {
      const GroundTruthRegion& truth = data.truths[ti];
      const BScanFrame& frame = frames[index.at(truth.frame_id)];
      std::vector<Region> frame_truths;
      for (const auto& t : data.truths) {
        if (t.frame_id == truth.frame_id) frame_truths.push_back(t.rect);
      }
      Rng rng(mix_seed(mix_seed(seed, ti), ci));
      auto prompts = sample_prompts(truth.rect, frame_truths, frame.width(), frame.height(), configs[ci],
                                    cfg.negative_margin, rng);
      if (!prompts) {
        run.skipped.push_back(truth.frame_id);
        say("skipping " + truth.frame_id + ": no room for negative prompts");
        continue;
      }
      DetectionResult res = detect(frame, *prompts, bank, w, cfg.detect);
      ++run.evaluated;
      if (scored_frames.insert(truth.frame_id).second) {
        for (const auto& t : data.truths) {
          if (t.frame_id == truth.frame_id) scored_truths.push_back(t);
        }
      }
      for (const auto& f : res.finals) {
        detections.push_back({res.frame_id, f.rect, f.mean_center_score});
        if (cfg.primary_only) break;
      }
      for (const auto& p : res.heatmap.points) {
        point_scores.push_back(p.score);
        point_labels.push_back(std::any_of(frame_truths.begin(), frame_truths.end(),
                                           [&](const Region& r) { return r.contains(p.x, p.y); })
                                   ? 1
                                   : 0);
      }
      run.results.push_back(std::move(res));
      run.result_truth.push_back(ti);
    }
    run.detection = detection_f1(detections, scored_truths, cfg.iou_threshold);
    run.heatmap_points = point_scores.size();
    const bool both = std::count(point_labels.begin(), point_labels.end(), 1) > 0 &&
                      std::count(point_labels.begin(), point_labels.end(), 0) > 0;
    if (both) run.auc = auroc(point_scores, point_labels);
    say("prompts " + to_string(configs[ci]) + ": F1 " + std::to_string(run.detection.f1));
    report.configs.push_back(std::move(run));
  }

  if (cfg.categorize && cfg.detect.region_features) {
    report.categorization =
        categorize_primaries(report.configs.front(), data.truths, cfg.clusters, cfg.linkage, cfg.standardize);
  }
  return report;
}

}  // namespace ressam

#endif
