#ifndef RESSAM_REPORT_HPP
#define RESSAM_REPORT_HPP

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "ressam/categorizer.hpp"
#include "ressam/detector.hpp"
#include "ressam/eval.hpp"
#include "ressam/preprocess.hpp"

// JSON views of results. Keys keep insertion order so equal inputs give
// byte-identical text.

namespace ressam {

using Json = nlohmann::ordered_json;

inline std::string dump(const Json& j) { return j.dump(2) + "\n"; }

inline Json to_json(const Region& r) { return Json{{"x1", r.x1}, {"x2", r.x2}, {"y1", r.y1}, {"y2", r.y2}}; }

inline Region region_from_json(const Json& j) {
  return {j.at("x1").get<int>(), j.at("x2").get<int>(), j.at("y1").get<int>(), j.at("y2").get<int>()};
}

inline Json to_json(const ReservoirConfig& c) {
  // Lambda belongs to the readout fit and is echoed beside the patch spec.
  return Json{{"n", c.n}, {"rho", c.rho}, {"input_scale", c.input_scale}, {"seed", c.seed}};
}

inline Json to_json(const PatchSpec& s) {
  return Json{{"win_x", s.win_x}, {"win_y", s.win_y}, {"stride", s.stride}};
}

inline Json to_json(const PreprocessConfig& c) {
  Json order = Json::array();
  for (auto s : c.order) order.push_back(to_string(s));
  Json j{{"order", order}, {"median_k", c.median_k},
         {"gain_profile", c.gain_profile == GainProfile::linear ? "linear" : "exponential"}};
  j["surface_rows"] = c.surface_rows ? Json(*c.surface_rows) : Json(nullptr);
  j["gain_rate"] = c.gain_rate ? Json(*c.gain_rate) : Json(nullptr);
  return j;
}

inline Json to_json(const ThresholdRule& r) {
  return Json{{"method", r.method == ThresholdMethod::quantile ? "quantile" : "mean_plus_k_sigma"}, {"param", r.param}};
}

inline Json to_json(const DetectConfig& c) {
  Json j{{"tol", c.tol}, {"smooth_k", c.smooth_k}, {"score_stride", c.score_stride}};
  j["beta_override"] = c.beta ? Json(*c.beta) : Json(nullptr);
  j["external_masks"] = c.external_mask_dir ? Json(c.external_mask_dir->generic_string()) : Json(nullptr);
  j["region_features"] = c.region_features;
  j["region_lambda"] = c.region_lambda ? Json(*c.region_lambda) : Json(nullptr);
  return j;
}

inline Json points_json(const std::vector<Point>& pts) {
  Json a = Json::array();
  for (const auto& p : pts) a.push_back(Json::array({p.x, p.y}));
  return a;
}

inline Json feature_json(const DynamicFeature& f) {
  Json a = Json::array();
  for (Eigen::Index i = 0; i < f.coeffs.size(); ++i) a.push_back(f.coeffs[i]);
  return a;
}

/// `preprocess` echoes how the caller prepared the frame, when it did.
inline Json to_json(const DetectionResult& r, const std::optional<PreprocessConfig>& preprocess = std::nullopt) {
  Json j;
  j["frame_id"] = r.frame_id;
  j["width"] = r.frame_width;
  j["height"] = r.frame_height;
  j["status"] = r.status == DetectStatus::ok ? "ok" : "no_candidate";
  j["message"] = r.message;
  j["prompts"] = Json{{"positives", points_json(r.prompts.positives)}, {"negatives", points_json(r.prompts.negatives)}};
  j["candidate"] = r.candidate ? to_json(*r.candidate) : Json(nullptr);
  Json points = Json::array();
  for (const auto& p : r.heatmap.points) points.push_back(Json::array({p.x, p.y, p.score}));
  j["heatmap"] = Json{{"points", points}};
  Json finals = Json::array();
  for (const auto& f : r.finals) {
    Json e{{"rect", to_json(f.rect)},
           {"confidence", f.confidence},
           {"mean_center_score", f.mean_center_score},
           {"centers", f.centers},
           {"primary", f.primary}};
    e["feature"] = f.feature ? feature_json(*f.feature) : Json(nullptr);
    finals.push_back(e);
  }
  j["finals"] = finals;
  j["beta"] = r.beta;
  Json config{{"segmenter", r.segmenter},
              {"detect", to_json(r.config)},
              {"patch", to_json(r.spec)},
              {"lambda", r.lambda},
              {"reservoir", to_json(r.reservoir)}};
  config["preprocess"] = preprocess ? to_json(*preprocess) : Json(nullptr);
  j["config"] = config;
  j["fingerprint"] = hex64(r.fingerprint);
  return j;
}

/// A final region read back from a result document.
struct StoredRegion {
  std::string frame_id;
  Region rect;
  bool primary = false;
  std::optional<DynamicFeature> feature;
  std::string fingerprint;
};

inline std::vector<StoredRegion> stored_regions(const Json& result) {
  std::vector<StoredRegion> out;
  const std::string frame_id = result.at("frame_id").get<std::string>();
  const std::string fp = result.at("fingerprint").get<std::string>();
  for (const auto& f : result.at("finals")) {
    StoredRegion s{frame_id, region_from_json(f.at("rect")), f.at("primary").get<bool>(), std::nullopt, fp};
    if (!f.at("feature").is_null()) {
      const auto v = f.at("feature").get<std::vector<double>>();
      DynamicFeature feat;
      feat.coeffs = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
      s.feature = std::move(feat);
    }
    out.push_back(std::move(s));
  }
  return out;
}

inline Json matrix_json(const Eigen::MatrixXd& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

struct ClusterMetrics {
  std::size_t labelled = 0;
  double accuracy = 0.0;
  double ari = 0.0;
  double nmi = 0.0;
};

/// `truth` holds a category index per region, or -1 when none applies;
/// metrics cover the labelled regions only.
inline Json clusters_json(const std::vector<StoredRegion>& regions, const ClusterAssignment& a,
                          const std::string& algo, const Json& params, const std::optional<std::vector<int>>& truth,
                          const std::optional<ClusterMetrics>& metrics) {
  Json j;
  j["algo"] = algo;
  j["k"] = a.k;
  j["params"] = params;
  j["fingerprint"] = regions.empty() ? Json(nullptr) : Json(regions.front().fingerprint);
  Json rs = Json::array();
  for (std::size_t i = 0; i < regions.size(); ++i) {
    Json e{{"frame_id", regions[i].frame_id}, {"rect", to_json(regions[i].rect)}, {"primary", regions[i].primary},
           {"cluster", a.labels[i]}};
    if (truth) {
      e["truth"] = (*truth)[i] >= 0 ? Json(std::string(to_string(kAllCategories[(*truth)[i]]))) : Json(nullptr);
    }
    rs.push_back(e);
  }
  j["regions"] = rs;
  j["centroids"] = matrix_json(a.centroids);
  j["memberships"] = a.memberships ? matrix_json(*a.memberships) : Json(nullptr);
  j["inertia"] = a.inertia;
  if (metrics) {
    j["metrics"] = Json{{"labelled", metrics->labelled},
                        {"accuracy", metrics->accuracy},
                        {"ari", metrics->ari},
                        {"nmi", metrics->nmi}};
  } else {
    j["metrics"] = nullptr;
  }
  return j;
}

struct CategorizeOptions {
  std::string algo = "ac";  // kmeans | ac | fcm
  int k = 5;
  Linkage linkage = Linkage::average;
  double fuzzifier = 2.0;
  std::uint64_t seed = 0;
  bool standardize = true;
  bool primary_only = false;
};

/// Category of the same-frame truth overlapping `r` the most, or -1.
inline int truth_label(const std::string& frame_id, const Region& r, const std::vector<GroundTruthRegion>& truths) {
  int best = -1;
  double best_iou = 0.0;
  for (const auto& t : truths) {
    if (t.frame_id != frame_id) continue;
    const double v = iou(r, t.rect);
    if (v > best_iou) {
      best_iou = v;
      best = category_index(t.category);
    }
  }
  return best;
}

/// Clusters every stored region that carries a feature. Shared by the CLI
/// and the service so both emit the same document.
inline Json categorize_regions(std::vector<StoredRegion> regions, const CategorizeOptions& opt,
                               const std::optional<std::vector<GroundTruthRegion>>& truths) {
  std::erase_if(regions, [&](const StoredRegion& s) { return !s.feature || (opt.primary_only && !s.primary); });
  if (regions.empty()) throw Error("no region features to cluster");
  for (const auto& s : regions) {
    if (s.fingerprint != regions.front().fingerprint) throw Error("results come from different reservoirs");
    if (s.feature->length() != regions.front().feature->length()) throw Error("region features differ in length");
  }
  Eigen::MatrixXd x(static_cast<Eigen::Index>(regions.size()), regions.front().feature->length());
  for (std::size_t i = 0; i < regions.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = regions[i].feature->coeffs.transpose();
  }
  if (opt.standardize) x = standardize(x);
  ClusterAssignment a;
  Json params{{"standardize", opt.standardize}, {"primary_only", opt.primary_only}};
  if (opt.algo == "kmeans") {
    a = kmeans(x, opt.k, opt.seed);
    params["seed"] = opt.seed;
  } else if (opt.algo == "ac") {
    a = agglomerative(x, opt.k, opt.linkage);
    params["linkage"] = to_string(opt.linkage);
  } else if (opt.algo == "fcm") {
    a = fuzzy_cmeans(x, opt.k, opt.fuzzifier, 1e-5, opt.seed);
    params["m"] = opt.fuzzifier;
    params["seed"] = opt.seed;
  } else {
    throw Error("unknown clustering algorithm '" + opt.algo + "', expected kmeans, ac or fcm");
  }
  std::optional<std::vector<int>> labels;
  std::optional<ClusterMetrics> metrics;
  if (truths) {
    labels.emplace();
    std::vector<int> pred, truth;
    for (std::size_t i = 0; i < regions.size(); ++i) {
      labels->push_back(truth_label(regions[i].frame_id, regions[i].rect, *truths));
      if (labels->back() >= 0) {
        pred.push_back(a.labels[i]);
        truth.push_back(labels->back());
      }
    }
    if (truth.size() >= 2) {
      metrics = ClusterMetrics{truth.size(), clustering_accuracy(pred, truth), ari(pred, truth), nmi(pred, truth)};
    }
  }
  return clusters_json(regions, a, opt.algo, params, labels, metrics);
}

inline Json to_json(const ExperimentConfig& c) {
  return Json{{"preprocess", c.apply_preprocess ? to_json(c.preprocess) : Json(nullptr)},
              {"reservoir", to_json(c.reservoir)},
              {"patch", to_json(c.spec)},
              {"lambda", c.reservoir.lambda},
              {"bank",
               Json{{"threshold", to_json(c.bank.threshold)},
                    {"holdout", c.bank.holdout == Holdout::self ? "self" : "same_frame"},
                    {"coreset_size", c.bank.coreset_size}}},
              {"detect", to_json(c.detect)},
              {"negative_margin", c.negative_margin},
              {"iou_threshold", c.iou_threshold},
              {"primary_only", c.primary_only},
              {"categorize", c.categorize},
              {"clusters", c.clusters},
              {"linkage", to_string(c.linkage)},
              {"standardize", c.standardize}};
}

inline Json to_json(const EvalReport& r) {
  Json j;
  j["seed"] = r.seed;
  j["fingerprint"] = hex64(r.fingerprint);
  j["config"] = to_json(r.config);
  j["bank"] = Json{{"frames", r.bank_frames}, {"size", r.bank_size}, {"beta", r.beta}};
  j["auc_unit"] = "heatmap point vs ground-truth rectangle membership";
  Json configs = Json::array();
  for (const auto& c : r.configs) {
    Json records = Json::array();
    for (const auto& m : c.detection.records) {
      records.push_back(Json{{"frame_id", m.frame_id},
                             {"rect", to_json(m.rect)},
                             {"score", m.score},
                             {"iou", m.iou},
                             {"correct", m.correct}});
    }
    Json e{{"prompts", to_string(c.prompts)}};
    e["auc"] = c.auc ? Json(*c.auc) : Json(nullptr);
    e["f1"] = c.detection.f1;
    e["precision"] = c.detection.precision;
    e["recall"] = c.detection.recall;
    e["tp"] = c.detection.tp;
    e["fp"] = c.detection.fp;
    e["fn"] = c.detection.fn;
    e["evaluated"] = c.evaluated;
    e["skipped"] = c.skipped;
    e["heatmap_points"] = c.heatmap_points;
    e["records"] = records;
    configs.push_back(e);
  }
  j["configs"] = configs;
  if (r.categorization) {
    const auto& cat = *r.categorization;
    Json regions = Json::array();
    for (std::size_t i = 0; i < cat.regions.size(); ++i) {
      regions.push_back(Json{{"frame_id", cat.regions[i].frame_id},
                             {"rect", to_json(cat.regions[i].region)},
                             {"truth", std::string(to_string(kAllCategories[cat.truth[i]]))},
                             {"cluster", cat.assignment.labels[i]}});
    }
    j["categorization"] = Json{{"prompts", to_string(cat.source)},
                               {"algo", "ac"},
                               {"k", cat.assignment.k},
                               {"accuracy", cat.accuracy},
                               {"ari", cat.ari},
                               {"nmi", cat.nmi},
                               {"regions", regions}};
  } else {
    j["categorization"] = nullptr;
  }
  return j;
}

}  // namespace ressam

#endif
