#ifndef RESSAM_BANK_HPP
#define RESSAM_BANK_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <tuple>
#include <vector>

#include "ressam/frame.hpp"
#include "ressam/parallel.hpp"
#include "ressam/reservoir.hpp"

namespace ressam {

/// Sliding window of win_x columns by win_y rows moved by `stride`.
struct PatchSpec {
  int win_x = 32;
  int win_y = 32;
  int stride = 16;

  void validate() const {
    if (win_x < 2 || win_y < 2) throw Error("patch window must be at least 2x2");
    if (stride < 1) throw Error("patch stride must be >= 1");
  }
  friend bool operator==(const PatchSpec&, const PatchSpec&) = default;
};

struct Patch {
  int x = 0;  // origin (top-left)
  int y = 0;
  Grid values;
};

inline std::size_t patch_count(int width, int height, const PatchSpec& spec) {
  if (spec.win_x > width || spec.win_y > height) return 0;
  return static_cast<std::size_t>((width - spec.win_x) / spec.stride + 1) *
         static_cast<std::size_t>((height - spec.win_y) / spec.stride + 1);
}

/// Windows fully inside the frame at origins (i*stride, j*stride), row-major.
inline std::vector<Patch> extract_patches(const BScanFrame& frame, const PatchSpec& spec) {
  spec.validate();
  if (spec.win_x > frame.width() || spec.win_y > frame.height()) {
    throw Error("patch window " + std::to_string(spec.win_x) + "x" + std::to_string(spec.win_y) +
                " does not fit frame '" + frame.id + "' of " + std::to_string(frame.width()) + "x" +
                std::to_string(frame.height()));
  }
  std::vector<Patch> out;
  out.reserve(patch_count(frame.width(), frame.height(), spec));
  for (int y = 0; y + spec.win_y <= frame.height(); y += spec.stride) {
    for (int x = 0; x + spec.win_x <= frame.width(); x += spec.stride) {
      out.push_back({x, y, frame.view({x, x + spec.win_x - 1, y, y + spec.win_y - 1})});
    }
  }
  return out;
}

struct Provenance {
  std::string frame_id;
  int x = 0;
  int y = 0;

  friend auto operator<=>(const Provenance&, const Provenance&) = default;
};

enum class ThresholdMethod : std::uint8_t { quantile = 0, mean_plus_k_sigma = 1 };

/// quantile: param is q in (0, 1]; mean_plus_k_sigma: param is k.
struct ThresholdRule {
  ThresholdMethod method = ThresholdMethod::quantile;
  double param = 0.99;
};

/// quantile returns sorted[floor(q*N)] (clamped), so at most a (1-q)
/// fraction of the scores lie strictly above the threshold.
inline double calibrate_threshold(std::span<const double> scores, ThresholdRule rule) {
  if (scores.size() < 10) {
    throw Error("threshold calibration needs at least 10 scores, got " + std::to_string(scores.size()));
  }
  for (double s : scores) {
    if (!std::isfinite(s)) throw Error("threshold calibration received a non-finite score");
  }
  if (rule.method == ThresholdMethod::quantile) {
    if (!(rule.param > 0.0 && rule.param <= 1.0)) throw Error("quantile must lie in (0, 1]");
    std::vector<double> sorted(scores.begin(), scores.end());
    std::sort(sorted.begin(), sorted.end());
    const auto n = sorted.size();
    auto idx = static_cast<std::size_t>(std::floor(rule.param * static_cast<double>(n) + 1e-9));
    return sorted[std::min(idx, n - 1)];
  }
  const double mean = std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
  double ss = 0.0;
  for (double s : scores) ss += (s - mean) * (s - mean);
  return mean + rule.param * std::sqrt(ss / static_cast<double>(scores.size()));
}

enum class Label : int { abnormal = 0, normal = 1 };

/// Strictly above beta is abnormal; a tie is normal.
inline Label classify(double score, double beta) { return score > beta ? Label::abnormal : Label::normal; }

/// Which bank entries a calibration query must not see.
enum class Holdout : std::uint8_t { self = 0, same_frame = 1 };

struct Neighbor {
  std::size_t index = 0;
  double distance = std::numeric_limits<double>::infinity();
};

/// Normal-feature bank: row-major feature matrix plus provenance.
class FeatureBank {
 public:
  static constexpr std::string_view kMagic = "RBNK";
  static constexpr std::uint16_t kVersion = 1;

  FeatureBank(std::uint64_t fingerprint, PatchSpec spec, double lambda, int dim)
      : fingerprint_(fingerprint), spec_(spec), lambda_(lambda), dim_(dim) {
    if (dim_ < 1) throw Error("bank feature dimension must be positive");
  }

  std::uint64_t fingerprint() const { return fingerprint_; }
  const PatchSpec& spec() const { return spec_; }
  double lambda() const { return lambda_; }
  int dim() const { return dim_; }
  std::size_t size() const { return provenance_.size(); }
  bool empty() const { return provenance_.empty(); }

  std::span<const double> feature(std::size_t i) const {
    return {data_.data() + i * static_cast<std::size_t>(dim_), static_cast<std::size_t>(dim_)};
  }
  const Provenance& provenance(std::size_t i) const { return provenance_[i]; }

  void add(const DynamicFeature& f, Provenance p) {
    if (f.length() != dim_) throw Error("feature length does not match bank dimension");
    if (f.reservoir != 0 && f.reservoir != fingerprint_) throw Error("feature comes from a different reservoir");
    data_.insert(data_.end(), f.coeffs.data(), f.coeffs.data() + dim_);
    provenance_.push_back(std::move(p));
  }

  const std::optional<double>& beta() const { return beta_; }
  const ThresholdRule& threshold_rule() const { return rule_; }
  Holdout holdout() const { return holdout_; }
  void set_threshold(double beta, ThresholdRule rule, Holdout holdout) {
    beta_ = beta;
    rule_ = rule;
    holdout_ = holdout;
  }

  /// Exact nearest neighbour by exhaustive scan; `skip(i)` excludes entries.
  template <typename Skip>
  Neighbor nearest(std::span<const double> query, Skip&& skip) const {
    Neighbor best;
    double best_sq = std::numeric_limits<double>::infinity();
    const auto d = static_cast<std::size_t>(dim_);
    for (std::size_t i = 0; i < size(); ++i) {
      if (skip(i)) continue;
      const double* row = data_.data() + i * d;
      double acc = 0.0;
      std::size_t k = 0;
      // Partial sums only grow, so a row can be abandoned once it passes the best.
      for (; k < d; ++k) {
        const double diff = query[k] - row[k];
        acc += diff * diff;
        if ((k & 7) == 7 && acc > best_sq) break;
      }
      if (k == d && acc < best_sq) {
        best_sq = acc;
        best.index = i;
      }
    }
    best.distance = std::sqrt(best_sq);
    return best;
  }

  Neighbor nearest(std::span<const double> query) const {
    return nearest(query, [](std::size_t) { return false; });
  }

  /// "RBNK", u16 version, u64 reservoir fingerprint, u32 win_x, win_y, stride,
  /// f64 lambda, u32 dim, u8 has_beta, f64 beta, u8 method, f64 param,
  /// u8 holdout, u64 count, then per entry: u32-length frame id, u32 x,
  /// u32 y, dim f64. Little-endian.
  std::string serialize() const {
    detail::BlobWriter w;
    w.bytes(kMagic);
    w.scalar(kVersion);
    w.scalar(fingerprint_);
    w.scalar(static_cast<std::uint32_t>(spec_.win_x));
    w.scalar(static_cast<std::uint32_t>(spec_.win_y));
    w.scalar(static_cast<std::uint32_t>(spec_.stride));
    w.scalar(lambda_);
    w.scalar(static_cast<std::uint32_t>(dim_));
    w.scalar(static_cast<std::uint8_t>(beta_.has_value()));
    w.scalar(beta_.value_or(0.0));
    w.scalar(static_cast<std::uint8_t>(rule_.method));
    w.scalar(rule_.param);
    w.scalar(static_cast<std::uint8_t>(holdout_));
    w.scalar(static_cast<std::uint64_t>(size()));
    for (std::size_t i = 0; i < size(); ++i) {
      w.str(provenance_[i].frame_id);
      w.scalar(static_cast<std::uint32_t>(provenance_[i].x));
      w.scalar(static_cast<std::uint32_t>(provenance_[i].y));
      for (double v : feature(i)) w.scalar(v);
    }
    return w.take();
  }

  static FeatureBank deserialize(std::string_view blob) {
    detail::BlobReader r(blob, "bank");
    if (r.bytes(4) != kMagic) throw Error("bank: bad magic, expected RBNK");
    const auto version = r.scalar<std::uint16_t>();
    if (version != kVersion) throw Error("bank: unsupported version " + std::to_string(version));
    const auto fp = r.scalar<std::uint64_t>();
    PatchSpec spec;
    spec.win_x = static_cast<int>(r.scalar<std::uint32_t>());
    spec.win_y = static_cast<int>(r.scalar<std::uint32_t>());
    spec.stride = static_cast<int>(r.scalar<std::uint32_t>());
    spec.validate();
    const double lambda = r.scalar<double>();
    const auto dim = static_cast<int>(r.scalar<std::uint32_t>());
    FeatureBank bank(fp, spec, lambda, dim);
    const bool has_beta = r.scalar<std::uint8_t>() != 0;
    const double beta = r.scalar<double>();
    ThresholdRule rule;
    rule.method = static_cast<ThresholdMethod>(r.scalar<std::uint8_t>());
    rule.param = r.scalar<double>();
    const auto holdout = static_cast<Holdout>(r.scalar<std::uint8_t>());
    if (has_beta) bank.set_threshold(beta, rule, holdout);
    const auto count = r.scalar<std::uint64_t>();
    DynamicFeature f;
    f.coeffs.resize(dim);
    for (std::uint64_t i = 0; i < count; ++i) {
      Provenance p;
      p.frame_id = r.str();
      p.x = static_cast<int>(r.scalar<std::uint32_t>());
      p.y = static_cast<int>(r.scalar<std::uint32_t>());
      for (int k = 0; k < dim; ++k) f.coeffs(k) = r.scalar<double>();
      bank.add(f, std::move(p));
    }
    if (!r.done()) throw Error("bank: trailing bytes after payload");
    return bank;
  }

 private:
  std::uint64_t fingerprint_;
  PatchSpec spec_;
  double lambda_;
  int dim_;
  std::vector<double> data_;
  std::vector<Provenance> provenance_;
  std::optional<double> beta_;
  ThresholdRule rule_;
  Holdout holdout_ = Holdout::same_frame;
};

/// Minimum L2 distance from `f` to the bank.
inline double anomaly_score(const DynamicFeature& f, const FeatureBank& bank) {
  if (bank.empty()) throw Error("anomaly scoring needs a non-empty feature bank");
  if (f.reservoir != bank.fingerprint()) {
    throw Error("feature reservoir " + hex64(f.reservoir) + " does not match bank reservoir " +
                hex64(bank.fingerprint()) + "; features from different reservoirs are incomparable");
  }
  if (f.length() != bank.dim()) throw Error("feature length does not match bank dimension");
  return bank.nearest({f.coeffs.data(), static_cast<std::size_t>(f.length())}).distance;
}

/// Each entry's distance to the rest of the bank, hiding what `holdout` names.
inline std::vector<double> holdout_scores(const FeatureBank& bank, Holdout holdout) {
  std::vector<double> scores(bank.size());
  parallel_for(bank.size(), [&](std::size_t i) {
    const auto& me = bank.provenance(i).frame_id;
    auto skip = [&](std::size_t j) {
      return holdout == Holdout::self ? j == i : bank.provenance(j).frame_id == me;
    };
    scores[i] = bank.nearest(bank.feature(i), skip).distance;
  });
  return scores;
}

struct BankOptions {
  ThresholdRule threshold{};
  Holdout holdout = Holdout::same_frame;
  bool calibrate = true;
  std::size_t coreset_size = 0;  // 0 keeps every feature
};

namespace detail {

/// Greedy k-center subsample; keeps the first entry then repeatedly the
/// entry farthest from everything kept so far.
inline std::vector<std::size_t> k_center(const FeatureBank& bank, std::size_t keep) {
  std::vector<std::size_t> chosen{0};
  std::vector<double> gap(bank.size(), std::numeric_limits<double>::infinity());
  while (chosen.size() < keep) {
    const auto last = bank.feature(chosen.back());
    std::size_t far = 0;
    for (std::size_t i = 0; i < bank.size(); ++i) {
      double acc = 0.0;
      const auto fi = bank.feature(i);
      for (std::size_t k = 0; k < fi.size(); ++k) acc += (fi[k] - last[k]) * (fi[k] - last[k]);
      gap[i] = std::min(gap[i], acc);
      if (gap[i] > gap[far]) far = i;
    }
    if (gap[far] == 0.0) break;
    chosen.push_back(far);
  }
  std::sort(chosen.begin(), chosen.end());
  return chosen;
}

}  // namespace detail

/// Fits every sliding-window patch of every frame. Entries are ordered by
/// (frame id, y, x) regardless of input order.
inline FeatureBank build_bank(std::span<const BScanFrame> frames, const ReservoirWeights& w, const PatchSpec& spec,
                              double lambda, const BankOptions& opts = {}) {
  if (frames.empty()) throw Error("bank requires non-target data: no frames given");
  spec.validate();
  struct Job {
    const BScanFrame* frame;
    Patch patch;
  };
  std::vector<Job> jobs;
  for (const auto& frame : frames) {
    for (auto& p : extract_patches(frame, spec)) jobs.push_back({&frame, std::move(p)});
  }
  std::sort(jobs.begin(), jobs.end(), [](const Job& a, const Job& b) {
    return std::tie(a.frame->id, a.patch.y, a.patch.x) < std::tie(b.frame->id, b.patch.y, b.patch.x);
  });
  std::vector<DynamicFeature> features(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t i) { features[i] = fit_patch(jobs[i].patch.values, w, lambda); });

  FeatureBank bank(w.fingerprint(), spec, lambda, w.feature_length());
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    bank.add(features[i], {jobs[i].frame->id, jobs[i].patch.x, jobs[i].patch.y});
  }
  if (opts.coreset_size > 0 && opts.coreset_size < bank.size()) {
    FeatureBank reduced(w.fingerprint(), spec, lambda, w.feature_length());
    for (std::size_t i : detail::k_center(bank, opts.coreset_size)) {
      reduced.add(features[i], bank.provenance(i));
    }
    bank = std::move(reduced);
  }
  if (opts.calibrate) {
    const auto scores = holdout_scores(bank, opts.holdout);
    std::vector<double> finite;
    for (double s : scores) {
      if (std::isfinite(s)) finite.push_back(s);
    }
    if (finite.size() >= 10) bank.set_threshold(calibrate_threshold(finite, opts.threshold), opts.threshold, opts.holdout);
  }
  return bank;
}

}  // namespace ressam

#endif
