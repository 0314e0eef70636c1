#ifndef RESSAM_PREPROCESS_HPP
#define RESSAM_PREPROCESS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "ressam/frame.hpp"

namespace ressam {

/// Subtracts each of the top `surface_rows` rows' mean across traces.
/// Rows at and below `surface_rows` are untouched.
inline BScanFrame remove_surface_reflection(const BScanFrame& frame, int surface_rows) {
  if (surface_rows < 0 || surface_rows >= frame.height()) {
    throw Error("surface band of " + std::to_string(surface_rows) + " rows must be below frame height " +
                std::to_string(frame.height()));
  }
  std::vector<double> out = frame.values();
  const int w = frame.width();
  for (int y = 0; y < surface_rows; ++y) {
    double sum = 0.0;
    for (int x = 0; x < w; ++x) sum += frame.at(x, y);
    const double mean = sum / w;
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] -= mean;
  }
  return frame.with_values(std::move(out));
}

inline int default_surface_rows(int height) { return std::max(1, height / 10); }

/// k x k median with edge replication.
inline BScanFrame median_filter(const BScanFrame& frame, int k) {
  if (k < 1 || k % 2 == 0) throw Error("median window must be odd and >= 1, got " + std::to_string(k));
  if (k == 1) return frame;
  const int r = k / 2;
  const int w = frame.width();
  const int h = frame.height();
  std::vector<double> out(frame.size());
  std::vector<double> window(static_cast<std::size_t>(k) * k);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      std::size_t n = 0;
      for (int dy = -r; dy <= r; ++dy) {
        const int yy = std::clamp(y + dy, 0, h - 1);
        for (int dx = -r; dx <= r; ++dx) window[n++] = frame.at(std::clamp(x + dx, 0, w - 1), yy);
      }
      auto mid = window.begin() + static_cast<std::ptrdiff_t>(window.size() / 2);
      std::nth_element(window.begin(), mid, window.end());
      out[static_cast<std::size_t>(y) * w + x] = *mid;
    }
  }
  return frame.with_values(std::move(out));
}

enum class GainProfile { linear, exponential };

/// Row y is scaled by (1 + g*y) or exp(g*y).
inline BScanFrame time_gain(const BScanFrame& frame, GainProfile profile, double g) {
  if (!(g >= 0.0)) throw Error("gain rate must be >= 0");
  std::vector<double> out = frame.values();
  const int w = frame.width();
  for (int y = 0; y < frame.height(); ++y) {
    const double factor = profile == GainProfile::linear ? 1.0 + g * y : std::exp(g * y);
    for (int x = 0; x < w; ++x) out[static_cast<std::size_t>(y) * w + x] *= factor;
  }
  return frame.with_values(std::move(out));
}

/// Linear rate at which the bottom row gains x4.
inline double default_gain_rate(int height) { return height > 1 ? 3.0 / (height - 1) : 0.0; }

/// Affine map of [min, max] onto [-1, 1]; constant frames become zeros.
inline BScanFrame normalize(const BScanFrame& frame) {
  const auto [lo_it, hi_it] = std::minmax_element(frame.values().begin(), frame.values().end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!std::isfinite(lo) || !std::isfinite(hi)) throw Error("cannot normalize non-finite values");
  std::vector<double> out(frame.size(), 0.0);
  if (hi > lo) {
    const double span = hi - lo;
    for (std::size_t i = 0; i < out.size(); ++i) {
      const double v = frame.values()[i];
      out[i] = v == hi ? 1.0 : 2.0 * (v - lo) / span - 1.0;
    }
  }
  return frame.with_values(std::move(out));
}

enum class PreprocessStep { surface, median, gain, normalize };

struct PreprocessConfig {
  std::vector<PreprocessStep> order{PreprocessStep::surface, PreprocessStep::median, PreprocessStep::gain,
                                    PreprocessStep::normalize};
  std::optional<int> surface_rows;  // default: 10% of height
  int median_k = 3;
  GainProfile gain_profile = GainProfile::linear;
  std::optional<double> gain_rate;  // default: bottom row x4
};

inline std::string to_string(PreprocessStep s) {
  switch (s) {
    case PreprocessStep::surface: return "surface";
    case PreprocessStep::median: return "median";
    case PreprocessStep::gain: return "gain";
    case PreprocessStep::normalize: return "normalize";
  }
  return "?";
}

/// Parses "surface,median,gain,normalize" (any subset, any order).
inline std::vector<PreprocessStep> parse_preprocess_order(const std::string& text) {
  std::vector<PreprocessStep> steps;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    if (item == "surface") steps.push_back(PreprocessStep::surface);
    else if (item == "median") steps.push_back(PreprocessStep::median);
    else if (item == "gain") steps.push_back(PreprocessStep::gain);
    else if (item == "normalize") steps.push_back(PreprocessStep::normalize);
    else throw Error("unknown preprocessing step '" + item + "'");
  }
  return steps;
}

inline BScanFrame preprocess(const BScanFrame& frame, const PreprocessConfig& cfg) {
  BScanFrame out = frame;
  for (PreprocessStep step : cfg.order) {
    switch (step) {
      case PreprocessStep::surface:
        out = remove_surface_reflection(out, cfg.surface_rows.value_or(default_surface_rows(out.height())));
        break;
      case PreprocessStep::median:
        out = median_filter(out, cfg.median_k);
        break;
      case PreprocessStep::gain:
        out = time_gain(out, cfg.gain_profile, cfg.gain_rate.value_or(default_gain_rate(out.height())));
        break;
      case PreprocessStep::normalize:
        out = normalize(out);
        break;
    }
  }
  return out;
}

}  // namespace ressam

#endif
