#ifndef RESSAM_SYNTH_HPP
#define RESSAM_SYNTH_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "ressam/frame.hpp"
#include "ressam/rng.hpp"

// Desk-scale B-scan generator: layered ground plus category-specific
// anomaly signatures confined to their ground-truth rectangles.

namespace ressam {

struct Insertion {
  Category category = Category::pipe;
  Region rect;
  double amplitude = 1.0;
};

struct FrameSpec {
  std::string id;
  std::vector<Insertion> insertions;
};

struct SceneSpec {
  int width = 128;
  int height = 128;
  double noise = 0.04;               // white noise sigma
  int layers_min = 3;
  int layers_max = 6;
  double layer_amplitude = 0.6;      // peak reflector amplitude
  double wavelet_period = 6.0;       // samples per dominant cycle
  double surface_amplitude = 3.0;    // direct wave across the top rows
  double attenuation = 1.3862943611198906;  // total log amplitude loss, top to bottom (x1/4)
  std::vector<FrameSpec> frames;
};

/// Ricker wavelet at offset t samples for a dominant period of `period` samples.
inline double ricker(double t, double period) {
  const double a = std::numbers::pi * t / period;
  return (1.0 - 2.0 * a * a) * std::exp(-a * a);
}

namespace detail {

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
}

/// Tukey-style taper: 1 in the interior, cosine roll-off over `edge` cells.
inline double taper(int i, int lo, int hi, int edge) {
  const int d = std::min(i - lo, hi - i);
  if (edge <= 0 || d >= edge) return 1.0;
  return 0.5 - 0.5 * std::cos(std::numbers::pi * (d + 0.5) / edge);
}

}  // namespace detail

/// key=value lines; `frame=ID` opens a frame and following
/// `anomaly=category,x1,x2,y1,y2[,amplitude]` lines attach to it.
inline SceneSpec parse_scene(const std::string& text) {
  SceneSpec scene;
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw Error("scene line " + std::to_string(lineno) + ": expected key=value");
    const std::string key = detail::trim(line.substr(0, eq));
    const std::string value = detail::trim(line.substr(eq + 1));
    try {
      if (key == "width") scene.width = std::stoi(value);
      else if (key == "height") scene.height = std::stoi(value);
      else if (key == "noise") scene.noise = std::stod(value);
      else if (key == "layers_min") scene.layers_min = std::stoi(value);
      else if (key == "layers_max") scene.layers_max = std::stoi(value);
      else if (key == "layer_amplitude") scene.layer_amplitude = std::stod(value);
      else if (key == "wavelet_period") scene.wavelet_period = std::stod(value);
      else if (key == "surface_amplitude") scene.surface_amplitude = std::stod(value);
      else if (key == "attenuation") scene.attenuation = std::stod(value);
      else if (key == "frame") scene.frames.push_back({value, {}});
      else if (key == "anomaly") {
        if (scene.frames.empty()) throw Error("anomaly given before any frame");
        std::vector<std::string> parts;
        std::stringstream ss(value);
        for (std::string p; std::getline(ss, p, ',');) parts.push_back(detail::trim(p));
        if (parts.size() != 5 && parts.size() != 6) throw Error("anomaly needs category,x1,x2,y1,y2[,amplitude]");
        Insertion ins;
        ins.category = parse_category(parts[0]);
        ins.rect = {std::stoi(parts[1]), std::stoi(parts[2]), std::stoi(parts[3]), std::stoi(parts[4])};
        if (parts.size() == 6) ins.amplitude = std::stod(parts[5]);
        scene.frames.back().insertions.push_back(ins);
      } else {
        throw Error("unknown key '" + key + "'");
      }
    } catch (const std::logic_error& e) {  // stoi/stod failures
      throw Error("scene line " + std::to_string(lineno) + ": bad value '" + value + "'");
    } catch (const Error& e) {
      throw Error("scene line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return scene;
}

inline std::string to_text(const SceneSpec& scene) {
  std::ostringstream out;
  out.precision(17);
  out << "width=" << scene.width << "\nheight=" << scene.height << "\nnoise=" << scene.noise
      << "\nlayers_min=" << scene.layers_min << "\nlayers_max=" << scene.layers_max
      << "\nlayer_amplitude=" << scene.layer_amplitude << "\nwavelet_period=" << scene.wavelet_period
      << "\nsurface_amplitude=" << scene.surface_amplitude << "\nattenuation=" << scene.attenuation << "\n";
  for (const auto& f : scene.frames) {
    out << "frame=" << f.id << "\n";
    for (const auto& a : f.insertions) {
      out << "anomaly=" << to_string(a.category) << "," << a.rect.x1 << "," << a.rect.x2 << "," << a.rect.y1 << ","
          << a.rect.y2 << "," << a.amplitude << "\n";
    }
  }
  return out.str();
}

namespace detail {

/// Layered background: direct wave on top, undulating reflectors, trace
/// gain jitter, noise, and depth attenuation.
inline Grid background(const SceneSpec& s, Rng& rng) {
  Grid g = Grid::Zero(s.height, s.width);
  const double T = s.wavelet_period;
  for (int y = 0; y < s.height; ++y) {
    const double direct = s.surface_amplitude * (ricker(y - 2.0, T) - 0.6 * ricker(y - 2.0 - T, T));
    g.row(y).array() += direct;
  }
  const int layers = rng.uniform_int(s.layers_min, std::max(s.layers_min, s.layers_max));
  for (int l = 0; l < layers; ++l) {
    const double depth = rng.uniform(0.15 * s.height, 0.95 * s.height);
    const double amp = s.layer_amplitude * rng.uniform(0.4, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
    const double undulation = rng.uniform(0.0, 3.0);
    const double period = rng.uniform(80.0, 320.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    for (int x = 0; x < s.width; ++x) {
      const double d = depth + undulation * std::sin(2.0 * std::numbers::pi * x / period + phase);
      const int lo = std::max(0, static_cast<int>(d - 2 * T));
      const int hi = std::min(s.height - 1, static_cast<int>(d + 2 * T));
      for (int y = lo; y <= hi; ++y) g(y, x) += amp * ricker(y - d, T);
    }
  }
  for (int x = 0; x < s.width; ++x) g.col(x) *= rng.uniform(0.9, 1.1);
  for (int y = 0; y < s.height; ++y) {
    for (int x = 0; x < s.width; ++x) g(y, x) += s.noise * rng.normal();
  }
  for (int y = 0; y < s.height; ++y) {
    g.row(y) *= std::exp(-s.attenuation * y / std::max(1, s.height - 1));
  }
  return g;
}

/// Adds `pattern(x, y)` inside `r`, tapered towards the rectangle edges and
/// attenuated like the background at that depth.
template <typename Pattern>
void stamp(Grid& g, const SceneSpec& s, const Region& r, Pattern&& pattern) {
  const int edge_x = std::max(1, r.width() / 8);
  const int edge_y = std::max(1, r.height() / 8);
  for (int y = r.y1; y <= r.y2; ++y) {
    const double att = std::exp(-s.attenuation * y / std::max(1, s.height - 1));
    const double ty = taper(y, r.y1, r.y2, edge_y);
    for (int x = r.x1; x <= r.x2; ++x) {
      g(y, x) += att * ty * taper(x, r.x1, r.x2, edge_x) * pattern(x, y);
    }
  }
}

inline void insert_anomaly(Grid& g, const SceneSpec& s, const Insertion& ins, Rng& rng) {
  const Region r = ins.rect;
  const double A = ins.amplitude;
  const double T = s.wavelet_period;
  const double cx = 0.5 * (r.x1 + r.x2);
  const double w = r.width();
  const double h = r.height();
  switch (ins.category) {
    case Category::pipe: {
      // Diffraction hyperbola with a weaker ringing copy beneath.
      const double apex = r.y1 + 0.15 * h;
      const double depth = rng.uniform(0.25, 0.45) * w;
      const double spread = (r.y2 - 0.15 * h - apex);
      const double vel = std::sqrt(std::pow(depth + spread, 2) - depth * depth) / (0.5 * w);
      stamp(g, s, r, [&](int x, int y) {
        const double t = apex + std::sqrt(depth * depth + std::pow((x - cx) * vel, 2)) - depth;
        const double fade = 1.0 / (1.0 + std::abs(x - cx) / w);
        return A * fade * (ricker(y - t, T) - 0.6 * ricker(y - t - 1.5 * T, T));
      });
      break;
    }
    case Category::cavity: {
      // Bright blob: concentric reverberations from a void, fading outward.
      const double cy = 0.5 * (r.y1 + r.y2);
      const double spacing = rng.uniform(1.2, 1.6) * T;
      stamp(g, s, r, [&](int x, int y) {
        const double u = (x - cx) / (0.5 * w);
        const double v = (y - cy) / (0.5 * h);
        const double rad = std::sqrt(u * u + v * v);
        const double dist = rad * 0.5 * std::min(w, h);
        double val = 0.0;
        double gain = 1.4;
        for (int k = 0; k < 6; ++k, gain *= -0.8) val += gain * ricker(dist - k * spacing, T);
        return A * val * std::max(0.0, 1.0 - 0.5 * rad * rad);
      });
      break;
    }
    case Category::loose: {
      // Chaotic speckle: smoothed random field.
      Grid speckle(r.height() + 2, r.width() + 2);
      for (Eigen::Index i = 0; i < speckle.size(); ++i) speckle.data()[i] = rng.normal();
      stamp(g, s, r, [&](int x, int y) {
        const int i = y - r.y1 + 1;
        const int j = x - r.x1 + 1;
        const double m = speckle.block(i - 1, j - 1, 3, 3).sum() / 3.0;
        return 1.2 * A * m;
      });
      break;
    }
    case Category::crack: {
      // Stacked horizontal reflectors cut by a dipping fracture; the block
      // beyond the break is dropped and rotated, and broken ends diffract.
      const double dip = rng.uniform(0.5, 1.0) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      const double brk = r.x1 + rng.uniform(0.35, 0.65) * w;
      const double throw_ = rng.uniform(0.1, 0.18) * h;
      const double tilt = rng.uniform(0.25, 0.4) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
      const int beds = 5;
      std::vector<double> depth(beds);
      for (int b = 0; b < beds; ++b) depth[b] = r.y1 + (0.1 + 0.18 * b) * h;
      stamp(g, s, r, [&](int x, int y) {
        double val = 0.0;
        for (int b = 0; b < beds; ++b) {
          const double cut = brk + dip * (depth[b] - depth[0]);
          const double t = x < cut ? depth[b] : depth[b] + throw_ + tilt * (x - cut);
          val += (b % 2 ? -1.0 : 1.0) * ricker(y - t, T);
          val += 0.7 * ricker(y - (depth[b] + std::hypot(3.0, x - cut)), T);
        }
        return A * val;
      });
      break;
    }
    case Category::manhole: {
      // Metal cover: strong high-frequency ringing with edge diffractions.
      const double top = r.y1 + 0.1 * h;
      const double Tm = 0.5 * T;
      stamp(g, s, r, [&](int x, int y) {
        double val = 0.0;
        double gain = 1.6;
        for (int k = 0; k < 16; ++k, gain *= -0.88) val += gain * ricker(y - top - k * Tm, Tm);
        for (double edge : {r.x1 + 0.1 * w, r.x2 - 0.1 * w}) {
          val += 0.8 * ricker(y - (top + std::hypot(2.0, x - edge)), T);
        }
        return A * val;
      });
      break;
    }
  }
}

}  // namespace detail

struct SynthResult {
  std::vector<BScanFrame> frames;
  std::vector<GroundTruthRegion> truths;
};

/// Deterministic in (scene, seed); frame i draws from its own stream so
/// editing one frame leaves the others unchanged.
inline SynthResult synth_generate(const SceneSpec& scene, std::uint64_t seed) {
  if (scene.width < 8 || scene.height < 8) throw Error("synthetic frames must be at least 8x8");
  if (scene.layers_min < 0 || scene.layers_max < scene.layers_min) throw Error("bad layer count range");
  SynthResult out;
  for (std::size_t i = 0; i < scene.frames.size(); ++i) {
    const FrameSpec& fs = scene.frames[i];
    for (const auto& ins : fs.insertions) {
      if (!ins.rect.inside(scene.width, scene.height)) {
        throw Error("anomaly rectangle in frame '" + fs.id + "' lies outside the " + std::to_string(scene.width) +
                    "x" + std::to_string(scene.height) + " frame");
      }
    }
    Rng rng(mix_seed(seed, i));
    Grid g = detail::background(scene, rng);
    for (const auto& ins : fs.insertions) {
      detail::insert_anomaly(g, scene, ins, rng);
      out.truths.push_back({fs.id, ins.rect, ins.category});
    }
    BScanFrame frame(fs.id, g);
    frame.meta["time_window_ns"] = 64.0;
    frame.meta["trace_spacing_m"] = 15.0 / scene.width;
    out.frames.push_back(std::move(frame));
  }
  return out;
}

/// A scene of `nontarget` clean frames and `per_category` single-anomaly
/// frames per category with random rectangles.
inline SceneSpec random_scene(int nontarget, int per_category, std::uint64_t seed, int width = 128, int height = 128) {
  SceneSpec scene;
  scene.width = width;
  scene.height = height;
  Rng rng(mix_seed(seed, 0xA11CE));
  char buf[32];
  for (int i = 0; i < nontarget; ++i) {
    std::snprintf(buf, sizeof buf, "normal_%03d", i);
    scene.frames.push_back({buf, {}});
  }
  const int top = std::max(2, height / 10 + 2);
  for (Category c : kAllCategories) {
    for (int i = 0; i < per_category; ++i) {
      std::snprintf(buf, sizeof buf, "%s_%03d", std::string(to_string(c)).c_str(), i);
      const int w = rng.uniform_int(std::min(width - 4, width * 3 / 8), std::min(width - 4, width * 5 / 8));
      const int h = rng.uniform_int(std::min(height - top - 2, height * 5 / 16), std::min(height - top - 2, height / 2));
      const int x1 = rng.uniform_int(2, width - 2 - w);
      int y1 = rng.uniform_int(top, height - 2 - h);
      if (c == Category::manhole) y1 = rng.uniform_int(top, std::min(top + 8, height - 2 - h));
      Insertion ins{c, {x1, x1 + w - 1, y1, y1 + h - 1}, rng.uniform(0.8, 1.2)};
      scene.frames.push_back({buf, {ins}});
    }
  }
  return scene;
}

}  // namespace ressam

#endif
