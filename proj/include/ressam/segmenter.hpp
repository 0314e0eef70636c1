#ifndef RESSAM_SEGMENTER_HPP
#define RESSAM_SEGMENTER_HPP

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <deque>
#include <string>
#include <string_view>
#include <vector>

#include "ressam/frame.hpp"
#include "ressam/io.hpp"
#include "ressam/preprocess.hpp"

namespace ressam {

/// Operator clicks: positives inside the suspected anomaly, negatives outside.
struct PromptSet {
  std::vector<Point> positives;
  std::vector<Point> negatives;

  void validate(int width, int height) const {
    for (const auto* list : {&positives, &negatives}) {
      for (const Point& p : *list) {
        if (p.x < 0 || p.y < 0 || p.x >= width || p.y >= height) {
          throw Error("prompt (" + std::to_string(p.x) + ", " + std::to_string(p.y) + ") lies outside the " +
                      std::to_string(width) + "x" + std::to_string(height) + " frame");
        }
      }
    }
  }
};

/// "pos:x,y;x,y;neg:x,y". A "pos:" or "neg:" prefix switches the list that
/// the following points go to; points before any prefix are positives.
inline PromptSet parse_prompts(std::string_view text) {
  PromptSet out;
  std::vector<Point>* target = &out.positives;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find(';', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view tok = text.substr(start, end - start);
    start = end + 1;
    while (!tok.empty() && tok.front() == ' ') tok.remove_prefix(1);
    while (!tok.empty() && tok.back() == ' ') tok.remove_suffix(1);
    if (tok.starts_with("pos:")) {
      target = &out.positives;
      tok.remove_prefix(4);
    } else if (tok.starts_with("neg:")) {
      target = &out.negatives;
      tok.remove_prefix(4);
    }
    if (tok.empty()) continue;
    const auto comma = tok.find(',');
    Point p;
    auto parse = [&](std::string_view s, int& v) {
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      return ec == std::errc() && ptr == s.data() + s.size();
    };
    if (comma == std::string_view::npos || !parse(tok.substr(0, comma), p.x) || !parse(tok.substr(comma + 1), p.y)) {
      throw Error("bad prompt point '" + std::string(tok) + "', expected x,y");
    }
    target->push_back(p);
  }
  return out;
}

struct Mask {
  std::string frame_id;
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;  // row-major, 0 or 1

  Mask() = default;
  Mask(std::string id, int w, int h) : frame_id(std::move(id)), width(w), height(h), bits(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return bits[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) { bits[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0; }
  std::size_t count() const { return static_cast<std::size_t>(std::count(bits.begin(), bits.end(), 1)); }
  bool empty() const { return count() == 0; }
};

namespace detail {

/// 4-connected flood from `seed` over points within `tol` of the seed value.
/// Points set in `blocked` are never entered.
inline void flood(const BScanFrame& smooth, Point seed, double tol, Mask& out, const Mask* blocked) {
  const double ref = smooth.at(seed.x, seed.y);
  Mask seen(smooth.id, smooth.width(), smooth.height());
  std::deque<Point> queue{seed};
  seen.set(seed.x, seed.y);
  while (!queue.empty()) {
    const Point p = queue.front();
    queue.pop_front();
    out.set(p.x, p.y);
    const Point next[4] = {{p.x - 1, p.y}, {p.x + 1, p.y}, {p.x, p.y - 1}, {p.x, p.y + 1}};
    for (const Point& q : next) {
      if (q.x < 0 || q.y < 0 || q.x >= smooth.width() || q.y >= smooth.height()) continue;
      if (seen.at(q.x, q.y)) continue;
      seen.set(q.x, q.y);
      if (blocked && blocked->at(q.x, q.y)) continue;
      if (std::abs(smooth.at(q.x, q.y) - ref) <= tol) queue.push_back(q);
    }
  }
}

}  // namespace detail

/// Built-in candidate segmenter: median-smooth, grow each positive seed over
/// points within `tol` of its value, then remove what the negative seeds
/// grow into. Negative growth cannot pass through positive seed pixels.
inline Mask region_grow(const BScanFrame& frame, const PromptSet& prompts, double tol = 0.15, int smooth_k = 3) {
  if (prompts.positives.empty()) throw Error("region growing needs at least one positive prompt");
  if (!(tol >= 0.0)) throw Error("region growing tolerance must be >= 0");
  prompts.validate(frame.width(), frame.height());
  const BScanFrame smooth = median_filter(frame, smooth_k);
  Mask grown(frame.id, frame.width(), frame.height());
  Mask seeds(frame.id, frame.width(), frame.height());
  for (const Point& p : prompts.positives) {
    detail::flood(smooth, p, tol, grown, nullptr);
    seeds.set(p.x, p.y);
  }
  if (!prompts.negatives.empty()) {
    Mask removed(frame.id, frame.width(), frame.height());
    for (const Point& p : prompts.negatives) {
      if (!seeds.at(p.x, p.y)) detail::flood(smooth, p, tol, removed, &seeds);
    }
    for (std::size_t i = 0; i < grown.bits.size(); ++i) {
      if (removed.bits[i]) grown.bits[i] = 0;
    }
  }
  return grown;
}

/// Mask from a binary PGM/PNG; nonzero pixels are inside.
inline Mask load_external_mask(const std::string& frame_id, const fs::path& source, int width, int height) {
  const Gray8Image img = load_gray8(source);
  if (img.width != width || img.height != height) {
    throw Error("external mask '" + source.string() + "' is " + std::to_string(img.width) + "x" +
                std::to_string(img.height) + " but frame '" + frame_id + "' is " + std::to_string(width) + "x" +
                std::to_string(height));
  }
  Mask m(frame_id, width, height);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) m.bits[i] = img.pixels[i] != 0 ? 1 : 0;
  return m;
}

/// Smallest rectangle holding every set bit.
inline Region bounding_rect(const Mask& mask) {
  Region r{mask.width, -1, mask.height, -1};
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y)) continue;
      r.x1 = std::min(r.x1, x);
      r.x2 = std::max(r.x2, x);
      r.y1 = std::min(r.y1, y);
      r.y2 = std::max(r.y2, y);
    }
  }
  if (!r.valid()) throw Error("segmentation produced no region");
  return r;
}

/// Bounding rectangle of each 4-connected component, in scan order of the
/// component's first pixel. Alternative to bounding the whole union.
inline std::vector<Region> component_rects(const Mask& mask) {
  std::vector<Region> out;
  Mask seen(mask.frame_id, mask.width, mask.height);
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (!mask.at(x, y) || seen.at(x, y)) continue;
      Region r{x, x, y, y};
      std::vector<Point> stack{{x, y}};
      seen.set(x, y);
      while (!stack.empty()) {
        const Point p = stack.back();
        stack.pop_back();
        r = bounding_union(r, {p.x, p.x, p.y, p.y});
        const Point next[4] = {{p.x - 1, p.y}, {p.x + 1, p.y}, {p.x, p.y - 1}, {p.x, p.y + 1}};
        for (const Point& q : next) {
          if (q.x < 0 || q.y < 0 || q.x >= mask.width || q.y >= mask.height) continue;
          if (!mask.at(q.x, q.y) || seen.at(q.x, q.y)) continue;
          seen.set(q.x, q.y);
          stack.push_back(q);
        }
      }
      out.push_back(r);
    }
  }
  return out;
}

}  // namespace ressam

#endif
