#ifndef RESSAM_FRAME_HPP
#define RESSAM_FRAME_HPP

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Core>

namespace ressam {

/// Every rejected precondition or malformed input surfaces as this.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Row-major grid: rows are time samples (y), columns are scan positions (x).
using Grid = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using GridRef = Eigen::Ref<const Grid, 0, Eigen::OuterStride<>>;

struct Point {
  int x = 0;
  int y = 0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Inclusive rectangle [x1, x2] x [y1, y2].
struct Region {
  int x1 = 0;
  int x2 = 0;
  int y1 = 0;
  int y2 = 0;

  int width() const { return x2 - x1 + 1; }
  int height() const { return y2 - y1 + 1; }
  long long area() const { return static_cast<long long>(width()) * height(); }
  bool valid() const { return x1 <= x2 && y1 <= y2; }
  bool contains(int x, int y) const { return x >= x1 && x <= x2 && y >= y1 && y <= y2; }
  bool contains(const Region& r) const {
    return r.x1 >= x1 && r.x2 <= x2 && r.y1 >= y1 && r.y2 <= y2;
  }
  bool inside(int width, int height) const {
    return valid() && x1 >= 0 && y1 >= 0 && x2 < width && y2 < height;
  }
  friend bool operator==(const Region&, const Region&) = default;
};

inline Region bounding_union(const Region& a, const Region& b) {
  return {std::min(a.x1, b.x1), std::max(a.x2, b.x2), std::min(a.y1, b.y1), std::max(a.y2, b.y2)};
}

enum class Category { cavity, crack, loose, manhole, pipe };

inline constexpr Category kAllCategories[] = {Category::cavity, Category::crack, Category::loose,
                                              Category::manhole, Category::pipe};

inline std::string_view to_string(Category c) {
  switch (c) {
    case Category::cavity: return "cavity";
    case Category::crack: return "crack";
    case Category::loose: return "loose";
    case Category::manhole: return "manhole";
    case Category::pipe: return "pipe";
  }
  return "unknown";
}

inline Category parse_category(std::string_view s) {
  for (Category c : kAllCategories) {
    if (to_string(c) == s) return c;
  }
  throw Error("unknown anomaly category '" + std::string(s) + "'");
}

/// One B-scan: `width` traces of `height` samples each.
class BScanFrame {
 public:
  std::string id;
  std::map<std::string, double> meta;  // e.g. "time_window_ns", "trace_spacing_m"

  BScanFrame() = default;

  BScanFrame(std::string frame_id, int width, int height, std::vector<double> values)
      : id(std::move(frame_id)), width_(width), height_(height), values_(std::move(values)) {
    if (width_ < 1 || height_ < 1) {
      throw Error("frame '" + id + "' must be at least 1x1, got " + std::to_string(width_) + "x" +
                  std::to_string(height_));
    }
    if (values_.size() != static_cast<std::size_t>(width_) * static_cast<std::size_t>(height_)) {
      throw Error("frame '" + id + "': " + std::to_string(values_.size()) +
                  " values do not fill a " + std::to_string(width_) + "x" +
                  std::to_string(height_) + " grid");
    }
    for (double v : values_) {
      if (!std::isfinite(v)) throw Error("frame '" + id + "' contains a non-finite value");
    }
  }

  BScanFrame(std::string frame_id, const Grid& grid)
      : BScanFrame(std::move(frame_id), static_cast<int>(grid.cols()), static_cast<int>(grid.rows()),
                   std::vector<double>(grid.data(), grid.data() + grid.size())) {}

  int width() const { return width_; }
  int height() const { return height_; }
  std::size_t size() const { return values_.size(); }

  double at(int x, int y) const { return values_[index(x, y)]; }
  double& at(int x, int y) { return values_[index(x, y)]; }

  const std::vector<double>& values() const { return values_; }
  std::vector<double>& values() { return values_; }

  Eigen::Map<const Grid> grid() const { return {values_.data(), height_, width_}; }

  /// Sub-grid view of `r`; no copy.
  auto view(const Region& r) const {
    return grid().block(r.y1, r.x1, r.height(), r.width());
  }

  Region bounds() const { return {0, width_ - 1, 0, height_ - 1}; }

  /// Same id and metadata, new values (shape preserved).
  BScanFrame with_values(std::vector<double> v) const {
    BScanFrame out(id, width_, height_, std::move(v));
    out.meta = meta;
    return out;
  }

 private:
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x);
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<double> values_;
};

struct GroundTruthRegion {
  std::string frame_id;
  Region rect;
  Category category = Category::pipe;
};

}  // namespace ressam

#endif
