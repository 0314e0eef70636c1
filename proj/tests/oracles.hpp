#ifndef RESSAM_TESTS_ORACLES_HPP
#define RESSAM_TESTS_ORACLES_HPP

// Reference implementations written against plain std::vector, without
// Eigen and without calling back into the library. Each one restates the
// definition as directly as possible; speed is not a goal.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <utility>
#include <vector>

#include <lapacke.h>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, m[r][c]

/// h(x,y) for every point, indexed [y][x][i], by literal unrolling of
/// h(x,y) = tanh(Wx h(x-1,y) + Wy h(x,y-1) + Win u(x,y)) with zero
/// states outside the patch.
inline std::vector<std::vector<Vec>> esn_states(const Mat& u, const Mat& wx, const Mat& wy, const Vec& win) {
  const std::size_t rows = u.size(), cols = u.front().size(), n = win.size();
  std::vector<std::vector<Vec>> h(rows, std::vector<Vec>(cols, Vec(n, 0.0)));
  for (std::size_t y = 0; y < rows; ++y) {
    for (std::size_t x = 0; x < cols; ++x) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = win[i] * u[y][x];
        for (std::size_t j = 0; j < n; ++j) {
          const double left = x > 0 ? h[y][x - 1][j] : 0.0;
          const double up = y > 0 ? h[y - 1][x][j] : 0.0;
          s += wx[i][j] * left + wy[i][j] * up;
        }
        h[y][x][i] = std::tanh(s);
      }
    }
  }
  return h;
}

/// Solves (A^T A + lambda^2 I) w = A^T b by forming the normal matrix
/// explicitly and running Gaussian elimination with partial pivoting in
/// long double.
inline Vec ridge(const Mat& a, const Vec& b, double lambda) {
  const std::size_t m = a.size(), d = a.front().size();
  std::vector<std::vector<long double>> aug(d, std::vector<long double>(d + 1, 0.0L));
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      long double s = 0;
      for (std::size_t r = 0; r < m; ++r) s += static_cast<long double>(a[r][i]) * a[r][j];
      aug[i][j] = s + (i == j ? static_cast<long double>(lambda) * lambda : 0.0L);
    }
    long double s = 0;
    for (std::size_t r = 0; r < m; ++r) s += static_cast<long double>(a[r][i]) * b[r];
    aug[i][d] = s;
  }
  for (std::size_t col = 0; col < d; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < d; ++r) {
      if (std::fabs(aug[r][col]) > std::fabs(aug[piv][col])) piv = r;
    }
    std::swap(aug[col], aug[piv]);
    for (std::size_t r = col + 1; r < d; ++r) {
      const long double f = aug[r][col] / aug[col][col];
      for (std::size_t c = col; c <= d; ++c) aug[r][c] -= f * aug[col][c];
    }
  }
  Vec w(d);
  for (std::size_t i = d; i-- > 0;) {
    long double s = aug[i][d];
    for (std::size_t c = i + 1; c < d; ++c) s -= aug[i][c] * w[c];
    w[i] = static_cast<double>(s / aug[i][i]);
  }
  return w;
}

/// Largest |eigenvalue| through LAPACK's general nonsymmetric driver.
inline double spectral_radius(const Mat& m) {
  const int n = static_cast<int>(m.size());
  std::vector<double> a(static_cast<std::size_t>(n) * n), wr(n), wi(n);
  for (int r = 0; r < n; ++r)
    for (int c = 0; c < n; ++c) a[static_cast<std::size_t>(r) * n + c] = m[r][c];
  // Read as column-major: the transpose has the same spectrum.
  const int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', n, a.data(), n, wr.data(), wi.data(), nullptr, n,
                                 nullptr, n);
  if (info != 0) throw std::runtime_error("dgeev failed");
  double best = 0.0;
  for (int i = 0; i < n; ++i) best = std::max(best, std::hypot(wr[i], wi[i]));
  return best;
}

inline double min_l2(const Vec& q, const Mat& bank) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& row : bank) {
    double s = 0;
    for (std::size_t k = 0; k < q.size(); ++k) s += (q[k] - row[k]) * (q[k] - row[k]);
    best = std::min(best, std::sqrt(s));
  }
  return best;
}

struct Rect {
  int x1, x2, y1, y2;
  friend auto operator<=>(const Rect&, const Rect&) = default;
};

struct Group {
  Rect rect;
  std::size_t centers;
  double score_sum;
  friend auto operator<=>(const Group&, const Group&) = default;
};

/// Paints each window on a canvas and labels 8-connected components of
/// painted pixels with a plain union-find. Touching or overlapping windows
/// land in the same component because each window is a solid block.
inline std::vector<Group> merge_by_paint(const std::vector<Rect>& windows, const std::vector<double>& scores, int width,
                                         int height) {
  std::vector<int> owner(static_cast<std::size_t>(width) * height, -1);
  std::vector<int> parent(windows.size());
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](int i) {
    while (parent[i] != i) i = parent[i];
    return i;
  };
  auto unite = [&](int a, int b) { parent[find(a)] = find(b); };
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const Rect& r = windows[w];
    for (int y = r.y1; y <= r.y2; ++y)
      for (int x = r.x1; x <= r.x2; ++x) {
        int& o = owner[static_cast<std::size_t>(y) * width + x];
        if (o >= 0) unite(o, static_cast<int>(w));
        o = static_cast<int>(w);
      }
  }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) {
      const int o = owner[static_cast<std::size_t>(y) * width + x];
      if (o < 0) continue;
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
          const int nx = x + dx, ny = y + dy;
          if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
          const int p = owner[static_cast<std::size_t>(ny) * width + nx];
          if (p >= 0) unite(o, p);
        }
    }
  std::map<int, Group> groups;
  for (std::size_t w = 0; w < windows.size(); ++w) {
    const int root = find(static_cast<int>(w));
    auto [it, fresh] = groups.try_emplace(root, Group{windows[w], 0, 0.0});
    Rect& g = it->second.rect;
    g = {std::min(g.x1, windows[w].x1), std::max(g.x2, windows[w].x2), std::min(g.y1, windows[w].y1),
         std::max(g.y2, windows[w].y2)};
    ++it->second.centers;
    it->second.score_sum += scores[w];
  }
  std::vector<Group> out;
  for (auto& [root, g] : groups) out.push_back(g);
  std::sort(out.begin(), out.end());
  return out;
}

/// Agglomerative clustering recomputing every cluster-pair distance from the
/// member points at each step. Ward distance is the Lance-Williams scale on
/// squared Euclidean input, 2 na nb / (na + nb) |ca - cb|^2. Returns labels
/// numbered by first appearance.
enum class Link { average, ward, single, complete };

inline std::vector<int> agglomerative(const Mat& x, int k, Link link) {
  auto dist = [&](std::size_t a, std::size_t b) {
    double s = 0;
    for (std::size_t c = 0; c < x[a].size(); ++c) s += (x[a][c] - x[b][c]) * (x[a][c] - x[b][c]);
    return std::sqrt(s);
  };
  std::vector<std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < x.size(); ++i) clusters.push_back({i});
  auto linkage = [&](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    if (link == Link::ward) {
      const std::size_t d = x.front().size();
      Vec ca(d, 0.0), cb(d, 0.0);
      for (auto i : a)
        for (std::size_t c = 0; c < d; ++c) ca[c] += x[i][c] / static_cast<double>(a.size());
      for (auto i : b)
        for (std::size_t c = 0; c < d; ++c) cb[c] += x[i][c] / static_cast<double>(b.size());
      double s = 0;
      for (std::size_t c = 0; c < d; ++c) s += (ca[c] - cb[c]) * (ca[c] - cb[c]);
      const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
      return 2.0 * na * nb / (na + nb) * s;
    }
    double lo = std::numeric_limits<double>::infinity(), hi = 0.0, sum = 0.0;
    for (auto i : a)
      for (auto j : b) {
        const double d = dist(i, j);
        lo = std::min(lo, d);
        hi = std::max(hi, d);
        sum += d;
      }
    if (link == Link::single) return lo;
    if (link == Link::complete) return hi;
    return sum / static_cast<double>(a.size() * b.size());
  };
  while (clusters.size() > static_cast<std::size_t>(k)) {
    std::size_t bi = 0, bj = 1;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < clusters.size(); ++i)
      for (std::size_t j = i + 1; j < clusters.size(); ++j) {
        const double d = linkage(clusters[i], clusters[j]);
        if (d < best) {
          best = d;
          bi = i;
          bj = j;
        }
      }
    clusters[bi].insert(clusters[bi].end(), clusters[bj].begin(), clusters[bj].end());
    clusters.erase(clusters.begin() + static_cast<std::ptrdiff_t>(bj));
  }
  std::vector<int> cluster_of(x.size());
  for (std::size_t c = 0; c < clusters.size(); ++c)
    for (auto i : clusters[c]) cluster_of[i] = static_cast<int>(c);
  std::map<int, int> first;
  std::vector<int> out;
  for (int c : cluster_of) out.push_back(first.try_emplace(c, static_cast<int>(first.size())).first->second);
  return out;
}

/// Best agreement over every injective relabelling of predicted clusters.
inline double accuracy(const std::vector<int>& pred, const std::vector<int>& truth) {
  const std::set<int> ps(pred.begin(), pred.end()), ts(truth.begin(), truth.end());
  std::vector<int> p_ids(ps.begin(), ps.end());
  std::vector<int> targets(ts.begin(), ts.end());
  while (targets.size() < p_ids.size()) targets.push_back(std::numeric_limits<int>::min() + static_cast<int>(targets.size()));
  std::sort(targets.begin(), targets.end());
  std::size_t best = 0;
  do {
    std::map<int, int> map;
    for (std::size_t i = 0; i < p_ids.size(); ++i) map[p_ids[i]] = targets[i];
    std::size_t hits = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hits += map[pred[i]] == truth[i];
    best = std::max(best, hits);
  } while (std::next_permutation(targets.begin(), targets.end()));
  return static_cast<double>(best) / static_cast<double>(pred.size());
}

/// ARI from pair counts over all i < j.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  double both = 0, only_a = 0, only_b = 0, neither = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = i + 1; j < a.size(); ++j) {
      const bool sa = a[i] == a[j], sb = b[i] == b[j];
      if (sa && sb) ++both;
      else if (sa) ++only_a;
      else if (sb) ++only_b;
      else ++neither;
    }
  if (only_a == 0 && only_b == 0) return 1.0;
  return 2.0 * (both * neither - only_a * only_b) /
         ((both + only_a) * (only_a + neither) + (both + only_b) * (only_b + neither));
}

/// NMI with arithmetic-mean normalization from point-wise probabilities.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  const double n = static_cast<double>(a.size());
  std::map<int, double> pa, pb;
  std::map<std::pair<int, int>, double> pab;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pa[a[i]] += 1 / n;
    pb[b[i]] += 1 / n;
    pab[{a[i], b[i]}] += 1 / n;
  }
  double ha = 0, hb = 0, mi = 0;
  for (auto [k, p] : pa) ha -= p * std::log(p);
  for (auto [k, p] : pb) hb -= p * std::log(p);
  for (auto [k, p] : pab) mi += p * std::log(p / (pa[k.first] * pb[k.second]));
  if (ha + hb == 0) return 1.0;
  return mi / (0.5 * (ha + hb));
}

/// Fraction of positive/negative pairs ordered correctly, ties counting half.
inline double auroc(const std::vector<double>& s, const std::vector<int>& y) {
  double good = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[i] != 1 || y[j] != 0) continue;
      pairs += 1;
      good += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
    }
  return good / pairs;
}

}  // namespace oracle

#endif
