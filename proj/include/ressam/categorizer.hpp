#ifndef RESSAM_CATEGORIZER_HPP
#define RESSAM_CATEGORIZER_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "ressam/frame.hpp"
#include "ressam/reservoir.hpp"
#include "ressam/rng.hpp"

namespace ressam {

struct RegionFeature {
  std::string frame_id;
  Region region;
  DynamicFeature feature;
};

/// Fits the raw region sub-grid; the feature length is 2n+1 for any region size.
inline RegionFeature fit_region_feature(const BScanFrame& frame, const Region& region, const ReservoirWeights& w,
                                        double lambda) {
  if (!region.inside(frame.width(), frame.height())) throw Error("region lies outside frame '" + frame.id + "'");
  if (region.width() < 2 || region.height() < 2) throw Error("region must be at least 2x2 to fit");
  return {frame.id, region, fit_patch(frame.view(region), w, lambda)};
}

/// Rows of `features` are points.
struct ClusterAssignment {
  std::vector<int> labels;  // in [0, k), numbered by first appearance
  int k = 0;
  Eigen::MatrixXd centroids;                // k x d
  std::optional<Eigen::MatrixXd> memberships;  // n x k, fuzzy only
  double inertia = 0.0;                     // sum of squared distances to own centroid
};

inline Eigen::MatrixXd stack_features(const std::vector<RegionFeature>& rf) {
  if (rf.empty()) return {};
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rf.size()), rf.front().feature.length());
  for (std::size_t i = 0; i < rf.size(); ++i) m.row(static_cast<Eigen::Index>(i)) = rf[i].feature.coeffs.transpose();
  return m;
}

/// Per-column z-score; constant columns become zero.
inline Eigen::MatrixXd standardize(const Eigen::MatrixXd& x) {
  Eigen::MatrixXd out = x;
  if (x.rows() == 0) return out;
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    const double sd = std::sqrt((x.col(c).array() - mean).square().mean());
    if (sd > 0) {
      out.col(c) = ((x.col(c).array() - mean) / sd).matrix();
    } else {
      out.col(c).setZero();
    }
  }
  return out;
}

namespace detail {

inline void check_k(const Eigen::MatrixXd& x, int k) {
  if (k < 1) throw Error("cluster count must be >= 1");
  if (k > x.rows()) {
    throw Error("cannot form " + std::to_string(k) + " clusters from " + std::to_string(x.rows()) + " features");
  }
}

/// Renumbers labels by first appearance and recomputes centroids/inertia.
inline ClusterAssignment finish(const Eigen::MatrixXd& x, std::vector<int> raw, int k) {
  std::vector<int> remap(static_cast<std::size_t>(k), -1);
  int next = 0;
  for (int& l : raw) {
    if (remap[static_cast<std::size_t>(l)] < 0) remap[static_cast<std::size_t>(l)] = next++;
    l = remap[static_cast<std::size_t>(l)];
  }
  ClusterAssignment a;
  a.labels = std::move(raw);
  a.k = k;
  a.centroids = Eigen::MatrixXd::Zero(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    a.centroids.row(a.labels[static_cast<std::size_t>(i)]) += x.row(i);
    ++counts[static_cast<std::size_t>(a.labels[static_cast<std::size_t>(i)])];
  }
  for (int c = 0; c < k; ++c) {
    if (counts[static_cast<std::size_t>(c)] > 0) a.centroids.row(c) /= counts[static_cast<std::size_t>(c)];
  }
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    a.inertia += (x.row(i) - a.centroids.row(a.labels[static_cast<std::size_t>(i)])).squaredNorm();
  }
  return a;
}

inline int nearest_centroid(const Eigen::MatrixXd& centroids, const Eigen::RowVectorXd& p) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index c = 0; c < centroids.rows(); ++c) {
    const double d = (centroids.row(c) - p).squaredNorm();
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace detail

/// Lloyd iterations from k-means++ seeding.
inline ClusterAssignment kmeans(const Eigen::MatrixXd& x, int k, std::uint64_t seed, int max_iter = 300) {
  detail::check_k(x, k);
  const Eigen::Index n = x.rows();
  Rng rng(seed);
  Eigen::MatrixXd centroids(k, x.cols());
  centroids.row(0) = x.row(static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(n))));
  Eigen::VectorXd d2 = (x.rowwise() - centroids.row(0)).rowwise().squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = d2.sum();
    Eigen::Index pick = n - 1;
    if (total > 0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2(i);
        if (acc > r) {
          pick = i;
          break;
        }
      }
      while (d2(pick) == 0 && pick > 0) --pick;
    } else {
      pick = c;  // every point coincides with a centre already
    }
    centroids.row(c) = x.row(pick);
    d2 = d2.cwiseMin((x.rowwise() - centroids.row(c)).rowwise().squaredNorm());
  }

  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (int iter = 0; iter < max_iter; ++iter) {
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      const int l = detail::nearest_centroid(centroids, x.row(i));
      if (l != labels[static_cast<std::size_t>(i)]) {
        labels[static_cast<std::size_t>(i)] = l;
        changed = true;
      }
    }
    if (!changed) break;
    Eigen::MatrixXd sums = Eigen::MatrixXd::Zero(k, x.cols());
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      sums.row(labels[static_cast<std::size_t>(i)]) += x.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1;
    }
    for (int c = 0; c < k; ++c) {
      if (counts(c) > 0) centroids.row(c) = sums.row(c) / counts(c);  // empty clusters keep their centre
    }
  }
  return detail::finish(x, std::move(labels), k);
}

enum class Linkage { average, ward, single, complete };

inline Linkage parse_linkage(const std::string& s) {
  if (s == "average") return Linkage::average;
  if (s == "ward") return Linkage::ward;
  if (s == "single") return Linkage::single;
  if (s == "complete") return Linkage::complete;
  throw Error("unknown linkage '" + s + "'");
}

inline std::string to_string(Linkage l) {
  switch (l) {
    case Linkage::average: return "average";
    case Linkage::ward: return "ward";
    case Linkage::single: return "single";
    case Linkage::complete: return "complete";
  }
  return "?";
}

/// Bottom-up merging with Lance-Williams updates until k clusters remain.
/// Ward works on squared Euclidean distances, the others on Euclidean.
/// Equal distances merge the pair with the lowest (i, j) cluster indices,
/// where a merged cluster keeps the lower index.
inline ClusterAssignment agglomerative(const Eigen::MatrixXd& x, int k, Linkage linkage = Linkage::average) {
  detail::check_k(x, k);
  const auto n = static_cast<std::size_t>(x.rows());
  Eigen::MatrixXd dist(x.rows(), x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (Eigen::Index j = 0; j < x.rows(); ++j) {
      const double sq = (x.row(i) - x.row(j)).squaredNorm();
      dist(i, j) = linkage == Linkage::ward ? sq : std::sqrt(sq);
    }
  }
  std::vector<int> owner(n);
  for (std::size_t i = 0; i < n; ++i) owner[i] = static_cast<int>(i);
  std::vector<double> size(n, 1.0);
  std::vector<bool> active(n, true);
  for (std::size_t clusters = n; clusters > static_cast<std::size_t>(k); --clusters) {
    std::size_t bi = 0, bj = 0;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
      if (!active[i]) continue;
      for (std::size_t j = i + 1; j < n; ++j) {
        if (active[j] && dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) < best) {
          best = dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
          bi = i;
          bj = j;
        }
      }
    }
    const auto I = static_cast<Eigen::Index>(bi);
    const auto J = static_cast<Eigen::Index>(bj);
    const double ni = size[bi], nj = size[bj];
    for (std::size_t m = 0; m < n; ++m) {
      if (!active[m] || m == bi || m == bj) continue;
      const auto M = static_cast<Eigen::Index>(m);
      const double dim = dist(I, M), djm = dist(J, M);
      double merged = 0.0;
      switch (linkage) {
        case Linkage::single: merged = std::min(dim, djm); break;
        case Linkage::complete: merged = std::max(dim, djm); break;
        case Linkage::average: merged = (ni * dim + nj * djm) / (ni + nj); break;
        case Linkage::ward: {
          const double nm = size[m];
          merged = ((ni + nm) * dim + (nj + nm) * djm - nm * dist(I, J)) / (ni + nj + nm);
          break;
        }
      }
      dist(I, M) = dist(M, I) = merged;
    }
    size[bi] += nj;
    active[bj] = false;
    for (int& o : owner) {
      if (o == static_cast<int>(bj)) o = static_cast<int>(bi);
    }
  }
  std::vector<int> compact(n, -1);
  std::vector<int> id_of(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto o = static_cast<std::size_t>(owner[i]);
    if (id_of[o] < 0) id_of[o] = next++;
    compact[i] = id_of[o];
  }
  return detail::finish(x, std::move(compact), k);
}

/// Fuzzy memberships of every point to fixed centroids. A point lying
/// exactly on a centroid gets membership 1 there (first such centroid).
inline Eigen::MatrixXd fuzzy_memberships(const Eigen::MatrixXd& x, const Eigen::MatrixXd& centroids, double m) {
  const Eigen::Index k = centroids.rows();
  Eigen::MatrixXd u = Eigen::MatrixXd::Zero(x.rows(), k);
  const double power = 2.0 / (m - 1.0);
  Eigen::VectorXd d(k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index zero = -1;
    for (Eigen::Index j = 0; j < k; ++j) {
      d(j) = (x.row(i) - centroids.row(j)).norm();
      if (d(j) == 0.0 && zero < 0) zero = j;
    }
    if (zero >= 0) {
      u(i, zero) = 1.0;
      continue;
    }
    for (Eigen::Index j = 0; j < k; ++j) {
      double denom = 0.0;
      for (Eigen::Index l = 0; l < k; ++l) denom += std::pow(d(j) / d(l), power);
      u(i, j) = 1.0 / denom;
    }
    u.row(i) /= u.row(i).sum();
  }
  return u;
}

/// Alternating centroid / membership updates from a seeded random membership
/// matrix until the largest membership change drops below `tol`.
inline ClusterAssignment fuzzy_cmeans(const Eigen::MatrixXd& x, int k, double m = 2.0, double tol = 1e-5,
                                      std::uint64_t seed = 0, int max_iter = 1000) {
  detail::check_k(x, k);
  if (!(m > 1.0)) throw Error("fuzzifier m must be > 1");
  Rng rng(seed);
  Eigen::MatrixXd u(x.rows(), k);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    for (int j = 0; j < k; ++j) u(i, j) = rng.uniform() + 1e-3;
    u.row(i) /= u.row(i).sum();
  }
  Eigen::MatrixXd centroids(k, x.cols());
  for (int iter = 0; iter < max_iter; ++iter) {
    const Eigen::MatrixXd um = u.array().pow(m);
    for (int j = 0; j < k; ++j) centroids.row(j) = (um.col(j).transpose() * x) / um.col(j).sum();
    Eigen::MatrixXd next = fuzzy_memberships(x, centroids, m);
    const double change = (next - u).cwiseAbs().maxCoeff();
    u = std::move(next);
    if (change < tol) break;
  }
  std::vector<int> labels(static_cast<std::size_t>(x.rows()));
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    Eigen::Index best = 0;
    u.row(i).maxCoeff(&best);
    labels[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  // Permute membership columns to follow the first-appearance relabelling.
  std::vector<int> order;
  for (int l : labels) {
    if (std::find(order.begin(), order.end(), l) == order.end()) order.push_back(l);
  }
  for (int j = 0; j < k; ++j) {
    if (std::find(order.begin(), order.end(), j) == order.end()) order.push_back(j);
  }
  ClusterAssignment a = detail::finish(x, labels, k);
  Eigen::MatrixXd permuted(x.rows(), k);
  Eigen::MatrixXd permuted_centroids(k, x.cols());
  for (int j = 0; j < k; ++j) {
    permuted.col(j) = u.col(order[static_cast<std::size_t>(j)]);
    permuted_centroids.row(j) = centroids.row(order[static_cast<std::size_t>(j)]);
  }
  a.memberships = std::move(permuted);
  a.centroids = std::move(permuted_centroids);
  return a;
}

// ---------------------------------------------------------------------------
// Agreement metrics between a clustering and reference labels.

namespace detail {

inline std::vector<int> dense_labels(const std::vector<int>& labels, int& classes) {
  std::map<int, int> ids;
  for (int l : labels) ids.emplace(l, 0);
  int next = 0;
  for (auto& [key, value] : ids) value = next++;
  classes = next;
  std::vector<int> out;
  out.reserve(labels.size());
  for (int l : labels) out.push_back(ids[l]);
  return out;
}

inline Eigen::MatrixXd contingency(const std::vector<int>& a, const std::vector<int>& b, int& ka, int& kb) {
  if (a.size() != b.size()) {
    throw Error("label vectors differ in length (" + std::to_string(a.size()) + " vs " + std::to_string(b.size()) + ")");
  }
  const auto da = dense_labels(a, ka);
  const auto db = dense_labels(b, kb);
  Eigen::MatrixXd table = Eigen::MatrixXd::Zero(ka, kb);
  for (std::size_t i = 0; i < a.size(); ++i) table(da[i], db[i]) += 1;
  return table;
}

}  // namespace detail

/// Minimum-cost perfect matching on a square cost matrix (Hungarian method,
/// potentials form). Returns the column assigned to each row.
inline std::vector<int> hungarian(const Eigen::MatrixXd& cost) {
  const int n = static_cast<int>(cost.rows());
  if (cost.cols() != n) throw Error("hungarian expects a square cost matrix");
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0), v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<int> p(static_cast<std::size_t>(n) + 1, 0), way(static_cast<std::size_t>(n) + 1, 0);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<bool> used(static_cast<std::size_t>(n) + 1, false);
    do {
      used[static_cast<std::size_t>(j0)] = true;
      const int i0 = p[static_cast<std::size_t>(j0)];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      const int j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> assignment(static_cast<std::size_t>(n), -1);
  for (int j = 1; j <= n; ++j) {
    if (p[static_cast<std::size_t>(j)] > 0) assignment[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  }
  return assignment;
}

/// Fraction of points on which the best one-to-one cluster/class matching agrees.
inline double clustering_accuracy(const std::vector<int>& predicted, const std::vector<int>& truth) {
  int kp = 0, kt = 0;
  const Eigen::MatrixXd table = detail::contingency(predicted, truth, kp, kt);
  if (predicted.empty()) return 1.0;
  const int k = std::max(kp, kt);
  Eigen::MatrixXd cost = Eigen::MatrixXd::Zero(k, k);
  cost.topLeftCorner(kp, kt) = -table;
  const auto match = hungarian(cost);
  double hits = 0.0;
  for (int r = 0; r < kp; ++r) {
    const int c = match[static_cast<std::size_t>(r)];
    if (c < kt) hits += table(r, c);
  }
  return hits / static_cast<double>(predicted.size());
}

/// Adjusted Rand index (pair counting). Two identical trivial partitions give 1.
inline double ari(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() < 2) throw Error("ARI needs at least two points");
  int ka = 0, kb = 0;
  const Eigen::MatrixXd t = detail::contingency(a, b, ka, kb);
  auto pairs = [](double v) { return v * (v - 1.0) / 2.0; };
  const double n = static_cast<double>(a.size());
  double index = 0.0, rows = 0.0, cols = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j) index += pairs(t(i, j));
  for (Eigen::Index i = 0; i < t.rows(); ++i) rows += pairs(t.row(i).sum());
  for (Eigen::Index j = 0; j < t.cols(); ++j) cols += pairs(t.col(j).sum());
  const double expected = rows * cols / pairs(n);
  const double max_index = 0.5 * (rows + cols);
  if (max_index == expected) return 1.0;
  return (index - expected) / (max_index - expected);
}

/// Mutual information over the arithmetic mean of the two entropies.
/// When both entropies are zero the partitions are both a single cluster: 1.
inline double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() < 2) throw Error("NMI needs at least two points");
  int ka = 0, kb = 0;
  const Eigen::MatrixXd t = detail::contingency(a, b, ka, kb);
  const double n = static_cast<double>(a.size());
  const Eigen::VectorXd ra = t.rowwise().sum();
  const Eigen::RowVectorXd cb = t.colwise().sum();
  double mi = 0.0, ha = 0.0, hb = 0.0;
  for (Eigen::Index i = 0; i < t.rows(); ++i)
    for (Eigen::Index j = 0; j < t.cols(); ++j)
      if (t(i, j) > 0) mi += t(i, j) / n * std::log(n * t(i, j) / (ra(i) * cb(j)));
  for (Eigen::Index i = 0; i < ra.size(); ++i) ha -= ra(i) / n * std::log(ra(i) / n);
  for (Eigen::Index j = 0; j < cb.size(); ++j) hb -= cb(j) / n * std::log(cb(j) / n);
  const double denom = 0.5 * (ha + hb);
  if (denom <= 0.0) return a == b || (ka == 1 && kb == 1) ? 1.0 : 0.0;
  return std::clamp(mi / denom, 0.0, 1.0);
}

}  // namespace ressam

#endif
