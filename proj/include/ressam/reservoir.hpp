#ifndef RESSAM_RESERVOIR_HPP
#define RESSAM_RESERVOIR_HPP

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "ressam/frame.hpp"
#include "ressam/rng.hpp"

namespace ressam {

struct ReservoirConfig {
  int n = 30;                // neurons per reservoir
  double rho = 0.9;          // target spectral radius of each recurrence matrix
  double input_scale = 1.0;  // input weights drawn from [-input_scale, input_scale]
  double lambda = 1e-2;      // ridge regularization; lambda^2 enters the normal equations
  std::uint64_t seed = 42;

  void validate() const {
    if (n < 1) throw Error("reservoir size must be >= 1");
    if (!(rho > 0.0 && rho < 1.0)) throw Error("spectral radius target must lie in (0, 1)");
    if (!(input_scale > 0.0)) throw Error("input scale must be positive");
    if (!(lambda > 0.0)) throw Error("ridge lambda must be positive");
  }
};

/// Largest eigenvalue modulus, from the real Schur form.
inline double spectral_radius(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols() || m.rows() == 0) throw Error("spectral radius needs a non-empty square matrix");
  if (m.rows() == 1) return std::abs(m(0, 0));
  Eigen::EigenSolver<Eigen::MatrixXd> solver(m, /*computeEigenvectors=*/false);
  if (solver.info() != Eigen::Success) {
    throw Error("eigenvalue iteration did not converge for a " + std::to_string(m.rows()) + "x" +
                std::to_string(m.cols()) + " reservoir matrix");
  }
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  static constexpr char digits[] = "0123456789abcdef";
  std::string s(16, '0');
  for (int i = 15; i >= 0; --i, v >>= 4) s[static_cast<std::size_t>(i)] = digits[v & 0xf];
  return s;
}

namespace detail {

// Little-endian binary helpers shared by the reservoir and bank formats.
class BlobWriter {
 public:
  void bytes(std::string_view b) { out_.append(b); }
  template <typename T>
  void scalar(T v) {
    if constexpr (std::is_same_v<T, double>) {
      scalar(std::bit_cast<std::uint64_t>(v));
    } else {
      using U = std::make_unsigned_t<T>;
      auto u = static_cast<U>(v);
      for (std::size_t i = 0; i < sizeof(T); ++i) out_.push_back(static_cast<char>((u >> (8 * i)) & 0xff));
    }
  }
  void str(std::string_view s) {
    scalar(static_cast<std::uint32_t>(s.size()));
    out_.append(s);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class BlobReader {
 public:
  BlobReader(std::string_view data, std::string what) : data_(data), what_(std::move(what)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    auto s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  template <typename T>
  T scalar() {
    if constexpr (std::is_same_v<T, double>) {
      return std::bit_cast<double>(scalar<std::uint64_t>());
    } else {
      using U = std::make_unsigned_t<T>;
      need(sizeof(T));
      U u = 0;
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        u |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
      }
      pos_ += sizeof(T);
      return static_cast<T>(u);
    }
  }
  std::string str() {
    const auto len = scalar<std::uint32_t>();
    return std::string(bytes(len));
  }
  bool done() const { return pos_ == data_.size(); }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw Error(what_ + ": truncated blob");
  }
  std::string_view data_;
  std::size_t pos_ = 0;
  std::string what_;
};

}  // namespace detail

/// Frozen reservoir shared by every fit; features are only comparable
/// between fits that used the same instance (same fingerprint).
class ReservoirWeights {
 public:
  static constexpr std::string_view kMagic = "R2DE";
  static constexpr std::uint16_t kVersion = 1;

  ReservoirWeights(ReservoirConfig config, Eigen::MatrixXd wx, Eigen::MatrixXd wy, Eigen::VectorXd win)
      : config_(config), wx_(std::move(wx)), wy_(std::move(wy)), win_(std::move(win)) {
    const auto n = static_cast<Eigen::Index>(config_.n);
    if (wx_.rows() != n || wx_.cols() != n || wy_.rows() != n || wy_.cols() != n || win_.size() != n) {
      throw Error("reservoir matrices do not match n = " + std::to_string(config_.n));
    }
    fingerprint_ = fnv1a64(serialize());
  }

  const ReservoirConfig& config() const { return config_; }
  int size() const { return config_.n; }
  int feature_length() const { return 2 * config_.n + 1; }
  const Eigen::MatrixXd& wx() const { return wx_; }
  const Eigen::MatrixXd& wy() const { return wy_; }
  const Eigen::VectorXd& win() const { return win_; }
  std::uint64_t fingerprint() const { return fingerprint_; }

  /// "R2DE", u16 version, u32 n, f64 rho, f64 input_scale, u64 seed, then
  /// wx, wy (row-major) and win as f64. All little-endian.
  std::string serialize() const {
    detail::BlobWriter w;
    w.bytes(kMagic);
    w.scalar(kVersion);
    w.scalar(static_cast<std::uint32_t>(config_.n));
    w.scalar(config_.rho);
    w.scalar(config_.input_scale);
    w.scalar(config_.seed);
    for (const auto* m : {&wx_, &wy_}) {
      for (Eigen::Index r = 0; r < m->rows(); ++r)
        for (Eigen::Index c = 0; c < m->cols(); ++c) w.scalar((*m)(r, c));
    }
    for (Eigen::Index i = 0; i < win_.size(); ++i) w.scalar(win_(i));
    return w.take();
  }

  static ReservoirWeights deserialize(std::string_view blob) {
    detail::BlobReader r(blob, "reservoir");
    if (r.bytes(4) != kMagic) throw Error("reservoir: bad magic, expected R2DE");
    const auto version = r.scalar<std::uint16_t>();
    if (version != kVersion) throw Error("reservoir: unsupported version " + std::to_string(version));
    ReservoirConfig cfg;
    cfg.n = static_cast<int>(r.scalar<std::uint32_t>());
    cfg.rho = r.scalar<double>();
    cfg.input_scale = r.scalar<double>();
    cfg.seed = r.scalar<std::uint64_t>();
    if (cfg.n < 1 || cfg.n > 4096) throw Error("reservoir: implausible size " + std::to_string(cfg.n));
    Eigen::MatrixXd wx(cfg.n, cfg.n), wy(cfg.n, cfg.n);
    Eigen::VectorXd win(cfg.n);
    for (auto* m : {&wx, &wy}) {
      for (Eigen::Index row = 0; row < m->rows(); ++row)
        for (Eigen::Index c = 0; c < m->cols(); ++c) (*m)(row, c) = r.scalar<double>();
    }
    for (Eigen::Index i = 0; i < win.size(); ++i) win(i) = r.scalar<double>();
    if (!r.done()) throw Error("reservoir: trailing bytes after payload");
    return ReservoirWeights(cfg, std::move(wx), std::move(wy), std::move(win));
  }

 private:
  ReservoirConfig config_;
  Eigen::MatrixXd wx_;
  Eigen::MatrixXd wy_;
  Eigen::VectorXd win_;
  std::uint64_t fingerprint_ = 0;
};

/// Draws wx, wy uniform on [-1, 1] and rescales each to spectral radius rho;
/// win uniform on [-input_scale, input_scale]. Deterministic in config.seed.
inline ReservoirWeights build_reservoir(const ReservoirConfig& config) {
  config.validate();
  Rng rng(config.seed);
  const int n = config.n;
  auto draw = [&](double scale) {
    Eigen::MatrixXd m(n, n);
    for (int r = 0; r < n; ++r)
      for (int c = 0; c < n; ++c) m(r, c) = rng.uniform(-scale, scale);
    return m;
  };
  auto rescale = [&](Eigen::MatrixXd m) {
    const double radius = spectral_radius(m);
    if (!(radius > 0.0) || !std::isfinite(radius)) throw Error("reservoir draw has zero spectral radius");
    if (n == 1) {
      m(0, 0) = std::copysign(config.rho, m(0, 0));
      return m;
    }
    m *= config.rho / radius;
    return m;
  };
  Eigen::MatrixXd wx = rescale(draw(1.0));
  Eigen::MatrixXd wy = rescale(draw(1.0));
  Eigen::VectorXd win(n);
  for (int i = 0; i < n; ++i) win(i) = rng.uniform(-config.input_scale, config.input_scale);
  return ReservoirWeights(config, std::move(wx), std::move(wy), std::move(win));
}

/// States h(x, y) for every patch point; column y*width + x holds h(x, y).
/// Out-of-grid predecessors are the zero vector.
struct HiddenStateGrid {
  int width = 0;
  int height = 0;
  Eigen::MatrixXd states;  // n x (width*height)

  int n() const { return static_cast<int>(states.rows()); }
  auto state(int x, int y) const { return states.col(static_cast<Eigen::Index>(y) * width + x); }
};

/// h(x,y) = tanh(Wx h(x-1,y) + Wy h(x,y-1) + Win u(x,y)), scanned row-major.
inline HiddenStateGrid iterate_hidden_states(const GridRef& patch, const ReservoirWeights& w) {
  HiddenStateGrid grid;
  grid.width = static_cast<int>(patch.cols());
  grid.height = static_cast<int>(patch.rows());
  grid.states.resize(w.size(), static_cast<Eigen::Index>(grid.width) * grid.height);
  Eigen::VectorXd pre(w.size());
  for (int y = 0; y < grid.height; ++y) {
    for (int x = 0; x < grid.width; ++x) {
      const double u = patch(y, x);
      if (!std::isfinite(u)) throw Error("patch contains a non-finite value");
      pre.noalias() = w.win() * u;
      if (x > 0) pre.noalias() += w.wx() * grid.state(x - 1, y);
      if (y > 0) pre.noalias() += w.wy() * grid.state(x, y - 1);
      grid.states.col(static_cast<Eigen::Index>(y) * grid.width + x) = pre.array().tanh();
    }
  }
  return grid;
}

struct RegressionOptions {
  bool include_origin = true;  // keep the (0,0) row whose predecessors are both boundary states
};

/// Design matrix rows [h(x-1,y); h(x,y-1); 1] with targets u(x,y), in scan order.
struct RegressionSystem {
  Eigen::MatrixXd design;  // rows x (2n+1)
  Eigen::VectorXd target;
};

inline RegressionSystem assemble_regression(const HiddenStateGrid& hidden, const GridRef& patch,
                                            RegressionOptions opts = {}) {
  if (hidden.width != patch.cols() || hidden.height != patch.rows()) {
    throw Error("hidden state grid is " + std::to_string(hidden.width) + "x" + std::to_string(hidden.height) +
                " but patch is " + std::to_string(patch.cols()) + "x" + std::to_string(patch.rows()));
  }
  const Eigen::Index n = hidden.n();
  const Eigen::Index points = static_cast<Eigen::Index>(hidden.width) * hidden.height;
  const Eigen::Index skip = opts.include_origin ? 0 : 1;
  RegressionSystem sys;
  sys.design.setZero(points - skip, 2 * n + 1);
  sys.target.resize(points - skip);
  Eigen::Index row = 0;
  for (int y = 0; y < hidden.height; ++y) {
    for (int x = 0; x < hidden.width; ++x) {
      if (x == 0 && y == 0 && !opts.include_origin) continue;
      if (x > 0) sys.design.row(row).segment(0, n) = hidden.state(x - 1, y).transpose();
      if (y > 0) sys.design.row(row).segment(n, n) = hidden.state(x, y - 1).transpose();
      sys.design(row, 2 * n) = 1.0;
      sys.target(row) = patch(y, x);
      ++row;
    }
  }
  return sys;
}

/// Readout [W_out a]: 2n output weights followed by the bias.
struct DynamicFeature {
  Eigen::VectorXd coeffs;
  std::uint64_t reservoir = 0;  // fingerprint of the producing reservoir; 0 if unknown

  Eigen::Index length() const { return coeffs.size(); }
  int n() const { return static_cast<int>((coeffs.size() - 1) / 2); }
  auto wout() const { return coeffs.head(coeffs.size() - 1); }
  double bias() const { return coeffs(coeffs.size() - 1); }
};

/// Solves (H^T H + lambda^2 I) w = H^T U by Cholesky.
inline DynamicFeature fit_readout(const Eigen::MatrixXd& design, const Eigen::VectorXd& target, double lambda) {
  if (!(lambda > 0.0)) throw Error("ridge lambda must be positive");
  if (design.rows() != target.size()) throw Error("design rows and target length differ");
  const Eigen::Index d = design.cols();
  Eigen::MatrixXd normal = Eigen::MatrixXd::Zero(d, d);
  normal.selfadjointView<Eigen::Lower>().rankUpdate(design.transpose());
  normal.diagonal().array() += lambda * lambda;
  Eigen::LLT<Eigen::MatrixXd, Eigen::Lower> llt(normal);
  if (llt.info() != Eigen::Success) throw Error("ridge normal matrix is not positive definite");
  DynamicFeature f;
  f.coeffs = llt.solve(design.transpose() * target);
  if (!f.coeffs.allFinite()) throw Error("ridge readout produced non-finite weights");
  return f;
}

/// Fits one patch with next-point prediction; returns its dynamic feature.
inline DynamicFeature fit_patch(const GridRef& patch, const ReservoirWeights& w, double lambda,
                                RegressionOptions opts = {}) {
  const HiddenStateGrid hidden = iterate_hidden_states(patch, w);
  const RegressionSystem sys = assemble_regression(hidden, patch, opts);
  DynamicFeature f = fit_readout(sys.design, sys.target, lambda);
  f.reservoir = w.fingerprint();
  return f;
}

/// v = W_out [h(x-1,y); h(x,y-1)] + a.
inline double predict(const Eigen::VectorXd& h_prev_x, const Eigen::VectorXd& h_prev_y, const DynamicFeature& f) {
  const Eigen::Index n = f.n();
  if (h_prev_x.size() != n || h_prev_y.size() != n) {
    throw Error("predict expects two state vectors of length " + std::to_string(n));
  }
  return f.coeffs.head(n).dot(h_prev_x) + f.coeffs.segment(n, n).dot(h_prev_y) + f.bias();
}

}  // namespace ressam

#endif
