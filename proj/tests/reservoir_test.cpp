#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "ressam/reservoir.hpp"

using namespace ressam;

namespace {

oracle::Mat to_rows(const Eigen::MatrixXd& m) {
  oracle::Mat out(static_cast<std::size_t>(m.rows()), oracle::Vec(static_cast<std::size_t>(m.cols())));
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) out[r][c] = m(r, c);
  return out;
}

ReservoirWeights fixed_scalar(double wx, double wy, double win) {
  ReservoirConfig cfg;
  cfg.n = 1;
  return ReservoirWeights(cfg, Eigen::MatrixXd::Constant(1, 1, wx), Eigen::MatrixXd::Constant(1, 1, wy),
                          Eigen::VectorXd::Constant(1, win));
}

}  // namespace

TEST(Reservoir, ConfigValidation) {
  ReservoirConfig c;
  EXPECT_NO_THROW(c.validate());
  c.rho = 1.0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.n = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.lambda = 0;
  EXPECT_THROW(c.validate(), Error);
  c = {};
  c.input_scale = -1;
  EXPECT_THROW(c.validate(), Error);
}

TEST(Reservoir, ScalarRecurrenceByHand) {
  const auto w = fixed_scalar(0.5, -0.25, 1.0);
  Grid patch(2, 2);
  patch << 1, 2, 0, -1;  // rows are y
  const auto h = iterate_hidden_states(patch, w);
  const double h00 = std::tanh(1.0);
  const double h10 = std::tanh(0.5 * h00 + 2.0);
  const double h01 = std::tanh(-0.25 * h00);
  const double h11 = std::tanh(0.5 * h01 - 0.25 * h10 - 1.0);
  EXPECT_DOUBLE_EQ(h.state(0, 0)(0), h00);
  EXPECT_DOUBLE_EQ(h.state(1, 0)(0), h10);
  EXPECT_DOUBLE_EQ(h.state(0, 1)(0), h01);
  EXPECT_DOUBLE_EQ(h.state(1, 1)(0), h11);
}

TEST(Reservoir, RecurrenceMatchesUnrolledOracle) {
  Rng rng(2024);
  for (int trial = 0; trial < 150; ++trial) {
    ReservoirConfig cfg;
    cfg.n = 1 + static_cast<int>(rng.below(3));
    cfg.rho = rng.uniform(0.1, 0.95);
    cfg.input_scale = rng.uniform(0.2, 2.0);
    cfg.seed = rng.engine()();
    const auto w = build_reservoir(cfg);
    const int rows = 1 + static_cast<int>(rng.below(4)), cols = 1 + static_cast<int>(rng.below(4));
    Grid patch(rows, cols);
    for (int i = 0; i < patch.size(); ++i) patch.data()[i] = rng.uniform(-1.5, 1.5);
    const auto h = iterate_hidden_states(patch, w);
    std::vector<double> win(w.win().data(), w.win().data() + cfg.n);
    const auto ref = oracle::esn_states(to_rows(patch), to_rows(w.wx()), to_rows(w.wy()), win);
    for (int y = 0; y < rows; ++y)
      for (int x = 0; x < cols; ++x)
        for (int i = 0; i < cfg.n; ++i) ASSERT_NEAR(h.state(x, y)(i), ref[y][x][i], 1e-12);
  }
}

TEST(Reservoir, RejectsNonFinitePatch) {
  const auto w = fixed_scalar(0.1, 0.1, 1.0);
  Grid patch = Grid::Zero(2, 2);
  patch(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(iterate_hidden_states(patch, w), Error);
}

TEST(Reservoir, RegressionRowsHoldPredecessors) {
  ReservoirConfig cfg;
  cfg.n = 2;
  const auto w = build_reservoir(cfg);
  Grid patch(2, 3);
  patch << 0.1, 0.2, 0.3, 0.4, 0.5, 0.6;
  const auto h = iterate_hidden_states(patch, w);
  const auto sys = assemble_regression(h, patch);
  ASSERT_EQ(sys.design.rows(), 6);
  ASSERT_EQ(sys.design.cols(), 5);
  // Row for (x=1, y=1) is index 4: [h(0,1); h(1,0); 1] -> u(1,1).
  EXPECT_EQ(sys.design.row(4).head(2).transpose(), h.state(0, 1));
  EXPECT_EQ(sys.design.row(4).segment(2, 2).transpose(), h.state(1, 0));
  EXPECT_EQ(sys.design(4, 4), 1.0);
  EXPECT_EQ(sys.target(4), 0.5);
  // First row has both predecessors outside the patch.
  EXPECT_EQ(sys.design.row(0).head(4).squaredNorm(), 0.0);
  EXPECT_EQ(assemble_regression(h, patch, {.include_origin = false}).design.rows(), 5);
  EXPECT_THROW(assemble_regression(h, Grid::Zero(3, 3)), Error);
}

TEST(Ridge, LambdaEntersSquared) {
  const Eigen::MatrixXd a = Eigen::MatrixXd::Ones(1, 1);
  const Eigen::VectorXd b = Eigen::VectorXd::Constant(1, 3.0);
  EXPECT_DOUBLE_EQ(fit_readout(a, b, 2.0).coeffs(0), 3.0 / (1.0 + 4.0));
  EXPECT_THROW(fit_readout(a, b, 0.0), Error);
  EXPECT_THROW(fit_readout(a, Eigen::VectorXd::Zero(2), 1.0), Error);
}

TEST(Ridge, MatchesNormalEquationOracle) {
  Rng rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(9));
    const int m = 1 + static_cast<int>(rng.below(40));
    const double lambda = std::pow(10.0, rng.uniform(-3, 1));
    Eigen::MatrixXd a(m, d);
    Eigen::VectorXd b(m);
    for (int i = 0; i < a.size(); ++i) a.data()[i] = rng.normal();
    for (int i = 0; i < m; ++i) b(i) = rng.normal();
    const auto f = fit_readout(a, b, lambda);
    const auto ref = oracle::ridge(to_rows(a), std::vector<double>(b.data(), b.data() + m), lambda);
    const Eigen::Map<const Eigen::VectorXd> r(ref.data(), d);
    EXPECT_LE((f.coeffs - r).norm(), 1e-8 * std::max(1.0, r.norm())) << "trial " << trial;
  }
}

TEST(Reservoir, SpectralRadiusMatchesLapack) {
  for (int n : {1, 2, 3, 5, 10, 30, 64, 100}) {
    for (std::uint64_t seed : {1u, 2u, 3u}) {
      ReservoirConfig cfg;
      cfg.n = n;
      cfg.rho = 0.9;
      cfg.seed = seed;
      const auto w = build_reservoir(cfg);
      EXPECT_NEAR(oracle::spectral_radius(to_rows(w.wx())), cfg.rho, 1e-6) << n;
      EXPECT_NEAR(oracle::spectral_radius(to_rows(w.wy())), cfg.rho, 1e-6) << n;
      EXPECT_NEAR(spectral_radius(w.wx()), oracle::spectral_radius(to_rows(w.wx())), 1e-9);
    }
  }
}

TEST(Reservoir, InputWeightsWithinScale) {
  ReservoirConfig cfg;
  cfg.input_scale = 0.3;
  const auto w = build_reservoir(cfg);
  EXPECT_LE(w.win().cwiseAbs().maxCoeff(), 0.3);
}

TEST(Reservoir, DeterministicInSeed) {
  ReservoirConfig cfg;
  cfg.n = 8;
  const auto a = build_reservoir(cfg);
  const auto b = build_reservoir(cfg);
  EXPECT_EQ(a.serialize(), b.serialize());
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  cfg.seed = 43;
  EXPECT_NE(build_reservoir(cfg).fingerprint(), a.fingerprint());
}

TEST(Reservoir, FrozenFingerprintOfDefaultReservoir) {
  // Guards the portable RNG mapping and the blob layout together.
  EXPECT_EQ(hex64(build_reservoir({}).fingerprint()), "197200cde8f0de6e");
}

TEST(Reservoir, BlobRoundTripAndCorruption) {
  ReservoirConfig cfg;
  cfg.n = 5;
  cfg.input_scale = 0.7;
  const auto w = build_reservoir(cfg);
  const std::string blob = w.serialize();
  EXPECT_EQ(blob.size(), 4u + 2 + 4 + 8 + 8 + 8 + 8u * (2 * 25 + 5));
  const auto back = ReservoirWeights::deserialize(blob);
  EXPECT_EQ(back.fingerprint(), w.fingerprint());
  EXPECT_EQ(back.wx(), w.wx());
  EXPECT_EQ(back.config().input_scale, 0.7);
  EXPECT_THROW(ReservoirWeights::deserialize("XXXX" + blob.substr(4)), Error);
  EXPECT_THROW(ReservoirWeights::deserialize(blob.substr(0, blob.size() - 3)), Error);
  EXPECT_THROW(ReservoirWeights::deserialize(blob + "x"), Error);
}

TEST(Reservoir, FitPatchTagsFeature) {
  ReservoirConfig cfg;
  cfg.n = 4;
  const auto w = build_reservoir(cfg);
  Grid patch(5, 6);
  for (int i = 0; i < patch.size(); ++i) patch.data()[i] = std::sin(0.3 * i);
  const auto f = fit_patch(patch, w, 0.1);
  EXPECT_EQ(f.length(), 9);
  EXPECT_EQ(f.n(), 4);
  EXPECT_EQ(f.reservoir, w.fingerprint());
  const auto h = iterate_hidden_states(patch, w);
  const double v = predict(h.state(1, 2), h.state(2, 1), f);
  EXPECT_DOUBLE_EQ(v, f.coeffs.head(4).dot(h.state(1, 2)) + f.coeffs.segment(4, 4).dot(h.state(2, 1)) + f.bias());
  EXPECT_THROW(predict(Eigen::VectorXd::Zero(3), Eigen::VectorXd::Zero(4), f), Error);
}

TEST(Reservoir, ReadoutPredictsSmoothPatchBetterThanMean) {
  ReservoirConfig cfg;
  cfg.n = 12;
  const auto w = build_reservoir(cfg);
  Grid patch(12, 12);
  for (int y = 0; y < 12; ++y)
    for (int x = 0; x < 12; ++x) patch(y, x) = std::sin(0.5 * y) * 0.8;
  const auto f = fit_patch(patch, w, 1e-3);
  const auto h = iterate_hidden_states(patch, w);
  const auto sys = assemble_regression(h, patch);
  const double resid = (sys.design * f.coeffs - sys.target).squaredNorm();
  const double spread = (sys.target.array() - sys.target.mean()).square().sum();
  EXPECT_LT(resid, 0.05 * spread);
}
