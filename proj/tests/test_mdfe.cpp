#include <catch2/catch_amalgamated.hpp>

#include <complex>

#include "psr/mdfe.hpp"
#include "psr/rng.hpp"

using namespace psr;

namespace {

// brute-force O(N^2) DFT + complex power oracle
Eigen::MatrixXd naive_frequency_features(const Eigen::VectorXd& values, int k_deriv) {
  const int n = static_cast<int>(values.size());
  Eigen::MatrixXd out(n, k_deriv);
  for (int bin = 0; bin < n; ++bin) {
    std::complex<double> f(0.0, 0.0);
    for (int j = 0; j < n; ++j) {
      const double ang = -2.0 * M_PI * static_cast<double>(bin) * static_cast<double>(j) / static_cast<double>(n);
      f += values[j] * std::complex<double>(std::cos(ang), std::sin(ang));
    }
    for (int k = 0; k < k_deriv; ++k) {
      std::complex<double> p(1.0, 0.0);
      const std::complex<double> w(0.0, 2.0 * M_PI * static_cast<double>(bin) / static_cast<double>(n));
      for (int q = 0; q < k; ++q) p *= w;
      out(bin, k) = (p * f).real();
    }
  }
  return out;
}

SampleWindow make_window(const Eigen::VectorXd& ts, const Eigen::VectorXd& vals) {
  return SampleWindow(ts, vals);
}

Eigen::VectorXd iota(int n, double step = 1.0, double start = 0.0) {
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = start + step * i;
  return v;
}

}  // namespace

TEST_CASE("periodic embedding: quarter cycle") {
  SampleWindow w = make_window(iota(4), Eigen::VectorXd::Zero(4));
  PeriodConfig cfg{{{1.0, 4}}};
  Eigen::MatrixXd a = periodic_embed(w, cfg);
  Eigen::VectorXd sin_expect(4), cos_expect(4);
  sin_expect << 0, 1, 0, -1;
  cos_expect << 1, 0, -1, 0;
  for (int i = 0; i < 4; ++i) {
    REQUIRE_THAT(a(i, 0), Catch::Matchers::WithinAbs(sin_expect[i], 1e-12));
    REQUIRE_THAT(a(i, 1), Catch::Matchers::WithinAbs(cos_expect[i], 1e-12));
  }
}

TEST_CASE("periodic embedding: multiples of the full cycle collapse to phase zero") {
  Eigen::VectorXd ts(3);
  ts << 0.0, 12.0, 24.0;  // P*C = 3*4 = 12
  SampleWindow w = make_window(ts, Eigen::VectorXd::Zero(3));
  Eigen::MatrixXd a = periodic_embed(w, PeriodConfig{{{3.0, 4}}});
  for (int i = 0; i < 3; ++i) {
    REQUIRE_THAT(a(i, 0), Catch::Matchers::WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(a(i, 1), Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("periodic embedding matches a direct transcription") {
  Eigen::VectorXd ts(3);
  ts << 0.0, 2.5, 7.9;
  SampleWindow w = make_window(ts, Eigen::VectorXd::Zero(3));
  Eigen::MatrixXd a = periodic_embed(w, PeriodConfig{{{2.0, 3}}});
  // V = floor(t/2) mod 3 = [0, 1, 0]
  const int v[3] = {0, 1, 0};
  for (int i = 0; i < 3; ++i) {
    REQUIRE_THAT(a(i, 0), Catch::Matchers::WithinAbs(std::sin(2.0 * M_PI * v[i] / 3.0), 1e-12));
    REQUIRE_THAT(a(i, 1), Catch::Matchers::WithinAbs(std::cos(2.0 * M_PI * v[i] / 3.0), 1e-12));
  }
}

TEST_CASE("periodic embedding is invariant to shifts by P*C") {
  Rng rng(31);
  PeriodConfig cfg{{{2.0, 5}}};
  for (int trial = 0; trial < 20; ++trial) {
    Eigen::VectorXd ts = iota(6, 1.3, rng.uniform(0.0, 50.0));
    SampleWindow w1 = make_window(ts, Eigen::VectorXd::Zero(6));
    SampleWindow w2 = make_window(ts.array() + 3.0 * 2.0 * 5.0, Eigen::VectorXd::Zero(6));
    Eigen::MatrixXd a1 = periodic_embed(w1, cfg);
    Eigen::MatrixXd a2 = periodic_embed(w2, cfg);
    REQUIRE((a1 - a2).cwiseAbs().maxCoeff() < 1e-9);
  }
}

TEST_CASE("periodic columns satisfy sin^2 + cos^2 = 1") {
  Rng rng(32);
  Eigen::VectorXd ts = iota(50, 0.7);
  SampleWindow w = make_window(ts, Eigen::VectorXd::Zero(50));
  Eigen::MatrixXd a = periodic_embed(w, PeriodConfig{{{1.0, 60}, {5.0, 7}}});
  REQUIRE(a.cols() == 4);
  for (int i = 0; i < 50; ++i) {
    for (int j = 0; j < 2; ++j) {
      const double s = a(i, 2 * j), c = a(i, 2 * j + 1);
      REQUIRE_THAT(s * s + c * c, Catch::Matchers::WithinAbs(1.0, 1e-12));
      REQUIRE(std::abs(s) <= 1.0);
      REQUIRE(std::abs(c) <= 1.0);
    }
  }
}

TEST_CASE("frequency features of a constant signal") {
  const double c = 2.5;
  SampleWindow w = make_window(iota(4), Eigen::VectorXd::Constant(4, c));
  Eigen::MatrixXd b = frequency_features_raw(w, 4);
  REQUIRE_THAT(b(0, 0), Catch::Matchers::WithinAbs(4.0 * c, 1e-12));
  for (int k = 1; k < 4; ++k) REQUIRE_THAT(b(0, k), Catch::Matchers::WithinAbs(0.0, 1e-12));
  for (int n = 1; n < 4; ++n)
    for (int k = 0; k < 4; ++k) REQUIRE_THAT(b(n, k), Catch::Matchers::WithinAbs(0.0, 1e-9));
}

TEST_CASE("two-point window: derivative term is purely imaginary") {
  Eigen::VectorXd vals(2);
  vals << 1.7, -0.4;
  SampleWindow w = make_window(iota(2), vals);
  Eigen::MatrixXd b = frequency_features_raw(w, 2);
  REQUIRE_THAT(b(1, 0), Catch::Matchers::WithinAbs(1.7 - (-0.4), 1e-12));
  REQUIRE_THAT(b(1, 1), Catch::Matchers::WithinAbs(0.0, 1e-12));
}

TEST_CASE("frequency features match the naive DFT oracle") {
  Rng rng(33);
  for (int trial = 0; trial < 100; ++trial) {
    Eigen::VectorXd vals(50);
    rng.fill_gaussian(vals, 0.0, 2.0);
    SampleWindow w = make_window(iota(50), vals);
    Eigen::MatrixXd got = frequency_features_raw(w, 4);
    Eigen::MatrixXd expect = naive_frequency_features(vals, 4);
    const double scale = std::max(1.0, expect.cwiseAbs().maxCoeff());
    REQUIRE((got - expect).cwiseAbs().maxCoeff() / scale < 1e-9);
  }
}

TEST_CASE("DFT linearity on raw features") {
  Rng rng(34);
  Eigen::VectorXd x(32), y(32);
  rng.fill_gaussian(x, 0.0, 1.0);
  rng.fill_gaussian(y, 0.0, 1.0);
  const double a = 1.7, b = -0.6;
  Eigen::VectorXd ts = iota(32);
  Eigen::MatrixXd fx = frequency_features_raw(make_window(ts, x), 3);
  Eigen::MatrixXd fy = frequency_features_raw(make_window(ts, y), 3);
  Eigen::MatrixXd fxy = frequency_features_raw(make_window(ts, a * x + b * y), 3);
  REQUIRE((fxy - (a * fx + b * fy)).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("assemble_features layout and shapes") {
  Rng rng(35);
  Eigen::VectorXd vals(10);
  rng.fill_gaussian(vals, 5.0, 1.0);
  SampleWindow w = make_window(iota(10), vals);
  FeatureScaler unfitted;

  FeatureConfig cfg;  // l=1, K=4
  Eigen::MatrixXd m = assemble_features(w, cfg, unfitted);
  REQUIRE(m.cols() == 8);
  REQUIRE(m.rows() == 10);
  REQUIRE((m.col(0) - w.timestamps).cwiseAbs().maxCoeff() == 0.0);
  REQUIRE((m.col(1) - w.values).cwiseAbs().maxCoeff() == 0.0);

  FeatureConfig cfg2;
  cfg2.periods.periods = {{1.0, 60}, {7.0, 12}};
  REQUIRE(assemble_features(w, cfg2, unfitted).cols() == 10);

  FeatureConfig cfg3;
  cfg3.frequency_on = false;
  REQUIRE(assemble_features(w, cfg3, unfitted).cols() == 4);
  FeatureConfig cfg4;
  cfg4.periodic_on = false;
  REQUIRE(assemble_features(w, cfg4, unfitted).cols() == 6);
}

TEST_CASE("assembled features stay finite and periodic block survives scaling") {
  Rng rng(36);
  std::vector<Eigen::MatrixXd> raws;
  FeatureConfig cfg;
  FeatureScaler unfitted;
  for (int i = 0; i < 5; ++i) {
    Eigen::VectorXd vals(20);
    rng.fill_gaussian(vals, 10.0, 3.0);
    raws.push_back(assemble_features(make_window(iota(20), vals), cfg, unfitted));
  }
  FeatureScaler s = fit_feature_scaler(raws, cfg);
  Eigen::VectorXd vals(20);
  rng.fill_gaussian(vals, 10.0, 3.0);
  Eigen::MatrixXd m = assemble_features(make_window(iota(20), vals), cfg, s);
  REQUIRE(m.allFinite());
  for (int i = 0; i < 20; ++i) {
    const double sv = m(i, 2), cv = m(i, 3);
    REQUIRE_THAT(sv * sv + cv * cv, Catch::Matchers::WithinAbs(1.0, 1e-12));
  }
}

TEST_CASE("window invariants are enforced") {
  Eigen::VectorXd bad_ts(3);
  bad_ts << 0.0, 2.0, 2.0;
  REQUIRE_THROWS_AS(SampleWindow(bad_ts, Eigen::VectorXd::Zero(3)), std::invalid_argument);
  Eigen::VectorXd nan_vals(3);
  nan_vals << 0.0, std::nan(""), 1.0;
  REQUIRE_THROWS_AS(SampleWindow(iota(3), nan_vals), std::invalid_argument);
  REQUIRE_THROWS_AS(SampleWindow(Eigen::VectorXd::Zero(1), Eigen::VectorXd::Zero(1)), std::invalid_argument);
}
