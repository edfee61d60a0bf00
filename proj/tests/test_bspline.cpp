#include <catch2/catch_amalgamated.hpp>

#include "psr/bspline.hpp"
#include "psr/rng.hpp"

using psr::Rng;
using psr::SplineGrid;

namespace {

// Independent oracle: literal recursive Cox-de Boor transcription.
double cox_de_boor(const std::vector<double>& t, int k, int p, double x) {
  if (p == 0) return (t[static_cast<std::size_t>(k)] <= x && x < t[static_cast<std::size_t>(k + 1)]) ? 1.0 : 0.0;
  double acc = 0.0;
  const double d1 = t[static_cast<std::size_t>(k + p)] - t[static_cast<std::size_t>(k)];
  if (d1 > 0.0) acc += (x - t[static_cast<std::size_t>(k)]) / d1 * cox_de_boor(t, k, p - 1, x);
  const double d2 = t[static_cast<std::size_t>(k + p + 1)] - t[static_cast<std::size_t>(k + 1)];
  if (d2 > 0.0)
    acc += (t[static_cast<std::size_t>(k + p + 1)] - x) / d2 * cox_de_boor(t, k + 1, p - 1, x);
  return acc;
}

}  // namespace

TEST_CASE("degree-0 basis is the interval indicator") {
  SplineGrid g(0, {0.0, 1.0, 2.0});
  REQUIRE(g.basis_count() == 2);
  Eigen::VectorXd b = g.eval(0.5);
  REQUIRE(b[0] == 1.0);
  REQUIRE(b[1] == 0.0);
  b = g.eval(1.5);
  REQUIRE(b[0] == 0.0);
  REQUIRE(b[1] == 1.0);
}

TEST_CASE("cubic clamped grid on [0,4] at the midpoint") {
  // knots: 0 0 0 0 1 2 3 4 4 4 4 -> 7 basis functions
  SplineGrid g(3, {0, 0, 0, 0, 1, 2, 3, 4, 4, 4, 4});
  REQUIRE(g.basis_count() == 7);
  Eigen::VectorXd b = g.eval(2.0);
  REQUIRE_THAT(b.sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
  // hand-run recursion: central value at an interior knot of a uniform cubic grid
  REQUIRE_THAT(b[3], Catch::Matchers::WithinAbs(2.0 / 3.0, 1e-12));
  REQUIRE_THAT(b[2], Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
  REQUIRE_THAT(b[4], Catch::Matchers::WithinAbs(1.0 / 6.0, 1e-12));
}

TEST_CASE("matches the recursive Cox-de Boor oracle") {
  Rng rng(11);
  SplineGrid g = SplineGrid::clamped_uniform(3, 8, -3.0, 3.0);
  REQUIRE(static_cast<int>(g.knots().size()) == 8 + 3 + 1);
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-2.999, 2.999);
    Eigen::VectorXd b = g.eval(x);
    for (int k = 0; k < g.basis_count(); ++k) {
      const double expect = cox_de_boor(g.knots(), k, 3, x);
      REQUIRE_THAT(b[k], Catch::Matchers::WithinAbs(expect, 1e-12));
    }
  }
}

TEST_CASE("partition of unity across the domain") {
  for (int degree : {1, 2, 3, 4}) {
    SplineGrid g = SplineGrid::clamped_uniform(degree, degree + 5, -3.0, 3.0);
    for (int i = 0; i <= 1000; ++i) {
      const double x = -3.0 + 6.0 * static_cast<double>(i) / 1000.0;
      REQUIRE_THAT(g.eval(x).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    }
  }
}

TEST_CASE("partition of unity holds for clamped (out-of-range) inputs") {
  SplineGrid g = SplineGrid::clamped_uniform(3, 8, -3.0, 3.0);
  for (double x : {-100.0, -3.0, 3.0, 100.0}) {
    REQUIRE_THAT(g.eval(x).sum(), Catch::Matchers::WithinAbs(1.0, 1e-12));
    REQUIRE(g.eval(x).minCoeff() >= 0.0);
  }
  REQUIRE(g.eval(-100.0) == g.eval(-3.0));
  REQUIRE(g.eval(100.0) == g.eval(3.0));
}

TEST_CASE("local support and non-negativity") {
  Rng rng(12);
  SplineGrid g = SplineGrid::clamped_uniform(3, 8, -3.0, 3.0);
  const auto& t = g.knots();
  for (int trial = 0; trial < 500; ++trial) {
    const double x = rng.uniform(-3.0, 3.0);
    Eigen::VectorXd b = g.eval(x);
    REQUIRE(b.minCoeff() >= 0.0);
    for (int k = 0; k < g.basis_count(); ++k) {
      const bool inside = x >= t[static_cast<std::size_t>(k)] && x <= t[static_cast<std::size_t>(k + 3 + 1)];
      if (!inside) REQUIRE(b[k] == 0.0);
    }
  }
}

TEST_CASE("analytic derivative matches central differences") {
  Rng rng(13);
  SplineGrid g = SplineGrid::clamped_uniform(3, 8, -3.0, 3.0);
  Eigen::VectorXd basis(8), deriv(8);
  const double h = 1e-6;
  for (int trial = 0; trial < 200; ++trial) {
    const double x = rng.uniform(-2.9, 2.9);
    g.eval_with_derivative(x, basis, deriv);
    Eigen::VectorXd fp = g.eval(x + h);
    Eigen::VectorXd fm = g.eval(x - h);
    for (int k = 0; k < 8; ++k) {
      const double nd = (fp[k] - fm[k]) / (2.0 * h);
      REQUIRE_THAT(deriv[k], Catch::Matchers::WithinAbs(nd, 1e-6));
    }
  }
}

TEST_CASE("invalid knot vectors are construction errors") {
  REQUIRE_THROWS_AS(SplineGrid(1, {0.0, 1.0, 0.5, 2.0}), std::invalid_argument);   // non-monotone
  REQUIRE_THROWS_AS(SplineGrid(2, {0.0, 0.0, 1.0, 1.0}), std::invalid_argument);   // not clamped
  REQUIRE_THROWS_AS(SplineGrid(3, {0.0, 0.0, 0.0, 0.0}), std::invalid_argument);   // empty domain
  REQUIRE_THROWS_AS(SplineGrid::clamped_uniform(3, 3, 0.0, 1.0), std::invalid_argument);
}
