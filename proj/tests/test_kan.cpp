#include <catch2/catch_amalgamated.hpp>

#include "psr/gradcheck.hpp"
#include "psr/kan.hpp"

using namespace psr;

namespace {

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

double silu(double x) { return x / (1.0 + std::exp(-x)); }

SplineGrid default_grid() { return SplineGrid::clamped_uniform(3, 8, -3.0, 3.0); }

}  // namespace

TEST_CASE("zero spline weights reduce the layer to scaled SiLU sums") {
  ParamSet ps;
  KanLayer l = KanLayer::create(ps, "l", 2, 1, default_grid());
  ps.at(l.alpha).setOnes();
  // omega = 0, alpha = 1, b = 0, x = [0,0] -> [0]
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  REQUIRE_THAT(kan_layer_eval(ps, l, x)[0], Catch::Matchers::WithinAbs(0.0, 1e-15));

  KanLayer l1 = KanLayer::create(ps, "l1", 1, 1, default_grid());
  ps.at(l1.alpha).setOnes();
  Eigen::VectorXd one(1);
  one << 1.0;
  // SiLU(1) = 1/(1+e^-1)
  REQUIRE_THAT(kan_layer_eval(ps, l1, one)[0], Catch::Matchers::WithinAbs(0.7310585786300049, 1e-12));
}

TEST_CASE("alpha = 0 collapses the layer to its bias") {
  Rng rng(21);
  ParamSet ps;
  KanLayer l = KanLayer::create(ps, "l", 3, 4, default_grid());
  l.init(ps, rng);
  ps.at(l.alpha).setZero();
  ps.at(l.bias).setConstant(2.5);
  Eigen::VectorXd x(3);
  x << 0.3, -1.2, 0.9;
  Eigen::VectorXd y = kan_layer_eval(ps, l, x);
  for (int j = 0; j < 4; ++j) REQUIRE_THAT(y[j], Catch::Matchers::WithinAbs(2.5, 1e-15));
}

TEST_CASE("single-layer stack equals the layer; identity-configured stack maps 0 to 0") {
  Rng rng(22);
  ParamSet ps;
  KanLayer l = KanLayer::create(ps, "l", 2, 2, default_grid());
  l.init(ps, rng);
  Eigen::VectorXd x(2);
  x << 0.4, -0.7;
  REQUIRE(kan_stack_eval(ps, {l}, x) == kan_layer_eval(ps, l, x));

  ParamSet ps2;
  KanLayer a = KanLayer::create(ps2, "a", 1, 1, default_grid());
  KanLayer b = KanLayer::create(ps2, "b", 1, 1, default_grid());
  ps2.at(a.alpha).setOnes();
  ps2.at(b.alpha).setOnes();
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  REQUIRE_THAT(kan_stack_eval(ps2, {a, b}, zero)[0], Catch::Matchers::WithinAbs(0.0, 1e-15));
}

TEST_CASE("two-layer stack matches a straight-line transcription") {
  Rng rng(23);
  ParamSet ps;
  const int d = 5, u = 3;
  SplineGrid grid = default_grid();
  KanLayer l1 = KanLayer::create(ps, "l1", d, u, grid);
  KanLayer l2 = KanLayer::create(ps, "l2", u, 1, grid);
  l1.init(ps, rng);
  l2.init(ps, rng);
  rng.fill_gaussian(ps.at(l1.bias), 0.0, 0.1);
  rng.fill_gaussian(ps.at(l2.bias), 0.0, 0.1);
  rng.fill_gaussian(ps.at(l1.alpha), 1.0, 0.1);
  rng.fill_gaussian(ps.at(l2.alpha), 1.0, 0.1);

  Eigen::VectorXd x(d);
  rng.fill_gaussian(x, 0.0, 1.0);

  // straight-line re-derivation with the recursive basis oracle
  const int K = grid.basis_count();
  auto phi = [&](const ParamSet& pset, const KanLayer& l, int junit, int m, double v) {
    double s = silu(v);
    for (int k = 0; k < K; ++k)
      s += pset.at(l.omega)(m * K + k, junit) * cox_de_boor(grid.knots(), k, 3, v);
    return s;
  };
  Eigen::VectorXd uvec(u);
  for (int j = 0; j < u; ++j) {
    double acc = 0.0;
    for (int m = 0; m < d; ++m) acc += phi(ps, l1, j, m, x[m]);
    uvec[j] = ps.at(l1.alpha)(0, j) * acc + ps.at(l1.bias)(0, j);
  }
  double acc = 0.0;
  for (int j = 0; j < u; ++j) acc += phi(ps, l2, 0, j, uvec[j]);
  const double expect = ps.at(l2.alpha)(0, 0) * acc + ps.at(l2.bias)(0, 0);

  const double got = kan_stack_eval(ps, {l1, l2}, x)[0];
  REQUIRE_THAT(got, Catch::Matchers::WithinAbs(expect, 1e-12));
}

TEST_CASE("stack rejects a broken dim chain") {
  ParamSet ps;
  KanLayer a = KanLayer::create(ps, "a", 2, 3, default_grid());
  KanLayer b = KanLayer::create(ps, "b", 4, 1, default_grid());
  ad::Tape t(false);
  Binder bind(t, ps);
  ad::Value x = t.constant(Eigen::MatrixXd::Zero(1, 2));
  REQUIRE_THROWS_AS(kan_stack_forward(bind, {a, b}, x), std::invalid_argument);
}

TEST_CASE("layer rejects input dim mismatch") {
  ParamSet ps;
  KanLayer a = KanLayer::create(ps, "a", 2, 3, default_grid());
  ad::Tape t(false);
  Binder bind(t, ps);
  ad::Value x = t.constant(Eigen::MatrixXd::Zero(1, 5));
  REQUIRE_THROWS_AS(kan_layer_forward(bind, a, x), std::invalid_argument);
}

TEST_CASE("grad_check on scalar square function") {
  Mat w(1, 1);
  w(0, 0) = 3.0;
  Mat analytic(1, 1);
  analytic(0, 0) = 2.0 * w(0, 0);  // d(w^2)/dw = 6
  auto loss = [&]() { return w(0, 0) * w(0, 0); };
  auto rep = grad_check(loss, {&w}, {analytic}, {"w"}, 1e-5);
  REQUIRE(rep.max_rel_err <= 1e-9);
}

TEST_CASE("grad_check on a constant function returns zero error") {
  Mat w(2, 2);
  w.setConstant(0.7);
  Mat analytic = Mat::Zero(2, 2);
  auto loss = [&]() { return 4.2; };
  auto rep = grad_check(loss, {&w}, {analytic}, {"w"}, 1e-5);
  REQUIRE(rep.max_rel_err == 0.0);
}

TEST_CASE("kan layer passes gradient checks") {
  Rng rng(24);
  ParamSet ps;
  KanLayer l = KanLayer::create(ps, "l", 3, 2, default_grid());
  l.init(ps, rng);
  rng.fill_gaussian(ps.at(l.bias), 0.0, 0.2);
  Mat x(2, 3);
  rng.fill_gaussian(x, 0.0, 1.0);

  auto eval = [&]() {
    ad::Tape tv(false);
    Binder bv(tv, ps);
    ad::Value yv = kan_layer_forward(bv, l, tv.leaf(x));
    return tv.val(tv.total_sum(tv.square(yv)))(0, 0);
  };
  std::vector<Mat*> tensors = {&ps.at(l.omega), &ps.at(l.alpha), &ps.at(l.bias), &x};
  ad::Tape t2;
  Binder b2(t2, ps);
  ad::Value xv2 = t2.leaf(x);
  ad::Value y2 = kan_layer_forward(b2, l, xv2);
  t2.backward(t2.total_sum(t2.square(y2)));
  auto g2 = b2.grads();
  std::vector<Mat> analytic = {g2[static_cast<std::size_t>(l.omega)], g2[static_cast<std::size_t>(l.alpha)],
                               g2[static_cast<std::size_t>(l.bias)], t2.grad(xv2)};
  auto rep = grad_check(eval, tensors, analytic, {"omega", "alpha", "bias", "x"}, 1e-5, 200);
  INFO("worst " << rep.worst_tensor << " err " << rep.max_rel_err);
  REQUIRE(rep.max_rel_err <= 1e-4);
}

TEST_CASE("gradients flow through a 3-layer stack") {
  Rng rng(25);
  ParamSet ps;
  std::vector<KanLayer> stack;
  stack.push_back(KanLayer::create(ps, "s1", 2, 4, default_grid()));
  stack.push_back(KanLayer::create(ps, "s2", 4, 4, default_grid()));
  stack.push_back(KanLayer::create(ps, "s3", 4, 1, default_grid()));
  for (auto& l : stack) l.init(ps, rng);
  Mat x(3, 2);
  rng.fill_gaussian(x, 0.0, 1.0);

  ad::Tape t;
  Binder b(t, ps);
  ad::Value y = kan_stack_forward(b, stack, t.leaf(x));
  t.backward(t.mean_all(t.square(y)));
  auto grads = b.grads();

  auto eval = [&]() {
    ad::Tape tv(false);
    Binder bv(tv, ps);
    return tv.val(tv.mean_all(tv.square(kan_stack_forward(bv, stack, tv.leaf(x)))))(0, 0);
  };
  std::vector<Mat*> tensors;
  std::vector<Mat> analytic;
  std::vector<std::string> names;
  for (int id = 0; id < ps.count(); ++id) {
    tensors.push_back(&ps.at(id));
    analytic.push_back(grads[static_cast<std::size_t>(id)]);
    names.push_back(ps.name(id));
  }
  auto rep = grad_check(eval, tensors, analytic, names, 1e-5, 60);
  INFO("worst " << rep.worst_tensor << " err " << rep.max_rel_err);
  REQUIRE(rep.max_rel_err <= 1e-4);
}
