#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "psr/autodiff.hpp"
#include "psr/bspline.hpp"
#include "psr/params.hpp"
#include "psr/rng.hpp"

namespace psr {

// Expands each entry x[r,m] into its basis values: out[r, m*K+k] = B_k(x[r,m]).
// The backward pass contracts against the analytic basis derivatives; entries
// clamped at the grid boundary get zero derivative.
inline ad::Value bspline_expand(ad::Tape& t, ad::Value x, const SplineGrid& grid) {
  const ad::Mat& X = t.val(x);
  const int K = grid.basis_count();
  ad::Mat y(X.rows(), X.cols() * K);
  std::shared_ptr<ad::Mat> db;
  if (t.recording()) db = std::make_shared<ad::Mat>(X.rows(), X.cols() * K);
  Eigen::VectorXd b(K), d(K);
  for (Eigen::Index r = 0; r < X.rows(); ++r) {
    for (Eigen::Index c = 0; c < X.cols(); ++c) {
      const double xv = X(r, c);
      grid.eval_with_derivative(xv, b, d);
      if (xv < grid.lo() || xv > grid.hi()) d.setZero();  // clamped input
      y.block(r, c * K, 1, K) = b.transpose();
      if (db) db->block(r, c * K, 1, K) = d.transpose();
    }
  }
  ad::Value out = t.custom(std::move(y), nullptr);
  if (t.recording()) {
    const int cols = static_cast<int>(X.cols());
    t.set_back(out, [x, out, db, K, cols](ad::Tape& tp) {
      const ad::Mat& g = tp.grad(out);
      ad::Mat& gx = tp.g(x);
      for (Eigen::Index r = 0; r < gx.rows(); ++r)
        for (int c = 0; c < cols; ++c)
          gx(r, c) += g.block(r, c * K, 1, K).cwiseProduct(db->block(r, c * K, 1, K)).sum();
    });
  }
  return out;
}

// One Kolmogorov-Arnold layer: out_j = alpha_j * sum_m [ SiLU(x_m) +
// sum_k omega_{m,j,k} B_k(x_m) ] + b_j. omega is stored as [in*K, out] with
// row m*K+k holding omega_{m,*,k}.
struct KanLayer {
  int in_dim = 0;
  int out_dim = 0;
  int omega = -1;
  int alpha = -1;
  int bias = -1;
  SplineGrid grid{3, {0, 0, 0, 0, 1, 1, 1, 1}};

  static KanLayer create(ParamSet& ps, const std::string& name, int in_dim, int out_dim,
                         const SplineGrid& grid) {
    KanLayer l;
    l.in_dim = in_dim;
    l.out_dim = out_dim;
    l.grid = grid;
    l.omega = ps.add(name + ".omega", in_dim * grid.basis_count(), out_dim);
    l.alpha = ps.add(name + ".alpha", 1, out_dim);
    l.bias = ps.add(name + ".bias", 1, out_dim);
    return l;
  }

  // Xavier on omega scaled by fan-in; alpha = 1, bias = 0.
  void init(ParamSet& ps, Rng& rng) const {
    rng.fill_xavier_uniform(ps.at(omega), in_dim * grid.basis_count(), out_dim);
    ps.at(alpha).setOnes();
    ps.at(bias).setZero();
  }
};

// Forward for a batch of row vectors x [R, in_dim] -> [R, out_dim].
inline ad::Value kan_layer_forward(Binder& p, const KanLayer& layer, ad::Value x) {
  ad::Tape& t = p.tape();
  if (t.val(x).cols() != layer.in_dim)
    throw std::invalid_argument("kan_layer_forward: input dim mismatch");
  ad::Value phi = bspline_expand(t, x, layer.grid);
  ad::Value q = t.matmul(phi, p(layer.omega));
  ad::Value s = t.row_sum(t.silu(x));
  ad::Value pre = t.add_colvec(q, s);
  return t.add_rowvec(t.mul_rowvec(pre, p(layer.alpha)), p(layer.bias));
}

// Left-to-right composition; consecutive dims must chain.
inline ad::Value kan_stack_forward(Binder& p, const std::vector<KanLayer>& layers, ad::Value x) {
  ad::Value h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim)
      throw std::invalid_argument("kan_stack_forward: dim chain break at layer " + std::to_string(i));
    h = kan_layer_forward(p, layers[i], h);
  }
  return h;
}

// Convenience value-only evaluation of a single layer on one input vector.
inline Eigen::VectorXd kan_layer_eval(const ParamSet& ps, const KanLayer& layer,
                                      const Eigen::VectorXd& x) {
  ad::Tape t(false);
  Binder b(t, ps);
  ad::Value xv = t.constant(x.transpose());
  ad::Value y = kan_layer_forward(b, layer, xv);
  return t.val(y).row(0).transpose();
}

inline Eigen::VectorXd kan_stack_eval(const ParamSet& ps, const std::vector<KanLayer>& layers,
                                      const Eigen::VectorXd& x) {
  ad::Tape t(false);
  Binder b(t, ps);
  ad::Value xv = t.constant(x.transpose());
  ad::Value y = kan_stack_forward(b, layers, xv);
  return t.val(y).row(0).transpose();
}

}  // namespace psr
