#pragma once

#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

#include "psr/params.hpp"

namespace psr {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Standard Adam over a ParamSet; moment slots follow tensor ids, so updates
// are deterministic.
class Adam {
 public:
  Adam(const ParamSet& ps, AdamConfig cfg) : cfg_(cfg) {
    for (int id = 0; id < ps.count(); ++id) {
      m_.push_back(Mat::Zero(ps.at(id).rows(), ps.at(id).cols()));
      v_.push_back(Mat::Zero(ps.at(id).rows(), ps.at(id).cols()));
    }
  }

  void update(ParamSet& ps, const std::vector<Mat>& grads) {
    if (static_cast<int>(grads.size()) != ps.count())
      throw std::invalid_argument("Adam::update: grad count mismatch");
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (int id = 0; id < ps.count(); ++id) {
      auto& m = m_[static_cast<std::size_t>(id)];
      auto& v = v_[static_cast<std::size_t>(id)];
      const Mat& g = grads[static_cast<std::size_t>(id)];
      m = cfg_.beta1 * m + (1.0 - cfg_.beta1) * g;
      v = cfg_.beta2 * v + (1.0 - cfg_.beta2) * g.cwiseProduct(g);
      const Mat mhat = m / bc1;
      const Mat vhat = v / bc2;
      ps.at(id) -= cfg_.lr * mhat.cwiseQuotient(vhat.cwiseSqrt() + Mat::Constant(v.rows(), v.cols(), cfg_.eps));
    }
  }

 private:
  AdamConfig cfg_;
  std::vector<Mat> m_;
  std::vector<Mat> v_;
  long step_ = 0;
};

// EMA-momentum projected online step:
//   m_t    = lambda * g + (1 - lambda) * m_{t-1}
//   theta <- Pi_theta( theta - eta * (g + beta * m_t) )
// where the feasible set is a Euclidean ball of radius projection_radius
// around the anchor (pretrained) parameters.
struct AdaptiveOptState {
  double eta = 1e-3;
  double momentum_beta = 0.0;
  double ema_lambda = 0.5;
  double projection_radius = std::numeric_limits<double>::infinity();
  Eigen::VectorXd m_ema;

  void validate() const {
    if (!(eta > 0.0)) throw std::invalid_argument("AdaptiveOptState: eta must be positive");
    if (!(ema_lambda > 0.0 && ema_lambda <= 1.0))
      throw std::invalid_argument("AdaptiveOptState: ema_lambda in (0, 1]");
    if (momentum_beta < 0.0) throw std::invalid_argument("AdaptiveOptState: momentum_beta >= 0");
  }
};

// Returns false (step skipped) when the gradient is non-finite.
inline bool adaptive_step(AdaptiveOptState& opt, Eigen::VectorXd& theta,
                          const Eigen::VectorXd& grad, const Eigen::VectorXd& anchor) {
  opt.validate();
  if (!grad.allFinite()) return false;
  if (opt.m_ema.size() == 0) opt.m_ema = Eigen::VectorXd::Zero(grad.size());
  if (opt.m_ema.size() != grad.size() || theta.size() != grad.size() || anchor.size() != grad.size())
    throw std::invalid_argument("adaptive_step: size mismatch");
  opt.m_ema = opt.ema_lambda * grad + (1.0 - opt.ema_lambda) * opt.m_ema;
  theta -= opt.eta * (grad + opt.momentum_beta * opt.m_ema);
  if (std::isfinite(opt.projection_radius)) {
    const Eigen::VectorXd v = theta - anchor;
    const double norm = v.norm();
    if (norm > opt.projection_radius) theta = anchor + v * (opt.projection_radius / norm);
  }
  return true;
}

// ParamSet convenience wrapper around the flat update.
inline bool adaptive_step(AdaptiveOptState& opt, ParamSet& ps, const std::vector<Mat>& grads,
                          const Eigen::VectorXd& anchor_flat) {
  Eigen::VectorXd g(static_cast<Eigen::Index>(ps.scalar_count()));
  Eigen::Index o = 0;
  for (const auto& gm : grads) {
    g.segment(o, gm.size()) = Eigen::Map<const Eigen::VectorXd>(gm.data(), gm.size());
    o += gm.size();
  }
  Eigen::VectorXd theta = ps.flatten();
  const bool ok = adaptive_step(opt, theta, g, anchor_flat);
  if (ok) ps.unflatten(theta);
  return ok;
}

}  // namespace psr
