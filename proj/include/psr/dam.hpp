#pragma once

#include <cmath>
#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include "psr/autodiff.hpp"
#include "psr/kan.hpp"
#include "psr/optim.hpp"
#include "psr/params.hpp"
#include "psr/rng.hpp"
#include "psr/stats.hpp"

namespace psr {

struct DamConfig {
  int input_dim = 400;   // N * F0, per buffered window
  int shared_dim = 256;  // F_shared
  int embed_dim = 64;    // E
  int memory_slots = 64; // s
  int mem_dim = 128;     // F_mem
  int private_dim = 128; // F_private
  int spline_basis = 8;
  int spline_degree = 3;
  double spline_range = 3.0;
  bool kan_layers = true;   // shared/private stacks: KAN vs affine+SiLU
  bool memory_on = true;    // memory-matrix read path
  bool kan_decoder = false;
  std::uint64_t private_init_seed = 7701;
};

// One stage of a shared/private stack: a KAN layer or an affine+SiLU layer.
struct DamStage {
  bool kan = true;
  KanLayer kan_layer;
  int w = -1, b = -1;
  int in_dim = 0, out_dim = 0;
};

struct DamParams {
  DamConfig cfg;
  std::vector<DamStage> shared;   // 3 stages: input -> shared -> shared -> shared
  int proj_w = -1, proj_b = -1;   // shared -> E
  int memory = -1;                // M [s, E]
  int mem_w = -1, mem_b = -1;     // [Q, M_read] (2E) -> F_mem
  std::vector<DamStage> priv;     // 3 stages: F_mem -> private -> private -> private
  std::vector<DamStage> decoder;  // 3 stages: private -> shared -> shared -> input (last affine-linear)

  static DamStage make_stage(ParamSet& ps, const std::string& name, int in, int out, bool kan,
                             const SplineGrid& grid) {
    DamStage st;
    st.kan = kan;
    st.in_dim = in;
    st.out_dim = out;
    if (kan) {
      st.kan_layer = KanLayer::create(ps, name, in, out, grid);
    } else {
      st.w = ps.add(name + ".w", in, out);
      st.b = ps.add(name + ".b", 1, out);
    }
    return st;
  }

  static DamParams create(ParamSet& ps, const DamConfig& cfg) {
    DamParams p;
    p.cfg = cfg;
    const SplineGrid grid = SplineGrid::clamped_uniform(cfg.spline_degree, cfg.spline_basis,
                                                        -cfg.spline_range, cfg.spline_range);
    p.shared.push_back(make_stage(ps, "dam.shared1", cfg.input_dim, cfg.shared_dim, cfg.kan_layers, grid));
    p.shared.push_back(make_stage(ps, "dam.shared2", cfg.shared_dim, cfg.shared_dim, cfg.kan_layers, grid));
    p.shared.push_back(make_stage(ps, "dam.shared3", cfg.shared_dim, cfg.shared_dim, cfg.kan_layers, grid));
    p.proj_w = ps.add("dam.proj.w", cfg.shared_dim, cfg.embed_dim);
    p.proj_b = ps.add("dam.proj.b", 1, cfg.embed_dim);
    p.memory = ps.add("dam.memory", cfg.memory_slots, cfg.embed_dim);
    p.mem_w = ps.add("dam.mem.w", 2 * cfg.embed_dim, cfg.mem_dim);
    p.mem_b = ps.add("dam.mem.b", 1, cfg.mem_dim);
    p.priv.push_back(make_stage(ps, "dam.private1", cfg.mem_dim, cfg.private_dim, cfg.kan_layers, grid));
    p.priv.push_back(make_stage(ps, "dam.private2", cfg.private_dim, cfg.private_dim, cfg.kan_layers, grid));
    p.priv.push_back(make_stage(ps, "dam.private3", cfg.private_dim, cfg.private_dim, cfg.kan_layers, grid));
    p.decoder.push_back(make_stage(ps, "dam.dec1", cfg.private_dim, cfg.shared_dim, cfg.kan_decoder, grid));
    p.decoder.push_back(make_stage(ps, "dam.dec2", cfg.shared_dim, cfg.shared_dim, cfg.kan_decoder, grid));
    p.decoder.push_back(make_stage(ps, "dam.dec3", cfg.shared_dim, cfg.input_dim, cfg.kan_decoder, grid));
    return p;
  }

  void init_stage_list(ParamSet& ps, Rng& rng, const std::vector<DamStage>& stages) const {
    for (const auto& st : stages) {
      if (st.kan) {
        st.kan_layer.init(ps, rng);
      } else {
        rng.fill_xavier_uniform(ps.at(st.w), st.in_dim, st.out_dim);
        ps.at(st.b).setZero();
      }
    }
  }

  void init(ParamSet& ps, Rng& rng) const {
    init_stage_list(ps, rng, shared);
    rng.fill_xavier_uniform(ps.at(proj_w), cfg.shared_dim, cfg.embed_dim);
    ps.at(proj_b).setZero();
    rng.fill_xavier_uniform(ps.at(memory), cfg.memory_slots, cfg.embed_dim);
    rng.fill_xavier_uniform(ps.at(mem_w), 2 * cfg.embed_dim, cfg.mem_dim);
    ps.at(mem_b).setZero();
    init_private(ps, cfg.private_init_seed);
    init_stage_list(ps, rng, decoder);
  }

  // Private stack re-initialization from its own fixed seed; reused verbatim
  // by the drift reset so that resets are idempotent.
  void init_private(ParamSet& ps, std::uint64_t seed) const {
    Rng rng(seed);
    init_stage_list(ps, rng, priv);
  }

  std::vector<int> param_ids_of(const std::vector<DamStage>& stages) const {
    std::vector<int> ids;
    for (const auto& st : stages) {
      if (st.kan) {
        ids.push_back(st.kan_layer.omega);
        ids.push_back(st.kan_layer.alpha);
        ids.push_back(st.kan_layer.bias);
      } else {
        ids.push_back(st.w);
        ids.push_back(st.b);
      }
    }
    return ids;
  }
};

namespace detail {

inline ad::Value dam_stage_forward(Binder& p, const DamStage& st, ad::Value x, bool last_linear) {
  ad::Tape& t = p.tape();
  if (st.kan) return kan_layer_forward(p, st.kan_layer, x);
  ad::Value a = t.add_rowvec(t.matmul(x, p(st.w)), p(st.b));
  return last_linear ? a : t.silu(a);
}

inline ad::Value dam_stack_forward(Binder& p, const std::vector<DamStage>& stages, ad::Value x,
                                   bool linear_output = false) {
  ad::Value h = x;
  for (std::size_t i = 0; i < stages.size(); ++i)
    h = dam_stage_forward(p, stages[i], h, linear_output && i + 1 == stages.size());
  return h;
}

}  // namespace detail

struct DamForward {
  ad::Value recon;
  ad::Value l_rec;
  ad::Value q;
};

// Full autoencoder pass over a block of flattened windows x [rows, N*F0].
// Loss is the Frobenius reconstruction error normalized by the entry count.
inline DamForward dam_forward_tape(Binder& p, const DamParams& dp, ad::Value x) {
  ad::Tape& t = p.tape();
  if (t.val(x).cols() != dp.cfg.input_dim)
    throw std::invalid_argument("dam_forward: input dim mismatch");
  ad::Value shared = detail::dam_stack_forward(p, dp.shared, x);
  ad::Value q = t.add_rowvec(t.matmul(shared, p(dp.proj_w)), p(dp.proj_b));
  ad::Value m_read;
  if (dp.cfg.memory_on) {
    ad::Value attn = t.softmax_rows(t.matmul_nt(q, p(dp.memory)));
    m_read = t.matmul(attn, p(dp.memory));
  } else {
    m_read = t.constant(ad::Mat::Zero(t.val(q).rows(), dp.cfg.embed_dim));
  }
  ad::Value x_mem = t.add_rowvec(t.matmul(t.concat_cols(q, m_read), p(dp.mem_w)), p(dp.mem_b));
  ad::Value x_private = detail::dam_stack_forward(p, dp.priv, x_mem);
  ad::Value recon = detail::dam_stack_forward(p, dp.decoder, x_private, /*linear_output=*/true);
  ad::Value l_rec = t.mean_all(t.square(t.sub(x, recon)));
  return {recon, l_rec, q};
}

struct DamEval {
  Eigen::MatrixXd recon;
  double l_rec = 0.0;
  Eigen::VectorXd q_mean;  // column mean of the projected features
};

inline DamEval dam_forward(const ParamSet& ps, const DamParams& dp, const Eigen::MatrixXd& x) {
  ad::Tape t(false);
  Binder b(t, ps);
  DamForward f = dam_forward_tape(b, dp, t.leaf(x));
  DamEval e;
  e.recon = t.val(f.recon);
  e.l_rec = t.val(f.l_rec)(0, 0);
  e.q_mean = t.val(f.q).colwise().mean().transpose();
  if (!e.recon.allFinite() || !std::isfinite(e.l_rec))
    throw std::runtime_error("dam_forward: non-finite output at decoder");
  return e;
}

// Physiological-equilibrium tail-bound check:
// eps = sqrt(2 d sigma^2 ln(2d/delta)); inside iff ||phi - mu|| < eps.
inline bool equilibrium_check(const Eigen::VectorXd& phi, const Eigen::VectorXd& mu, double sigma,
                              double delta) {
  if (phi.size() != mu.size()) throw std::invalid_argument("equilibrium_check: dim mismatch");
  if (!(sigma > 0.0) || !(delta > 0.0 && delta < 1.0))
    throw std::invalid_argument("equilibrium_check: bad sigma/delta");
  const double d = static_cast<double>(phi.size());
  const double eps = std::sqrt(2.0 * d * sigma * sigma * std::log(2.0 * d / delta));
  return (phi - mu).norm() < eps;
}

inline double equilibrium_radius(int dim, double sigma, double delta) {
  const double d = static_cast<double>(dim);
  return std::sqrt(2.0 * d * sigma * sigma * std::log(2.0 * d / delta));
}

// Frozen monitoring profile fitted on pretraining data. baseline_cov is the
// covariance of the m-step rolling mean scaled by m, so that
// 2m * divergence ~ chi^2(dim) under the null.
struct DriftProfile {
  Eigen::MatrixXd pca_basis;      // [E, dim]
  Eigen::VectorXd q_center;      // [E]
  Eigen::VectorXd baseline_mean; // [dim]
  Eigen::MatrixXd baseline_cov;  // [dim, dim]
  double eps_rec = 0.0;
  double tau = 0.0;
  double alpha = 0.01;
  int window_m = 100;
  int dim = 0;

  Eigen::VectorXd project(const Eigen::VectorXd& q_mean) const {
    return pca_basis.transpose() * (q_mean - q_center);
  }
};

// Mean-shift Gaussian divergence of a recent feature batch against the
// baseline profile: KL( N(mean(recent), cov0) || N(mean0, cov0) ), evaluated
// in closed form. The covariance is held at the baseline so that the Wilks
// dof equals the feature dimension used for tau.
inline double drift_divergence(const DriftProfile& prof, const Eigen::VectorXd& recent_mean,
                               const Eigen::LLT<Eigen::MatrixXd>& cov_llt) {
  return 0.5 * mahalanobis_sq(recent_mean, prof.baseline_mean, cov_llt) /
         static_cast<double>(prof.window_m);
}

struct DriftStepReport {
  bool flagged = false;      // per-step detector output
  bool event = false;        // equilibrium -> drift transition
  bool kl_ready = false;
  double divergence = 0.0;
  double l_rec = 0.0;
};

// Online drift monitor: rolling window of projected DAM features plus the
// reconstruction-loss threshold. Equilibrium returns after window_m
// consecutive un-flagged steps.
class DriftMonitor {
 public:
  enum class Mode { kEquilibrium, kDrift };

  explicit DriftMonitor(DriftProfile profile)
      : profile_(std::move(profile)), sum_(Eigen::VectorXd::Zero(profile_.dim)) {
    Eigen::MatrixXd cov = profile_.baseline_cov;
    llt_.compute(cov);
    if (llt_.info() != Eigen::Success) {
      cov += 1e-6 * Eigen::MatrixXd::Identity(cov.rows(), cov.cols());
      llt_.compute(cov);
      if (llt_.info() != Eigen::Success)
        throw std::runtime_error("DriftMonitor: baseline covariance not positive definite");
    }
  }

  const DriftProfile& profile() const { return profile_; }
  Mode mode() const { return mode_; }

  DriftStepReport step(const Eigen::VectorXd& q_mean, double l_rec) {
    DriftStepReport rep;
    rep.l_rec = l_rec;
    const Eigen::VectorXd x = profile_.project(q_mean);
    window_.push_back(x);
    sum_ += x;
    if (static_cast<int>(window_.size()) > profile_.window_m) {
      sum_ -= window_.front();
      window_.pop_front();
    }
    rep.kl_ready = static_cast<int>(window_.size()) == profile_.window_m;
    if (rep.kl_ready) {
      const Eigen::VectorXd mean = sum_ / static_cast<double>(profile_.window_m);
      rep.divergence = drift_divergence(profile_, mean, llt_);
    }
    last_divergence_ = rep.divergence;
    rep.flagged = (l_rec > profile_.eps_rec) || (rep.kl_ready && rep.divergence > profile_.tau);
    if (rep.flagged) {
      quiet_streak_ = 0;
      if (mode_ == Mode::kEquilibrium) {
        rep.event = true;
        mode_ = Mode::kDrift;
      }
    } else if (mode_ == Mode::kDrift) {
      ++quiet_streak_;
      if (quiet_streak_ >= profile_.window_m) {
        mode_ = Mode::kEquilibrium;
        quiet_streak_ = 0;
      }
    }
    return rep;
  }

  // Drops accumulated rolling statistics (used after a drift reset so that
  // stale pre-drift features do not linger in the window).
  void clear_window() {
    window_.clear();
    sum_ = Eigen::VectorXd::Zero(profile_.dim);
  }

  double last_divergence() const { return last_divergence_; }

 private:
  DriftProfile profile_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  std::deque<Eigen::VectorXd> window_;
  Eigen::VectorXd sum_;
  Mode mode_ = Mode::kEquilibrium;
  int quiet_streak_ = 0;
  double last_divergence_ = 0.0;
};

// Restores shared/projection/memory-combine/decoder tensors from the
// pretrained checkpoint, re-initializes the private stack from its fixed
// seed, and clears the memory matrix. Idempotent.
inline void on_drift_reset(const DamParams& dp, ParamSet& ps, const ParamSet& pretrained,
                           AdaptiveOptState& opt, double momentum_beta_drift) {
  for (int id : dp.param_ids_of(dp.shared)) ps.at(id) = pretrained.at(id);
  ps.at(dp.proj_w) = pretrained.at(dp.proj_w);
  ps.at(dp.proj_b) = pretrained.at(dp.proj_b);
  ps.at(dp.mem_w) = pretrained.at(dp.mem_w);
  ps.at(dp.mem_b) = pretrained.at(dp.mem_b);
  for (int id : dp.param_ids_of(dp.decoder)) ps.at(id) = pretrained.at(id);
  dp.init_private(ps, dp.cfg.private_init_seed);
  ps.at(dp.memory).setZero();
  opt.momentum_beta = momentum_beta_drift;
}

}  // namespace psr
