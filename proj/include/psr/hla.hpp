#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "psr/autodiff.hpp"
#include "psr/kan.hpp"
#include "psr/params.hpp"
#include "psr/rng.hpp"

namespace psr {

enum class TlKind { kKan, kMlp };

struct HlaConfig {
  int feature_count = 8;  // F0
  int conv_channels = 64; // F
  int kernel = 3;
  int lstm_units = 64;    // d
  int heads = 4;
  int tl_hidden = 64;     // u
  int spline_basis = 8;
  int spline_degree = 3;
  double spline_range = 3.0;
  double attn_dropout = 0.1;
  bool micro_on = true;
  bool medium_on = true;
  bool macro_on = true;
  TlKind tl_kind = TlKind::kKan;

  int micro_out() const { return micro_on ? conv_channels : feature_count; }
  int medium_out() const { return medium_on ? lstm_units : micro_out(); }
  int encoder_out() const { return medium_out(); }

  void validate() const {
    if (kernel % 2 == 0) throw std::invalid_argument("HlaConfig: kernel must be odd");
    if (macro_on && medium_out() % heads != 0)
      throw std::invalid_argument("HlaConfig: hidden size must be divisible by heads");
  }
};

// All trainable tensors of the encoder + transcendental head. Conv kernels
// are stored as [k*Cin, Cout] with tap-major rows; LSTM gate order is
// [input, forget, cell, output].
struct HlaParams {
  HlaConfig cfg;
  int conv_w1 = -1, conv_b1 = -1;
  int conv_w2 = -1, conv_b2 = -1;
  int conv_wr = -1, conv_br = -1;
  int lstm_wx = -1, lstm_wh = -1, lstm_b = -1;
  int att_wq = -1, att_bq = -1, att_wk = -1, att_bk = -1;
  int att_wv = -1, att_bv = -1, att_wo = -1, att_bo = -1;
  std::vector<KanLayer> tl;       // when tl_kind == kKan
  int mlp_w1 = -1, mlp_b1 = -1;   // when tl_kind == kMlp
  int mlp_w2 = -1, mlp_b2 = -1;

  static HlaParams create(ParamSet& ps, const HlaConfig& cfg) {
    cfg.validate();
    HlaParams p;
    p.cfg = cfg;
    const int f0 = cfg.feature_count;
    if (cfg.micro_on) {
      const int f = cfg.conv_channels;
      p.conv_w1 = ps.add("hla.conv.w1", cfg.kernel * f0, f);
      p.conv_b1 = ps.add("hla.conv.b1", 1, f);
      p.conv_w2 = ps.add("hla.conv.w2", cfg.kernel * f, f);
      p.conv_b2 = ps.add("hla.conv.b2", 1, f);
      p.conv_wr = ps.add("hla.conv.wr", f0, f);
      p.conv_br = ps.add("hla.conv.br", 1, f);
    }
    if (cfg.medium_on) {
      const int fin = cfg.micro_out();
      const int d = cfg.lstm_units;
      p.lstm_wx = ps.add("hla.lstm.wx", fin, 4 * d);
      p.lstm_wh = ps.add("hla.lstm.wh", d, 4 * d);
      p.lstm_b = ps.add("hla.lstm.b", 1, 4 * d);
    }
    if (cfg.macro_on) {
      const int d = cfg.medium_out();
      p.att_wq = ps.add("hla.att.wq", d, d);
      p.att_bq = ps.add("hla.att.bq", 1, d);
      p.att_wk = ps.add("hla.att.wk", d, d);
      p.att_bk = ps.add("hla.att.bk", 1, d);
      p.att_wv = ps.add("hla.att.wv", d, d);
      p.att_bv = ps.add("hla.att.bv", 1, d);
      p.att_wo = ps.add("hla.att.wo", d, d);
      p.att_bo = ps.add("hla.att.bo", 1, d);
    }
    const int enc = cfg.encoder_out();
    if (cfg.tl_kind == TlKind::kKan) {
      const SplineGrid grid = SplineGrid::clamped_uniform(cfg.spline_degree, cfg.spline_basis,
                                                          -cfg.spline_range, cfg.spline_range);
      p.tl.push_back(KanLayer::create(ps, "hla.tl1", enc, cfg.tl_hidden, grid));
      p.tl.push_back(KanLayer::create(ps, "hla.tl2", cfg.tl_hidden, 1, grid));
    } else {
      p.mlp_w1 = ps.add("hla.tl1.w", enc, cfg.tl_hidden);
      p.mlp_b1 = ps.add("hla.tl1.b", 1, cfg.tl_hidden);
      p.mlp_w2 = ps.add("hla.tl2.w", cfg.tl_hidden, 1);
      p.mlp_b2 = ps.add("hla.tl2.b", 1, 1);
    }
    return p;
  }

  void init(ParamSet& ps, Rng& rng) const {
    auto xavier = [&](int id, int fan_in, int fan_out) {
      if (id >= 0) rng.fill_xavier_uniform(ps.at(id), fan_in, fan_out);
    };
    const int f0 = cfg.feature_count;
    const int f = cfg.conv_channels;
    if (cfg.micro_on) {
      xavier(conv_w1, cfg.kernel * f0, f);
      xavier(conv_w2, cfg.kernel * f, f);
      xavier(conv_wr, f0, f);
    }
    if (cfg.medium_on) {
      xavier(lstm_wx, cfg.micro_out(), 4 * cfg.lstm_units);
      xavier(lstm_wh, cfg.lstm_units, 4 * cfg.lstm_units);
    }
    if (cfg.macro_on) {
      const int d = cfg.medium_out();
      xavier(att_wq, d, d);
      xavier(att_wk, d, d);
      xavier(att_wv, d, d);
      xavier(att_wo, d, d);
    }
    if (cfg.tl_kind == TlKind::kKan) {
      for (const auto& l : tl) l.init(ps, rng);
    } else {
      xavier(mlp_w1, cfg.encoder_out(), cfg.tl_hidden);
      xavier(mlp_w2, cfg.tl_hidden, 1);
    }
  }

  // ids of the conv kernels, for the L2 penalty
  std::vector<int> conv_kernel_ids() const {
    std::vector<int> ids;
    for (int id : {conv_w1, conv_w2, conv_wr})
      if (id >= 0) ids.push_back(id);
    return ids;
  }
};

// Optional stochastic pieces of a training-mode forward pass, plus a probe
// for the post-softmax attention weights.
struct HlaForwardOpts {
  bool training = false;
  Rng* dropout_rng = nullptr;
  std::vector<ad::Mat>* capture_attention = nullptr;
};

namespace detail {

// Same-padding 1-D convolution along the time axis, applied independently to
// each window of `win` rows. Kernel rows are tap-major: tap t covers input
// offset t - k/2.
inline ad::Value conv1d_same(Binder& p, ad::Value x, int w_id, int b_id, int kernel, int cin,
                             int win) {
  ad::Tape& t = p.tape();
  ad::Value acc;
  const int half = kernel / 2;
  for (int tap = 0; tap < kernel; ++tap) {
    ad::Value wt = t.slice_rows(p(w_id), tap * cin, cin);
    ad::Value shifted = t.shift_rows(x, tap - half, win);
    ad::Value term = t.matmul(shifted, wt);
    acc = acc.valid() ? t.add(acc, term) : term;
  }
  return t.add_rowvec(acc, p(b_id));
}

inline ad::Value micro_layer(Binder& p, const HlaParams& hp, ad::Value x, int win) {
  ad::Tape& t = p.tape();
  const auto& cfg = hp.cfg;
  if (!cfg.micro_on) return x;
  // H = (x * Wr + br) + ((x * W1 + b1) * W2 + b2); no activation in between
  ad::Value skip = t.add_rowvec(t.matmul(x, p(hp.conv_wr)), p(hp.conv_br));
  ad::Value s1 = conv1d_same(p, x, hp.conv_w1, hp.conv_b1, cfg.kernel, cfg.feature_count, win);
  ad::Value s2 = conv1d_same(p, s1, hp.conv_w2, hp.conv_b2, cfg.kernel, cfg.conv_channels, win);
  return t.add(skip, s2);
}

inline ad::Value medium_layer(Binder& p, const HlaParams& hp, ad::Value h, int win, int batch) {
  ad::Tape& t = p.tape();
  const auto& cfg = hp.cfg;
  if (!cfg.medium_on) return h;
  const int d = cfg.lstm_units;
  ad::Value wx = p(hp.lstm_wx);
  ad::Value wh = p(hp.lstm_wh);
  ad::Value b = p(hp.lstm_b);
  ad::Value hs;  // [batch, d]
  ad::Value cs;
  std::vector<ad::Value> outs;
  outs.reserve(static_cast<std::size_t>(win));
  for (int step = 0; step < win; ++step) {
    ad::Value xt = t.gather_rows_strided(h, step, win, batch);
    ad::Value gates = t.add_rowvec(t.matmul(xt, wx), b);
    if (hs.valid()) gates = t.add(gates, t.matmul(hs, wh));
    ad::Value gi = t.sigmoid(t.slice_cols(gates, 0, d));
    ad::Value gf = t.sigmoid(t.slice_cols(gates, d, d));
    ad::Value gc = t.tanh_(t.slice_cols(gates, 2 * d, d));
    ad::Value go = t.sigmoid(t.slice_cols(gates, 3 * d, d));
    ad::Value c_new = t.cmul(gi, gc);
    if (cs.valid()) c_new = t.add(c_new, t.cmul(gf, cs));
    cs = c_new;
    hs = t.cmul(go, t.tanh_(cs));
    outs.push_back(hs);
  }
  return t.interleave_rows(outs, batch);
}

inline ad::Value macro_layer(Binder& p, const HlaParams& hp, ad::Value l, int win, int batch,
                             const HlaForwardOpts& opts) {
  ad::Tape& t = p.tape();
  const auto& cfg = hp.cfg;
  if (!cfg.macro_on) return l;
  const int d = cfg.medium_out();
  const int dh = d / cfg.heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ad::Value q = t.add_rowvec(t.matmul(l, p(hp.att_wq)), p(hp.att_bq));
  ad::Value k = t.add_rowvec(t.matmul(l, p(hp.att_wk)), p(hp.att_bk));
  ad::Value v = t.add_rowvec(t.matmul(l, p(hp.att_wv)), p(hp.att_bv));
  std::vector<ad::Value> windows;
  windows.reserve(static_cast<std::size_t>(batch));
  for (int w = 0; w < batch; ++w) {
    ad::Value qw = t.slice_rows(q, w * win, win);
    ad::Value kw = t.slice_rows(k, w * win, win);
    ad::Value vw = t.slice_rows(v, w * win, win);
    ad::Value heads;
    for (int hd = 0; hd < cfg.heads; ++hd) {
      ad::Value qh = t.slice_cols(qw, hd * dh, dh);
      ad::Value kh = t.slice_cols(kw, hd * dh, dh);
      ad::Value vh = t.slice_cols(vw, hd * dh, dh);
      ad::Value attn = t.softmax_rows(t.scale(t.matmul_nt(qh, kh), scale));
      if (opts.capture_attention != nullptr) opts.capture_attention->push_back(t.val(attn));
      if (opts.training && cfg.attn_dropout > 0.0 && opts.dropout_rng != nullptr) {
        const double keep = 1.0 - cfg.attn_dropout;
        ad::Mat m(win, win);
        for (Eigen::Index i = 0; i < m.rows(); ++i)
          for (Eigen::Index j = 0; j < m.cols(); ++j)
            m(i, j) = opts.dropout_rng->uniform() < keep ? 1.0 / keep : 0.0;
        attn = t.mask(attn, std::move(m));
      }
      ad::Value z = t.matmul(attn, vh);
      heads = heads.valid() ? t.concat_cols(heads, z) : z;
    }
    windows.push_back(heads);
  }
  ad::Value concat = batch == 1 ? windows[0] : t.vstack(windows);
  return t.add_rowvec(t.matmul(concat, p(hp.att_wo)), p(hp.att_bo));
}

inline ad::Value transcendental_layer(Binder& p, const HlaParams& hp, ad::Value pooled) {
  ad::Tape& t = p.tape();
  if (hp.cfg.tl_kind == TlKind::kKan) return kan_stack_forward(p, hp.tl, pooled);
  ad::Value h = t.silu(t.add_rowvec(t.matmul(pooled, p(hp.mlp_w1)), p(hp.mlp_b1)));
  return t.add_rowvec(t.matmul(h, p(hp.mlp_w2)), p(hp.mlp_b2));
}

}  // namespace detail

// Full predictor on a stack of `batch` windows of `win` rows each
// ([batch*win, F0] row-major by window). Returns [batch, 1] predictions.
inline ad::Value hla_forward(Binder& p, const HlaParams& hp, ad::Value x, int win, int batch,
                             const HlaForwardOpts& opts = {}) {
  ad::Tape& t = p.tape();
  if (t.val(x).rows() != static_cast<Eigen::Index>(win) * batch ||
      t.val(x).cols() != hp.cfg.feature_count)
    throw std::invalid_argument("hla_forward: input shape mismatch");
  ad::Value h = detail::micro_layer(p, hp, x, win);
  ad::Value l = detail::medium_layer(p, hp, h, win, batch);
  ad::Value o = detail::macro_layer(p, hp, l, win, batch, opts);
  ad::Value pooled = t.block_mean_rows(o, win);
  return detail::transcendental_layer(p, hp, pooled);
}

// Deterministic single-window prediction (inference mode).
inline double hla_predict(const ParamSet& ps, const HlaParams& hp, const Eigen::MatrixXd& features) {
  ad::Tape t(false);
  Binder b(t, ps);
  ad::Value x = t.leaf(features);
  ad::Value y = hla_forward(b, hp, x, static_cast<int>(features.rows()), 1);
  const double out = t.val(y)(0, 0);
  if (!std::isfinite(out)) throw std::runtime_error("hla_predict: non-finite output at head");
  return out;
}

// Batched inference over a window stack (one prediction per window).
inline Eigen::VectorXd hla_predict_batch(const ParamSet& ps, const HlaParams& hp,
                                         const Eigen::MatrixXd& stacked, int win) {
  ad::Tape t(false);
  Binder b(t, ps);
  const int batch = static_cast<int>(stacked.rows()) / win;
  ad::Value x = t.leaf(stacked);
  ad::Value y = hla_forward(b, hp, x, win, batch);
  Eigen::VectorXd out = t.val(y).col(0);
  if (!out.allFinite()) throw std::runtime_error("hla_predict_batch: non-finite output at head");
  return out;
}

}  // namespace psr
