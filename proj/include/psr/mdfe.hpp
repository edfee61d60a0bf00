#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>
#include <unsupported/Eigen/FFT>

namespace psr {

// One N-point slice of a series: strictly increasing timestamps (seconds)
// paired with values.
struct SampleWindow {
  Eigen::VectorXd timestamps;
  Eigen::VectorXd values;

  SampleWindow(Eigen::VectorXd ts, Eigen::VectorXd vals)
      : timestamps(std::move(ts)), values(std::move(vals)) {
    if (timestamps.size() != values.size() || timestamps.size() < 2)
      throw std::invalid_argument("SampleWindow: need matching lengths >= 2");
    for (Eigen::Index i = 0; i < timestamps.size(); ++i) {
      if (!std::isfinite(timestamps[i]) || !std::isfinite(values[i]))
        throw std::invalid_argument("SampleWindow: non-finite entry");
      if (i > 0 && timestamps[i] <= timestamps[i - 1])
        throw std::invalid_argument("SampleWindow: timestamps must be strictly increasing");
    }
  }

  int size() const { return static_cast<int>(timestamps.size()); }
};

// Phase-binning periods: (period seconds, bin count) per cycle.
struct PeriodConfig {
  struct Period {
    double seconds;
    int bins;
  };
  std::vector<Period> periods;

  void validate() const {
    if (periods.empty()) throw std::invalid_argument("PeriodConfig: need at least one period");
    for (const auto& p : periods) {
      if (!(p.seconds > 0.0)) throw std::invalid_argument("PeriodConfig: period must be positive");
      if (p.bins < 2) throw std::invalid_argument("PeriodConfig: bins must be >= 2");
    }
  }
};

// sin/cos phase embedding: V_j = floor(t / P_j) mod C_j, columns
// [sin(2 pi V_j / C_j), cos(2 pi V_j / C_j)] concatenated over j.
inline Eigen::MatrixXd periodic_embed(const SampleWindow& w, const PeriodConfig& cfg) {
  cfg.validate();
  const int n = w.size();
  Eigen::MatrixXd out(n, 2 * static_cast<int>(cfg.periods.size()));
  for (std::size_t j = 0; j < cfg.periods.size(); ++j) {
    const double P = cfg.periods[j].seconds;
    const int C = cfg.periods[j].bins;
    for (int i = 0; i < n; ++i) {
      long long v = static_cast<long long>(std::floor(w.timestamps[i] / P)) % C;
      if (v < 0) v += C;
      const double phase = 2.0 * M_PI * static_cast<double>(v) / static_cast<double>(C);
      out(i, static_cast<int>(2 * j)) = std::sin(phase);
      out(i, static_cast<int>(2 * j) + 1) = std::cos(phase);
    }
  }
  return out;
}

// Raw frequency features: unnormalized forward DFT of the values, then per
// bin n and derivative order k, B[n,k] = Re{ (i 2 pi f_n)^k F[n] } with
// f_n = n/N. No scaling is applied here.
inline Eigen::MatrixXd frequency_features_raw(const SampleWindow& w, int k_deriv) {
  if (k_deriv < 1) throw std::invalid_argument("frequency_features: k_deriv must be >= 1");
  const int n = w.size();
  std::vector<double> in(w.values.data(), w.values.data() + n);
  std::vector<std::complex<double>> spec;
  Eigen::FFT<double> fft;
  fft.fwd(spec, in);
  Eigen::MatrixXd out(n, k_deriv);
  for (int bin = 0; bin < n; ++bin) {
    const std::complex<double> w_bin(0.0, 2.0 * M_PI * static_cast<double>(bin) / static_cast<double>(n));
    std::complex<double> p(1.0, 0.0);
    for (int k = 0; k < k_deriv; ++k) {
      out(bin, k) = (p * spec[static_cast<std::size_t>(bin)]).real();
      p *= w_bin;
    }
  }
  return out;
}

// Per-column affine standardization fitted once on the pretraining set and
// frozen. Periodic columns are passed through untouched so that the sin/cos
// identities survive.
struct FeatureScaler {
  Eigen::VectorXd mean;  // per standardized column, 0 for passthrough
  Eigen::VectorXd scale; // per column, 1 for passthrough
  bool fitted = false;

  void apply(Eigen::MatrixXd& m) const {
    if (!fitted) return;
    if (m.cols() != mean.size()) throw std::invalid_argument("FeatureScaler: column mismatch");
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      m.col(c) = (m.col(c).array() - mean[c]) / scale[c];
  }
};

// Column layout and switches for the multi-domain feature matrix.
struct FeatureConfig {
  PeriodConfig periods{{{1.0, 60}}};
  int k_deriv = 4;
  bool periodic_on = true;
  bool frequency_on = true;

  int periodic_cols() const { return periodic_on ? 2 * static_cast<int>(periods.periods.size()) : 0; }
  int frequency_cols() const { return frequency_on ? k_deriv : 0; }
  int feature_count() const { return 2 + periodic_cols() + frequency_cols(); }
};

// X_multi = [timestamps, values, periodic block, frequency block], with the
// non-periodic columns standardized when the scaler is fitted.
inline Eigen::MatrixXd assemble_features(const SampleWindow& w, const FeatureConfig& cfg,
                                         const FeatureScaler& scaler) {
  const int n = w.size();
  Eigen::MatrixXd m(n, cfg.feature_count());
  m.col(0) = w.timestamps;
  m.col(1) = w.values;
  int c = 2;
  if (cfg.periodic_on) {
    m.middleCols(c, cfg.periodic_cols()) = periodic_embed(w, cfg.periods);
    c += cfg.periodic_cols();
  }
  if (cfg.frequency_on) {
    m.middleCols(c, cfg.frequency_cols()) = frequency_features_raw(w, cfg.k_deriv);
  }
  scaler.apply(m);
  return m;
}

// Fits z-score statistics for the timestamp, value and frequency columns over
// a set of feature matrices produced with an unfitted scaler.
inline FeatureScaler fit_feature_scaler(const std::vector<Eigen::MatrixXd>& raw_features,
                                        const FeatureConfig& cfg) {
  if (raw_features.empty()) throw std::invalid_argument("fit_feature_scaler: no data");
  const int cols = cfg.feature_count();
  FeatureScaler s;
  s.mean = Eigen::VectorXd::Zero(cols);
  s.scale = Eigen::VectorXd::Ones(cols);
  const int p0 = 2;
  const int p1 = 2 + cfg.periodic_cols();  // periodic block [p0, p1)
  double count = 0.0;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(cols);
  Eigen::VectorXd sumsq = Eigen::VectorXd::Zero(cols);
  for (const auto& m : raw_features) {
    if (m.cols() != cols) throw std::invalid_argument("fit_feature_scaler: column mismatch");
    count += static_cast<double>(m.rows());
    sum += m.colwise().sum().transpose();
    sumsq += m.array().square().colwise().sum().matrix().transpose();
  }
  for (int c = 0; c < cols; ++c) {
    if (c >= p0 && c < p1) continue;  // periodic columns untouched
    const double mu = sum[c] / count;
    const double var = std::max(0.0, sumsq[c] / count - mu * mu);
    const double sd = std::sqrt(var);
    s.mean[c] = mu;
    s.scale[c] = sd > 1e-12 ? sd : 1.0;
  }
  s.fitted = true;
  return s;
}

}  // namespace psr
