#pragma once

#include <algorithm>
#include <stdexcept>
#include <vector>

#include <Eigen/Core>

namespace psr {

// Clamped B-spline knot grid. Knots are non-decreasing with the first and
// last knot each repeated degree+1 times; basis_count = #knots - degree - 1.
class SplineGrid {
 public:
  SplineGrid(int degree, std::vector<double> knots) : degree_(degree), knots_(std::move(knots)) {
    if (degree_ < 0) throw std::invalid_argument("SplineGrid: negative degree");
    const int n = static_cast<int>(knots_.size());
    if (n < 2 * (degree_ + 1)) throw std::invalid_argument("SplineGrid: too few knots");
    for (int i = 1; i < n; ++i)
      if (knots_[static_cast<std::size_t>(i)] < knots_[static_cast<std::size_t>(i - 1)])
        throw std::invalid_argument("SplineGrid: knots must be non-decreasing");
    for (int i = 0; i <= degree_; ++i) {
      if (knots_[static_cast<std::size_t>(i)] != knots_.front() ||
          knots_[static_cast<std::size_t>(n - 1 - i)] != knots_.back())
        throw std::invalid_argument("SplineGrid: knot vector must be clamped");
    }
    if (knots_.front() >= knots_.back()) throw std::invalid_argument("SplineGrid: empty domain");
    basis_count_ = n - degree_ - 1;
    if (basis_count_ < 1) throw std::invalid_argument("SplineGrid: basis_count < 1");
  }

  // Uniform clamped grid on [lo, hi] with the requested basis count.
  static SplineGrid clamped_uniform(int degree, int basis_count, double lo, double hi) {
    if (basis_count <= degree) throw std::invalid_argument("SplineGrid: basis_count must exceed degree");
    const int intervals = basis_count - degree;
    std::vector<double> knots;
    knots.reserve(static_cast<std::size_t>(basis_count + degree + 1));
    for (int i = 0; i <= degree; ++i) knots.push_back(lo);
    for (int i = 1; i < intervals; ++i)
      knots.push_back(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(intervals));
    for (int i = 0; i <= degree; ++i) knots.push_back(hi);
    return SplineGrid(degree, std::move(knots));
  }

  int degree() const { return degree_; }
  int basis_count() const { return basis_count_; }
  double lo() const { return knots_.front(); }
  double hi() const { return knots_.back(); }
  const std::vector<double>& knots() const { return knots_; }

  double clamp(double x) const { return std::min(std::max(x, lo()), hi()); }

  // All basis values B_{k,degree}(x), k = 0..basis_count-1. Inputs outside
  // the domain are clamped to the boundary.
  Eigen::VectorXd eval(double x) const {
    Eigen::VectorXd b = Eigen::VectorXd::Zero(basis_count_);
    const double xc = clamp(x);
    scatter_span(xc, degree_, find_span(xc), b);
    return b;
  }

  // Basis values and derivatives in one pass; out parameters sized
  // basis_count. Derivative uses the degree-(p-1) recursion.
  void eval_with_derivative(double x, Eigen::Ref<Eigen::VectorXd> basis,
                            Eigen::Ref<Eigen::VectorXd> deriv) const {
    const double xc = clamp(x);
    basis.setZero();
    deriv.setZero();
    const int span = find_span(xc);
    scatter_span(xc, degree_, span, basis);
    if (degree_ == 0) return;
    // B'_{k,p} = p [ B_{k,p-1}/(t_{k+p}-t_k) - B_{k+1,p-1}/(t_{k+p+1}-t_{k+1}) ]
    Eigen::VectorXd lower = Eigen::VectorXd::Zero(basis_count_ + 1);
    scatter_span(xc, degree_ - 1, span, lower.head(basis_count_ + 1));
    const double p = static_cast<double>(degree_);
    for (int k = std::max(0, span - degree_); k <= std::min(basis_count_ - 1, span); ++k) {
      double left = 0.0, right = 0.0;
      const double d1 = knot(k + degree_) - knot(k);
      const double d2 = knot(k + degree_ + 1) - knot(k + 1);
      if (d1 > 0.0) left = lower[k] / d1;
      if (d2 > 0.0) right = lower[k + 1] / d2;
      deriv[k] = p * (left - right);
    }
  }

 private:
  double knot(int i) const { return knots_[static_cast<std::size_t>(i)]; }

  // Span j with t_j <= x < t_{j+1}; the last non-empty interval is closed.
  int find_span(double x) const {
    const int hi_span = basis_count_ - 1;
    if (x >= knots_.back()) return hi_span;
    int lo_span = degree_;
    int j = static_cast<int>(std::upper_bound(knots_.begin(), knots_.end(), x) - knots_.begin()) - 1;
    return std::clamp(j, lo_span, hi_span);
  }

  // Non-zero degree-d basis values at x scattered into out (length >= count).
  void scatter_span(double x, int d, int span, Eigen::Ref<Eigen::VectorXd> out) const {
    std::vector<double> vals(static_cast<std::size_t>(d + 1), 0.0);
    std::vector<double> left(static_cast<std::size_t>(d + 1), 0.0);
    std::vector<double> right(static_cast<std::size_t>(d + 1), 0.0);
    vals[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[static_cast<std::size_t>(j)] = x - knot(span + 1 - j);
      right[static_cast<std::size_t>(j)] = knot(span + j) - x;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double den = right[static_cast<std::size_t>(r + 1)] + left[static_cast<std::size_t>(j - r)];
        const double temp = den != 0.0 ? vals[static_cast<std::size_t>(r)] / den : 0.0;
        vals[static_cast<std::size_t>(r)] = saved + right[static_cast<std::size_t>(r + 1)] * temp;
        saved = left[static_cast<std::size_t>(j - r)] * temp;
      }
      vals[static_cast<std::size_t>(j)] = saved;
    }
    for (int r = 0; r <= d; ++r) {
      const int k = span - d + r;
      if (k >= 0 && k < out.size()) out[k] += vals[static_cast<std::size_t>(r)];
    }
  }

  int degree_;
  std::vector<double> knots_;
  int basis_count_;
};

}  // namespace psr
