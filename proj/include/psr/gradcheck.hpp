#pragma once

#include <cmath>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "psr/params.hpp"
#include "psr/rng.hpp"

namespace psr {

struct GradCheckReport {
  double max_rel_err = 0.0;
  std::string worst_tensor;
  int worst_row = -1;
  int worst_col = -1;
};

// Compares analytic gradients against central finite differences.
//
// `loss` re-evaluates the scalar objective from the tensors' current values;
// `analytic` holds d(loss)/d(tensor) aligned with `tensors`. Relative error is
// |analytic - cd| / max(1, |cd|). When max_entries > 0 only a deterministic
// random subset of entries per tensor is probed.
inline GradCheckReport grad_check(const std::function<double()>& loss,
                                  const std::vector<Mat*>& tensors,
                                  const std::vector<Mat>& analytic,
                                  const std::vector<std::string>& names, double h,
                                  int max_entries = -1, std::uint64_t probe_seed = 1234) {
  if (tensors.size() != analytic.size() || tensors.size() != names.size())
    throw std::invalid_argument("grad_check: mismatched inputs");
  if (!(h > 0.0)) throw std::invalid_argument("grad_check: h must be positive");
  GradCheckReport rep;
  Rng rng(probe_seed);
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    Mat& t = *tensors[ti];
    std::vector<std::pair<int, int>> probes;
    if (max_entries <= 0 || t.size() <= max_entries) {
      for (Eigen::Index c = 0; c < t.cols(); ++c)
        for (Eigen::Index r = 0; r < t.rows(); ++r) probes.emplace_back(static_cast<int>(r), static_cast<int>(c));
    } else {
      for (int k = 0; k < max_entries; ++k)
        probes.emplace_back(static_cast<int>(rng.below(static_cast<std::uint64_t>(t.rows()))),
                            static_cast<int>(rng.below(static_cast<std::uint64_t>(t.cols()))));
    }
    for (auto [r, c] : probes) {
      const double orig = t(r, c);
      t(r, c) = orig + h;
      const double fp = loss();
      t(r, c) = orig - h;
      const double fm = loss();
      t(r, c) = orig;
      if (!std::isfinite(fp) || !std::isfinite(fm))
        throw std::runtime_error("grad_check: non-finite loss while perturbing " + names[ti]);
      const double cd = (fp - fm) / (2.0 * h);
      const double a = analytic[ti](r, c);
      const double rel = std::abs(a - cd) / std::max(1.0, std::abs(cd));
      if (rel > rep.max_rel_err) {
        rep.max_rel_err = rel;
        rep.worst_tensor = names[ti];
        rep.worst_row = r;
        rep.worst_col = c;
      }
    }
  }
  return rep;
}

}  // namespace psr
