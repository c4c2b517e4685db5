#include "drm/oracle.hpp"

#include <algorithm>
#include <cmath>

namespace drm {

WorstCaseOracle::WorstCaseOracle(const DistortionFn& w, int resolution)
    : envelope_(concave_envelope(w, resolution)) {
  // The integrand |w*'(1-z) - 1|^2 is piecewise constant, so the normalizer
  // is a finite sum over envelope segments; no quadrature error enters the
  // ground truth.
  double c = 0.0;
  for (std::size_t k = 0; k + 1 < envelope_.x.size(); ++k) {
    const double len = envelope_.x[k + 1] - envelope_.x[k];
    const double slope = (envelope_.y[k + 1] - envelope_.y[k]) / len;
    c += (slope - 1.0) * (slope - 1.0) * len;
  }
  if (c < 1e-12) {
    throw degenerate_oracle_error(
        "worst_case_quantile: envelope is the identity; any mean-0/var-1 law is extreme");
  }
  c_ = c;
  inv_sqrt_c_ = 1.0 / std::sqrt(c);
}

double WorstCaseOracle::quantile(double z) const {
  if (!(z > 0.0 && z < 1.0)) throw std::domain_error("worst_case_quantile: z outside (0,1)");
  // Left derivative at envelope knots, matching the left-continuity of w.
  return inv_sqrt_c_ * (envelope_.left_slope(1.0 - z) - 1.0);
}

double worst_case_quantile(const DistortionFn& w, double z, int resolution) {
  return WorstCaseOracle(w, resolution).quantile(z);
}

double drm_value(const QuantileFn& q, const DistortionFn& w, const Grid& g) {
  if (g.levels.size() < 2) {
    throw std::invalid_argument("drm_value: need a grid with at least two levels");
  }
  const auto& lv = g.levels;
  const std::size_t n = g.intervals();
  double value = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double dw = w.eval(1.0 - lv[i + 1]) - w.eval(1.0 - lv[i]);
    value -= q(g.eval_points[i]) * dw;
  }
  // Boundary intervals [0, z_0] and [z_N, 1]: evaluate at their midpoints with
  // the quantile function extended linearly from the outermost grid points.
  const double q0 = q(lv[0]), q1 = q(lv[1]);
  const double qm = q(lv[n - 1]), qn = q(lv[n]);
  const double left_mid = 0.5 * lv[0];
  const double right_mid = 0.5 * (lv[n] + 1.0);
  const double q_left = q0 + (left_mid - lv[0]) * (q1 - q0) / (lv[1] - lv[0]);
  const double q_right = qn + (right_mid - lv[n]) * (qn - qm) / (lv[n] - lv[n - 1]);
  value -= q_left * (w.eval(1.0 - lv[0]) - 1.0);   // w~(z_0) - w~(0)
  value -= q_right * (0.0 - w.eval(1.0 - lv[n]));  // w~(1) - w~(z_N)
  return value;
}

double drm_value_tracked(std::span<const double> q_levels, const DistortionFn& w, const Grid& g) {
  if (q_levels.size() != g.levels.size()) {
    throw std::invalid_argument("drm_value_tracked: size mismatch");
  }
  const auto& lv = g.levels;
  const QuantileFn interp = [&](double z) {
    const auto it = std::lower_bound(lv.begin(), lv.end(), z);
    std::size_t j = static_cast<std::size_t>(it - lv.begin());
    j = std::clamp<std::size_t>(j, 1, lv.size() - 1);
    const double frac = (z - lv[j - 1]) / (lv[j] - lv[j - 1]);
    return q_levels[j - 1] + frac * (q_levels[j] - q_levels[j - 1]);
  };
  return drm_value(interp, w, g);
}

double wasserstein2(const QuantileFn& q1, const QuantileFn& q2, int resolution) {
  if (resolution < 2) throw std::invalid_argument("wasserstein2: resolution >= 2");
  double acc = 0.0;
  const double inv = 1.0 / static_cast<double>(resolution);
  for (int j = 0; j < resolution; ++j) {
    const double z = (static_cast<double>(j) + 0.5) * inv;
    const double diff = q1(z) - q2(z);
    acc += diff * diff;
  }
  return std::sqrt(acc * inv);
}

}  // namespace drm
