#pragma once

#include <functional>
#include <span>
#include <stdexcept>

#include "drm/distortion.hpp"

namespace drm {

/// Quantile function z -> F^{-1}(z) on (0,1).
using QuantileFn = std::function<double(double)>;

/// Raised when the extreme-case problem is degenerate (the concave envelope
/// is the identity, so every mean-0/variance-1 law is optimal).
class degenerate_oracle_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Closed-form extreme-case quantile function under mean-0/variance-1
/// constraints: F*^{-1}(z) = c^{-1/2} (w*'(1-z) - 1) with w* the concave
/// envelope of w and c the exact segment-wise normalizing integral.
class WorstCaseOracle {
 public:
  explicit WorstCaseOracle(const DistortionFn& w, int resolution = 100000);

  double quantile(double z) const;
  double normalizer() const { return c_; }
  const PiecewiseLinear& envelope() const { return envelope_; }
  QuantileFn quantile_fn() const {
    return [*this](double z) { return quantile(z); };
  }

 private:
  PiecewiseLinear envelope_;
  double c_ = 0.0;
  double inv_sqrt_c_ = 0.0;
};

double worst_case_quantile(const DistortionFn& w, double z, int resolution = 100000);

/// DRM of the law with quantile function q under distortion w, via the
/// midpoint rule on the grid plus linear extrapolation into both dropped
/// boundary intervals.
double drm_value(const QuantileFn& q, const DistortionFn& w, const Grid& g);

/// Same quadrature applied to quantile estimates tracked at the grid levels.
double drm_value_tracked(std::span<const double> q_levels, const DistortionFn& w, const Grid& g);

/// Wasserstein-2 distance sqrt(int (q1-q2)^2 dz) by midpoint quadrature.
double wasserstein2(const QuantileFn& q1, const QuantileFn& q2, int resolution);

}  // namespace drm
