#pragma once

#include <span>
#include <vector>

#include "drm/distortion.hpp"
#include "drm/model.hpp"

namespace drm {

/// Coupled tracker state: quantile estimates q_i and quantile-gradient rows
/// D_i (one per tracked interval).
struct TrackerState {
  std::vector<double> q;
  std::vector<std::vector<double>> d;
};

/// Simplified GLR/score estimator of -grad_theta F(q; theta):
/// G1 = -1{y <= q} * score. Writes into `out`.
void g1_score(const ModelSample& sample, double q, std::span<double> out);

/// Scalar multiplier of the score for the same estimator; G1 = g1_factor * score.
inline double g1_factor(double y, double q) { return y <= q ? -1.0 : 0.0; }

/// Gaussian kernel density estimate (1/h) K((y-q)/h).
double g3_kernel(double y, double q, double h);

/// Robbins-Monro quantile recursion q' = q + gq (z - rho 1{y <= q}).
double quantile_step(double q, double z, double y, double gamma_q, double rho = 1.0);

/// Quantile-gradient recursion D' = D + gD rho (g1 - g3 D), in place.
void qgrad_step(std::span<double> d, std::span<const double> g1, double g3, double gamma_d,
                double rho = 1.0);

/// Sorts the quantile vector and enforces the per-interval Lipschitz floor
/// gap_i >= L_q (z_i - z_{i-1}); with L_q = 0 this is a plain sort.
std::vector<double> sort_clip(std::span<const double> q, const Grid& g, double lq);

}  // namespace drm
