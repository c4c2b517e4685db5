#include "drm/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drm/math.hpp"

namespace drm {

void g1_score(const ModelSample& sample, double q, std::span<double> out) {
  if (out.size() != sample.score.size()) {
    throw std::invalid_argument("g1_score: output size mismatch");
  }
  const double c = g1_factor(sample.y, q);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * sample.score[i];
}

double g3_kernel(double y, double q, double h) {
  if (!(h > 0.0)) throw std::domain_error("g3_kernel: bandwidth must be positive");
  const double t = (y - q) / h;
  if (std::fabs(t) > 39.0) return 0.0;  // exp underflows anyway
  return normal_pdf(t) / h;
}

double quantile_step(double q, double z, double y, double gamma_q, double rho) {
  if (!(gamma_q > 0.0)) throw std::domain_error("quantile_step: step size must be positive");
  const double ind = y <= q ? rho : 0.0;
  return q + gamma_q * (z - ind);
}

void qgrad_step(std::span<double> d, std::span<const double> g1, double g3, double gamma_d,
                double rho) {
  if (!(gamma_d > 0.0)) throw std::domain_error("qgrad_step: step size must be positive");
  if (d.size() != g1.size()) throw std::invalid_argument("qgrad_step: size mismatch");
  const double a = gamma_d * rho;
  for (std::size_t i = 0; i < d.size(); ++i) d[i] += a * (g1[i] - g3 * d[i]);
}

std::vector<double> sort_clip(std::span<const double> q, const Grid& g, double lq) {
  if (lq < 0.0) throw std::domain_error("sort_clip: L_q must be nonnegative");
  if (q.size() != g.levels.size()) throw std::invalid_argument("sort_clip: size mismatch");
  std::vector<double> out(q.begin(), q.end());
  std::sort(out.begin(), out.end());
  // Cumulative form: q~_(i) = q_(0) + sum max{sorted gap, L_q * level gap}.
  double prev_sorted = out[0];
  for (std::size_t i = 1; i < out.size(); ++i) {
    const double gap = out[i] - prev_sorted;
    prev_sorted = out[i];
    const double floor_gap = lq * (g.levels[i] - g.levels[i - 1]);
    out[i] = out[i - 1] + std::max(gap, floor_gap);
  }
  return out;
}

}  // namespace drm
