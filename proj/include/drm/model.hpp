#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drm/rng.hpp"

namespace drm {

/// Product of closed intervals; the feasible region for decision parameters.
struct Box {
  std::vector<double> lo;
  std::vector<double> hi;

  static Box cube(std::size_t dim, double half_width);
  std::size_t dim() const { return lo.size(); }
  bool contains(std::span<const double> theta) const;
};

/// One simulation draw: raw input x, observable y = L(x), and the score
/// grad_theta ln f_X(x; theta) evaluated at the sampling parameter.
struct ModelSample {
  double x = 0.0;
  double y = 0.0;
  std::vector<double> score;
};

/// Observable model Y(theta): sampler plus score function, optionally with
/// analytic CDF/quantile for validation. Stateless; samplers take an explicit
/// RNG handle, so instances are safe to share across threads.
class ObservableModel {
 public:
  virtual ~ObservableModel() = default;

  virtual std::size_t dim() const = 0;
  virtual const Box& box() const = 0;
  virtual std::string name() const = 0;

  /// Draws x ~ f_X(.;theta) and fills y and the score at theta.
  virtual void draw(std::span<const double> theta, Rng& rng, ModelSample& out) const = 0;

  virtual void score(std::span<const double> theta, double x, std::span<double> out) const = 0;

  virtual bool has_analytic() const { return false; }
  virtual double cdf(std::span<const double> theta, double y) const;
  virtual double pdf(std::span<const double> theta, double y) const;
  /// Solves F(q;theta) = z to |F(q)-z| <= 1e-12.
  virtual double quantile(std::span<const double> theta, double z) const;
  virtual void cdf_grad(std::span<const double> theta, double y, std::span<double> out) const;

  ModelSample sample(std::span<const double> theta, Rng& rng) const {
    ModelSample s;
    draw(theta, rng, s);
    return s;
  }
};

/// Y = theta + Z with Z standard normal; closed-form everything. Used as the
/// validation model for the tracker rate experiments.
class GaussLocation final : public ObservableModel {
 public:
  explicit GaussLocation(double half_width = 2.5);

  std::size_t dim() const override { return 1; }
  const Box& box() const override { return box_; }
  std::string name() const override { return "gauss-location"; }
  void draw(std::span<const double> theta, Rng& rng, ModelSample& out) const override;
  void score(std::span<const double> theta, double x, std::span<double> out) const override;
  bool has_analytic() const override { return true; }
  double cdf(std::span<const double> theta, double y) const override;
  double pdf(std::span<const double> theta, double y) const override;
  double quantile(std::span<const double> theta, double z) const override;
  void cdf_grad(std::span<const double> theta, double y, std::span<double> out) const override;

 private:
  Box box_;
};

/// Component parameters of a normalized Gaussian mixture (mean 0, variance 1).
struct NormalizedMixture {
  std::vector<double> weight;
  std::vector<double> mean;
  std::vector<double> std;
};

/// Normalization pipeline: softmax weights, centralize means, rescale so the
/// mixture has mean zero and unit variance.
NormalizedMixture normalize_mixture(std::span<const double> raw);

/// Gaussian mixture observable with d components and raw parameter vector of
/// length 3d laid out as blocks (w_1..w_d, mu_1..mu_d, ln sigma_1..ln sigma_d).
class GaussMixture final : public ObservableModel {
 public:
  explicit GaussMixture(std::size_t components, double half_width = 2.5);

  std::size_t components() const { return d_; }
  std::size_t dim() const override { return 3 * d_; }
  const Box& box() const override { return box_; }
  std::string name() const override;
  void draw(std::span<const double> theta, Rng& rng, ModelSample& out) const override;
  void score(std::span<const double> theta, double x, std::span<double> out) const override;
  bool has_analytic() const override { return true; }
  double cdf(std::span<const double> theta, double y) const override;
  double pdf(std::span<const double> theta, double y) const override;
  double quantile(std::span<const double> theta, double z) const override;
  void cdf_grad(std::span<const double> theta, double y, std::span<double> out) const override;

  double log_pdf(std::span<const double> theta, double y) const;
  /// Central finite-difference score; the independent oracle for score().
  void score_fd(std::span<const double> theta, double x, std::span<double> out,
                double h = 1e-6) const;
  /// Quantiles at an increasing batch of levels sharing one warm-started solve.
  std::vector<double> quantile_sweep(std::span<const double> theta,
                                     std::span<const double> zs) const;

 private:
  std::size_t d_;
  Box box_;
};

/// Model selected by config string: `mixture:d=10` or `gauss-location`.
std::unique_ptr<ObservableModel> parse_model(std::string_view text);

}  // namespace drm
