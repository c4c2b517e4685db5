#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace drm {

/// Raised when a distortion derivative is requested where none exists.
class non_differentiable_error : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Continuous piecewise-linear function on [x.front(), x.back()] with
/// strictly increasing knots. Queries outside the knot range clamp to the
/// boundary segments.
struct PiecewiseLinear {
  std::vector<double> x;
  std::vector<double> y;

  double eval(double t) const;
  /// Slope of the segment immediately left of t (segment ending at t when t
  /// is a knot).
  double left_slope(double t) const;
  /// Slope of the segment immediately right of t.
  double right_slope(double t) const;
  std::size_t segments() const { return x.size() - 1; }
};

enum class DistortionKind {
  VaR,
  CVaR,
  Wang,
  SShape,
  CPT,
  DiscontinuousComposite,
  PiecewiseLinearTable,
};

/// A distortion function w: [0,1] -> [0,1], non-decreasing, w(0)=0, w(1)=1,
/// continuous from the left. `jump_levels` lists every interior point where w
/// is discontinuous or non-differentiable; `discontinuities` the subset where
/// w actually jumps.
class DistortionFn {
 public:
  static DistortionFn var(double alpha);
  static DistortionFn cvar(double alpha);
  static DistortionFn wang(double alpha);
  static DistortionFn sshape(double alpha);
  static DistortionFn cpt(double alpha);
  static DistortionFn discontinuous_composite(double alpha);
  static DistortionFn table(PiecewiseLinear pl);

  /// Parses harness config strings: cvar:0.7, wang:-0.85, sshape:5, cpt:0.7,
  /// disc:5, var:0.7, identity.
  static DistortionFn parse(std::string_view text);

  DistortionKind kind() const { return kind_; }
  double param() const { return alpha_; }
  const std::vector<double>& jump_levels() const { return jump_levels_; }
  const std::vector<double>& discontinuities() const { return discontinuities_; }
  bool smooth() const { return jump_levels_.empty(); }
  bool continuous() const { return discontinuities_.empty(); }
  std::string name() const;

  double eval(double z) const;
  double derivative(double z) const;

 private:
  DistortionFn(DistortionKind kind, double alpha) : kind_(kind), alpha_(alpha) {}

  DistortionKind kind_;
  double alpha_ = 0.0;
  PiecewiseLinear table_;
  std::vector<double> jump_levels_;
  std::vector<double> discontinuities_;
};

/// Quantile-level grid z_0 < ... < z_N inside (0,1) together with the
/// per-interval midpoints used for numerical integration.
struct Grid {
  std::vector<double> levels;
  std::vector<double> eval_points;

  explicit Grid(std::vector<double> lv);
  std::size_t intervals() const { return levels.size() - 1; }
};

/// Uniform partition z_i = (i+1)/(N+2), i = 0..N.
Grid uniform_grid(int n);

/// Square-root grid z_i = sqrt(i/M), i = 1..M-1; denser near one.
Grid sqrt_grid(int m);

/// Interval weights dw~_i = w(1-z_i) - w(1-z_{i-1}), i = 1..N.
std::vector<double> weights(const DistortionFn& w, const Grid& g);

/// Least concave majorant of w on [0,1]: upper hull of the sampled graph.
PiecewiseLinear concave_envelope(const DistortionFn& w, int resolution = 100000);

struct JumpPartition {
  std::vector<std::size_t> jump;    // 0-based interval indices
  std::vector<std::size_t> smooth;  // complement in {0,...,N-1}
};

/// Splits grid intervals by whether the pushed-forward nonsmooth set of
/// z -> w(1-z) meets them. Interval j covers (levels[j], levels[j+1]].
JumpPartition jump_partition(const DistortionFn& w, const Grid& g);

}  // namespace drm
