#include "drm/distortion.hpp"

#include <algorithm>
#include <cmath>
#include <charconv>

#include "drm/math.hpp"

namespace drm {

namespace {

void check_unit_interval(double z) {
  if (!(z >= 0.0 && z <= 1.0)) {
    throw std::domain_error("distortion: z outside [0,1]");
  }
}

double sshape_eval(double z, double a) {
  // w1(z;a) = (e^{2az} - 1) / ((e^a - 1)(e^{2az-a} + 1))
  return std::expm1(2.0 * a * z) / (std::expm1(a) * (std::exp(2.0 * a * z - a) + 1.0));
}

double sshape_deriv(double z, double a) {
  const double u = std::exp(2.0 * a * z);
  const double den = std::expm1(a) * (u * std::exp(-a) + 1.0) * (u * std::exp(-a) + 1.0);
  return 2.0 * a * u * (1.0 + std::exp(-a)) / den;
}

double cpt_eval(double z, double a) {
  const double A = std::pow(z, a);
  const double B = std::pow(1.0 - z, a);
  return A / std::pow(A + B, 1.0 / a);
}

double cpt_deriv(double z, double a) {
  const double A = std::pow(z, a);
  const double B = std::pow(1.0 - z, a);
  const double za = std::pow(z, a - 1.0);
  const double zb = std::pow(1.0 - z, a - 1.0);
  return std::pow(A + B, -1.0 / a - 1.0) * ((a - 1.0) * za * A + a * za * B + A * zb);
}

}  // namespace

double PiecewiseLinear::eval(double t) const {
  if (t <= x.front()) return y.front();
  if (t >= x.back()) return y.back();
  const auto it = std::upper_bound(x.begin(), x.end(), t);
  const std::size_t j = static_cast<std::size_t>(it - x.begin());
  const double frac = (t - x[j - 1]) / (x[j] - x[j - 1]);
  return y[j - 1] + frac * (y[j] - y[j - 1]);
}

double PiecewiseLinear::left_slope(double t) const {
  // First knot >= t; the segment ending there lies immediately left of t.
  auto it = std::lower_bound(x.begin(), x.end(), t);
  std::size_t j = static_cast<std::size_t>(it - x.begin());
  j = std::clamp<std::size_t>(j, 1, x.size() - 1);
  return (y[j] - y[j - 1]) / (x[j] - x[j - 1]);
}

double PiecewiseLinear::right_slope(double t) const {
  auto it = std::upper_bound(x.begin(), x.end(), t);
  std::size_t j = static_cast<std::size_t>(it - x.begin());
  j = std::clamp<std::size_t>(j, 1, x.size() - 1);
  return (y[j] - y[j - 1]) / (x[j] - x[j - 1]);
}

DistortionFn DistortionFn::var(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("var: alpha in (0,1)");
  DistortionFn w(DistortionKind::VaR, alpha);
  w.jump_levels_ = {1.0 - alpha};
  w.discontinuities_ = {1.0 - alpha};
  return w;
}

DistortionFn DistortionFn::cvar(double alpha) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::invalid_argument("cvar: alpha in (0,1)");
  DistortionFn w(DistortionKind::CVaR, alpha);
  w.jump_levels_ = {1.0 - alpha};  // kink, not a jump
  return w;
}

DistortionFn DistortionFn::wang(double alpha) {
  return DistortionFn(DistortionKind::Wang, alpha);
}

DistortionFn DistortionFn::sshape(double alpha) {
  if (alpha == 0.0) throw std::invalid_argument("sshape: alpha must be nonzero");
  return DistortionFn(DistortionKind::SShape, alpha);
}

DistortionFn DistortionFn::cpt(double alpha) {
  if (!(alpha > 0.0)) throw std::invalid_argument("cpt: alpha must be positive");
  return DistortionFn(DistortionKind::CPT, alpha);
}

DistortionFn DistortionFn::discontinuous_composite(double alpha) {
  if (alpha == 0.0) throw std::invalid_argument("disc: alpha must be nonzero");
  DistortionFn w(DistortionKind::DiscontinuousComposite, alpha);
  w.jump_levels_ = {0.3, 0.5, 0.7};
  w.discontinuities_ = {0.3, 0.5, 0.7};
  return w;
}

DistortionFn DistortionFn::table(PiecewiseLinear pl) {
  if (pl.x.size() < 2 || pl.x.size() != pl.y.size()) {
    throw std::invalid_argument("table: need matching knot vectors, >= 2 knots");
  }
  if (pl.x.front() != 0.0 || pl.x.back() != 1.0 || pl.y.front() != 0.0 || pl.y.back() != 1.0) {
    throw std::invalid_argument("table: must map [0,1] onto [0,1]");
  }
  for (std::size_t j = 1; j < pl.x.size(); ++j) {
    if (!(pl.x[j] > pl.x[j - 1])) throw std::invalid_argument("table: knots not increasing");
    if (pl.y[j] < pl.y[j - 1]) throw std::invalid_argument("table: not non-decreasing");
  }
  DistortionFn w(DistortionKind::PiecewiseLinearTable, 0.0);
  for (std::size_t j = 1; j + 1 < pl.x.size(); ++j) {
    const double sl = (pl.y[j] - pl.y[j - 1]) / (pl.x[j] - pl.x[j - 1]);
    const double sr = (pl.y[j + 1] - pl.y[j]) / (pl.x[j + 1] - pl.x[j]);
    if (sl != sr) w.jump_levels_.push_back(pl.x[j]);
  }
  w.table_ = std::move(pl);
  return w;
}

DistortionFn DistortionFn::parse(std::string_view text) {
  std::string name(text.substr(0, text.find(':')));
  double alpha = 0.0;
  if (auto pos = text.find(':'); pos != std::string_view::npos) {
    const auto arg = text.substr(pos + 1);
    const auto rc = std::from_chars(arg.data(), arg.data() + arg.size(), alpha);
    if (rc.ec != std::errc{}) throw std::invalid_argument("distortion: bad parameter in '" + std::string(text) + "'");
  }
  if (name == "cvar") return cvar(alpha);
  if (name == "var") return var(alpha);
  if (name == "wang") return wang(alpha);
  if (name == "sshape") return sshape(alpha);
  if (name == "cpt") return cpt(alpha);
  if (name == "disc") return discontinuous_composite(alpha);
  if (name == "identity") return table(PiecewiseLinear{{0.0, 1.0}, {0.0, 1.0}});
  throw std::invalid_argument("distortion: unknown kind '" + name + "'");
}

std::string DistortionFn::name() const {
  switch (kind_) {
    case DistortionKind::VaR: return "var:" + std::to_string(alpha_);
    case DistortionKind::CVaR: return "cvar:" + std::to_string(alpha_);
    case DistortionKind::Wang: return "wang:" + std::to_string(alpha_);
    case DistortionKind::SShape: return "sshape:" + std::to_string(alpha_);
    case DistortionKind::CPT: return "cpt:" + std::to_string(alpha_);
    case DistortionKind::DiscontinuousComposite: return "disc:" + std::to_string(alpha_);
    case DistortionKind::PiecewiseLinearTable: return "table";
  }
  return "?";
}

double DistortionFn::eval(double z) const {
  check_unit_interval(z);
  if (z == 0.0) return 0.0;
  if (z == 1.0) return 1.0;
  switch (kind_) {
    case DistortionKind::VaR:
      return z > 1.0 - alpha_ ? 1.0 : 0.0;
    case DistortionKind::CVaR:
      return std::min(z / (1.0 - alpha_), 1.0);
    case DistortionKind::Wang:
      return normal_cdf(normal_quantile(z) - alpha_);
    case DistortionKind::SShape:
      return sshape_eval(z, alpha_);
    case DistortionKind::CPT:
      return cpt_eval(z, alpha_);
    case DistortionKind::DiscontinuousComposite: {
      double v = 0.8 * sshape_eval(z, alpha_);
      if (z > 0.3) v += 1.0 / 15.0;
      if (z > 0.5) v += 1.0 / 15.0;
      if (z > 0.7) v += 1.0 / 15.0;
      return v;
    }
    case DistortionKind::PiecewiseLinearTable:
      return table_.eval(z);
  }
  return 0.0;
}

double DistortionFn::derivative(double z) const {
  if (!(z > 0.0 && z < 1.0)) {
    throw std::domain_error("distortion derivative: z outside (0,1)");
  }
  if (kind_ == DistortionKind::VaR) {
    throw non_differentiable_error("VaR distortion has no classical derivative");
  }
  if (std::binary_search(jump_levels_.begin(), jump_levels_.end(), z)) {
    throw non_differentiable_error("distortion derivative requested at a jump level");
  }
  switch (kind_) {
    case DistortionKind::CVaR:
      return z < 1.0 - alpha_ ? 1.0 / (1.0 - alpha_) : 0.0;
    case DistortionKind::Wang: {
      const double x = normal_quantile(z);
      return normal_pdf(x - alpha_) / normal_pdf(x);
    }
    case DistortionKind::SShape:
      return sshape_deriv(z, alpha_);
    case DistortionKind::CPT:
      return cpt_deriv(z, alpha_);
    case DistortionKind::DiscontinuousComposite:
      return 0.8 * sshape_deriv(z, alpha_);
    case DistortionKind::PiecewiseLinearTable:
      return table_.right_slope(z);
    case DistortionKind::VaR:
      break;
  }
  return 0.0;
}

Grid::Grid(std::vector<double> lv) : levels(std::move(lv)) {
  if (levels.empty()) throw std::invalid_argument("grid: empty level set");
  for (std::size_t i = 0; i < levels.size(); ++i) {
    if (!(levels[i] > 0.0 && levels[i] < 1.0)) {
      throw std::invalid_argument("grid: levels must lie in (0,1)");
    }
    if (i > 0 && !(levels[i] > levels[i - 1])) {
      throw std::invalid_argument("grid: levels must be strictly increasing");
    }
  }
  eval_points.reserve(levels.size() - 1);
  for (std::size_t i = 1; i < levels.size(); ++i) {
    eval_points.push_back(0.5 * (levels[i - 1] + levels[i]));
  }
}

Grid uniform_grid(int n) {
  if (n < 1) throw std::invalid_argument("uniform_grid: N >= 1");
  std::vector<double> lv(static_cast<std::size_t>(n) + 1);
  for (int i = 0; i <= n; ++i) lv[static_cast<std::size_t>(i)] = double(i + 1) / double(n + 2);
  return Grid(std::move(lv));
}

Grid sqrt_grid(int m) {
  if (m < 2) throw std::invalid_argument("sqrt_grid: M >= 2");
  std::vector<double> lv;
  lv.reserve(static_cast<std::size_t>(m) - 1);
  for (int i = 1; i < m; ++i) lv.push_back(std::sqrt(double(i) / double(m)));
  return Grid(std::move(lv));
}

std::vector<double> weights(const DistortionFn& w, const Grid& g) {
  std::vector<double> dw;
  dw.reserve(g.intervals());
  for (std::size_t i = 1; i < g.levels.size(); ++i) {
    dw.push_back(w.eval(1.0 - g.levels[i]) - w.eval(1.0 - g.levels[i - 1]));
  }
  return dw;
}

PiecewiseLinear concave_envelope(const DistortionFn& w, int resolution) {
  if (resolution < 2) throw std::invalid_argument("concave_envelope: resolution >= 2");
  const std::size_t n = static_cast<std::size_t>(resolution) + 1;
  std::vector<double> xs(n), ys(n);
  for (std::size_t k = 0; k < n; ++k) {
    xs[k] = double(k) / double(resolution);
    ys[k] = w.eval(xs[k]);
  }
  // Monotone-chain upper hull; pops on left turns and collinear points.
  std::vector<std::size_t> hull;
  for (std::size_t k = 0; k < n; ++k) {
    while (hull.size() >= 2) {
      const std::size_t a = hull[hull.size() - 2];
      const std::size_t b = hull[hull.size() - 1];
      const double cross = (xs[b] - xs[a]) * (ys[k] - ys[a]) - (ys[b] - ys[a]) * (xs[k] - xs[a]);
      if (cross >= 0.0) {
        hull.pop_back();
      } else {
        break;
      }
    }
    hull.push_back(k);
  }
  PiecewiseLinear env;
  env.x.reserve(hull.size());
  env.y.reserve(hull.size());
  for (std::size_t idx : hull) {
    env.x.push_back(xs[idx]);
    env.y.push_back(ys[idx]);
  }
  return env;
}

JumpPartition jump_partition(const DistortionFn& w, const Grid& g) {
  JumpPartition parts;
  const auto& lv = g.levels;
  for (std::size_t j = 0; j + 1 < lv.size(); ++j) {
    bool flagged = false;
    for (double c : w.jump_levels()) {
      // The pushed-forward nonsmooth point of w(1-z) lies in (lv[j], lv[j+1]]
      // exactly when the reflected endpoints straddle c this way round; the
      // comparison matches how the interval weights evaluate w(1-z).
      if (1.0 - lv[j + 1] <= c && c < 1.0 - lv[j]) {
        flagged = true;
        break;
      }
    }
    (flagged ? parts.jump : parts.smooth).push_back(j);
  }
  return parts;
}

}  // namespace drm
