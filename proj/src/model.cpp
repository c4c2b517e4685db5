#include "drm/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "drm/math.hpp"

namespace drm {

Box Box::cube(std::size_t dim, double half_width) {
  Box b;
  b.lo.assign(dim, -half_width);
  b.hi.assign(dim, half_width);
  return b;
}

bool Box::contains(std::span<const double> theta) const {
  if (theta.size() != lo.size()) return false;
  for (std::size_t i = 0; i < theta.size(); ++i) {
    if (theta[i] < lo[i] || theta[i] > hi[i]) return false;
  }
  return true;
}

double ObservableModel::cdf(std::span<const double>, double) const {
  throw std::logic_error(name() + ": no analytic CDF");
}
double ObservableModel::pdf(std::span<const double>, double) const {
  throw std::logic_error(name() + ": no analytic PDF");
}
double ObservableModel::quantile(std::span<const double>, double) const {
  throw std::logic_error(name() + ": no analytic quantile");
}
void ObservableModel::cdf_grad(std::span<const double>, double, std::span<double>) const {
  throw std::logic_error(name() + ": no analytic CDF gradient");
}

GaussLocation::GaussLocation(double half_width) : box_(Box::cube(1, half_width)) {}

void GaussLocation::draw(std::span<const double> theta, Rng& rng, ModelSample& out) const {
  out.x = theta[0] + rng.normal();
  out.y = out.x;
  out.score.assign(1, out.x - theta[0]);
}

void GaussLocation::score(std::span<const double> theta, double x, std::span<double> out) const {
  out[0] = x - theta[0];
}

double GaussLocation::cdf(std::span<const double> theta, double y) const {
  return normal_cdf(y - theta[0]);
}

double GaussLocation::pdf(std::span<const double> theta, double y) const {
  return normal_pdf(y - theta[0]);
}

double GaussLocation::quantile(std::span<const double> theta, double z) const {
  if (!(z > 0.0 && z < 1.0)) throw std::domain_error("quantile: z outside (0,1)");
  return theta[0] + normal_quantile(z);
}

void GaussLocation::cdf_grad(std::span<const double> theta, double y, std::span<double> out) const {
  out[0] = -normal_pdf(y - theta[0]);
}

NormalizedMixture normalize_mixture(std::span<const double> raw) {
  if (raw.size() % 3 != 0 || raw.empty()) {
    throw std::invalid_argument("normalize_mixture: parameter length must be 3d");
  }
  const std::size_t d = raw.size() / 3;
  NormalizedMixture nm;
  nm.weight.resize(d);
  nm.mean.resize(d);
  nm.std.resize(d);

  const auto w = raw.subspan(0, d);
  const auto mu = raw.subspan(d, d);
  const auto ls = raw.subspan(2 * d, d);

  double wmax = w[0];
  for (double v : w) wmax = std::max(wmax, v);
  double wsum = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    nm.weight[j] = std::exp(w[j] - wmax);
    wsum += nm.weight[j];
  }
  double mu_mix = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    nm.weight[j] /= wsum;
    mu_mix += nm.weight[j] * mu[j];
  }
  double var = 0.0;
  for (std::size_t j = 0; j < d; ++j) {
    nm.mean[j] = mu[j] - mu_mix;
    nm.std[j] = std::exp(ls[j]);
    var += nm.weight[j] * (nm.std[j] * nm.std[j] + nm.mean[j] * nm.mean[j]);
  }
  const double s = std::sqrt(var);
  for (std::size_t j = 0; j < d; ++j) {
    nm.mean[j] /= s;
    nm.std[j] /= s;
  }
  return nm;
}

GaussMixture::GaussMixture(std::size_t components, double half_width)
    : d_(components), box_(Box::cube(3 * components, half_width)) {
  if (components == 0) throw std::invalid_argument("mixture: d >= 1");
}

std::string GaussMixture::name() const { return "mixture:d=" + std::to_string(d_); }

void GaussMixture::draw(std::span<const double> theta, Rng& rng, ModelSample& out) const {
  const NormalizedMixture nm = normalize_mixture(theta);
  const double u = rng.uniform();
  double acc = 0.0;
  std::size_t j = d_ - 1;
  for (std::size_t c = 0; c < d_; ++c) {
    acc += nm.weight[c];
    if (u <= acc) {
      j = c;
      break;
    }
  }
  out.x = nm.mean[j] + nm.std[j] * rng.normal();
  out.y = out.x;
  out.score.resize(dim());
  score(theta, out.x, out.score);
}

// Analytic chain rule through the normalization map. With responsibilities
// r_j = w'_j N_j / f and per-component factors A_j = (y-m_j)/v_j^2,
// B_j = ((y-m_j)^2/v_j^2 - 1)/v_j, every coordinate of the score reduces to
// O(1) work after accumulating Sum r_j A_j, Sum r_j A_j m_j and Sum r_j B_j v_j.
void GaussMixture::score(std::span<const double> theta, double x, std::span<double> out) const {
  if (out.size() != dim()) throw std::invalid_argument("score: bad output size");
  const auto mu = theta.subspan(d_, d_);
  const NormalizedMixture nm = normalize_mixture(theta);

  // Pre-normalization intermediates: centralized means, raw stds, sigma_mix.
  double mu_mix = 0.0;
  for (std::size_t j = 0; j < d_; ++j) mu_mix += nm.weight[j] * mu[j];
  std::vector<double> mu_c(d_), sig(d_);
  double s2 = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    mu_c[j] = mu[j] - mu_mix;
    sig[j] = std::exp(theta[2 * d_ + j]);
    s2 += nm.weight[j] * (sig[j] * sig[j] + mu_c[j] * mu_c[j]);
  }
  const double s = std::sqrt(s2);

  std::vector<double> r(d_), A(d_), B(d_);
  double f = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    const double t = (x - nm.mean[j]) / nm.std[j];
    r[j] = nm.weight[j] * normal_pdf(t) / nm.std[j];
    f += r[j];
    A[j] = t / nm.std[j];
    B[j] = (t * t - 1.0) / nm.std[j];
  }
  double ra_sum = 0.0, ram_sum = 0.0, rbv_sum = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    r[j] /= f;
    ra_sum += r[j] * A[j];
    ram_sum += r[j] * A[j] * nm.mean[j];
    rbv_sum += r[j] * B[j] * nm.std[j];
  }
  const double tail = ram_sum + rbv_sum;  // multiplies -ds for every coordinate

  for (std::size_t a = 0; a < d_; ++a) {
    const double wa = nm.weight[a];
    // weight coordinate w_a
    const double ds_w = wa * (sig[a] * sig[a] + mu_c[a] * mu_c[a] - s2) / (2.0 * s);
    out[a] = (r[a] - wa) + (-wa * mu_c[a] * ra_sum - ds_w * tail) / s;
    // mean coordinate mu_a
    const double ds_m = wa * mu_c[a] / s;
    out[d_ + a] = (r[a] * A[a] - wa * ra_sum - ds_m * tail) / s;
    // log-std coordinate l_a
    const double ds_l = wa * sig[a] * sig[a] / s;
    out[2 * d_ + a] = (r[a] * B[a] * sig[a] - ds_l * tail) / s;
  }
}

double GaussMixture::log_pdf(std::span<const double> theta, double y) const {
  return std::log(pdf(theta, y));
}

void GaussMixture::score_fd(std::span<const double> theta, double x, std::span<double> out,
                            double h) const {
  std::vector<double> t(theta.begin(), theta.end());
  for (std::size_t a = 0; a < t.size(); ++a) {
    const double keep = t[a];
    t[a] = keep + h;
    const double up = log_pdf(t, x);
    t[a] = keep - h;
    const double dn = log_pdf(t, x);
    t[a] = keep;
    out[a] = (up - dn) / (2.0 * h);
  }
}

double GaussMixture::cdf(std::span<const double> theta, double y) const {
  const NormalizedMixture nm = normalize_mixture(theta);
  double v = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    v += nm.weight[j] * normal_cdf((y - nm.mean[j]) / nm.std[j]);
  }
  return v;
}

double GaussMixture::pdf(std::span<const double> theta, double y) const {
  const NormalizedMixture nm = normalize_mixture(theta);
  double v = 0.0;
  for (std::size_t j = 0; j < d_; ++j) {
    v += nm.weight[j] * normal_pdf((y - nm.mean[j]) / nm.std[j]) / nm.std[j];
  }
  return v;
}

namespace {

// Safeguarded Newton on a monotone CDF; keeps a bracket and bisects whenever
// the Newton step leaves it.
template <typename Cdf, typename Pdf>
double invert_cdf(double z, double lo, double hi, Cdf&& cdf, Pdf&& pdf, double q0) {
  double q = std::clamp(q0, lo, hi);
  for (int it = 0; it < 200; ++it) {
    const double fq = cdf(q);
    const double err = fq - z;
    if (std::fabs(err) <= 1e-13) return q;
    if (err > 0.0) {
      hi = q;
    } else {
      lo = q;
    }
    const double dq = pdf(q);
    double next = dq > 1e-300 ? q - err / dq : q;
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (next == q) next = 0.5 * (lo + hi);
    q = next;
    if (hi - lo < 1e-15 * (1.0 + std::fabs(q))) return q;
  }
  return q;
}

}  // namespace

double GaussMixture::quantile(std::span<const double> theta, double z) const {
  if (!(z > 0.0 && z < 1.0)) throw std::domain_error("quantile: z outside (0,1)");
  double lo = -2.0, hi = 2.0;
  while (cdf(theta, lo) >= z) lo *= 2.0;
  while (cdf(theta, hi) <= z) hi *= 2.0;
  const auto F = [&](double q) { return cdf(theta, q); };
  const auto f = [&](double q) { return pdf(theta, q); };
  return invert_cdf(z, lo, hi, F, f, 0.5 * (lo + hi));
}

std::vector<double> GaussMixture::quantile_sweep(std::span<const double> theta,
                                                 std::span<const double> zs) const {
  std::vector<double> out(zs.size());
  if (zs.empty()) return out;
  const NormalizedMixture nm = normalize_mixture(theta);
  const auto F = [&](double q) {
    double v = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      v += nm.weight[j] * normal_cdf((q - nm.mean[j]) / nm.std[j]);
    }
    return v;
  };
  const auto f = [&](double q) {
    double v = 0.0;
    for (std::size_t j = 0; j < d_; ++j) {
      v += nm.weight[j] * normal_pdf((q - nm.mean[j]) / nm.std[j]) / nm.std[j];
    }
    return v;
  };
  double lo = -2.0;
  while (F(lo) >= zs.front()) lo *= 2.0;
  double hi = 2.0;
  while (F(hi) <= zs.back()) hi *= 2.0;
  double warm = lo;
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (i > 0 && !(zs[i] > zs[i - 1])) {
      throw std::invalid_argument("quantile_sweep: levels must increase");
    }
    warm = invert_cdf(zs[i], warm, hi, F, f, std::max(warm, lo));
    out[i] = warm;
  }
  return out;
}

void GaussMixture::cdf_grad(std::span<const double> theta, double y, std::span<double> out) const {
  const double h = 1e-6;
  std::vector<double> t(theta.begin(), theta.end());
  for (std::size_t a = 0; a < t.size(); ++a) {
    const double keep = t[a];
    t[a] = keep + h;
    const double up = cdf(t, y);
    t[a] = keep - h;
    const double dn = cdf(t, y);
    t[a] = keep;
    out[a] = (up - dn) / (2.0 * h);
  }
}

std::unique_ptr<ObservableModel> parse_model(std::string_view text) {
  if (text == "gauss-location") return std::make_unique<GaussLocation>();
  constexpr std::string_view prefix = "mixture:d=";
  if (text.substr(0, prefix.size()) == prefix) {
    const int d = std::stoi(std::string(text.substr(prefix.size())));
    if (d < 1) throw std::invalid_argument("mixture: d >= 1");
    return std::make_unique<GaussMixture>(static_cast<std::size_t>(d));
  }
  throw std::invalid_argument("model: unknown spec '" + std::string(text) + "'");
}

}  // namespace drm
