#include "drm/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "drm/math.hpp"
#include "drm/oracle.hpp"

namespace drm {

double Schedule::operator()(std::int64_t k) const {
  return a / std::pow(k0 + static_cast<double>(k), exponent);
}

Schedule Schedule::from_initial(double initial, double k0, double exponent) {
  if (!(initial > 0.0) || !(k0 >= 1.0)) {
    throw std::invalid_argument("schedule: need initial > 0 and k0 >= 1");
  }
  return Schedule{initial * std::pow(k0, exponent), k0, exponent};
}

Algorithm parse_algorithm(std::string_view text) {
  if (text == "dm") return Algorithm::DM;
  if (text == "qf") return Algorithm::QF;
  if (text == "hybrid") return Algorithm::Hybrid;
  if (text == "batching") return Algorithm::Batching;
  throw std::invalid_argument("algorithm: unknown '" + std::string(text) + "'");
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::DM: return "dm";
    case Algorithm::QF: return "qf";
    case Algorithm::Hybrid: return "hybrid";
    case Algorithm::Batching: return "batching";
  }
  return "?";
}

namespace {

void check_schedule(const Schedule& s, const char* name) {
  if (!(s.a > 0.0)) throw std::invalid_argument(std::string(name) + ": constant must be positive");
  if (!(s.k0 >= 1.0)) throw std::invalid_argument(std::string(name) + ": k0 >= 1");
  if (!(s.exponent > 0.0 && s.exponent <= 1.0)) {
    throw std::invalid_argument(std::string(name) + ": exponent in (0,1]");
  }
}

bool uses_d_tracker(Algorithm a) { return a == Algorithm::DM || a == Algorithm::Hybrid; }

}  // namespace

StepPlan make_plan(const SAConfig& cfg, std::size_t dim) {
  const std::size_t n = cfg.grid.intervals();
  if (n == 0) throw std::invalid_argument("config: grid needs at least one interval");
  if (cfg.theta0.size() != dim) throw std::invalid_argument("config: theta0 dimension mismatch");
  if (cfg.box.dim() != dim) throw std::invalid_argument("config: box dimension mismatch");
  if (!cfg.box.contains(cfg.theta0)) throw std::invalid_argument("config: theta0 outside the box");
  if (cfg.batch_size < 1) throw std::invalid_argument("config: batch_size >= 1");
  if (cfg.total_iterations < 0) throw std::invalid_argument("config: total_iterations >= 0");
  if (cfg.log_every < 1) throw std::invalid_argument("config: log_every >= 1");
  if (cfg.lq < 0.0) throw std::invalid_argument("config: lq >= 0");
  if (cfg.warmup_samples < 2) throw std::invalid_argument("config: warmup_samples >= 2");

  check_schedule(cfg.gamma_theta, "gamma_theta");
  const double gamma = cfg.gamma_theta.exponent;
  if (cfg.algorithm != Algorithm::Batching) {
    check_schedule(cfg.gamma_q, "gamma_q");
    const double beta = cfg.gamma_q.exponent;
    // Timescale separation: gamma_theta = o(gamma_q) requires beta < gamma.
    if (!(0.5 < beta && beta < gamma && gamma < 1.0)) {
      throw std::invalid_argument("config: exponents must satisfy 1/2 < beta < gamma < 1");
    }
    if (uses_d_tracker(cfg.algorithm)) {
      check_schedule(cfg.gamma_d, "gamma_d");
      check_schedule(cfg.bandwidth, "bandwidth");
      const double alpha = cfg.gamma_d.exponent;
      const double eta = cfg.bandwidth.exponent;
      if (!(0.5 < alpha && alpha < beta)) {
        throw std::invalid_argument("config: exponents must satisfy 1/2 < alpha < beta");
      }
      if (!(eta < 2.0 * alpha - 1.0)) {
        throw std::invalid_argument("config: bandwidth exponent must satisfy eta < 2*alpha - 1");
      }
    }
  }

  StepPlan plan;
  plan.dw = weights(cfg.distortion, cfg.grid);
  plan.qf_weight.assign(n, 0.0);
  switch (cfg.algorithm) {
    case Algorithm::DM:
      plan.jump.resize(n);
      for (std::size_t j = 0; j < n; ++j) plan.jump[j] = j;
      plan.post_update_d = false;
      break;
    case Algorithm::QF:
    case Algorithm::Batching: {
      if (!cfg.distortion.continuous()) {
        throw non_differentiable_error(
            "QF-form requires a continuously differentiable distortion; " +
            cfg.distortion.name() + " has jumps");
      }
      plan.smooth.resize(n);
      for (std::size_t j = 0; j < n; ++j) plan.smooth[j] = j;
      break;
    }
    case Algorithm::Hybrid: {
      JumpPartition parts = jump_partition(cfg.distortion, cfg.grid);
      plan.jump = std::move(parts.jump);
      plan.smooth = std::move(parts.smooth);
      plan.post_update_d = true;
      break;
    }
  }
  for (std::size_t j : plan.smooth) {
    // Derivative of the distortion at the reflected level; throws the
    // non-differentiable error when an eval point sits on a jump level.
    plan.qf_weight[j] = cfg.distortion.derivative(1.0 - cfg.grid.levels[j + 1]);
  }
  return plan;
}

void project(std::span<double> theta, const Box& box) {
  if (theta.size() != box.dim()) throw std::invalid_argument("project: dimension mismatch");
  for (std::size_t i = 0; i < theta.size(); ++i) {
    theta[i] = std::clamp(theta[i], box.lo[i], box.hi[i]);
  }
}

SAState init_state(const SAConfig& cfg, const ObservableModel& model, const StepPlan& plan,
                   Rng& rng) {
  SAState st;
  st.theta = cfg.theta0;
  // Warm-started quantiles: empirical quantiles of a small draw at theta0.
  std::vector<double> ys(static_cast<std::size_t>(cfg.warmup_samples));
  ModelSample s;
  for (auto& y : ys) {
    model.draw(st.theta, rng, s);
    y = s.y;
  }
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(ys.size());
  st.q.resize(cfg.grid.levels.size());
  for (std::size_t i = 0; i < st.q.size(); ++i) {
    auto idx = static_cast<std::size_t>(std::ceil(cfg.grid.levels[i] * n));
    idx = std::clamp<std::size_t>(idx, 1, ys.size());
    st.q[i] = ys[idx - 1];
  }
  st.d_index = plan.jump;
  st.d.assign(plan.jump.size(), std::vector<double>(model.dim(), 0.0));
  return st;
}

namespace {

void finish_quantiles(SAState& st, const SAConfig& cfg) {
  if (!std::is_sorted(st.q.begin(), st.q.end())) {
    std::sort(st.q.begin(), st.q.end());
  }
  if (cfg.lq > 0.0) {
    const auto& lv = cfg.grid.levels;
    for (std::size_t i = 1; i < st.q.size(); ++i) {
      const double floor_gap = cfg.lq * (lv[i] - lv[i - 1]);
      if (st.q[i] - st.q[i - 1] < floor_gap) st.q[i] = st.q[i - 1] + floor_gap;
    }
  }
}

void check_finite(const SAState& st) {
  for (double v : st.theta) {
    if (!std::isfinite(v)) {
      throw std::runtime_error("sa_step: non-finite parameter update at iteration " +
                               std::to_string(st.k));
    }
  }
}

}  // namespace

void sa_step(SAState& state, std::span<const ModelSample> batch, const SAConfig& cfg,
             const StepPlan& plan, double rho) {
  if (batch.empty()) throw std::invalid_argument("sa_step: empty batch");
  const std::size_t dim = state.theta.size();
  const auto& lv = cfg.grid.levels;
  const double gq = cfg.gamma_q(state.k);
  const double gt = cfg.gamma_theta(state.k);
  const double inv_b = 1.0 / static_cast<double>(batch.size());

  std::vector<double> gdm(dim, 0.0);
  const auto accumulate_dm = [&] {
    for (std::size_t r = 0; r < state.d_index.size(); ++r) {
      const double wgt = plan.dw[state.d_index[r]];
      if (wgt == 0.0) continue;
      const auto& row = state.d[r];
      for (std::size_t c = 0; c < dim; ++c) gdm[c] -= row[c] * wgt;
    }
  };

  if (!state.d_index.empty()) {
    const double gd = cfg.gamma_d(state.k);
    const double h = cfg.bandwidth(state.k);
    if (!plan.post_update_d) accumulate_dm();
    std::vector<double> g1(dim);
    for (std::size_t r = 0; r < state.d_index.size(); ++r) {
      const double qi = state.q[state.d_index[r] + 1];
      // Batch means of G1 and G3 at this quantile estimate.
      double g3 = 0.0;
      bool any = false;
      std::fill(g1.begin(), g1.end(), 0.0);
      for (const ModelSample& s : batch) {
        g3 += g3_kernel(s.y, qi, h);
        const double f1 = g1_factor(s.y, qi);
        if (f1 == 0.0) continue;
        any = true;
        for (std::size_t c = 0; c < dim; ++c) g1[c] += f1 * s.score[c];
      }
      g3 *= inv_b;
      if (!any && g3 == 0.0) continue;  // exact no-op for this row
      if (batch.size() > 1) {
        for (std::size_t c = 0; c < dim; ++c) g1[c] *= inv_b;
      }
      qgrad_step(state.d[r], g1, g3, gd, rho);
    }
    if (plan.post_update_d) accumulate_dm();
  }

  // QF part: G1(q_i) w'(1-z_i) (q_i - q_{i-1}) collapses to one scalar
  // coefficient per sample on that sample's score vector.
  std::vector<double> gqf(dim, 0.0);
  for (const ModelSample& s : batch) {
    double coef = 0.0;
    for (std::size_t j : plan.smooth) {
      const double qi = state.q[j + 1];
      const double f1 = g1_factor(s.y, qi);
      if (f1 == 0.0) continue;
      coef += f1 * plan.qf_weight[j] * (qi - state.q[j]);
    }
    if (coef == 0.0) continue;
    for (std::size_t c = 0; c < dim; ++c) gqf[c] += coef * s.score[c];
  }
  if (batch.size() > 1) {
    for (std::size_t c = 0; c < dim; ++c) gqf[c] *= inv_b;
  }

  const double cr = gt * rho;
  for (std::size_t i = 0; i < dim; ++i) {
    state.theta[i] += gt * gdm[i] + cr * gqf[i];
  }
  project(state.theta, cfg.box);

  for (std::size_t i = 0; i < state.q.size(); ++i) {
    double ind = 0.0;
    for (const ModelSample& s : batch) ind += s.y <= state.q[i] ? rho : 0.0;
    state.q[i] += gq * (lv[i] - ind * inv_b);
  }
  finish_quantiles(state, cfg);

  state.k += 1;
  check_finite(state);
}

void sa_step(SAState& state, const ModelSample& sample, const SAConfig& cfg,
             const StepPlan& plan, double rho) {
  sa_step(state, std::span<const ModelSample>(&sample, 1), cfg, plan, rho);
}

void batching_sa_step(SAState& state, std::span<const ModelSample> batch, const SAConfig& cfg,
                      const StepPlan& plan) {
  if (batch.empty()) throw std::invalid_argument("batching_sa_step: empty batch");
  const std::size_t dim = state.theta.size();
  const double gt = cfg.gamma_theta(state.k);

  // Empirical z_i-quantiles (order statistic at ceil(z*n)) replace the trackers.
  std::vector<double> ys(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) ys[b] = batch[b].y;
  std::sort(ys.begin(), ys.end());
  const double n = static_cast<double>(ys.size());
  for (std::size_t i = 0; i < state.q.size(); ++i) {
    auto idx = static_cast<std::size_t>(std::ceil(cfg.grid.levels[i] * n));
    idx = std::clamp<std::size_t>(idx, 1, ys.size());
    state.q[i] = ys[idx - 1];
  }

  std::vector<double> g(dim, 0.0);
  for (const ModelSample& s : batch) {
    double coef = 0.0;
    for (std::size_t j : plan.smooth) {
      const double qi = state.q[j + 1];
      const double f1 = g1_factor(s.y, qi);
      if (f1 == 0.0) continue;
      coef += f1 * plan.qf_weight[j] * (qi - state.q[j]);
    }
    for (std::size_t c = 0; c < dim; ++c) g[c] += coef * s.score[c];
  }
  const double scale = gt / n;
  for (std::size_t i = 0; i < dim; ++i) state.theta[i] += scale * g[i];
  project(state.theta, cfg.box);

  state.k += 1;
  check_finite(state);
}

namespace {

SAState wrapped_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                     const ObservableModel& model, Algorithm expect) {
  if (cfg.algorithm != expect) {
    throw std::invalid_argument("step: config selects a different algorithm");
  }
  const StepPlan plan = make_plan(cfg, model.dim());
  if (sample.score.size() != model.dim() || state.theta.size() != model.dim() ||
      state.q.size() != cfg.grid.levels.size()) {
    throw std::invalid_argument("step: state/sample dimensions inconsistent with grid and model");
  }
  sa_step(state, sample, cfg, plan);
  return state;
}

}  // namespace

SAState dm_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                const ObservableModel& model) {
  return wrapped_step(std::move(state), sample, cfg, model, Algorithm::DM);
}

SAState qf_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                const ObservableModel& model) {
  return wrapped_step(std::move(state), sample, cfg, model, Algorithm::QF);
}

SAState hybrid_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                    const ObservableModel& model) {
  return wrapped_step(std::move(state), sample, cfg, model, Algorithm::Hybrid);
}

SAState batching_step(SAState state, std::span<const ModelSample> batch, const SAConfig& cfg,
                      const ObservableModel& model) {
  if (cfg.algorithm != Algorithm::Batching) {
    throw std::invalid_argument("batching_step: config selects a different algorithm");
  }
  const StepPlan plan = make_plan(cfg, model.dim());
  batching_sa_step(state, batch, cfg, plan);
  return state;
}

RunHistory run(const SAConfig& cfg, const ObservableModel& model, const MetricFn& metric) {
  const StepPlan plan = make_plan(cfg, model.dim());
  Rng rng(cfg.seed);
  RunHistory hist;
  SAState st = init_state(cfg, model, plan, rng);

  const auto t0 = std::chrono::steady_clock::now();
  const auto log_record = [&] {
    RunRecord rec;
    rec.k = st.k;
    rec.theta = st.theta;
    rec.drm = drm_value_tracked(st.q, cfg.distortion, cfg.grid);
    rec.w2 = metric ? metric(st.theta) : std::numeric_limits<double>::quiet_NaN();
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    hist.records.push_back(std::move(rec));
  };

  log_record();
  std::vector<ModelSample> batch(static_cast<std::size_t>(cfg.batch_size));
  for (std::int64_t k = 0; k < cfg.total_iterations; ++k) {
    for (auto& s : batch) model.draw(st.theta, rng, s);
    if (cfg.algorithm == Algorithm::Batching) {
      batching_sa_step(st, batch, cfg, plan);
    } else {
      sa_step(st, batch, cfg, plan);
    }
    if (st.k % cfg.log_every == 0 || st.k == cfg.total_iterations) log_record();
  }
  hist.final_state = std::move(st);
  return hist;
}

}  // namespace drm
