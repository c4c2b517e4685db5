#include "drm/inventory.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>

#include "drm/oracle.hpp"

namespace drm {

namespace {
// Scale of the log-std head: the effective log-std is this times the raw
// parameter, which keeps exploration noise on a slower timescale than the
// mean heads.
constexpr double kLogStdScale = 0.1;
}  // namespace

int EchelonParams::max_lead() const {
  int m = 0;
  for (int l : lead_time) m = std::max(m, l);
  return m;
}

EchelonParams EchelonParams::defaults() {
  EchelonParams p;
  p.lead_time = {2, 3, 5};
  p.price = {2.0, 1.5, 1.0, 0.5};
  p.holding = {0.2, 0.15, 0.1};
  p.lost_penalty = {0.125, 0.1, 0.075};
  p.init_inventory = {10.0, 10.0, 10.0};
  return p;
}

EchelonParams EchelonParams::single_echelon() {
  EchelonParams p;
  p.lead_time = {2};
  p.price = {2.0, 1.5};
  p.holding = {0.2};
  p.lost_penalty = {0.125};
  p.init_inventory = {10.0};
  return p;
}

InventoryEnv::InventoryEnv(EchelonParams params) : params_(std::move(params)) {
  const std::size_t m = params_.echelons();
  if (m == 0 || params_.price.size() != m + 1 || params_.holding.size() != m ||
      params_.lost_penalty.size() != m || params_.init_inventory.size() != m) {
    throw std::invalid_argument("inventory: inconsistent echelon parameters");
  }
  for (int l : params_.lead_time) {
    if (l < 1) throw std::invalid_argument("inventory: lead times >= 1");
  }
}

std::size_t InventoryEnv::feature_dim() const {
  return static_cast<std::size_t>(params_.max_lead()) * record_len();
}

InventoryEnv::State InventoryEnv::reset() const {
  State st;
  st.window.assign(feature_dim(), 0.0);
  st.inventory = params_.init_inventory;
  st.t = 0;
  return st;
}

double InventoryEnv::step(State& state, std::span<const double> orders, Rng& rng) const {
  const double x = static_cast<double>(rng.uniform_int(8));
  return step_with_demand(state, orders, x + static_cast<double>((state.t + 6) % 15));
}

double InventoryEnv::step_with_demand(State& state, std::span<const double> orders,
                                      double demand) const {
  const std::size_t m = params_.echelons();
  if (orders.size() != m) throw std::invalid_argument("inventory: order vector size mismatch");
  const std::size_t rec = record_len();

  // Orders: entry 0 is the exogenous demand; intermediate echelons' orders are
  // clamped at zero and rounded here, not in the policy density.
  std::vector<double> q(m + 1), s(m + 2), u(m + 1), inv_new(m + 1);
  q[0] = demand;
  for (std::size_t j = 1; j <= m; ++j) q[j] = std::max(0.0, std::round(orders[j - 1]));
  s[m + 1] = q[m];  // manufacturer satisfies all demand immediately

  for (std::size_t j = 1; j <= m; ++j) {
    const int lead = params_.lead_time[j - 1];
    // Shipment from echelon j+1 that left `lead` periods ago; the initial
    // window is all zeros, which encodes empty pipelines.
    const double arrival =
        state.window[(static_cast<std::size_t>(lead) - 1) * rec + 2 * m + j];
    const double avail = state.inventory[j - 1] + arrival;
    s[j] = q[j - 1] - std::max(0.0, q[j - 1] - avail);
    u[j] = std::max(0.0, q[j - 1] - s[j]);
    inv_new[j] = std::max(0.0, avail - s[j]);
  }

  double reward = 0.0;
  for (std::size_t j = 1; j <= m; ++j) {
    reward += params_.price[j - 1] * s[j] - params_.price[j] * s[j + 1] -
              params_.holding[j - 1] * inv_new[j] - params_.lost_penalty[j - 1] * u[j];
  }

  // Shift the window and prepend this period's record.
  std::rotate(state.window.rbegin(), state.window.rbegin() + static_cast<long>(rec),
              state.window.rend());
  for (std::size_t j = 0; j < m; ++j) {
    state.window[j] = inv_new[j + 1];
    state.window[m + j] = u[j + 1];
    state.inventory[j] = inv_new[j + 1];
  }
  for (std::size_t j = 0; j <= m; ++j) {
    state.window[2 * m + j] = s[j + 1];
    state.window[3 * m + 1 + j] = q[j];
  }
  state.t += 1;
  return reward;
}

void InventoryEnv::features(const State& state, std::span<double> out) const {
  if (out.size() != state.window.size()) throw std::invalid_argument("features: size mismatch");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = state.window[i] * 0.1;
}

Policy::Policy(std::size_t input_dim, std::size_t hidden, std::size_t actions)
    : in_(input_dim), hidden_(hidden), actions_(actions) {
  param_dim_ = hidden_ * in_ + hidden_ + actions_ * hidden_ + actions_ + actions_;
}

Box Policy::param_box(double weight_half_width) const {
  // The raw log-std coordinate is scaled by kLogStdScale, so the effective
  // log-std stays within [-1, 1], well inside the [-5, 2] clamp.
  return Box::cube(param_dim_, weight_half_width);
}

std::vector<double> Policy::init_params(Rng& rng) const {
  std::vector<double> th(param_dim_, 0.0);
  const std::size_t w1 = hidden_ * in_;
  for (std::size_t i = 0; i < w1; ++i) th[i] = 0.2 * (rng.uniform() - 0.5);
  const std::size_t w2 = w1 + hidden_;
  for (std::size_t i = 0; i < actions_ * hidden_; ++i) th[w2 + i] = 0.2 * (rng.uniform() - 0.5);
  // Mean heads start at zero; effective log-std at ln 1.5.
  for (std::size_t a = 0; a < actions_; ++a) {
    th[param_dim_ - actions_ + a] = 0.4054651081081644 / kLogStdScale;
  }
  return th;
}

void Policy::mean(std::span<const double> theta, std::span<const double> features,
                  std::span<double> out) const {
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + actions_ * hidden_;
  std::vector<double> hid(hidden_);
  for (std::size_t i = 0; i < hidden_; ++i) {
    double acc = b1[i];
    const double* row = w1 + i * in_;
    for (std::size_t k = 0; k < in_; ++k) acc += row[k] * features[k];
    hid[i] = std::tanh(acc);
  }
  for (std::size_t a = 0; a < actions_; ++a) {
    double acc = b2[a];
    const double* row = w2 + a * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) acc += row[i] * hid[i];
    out[a] = acc;
  }
}

void Policy::act(std::span<const double> theta, std::span<const double> features, Rng& rng,
                 std::span<double> actions_raw) const {
  mean(theta, features, actions_raw);
  const double* ls = theta.data() + param_dim_ - actions_;
  for (std::size_t a = 0; a < actions_; ++a) {
    actions_raw[a] += std::exp(kLogStdScale * ls[a]) * rng.normal();
  }
}

double Policy::log_pdf(std::span<const double> theta, std::span<const double> features,
                       std::span<const double> actions_raw) const {
  std::vector<double> mu(actions_);
  mean(theta, features, mu);
  const double* ls = theta.data() + param_dim_ - actions_;
  double lp = 0.0;
  for (std::size_t a = 0; a < actions_; ++a) {
    const double eff = kLogStdScale * ls[a];
    const double t = (actions_raw[a] - mu[a]) / std::exp(eff);
    lp += -0.5 * t * t - eff - 0.9189385332046727;  // ln sqrt(2 pi)
  }
  return lp;
}

double Policy::log_pdf_grad(std::span<const double> theta, std::span<const double> features,
                            std::span<const double> actions_raw, std::span<double> grad) const {
  if (grad.size() != param_dim_) throw std::invalid_argument("log_pdf_grad: bad gradient size");
  const double* w1 = theta.data();
  const double* b1 = w1 + hidden_ * in_;
  const double* w2 = b1 + hidden_;
  const double* b2 = w2 + actions_ * hidden_;
  const double* ls = b2 + actions_;
  double* g_w1 = grad.data();
  double* g_b1 = g_w1 + hidden_ * in_;
  double* g_w2 = g_b1 + hidden_;
  double* g_b2 = g_w2 + actions_ * hidden_;
  double* g_ls = g_b2 + actions_;

  std::vector<double> hid(hidden_);
  for (std::size_t i = 0; i < hidden_; ++i) {
    double acc = b1[i];
    const double* row = w1 + i * in_;
    for (std::size_t k = 0; k < in_; ++k) acc += row[k] * features[k];
    hid[i] = std::tanh(acc);
  }

  double lp = 0.0;
  std::vector<double> dhid(hidden_, 0.0);
  for (std::size_t a = 0; a < actions_; ++a) {
    const double* row = w2 + a * hidden_;
    double mu = b2[a];
    for (std::size_t i = 0; i < hidden_; ++i) mu += row[i] * hid[i];
    const double eff = kLogStdScale * ls[a];
    const double sd = std::exp(eff);
    const double t = (actions_raw[a] - mu) / sd;
    lp += -0.5 * t * t - eff - 0.9189385332046727;
    const double dmu = t / sd;
    g_b2[a] += dmu;
    g_ls[a] += kLogStdScale * (t * t - 1.0);
    double* g_row = g_w2 + a * hidden_;
    for (std::size_t i = 0; i < hidden_; ++i) {
      g_row[i] += dmu * hid[i];
      dhid[i] += dmu * row[i];
    }
  }
  for (std::size_t i = 0; i < hidden_; ++i) {
    const double dpre = dhid[i] * (1.0 - hid[i] * hid[i]);
    g_b1[i] += dpre;
    double* g_row = g_w1 + i * in_;
    for (std::size_t k = 0; k < in_; ++k) g_row[k] += dpre * features[k];
  }
  return lp;
}

Trajectory rollout(const InventoryEnv& env, const Policy& policy, std::span<const double> theta,
                   int horizon, double discount, Rng& rng, bool want_score) {
  if (horizon < 1) throw std::invalid_argument("rollout: horizon >= 1");
  if (!(discount > 0.0 && discount <= 1.0)) throw std::invalid_argument("rollout: discount in (0,1]");
  Trajectory traj;
  traj.features.reserve(static_cast<std::size_t>(horizon));
  traj.actions.reserve(static_cast<std::size_t>(horizon));
  traj.rewards.reserve(static_cast<std::size_t>(horizon));
  if (want_score) traj.score.assign(policy.param_dim(), 0.0);

  InventoryEnv::State st = env.reset();
  std::vector<double> feats(env.feature_dim());
  std::vector<double> acts(env.action_dim());
  double disc = 1.0;
  for (int t = 0; t < horizon; ++t) {
    env.features(st, feats);
    policy.act(theta, feats, rng, acts);
    if (want_score) {
      traj.gen_log_pdf += policy.log_pdf_grad(theta, feats, acts, traj.score);
    }
    const double r = env.step(st, acts, rng);
    traj.features.push_back(feats);
    traj.actions.push_back(acts);
    traj.rewards.push_back(r);
    traj.ret += disc * r;
    disc *= discount;
  }
  return traj;
}

TrajEval eval_trajectory(const Policy& policy, const Trajectory& traj,
                         std::span<const double> theta) {
  TrajEval ev;
  ev.score.assign(policy.param_dim(), 0.0);
  for (std::size_t t = 0; t < traj.features.size(); ++t) {
    ev.log_pdf += policy.log_pdf_grad(theta, traj.features[t], traj.actions[t], ev.score);
  }
  return ev;
}

double is_ratio(const Policy& policy, const Trajectory& traj, std::span<const double> theta_new,
                std::span<const double> theta_gen) {
  double lp_new = 0.0, lp_gen = 0.0;
  for (std::size_t t = 0; t < traj.features.size(); ++t) {
    lp_new += policy.log_pdf(theta_new, traj.features[t], traj.actions[t]);
    lp_gen += policy.log_pdf(theta_gen, traj.features[t], traj.actions[t]);
  }
  return std::exp(lp_new - lp_gen);
}

DppoResult dppo_run(const InventoryEnv& env, const DppoConfig& cfg) {
  Policy policy(env.feature_dim(), cfg.hidden, env.action_dim());
  Rng rng(cfg.seed);

  SAConfig sacfg(Algorithm::Hybrid, cfg.grid, cfg.distortion);
  sacfg.gamma_d = cfg.gamma_d;
  sacfg.gamma_q = cfg.gamma_q;
  sacfg.gamma_theta = cfg.gamma_theta;
  sacfg.bandwidth = cfg.bandwidth;
  sacfg.box = policy.param_box(cfg.weight_half_width);
  sacfg.theta0 = policy.init_params(rng);
  sacfg.total_iterations = cfg.total_iterations;
  sacfg.log_every = cfg.log_every;
  sacfg.seed = cfg.seed;
  sacfg.lq = cfg.lq;
  const StepPlan plan = make_plan(sacfg, policy.param_dim());

  SAState st;
  st.theta = sacfg.theta0;
  st.d_index = plan.jump;
  st.d.assign(plan.jump.size(), std::vector<double>(policy.param_dim(), 0.0));

  DppoResult result;

  // Warm-started return quantiles from episodes at theta_0.
  {
    std::vector<double> rets(static_cast<std::size_t>(cfg.warmup_episodes));
    for (auto& r : rets) {
      r = rollout(env, policy, st.theta, cfg.horizon, cfg.discount, rng, false).ret;
    }
    result.episodes_generated += cfg.warmup_episodes;
    std::sort(rets.begin(), rets.end());
    const double n = static_cast<double>(rets.size());
    st.q.resize(cfg.grid.levels.size());
    for (std::size_t i = 0; i < st.q.size(); ++i) {
      auto idx = static_cast<std::size_t>(std::ceil(cfg.grid.levels[i] * n));
      idx = std::clamp<std::size_t>(idx, 1, rets.size());
      st.q[i] = rets[idx - 1];
    }
  }

  const auto t0 = std::chrono::steady_clock::now();
  const auto log_record = [&] {
    RunRecord rec;
    rec.k = st.k;
    rec.theta = st.theta;
    rec.drm = drm_value_tracked(st.q, cfg.distortion, cfg.grid);
    rec.w2 = std::numeric_limits<double>::quiet_NaN();
    rec.ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    result.history.records.push_back(std::move(rec));
  };
  log_record();

  Trajectory traj;
  bool resample = true;
  bool fresh = false;
  ModelSample sample;
  for (std::int64_t k = 0; k < cfg.total_iterations; ++k) {
    if (k % cfg.sample_interval == 0 || resample) {
      traj = rollout(env, policy, st.theta, cfg.horizon, cfg.discount, rng, true);
      result.episodes_generated += 1;
      resample = false;
      fresh = true;
    }
    double rho;
    if (fresh) {
      // The episode was generated at the current parameter, so the ratio is
      // one and the rollout's own score is the evaluation.
      rho = 1.0;
      sample.score = traj.score;
      fresh = false;
    } else {
      TrajEval ev = eval_trajectory(policy, traj, st.theta);
      rho = std::exp(ev.log_pdf - traj.gen_log_pdf);
      sample.score = std::move(ev.score);
    }
    if (rho >= 1.0 - cfg.epsilon && rho <= 1.0 + cfg.epsilon) {
      sample.x = traj.ret;
      sample.y = traj.ret;
      sa_step(st, sample, sacfg, plan, rho);
    } else {
      resample = true;
      result.updates_skipped += 1;
      st.k += 1;  // schedules stay aligned with the iteration count
    }
    if (st.k % cfg.log_every == 0 || st.k == cfg.total_iterations) log_record();
  }

  result.theta = st.theta;
  result.history.final_state = std::move(st);
  return result;
}

double evaluate_mean_return(const InventoryEnv& env, const Policy& policy,
                            std::span<const double> theta, int horizon, double discount,
                            int episodes, Rng& rng) {
  double acc = 0.0;
  for (int e = 0; e < episodes; ++e) {
    acc += rollout(env, policy, theta, horizon, discount, rng, false).ret;
  }
  return acc / episodes;
}

double random_policy_mean_return(const InventoryEnv& env, double order_max, int horizon,
                                 double discount, int episodes, Rng& rng) {
  double acc = 0.0;
  std::vector<double> orders(env.action_dim());
  for (int e = 0; e < episodes; ++e) {
    InventoryEnv::State st = env.reset();
    double ret = 0.0, disc = 1.0;
    for (int t = 0; t < horizon; ++t) {
      for (auto& o : orders) o = order_max * rng.uniform();
      ret += disc * env.step(st, orders, rng);
      disc *= discount;
    }
    acc += ret;
  }
  return acc / episodes;
}

}  // namespace drm
