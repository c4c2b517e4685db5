#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "drm/optimizer.hpp"
#include "drm/rng.hpp"

namespace drm {

/// Exogenous parameters of the serial supply chain. Index j runs over the
/// intermediate echelons 1..M; price has one extra entry for the manufacturer.
struct EchelonParams {
  std::vector<int> lead_time;
  std::vector<double> price;           // size M+1
  std::vector<double> holding;
  std::vector<double> lost_penalty;
  std::vector<double> init_inventory;

  std::size_t echelons() const { return lead_time.size(); }
  int max_lead() const;

  /// Three intermediate echelons with the published defaults.
  static EchelonParams defaults();
  /// One-echelon instance (first column of the defaults).
  static EchelonParams single_echelon();
};

/// Multi-echelon lost-sales inventory MDP. Demand follows
/// Q_t^0 = x_t + ((t+6) mod 15) with x_t uniform on {0..7}.
class InventoryEnv {
 public:
  explicit InventoryEnv(EchelonParams params);

  struct State {
    // Rolling window, most recent period first: per period the on-hand
    // inventories (M), lost sales (M), shipments (M+1, incl. manufacturer),
    // and orders (M+1, entry 0 is the demand).
    std::vector<double> window;
    std::vector<double> inventory;  // I_{t-1}
    int t = 0;
  };

  State reset() const;
  /// Applies one period with the given order quantities (clamped at zero and
  /// rounded inside the environment). Returns the aggregate profit.
  double step(State& state, std::span<const double> orders, Rng& rng) const;
  /// Same update with the exogenous demand supplied by the caller.
  double step_with_demand(State& state, std::span<const double> orders, double demand) const;

  const EchelonParams& params() const { return params_; }
  std::size_t action_dim() const { return params_.echelons(); }
  std::size_t feature_dim() const;
  /// Policy features: the flattened window scaled by 1/10.
  void features(const State& state, std::span<double> out) const;

 private:
  std::size_t record_len() const { return 4 * params_.echelons() + 2; }
  EchelonParams params_;
};

/// Two-layer tanh network with Gaussian action heads and a learnable
/// per-action log-std. Parameters live in one flat vector.
class Policy {
 public:
  Policy(std::size_t input_dim, std::size_t hidden, std::size_t actions);

  std::size_t param_dim() const { return param_dim_; }
  std::size_t actions() const { return actions_; }
  Box param_box(double weight_half_width = 10.0) const;
  std::vector<double> init_params(Rng& rng) const;

  void mean(std::span<const double> theta, std::span<const double> features,
            std::span<double> out) const;
  void act(std::span<const double> theta, std::span<const double> features, Rng& rng,
           std::span<double> actions_raw) const;
  double log_pdf(std::span<const double> theta, std::span<const double> features,
                 std::span<const double> actions_raw) const;
  /// Adds grad_theta ln pi(a|s;theta) into `grad` and returns the log-density.
  double log_pdf_grad(std::span<const double> theta, std::span<const double> features,
                      std::span<const double> actions_raw, std::span<double> grad) const;

 private:
  std::size_t in_, hidden_, actions_, param_dim_;
};

struct Trajectory {
  std::vector<std::vector<double>> features;  // per step
  std::vector<std::vector<double>> actions;   // raw pre-clamp actions
  std::vector<double> rewards;
  double ret = 0.0;        // discounted return R(tau)
  double gen_log_pdf = 0;  // sum_t ln pi at the generating parameter
  std::vector<double> score;  // sum_t grad ln pi at the generating parameter
};

Trajectory rollout(const InventoryEnv& env, const Policy& policy, std::span<const double> theta,
                   int horizon, double discount, Rng& rng, bool want_score = true);

struct TrajEval {
  double log_pdf = 0.0;
  std::vector<double> score;
};

/// Log-density and summed score of a stored episode under parameter `theta`.
TrajEval eval_trajectory(const Policy& policy, const Trajectory& traj,
                         std::span<const double> theta);

/// Importance ratio prod_t pi(a_t|s_t;theta_new)/pi(a_t|s_t;theta_gen),
/// computed in log space.
double is_ratio(const Policy& policy, const Trajectory& traj, std::span<const double> theta_new,
                std::span<const double> theta_gen);

struct DppoConfig {
  DistortionFn distortion;
  Grid grid;
  Schedule gamma_d;
  Schedule gamma_q;
  Schedule gamma_theta;
  Schedule bandwidth;
  int sample_interval = 250;  // K0
  double epsilon = 0.2;       // IS tolerance
  int horizon = 100;
  double discount = 0.99;
  std::size_t hidden = 32;
  double weight_half_width = 10.0;
  std::int64_t total_iterations = 0;
  std::int64_t log_every = 500;
  std::uint64_t seed = 1;
  int warmup_episodes = 256;
  double lq = 0.0;

  DppoConfig(DistortionFn w, Grid g) : distortion(std::move(w)), grid(std::move(g)) {}
};

struct DppoResult {
  RunHistory history;
  std::vector<double> theta;
  std::int64_t episodes_generated = 0;
  std::int64_t updates_skipped = 0;
};

/// Algorithm: hybrid-form DRM policy optimization over the return
/// distribution, with trajectory reuse gated by the IS ratio.
DppoResult dppo_run(const InventoryEnv& env, const DppoConfig& cfg);

/// Monte Carlo mean return of the policy at `theta`.
double evaluate_mean_return(const InventoryEnv& env, const Policy& policy,
                            std::span<const double> theta, int horizon, double discount,
                            int episodes, Rng& rng);

/// Mean return of orders drawn uniformly from [0, order_max] per echelon.
double random_policy_mean_return(const InventoryEnv& env, double order_max, int horizon,
                                 double discount, int episodes, Rng& rng);

}  // namespace drm
