#include <doctest.h>

#include <cmath>
#include <vector>

#include "drm/inventory.hpp"

using namespace drm;

TEST_CASE("table defaults") {
  const EchelonParams p = EchelonParams::defaults();
  CHECK(p.echelons() == 3);
  CHECK(p.lead_time == std::vector<int>{2, 3, 5});
  CHECK(p.price == std::vector<double>{2.0, 1.5, 1.0, 0.5});
  CHECK(p.holding == std::vector<double>{0.2, 0.15, 0.1});
  CHECK(p.lost_penalty == std::vector<double>{0.125, 0.1, 0.075});
  CHECK(p.init_inventory == std::vector<double>{10.0, 10.0, 10.0});
  CHECK(p.max_lead() == 5);
}

TEST_CASE("single-echelon hand case: profit 0.8") {
  const InventoryEnv env(EchelonParams::single_echelon());
  InventoryEnv::State st = env.reset();
  // I_{t-1} = 10, no in-transit arrival, demand 4, order 4.
  const double reward = env.step_with_demand(st, std::vector<double>{4.0}, 4.0);
  CHECK(reward == doctest::Approx(0.8).epsilon(1e-12));
  CHECK(st.inventory[0] == 6.0);
  // Newest record: I, U, S1, S2, Q0, Q1.
  CHECK(st.window[0] == 6.0);   // inventory
  CHECK(st.window[1] == 0.0);   // lost sales
  CHECK(st.window[2] == 4.0);   // shipped to customer
  CHECK(st.window[3] == 4.0);   // manufacturer shipment = order
  CHECK(st.window[4] == 4.0);   // demand
  CHECK(st.window[5] == 4.0);   // order
}

TEST_CASE("zero inventory, zero demand, zero orders") {
  EchelonParams p = EchelonParams::single_echelon();
  p.init_inventory = {0.0};
  const InventoryEnv env(p);
  InventoryEnv::State st = env.reset();
  const double reward = env.step_with_demand(st, std::vector<double>{0.0}, 0.0);
  CHECK(reward == 0.0);
  CHECK(st.inventory[0] == 0.0);
}

TEST_CASE("demand at t = 0 lies in {6..13}") {
  const InventoryEnv env(EchelonParams::single_echelon());
  Rng rng(101);
  for (int trial = 0; trial < 200; ++trial) {
    InventoryEnv::State st = env.reset();
    env.step(st, std::vector<double>{0.0}, rng);
    const double demand = st.window[4];
    CHECK(demand >= 6.0);
    CHECK(demand <= 13.0);
  }
}

TEST_CASE("pipeline arrivals respect the lead time") {
  // Order 9 at t=0 with lead 2 arrives for period t=2.
  const InventoryEnv env(EchelonParams::single_echelon());
  InventoryEnv::State st = env.reset();
  env.step_with_demand(st, std::vector<double>{9.0}, 10.0);  // ships 10, I=0
  CHECK(st.inventory[0] == 0.0);
  env.step_with_demand(st, std::vector<double>{0.0}, 5.0);  // nothing on hand
  CHECK(st.window[1] == 5.0);                               // all lost
  env.step_with_demand(st, std::vector<double>{0.0}, 4.0);  // the 9 arrive now
  CHECK(st.window[2] == 4.0);
  CHECK(st.inventory[0] == 5.0);
}

TEST_CASE("conservation and nonnegativity over random rollouts") {
  const InventoryEnv env(EchelonParams::defaults());
  const std::size_t m = env.params().echelons();
  const std::size_t rec = 4 * m + 2;
  Rng rng(103);
  std::vector<double> orders(m);
  for (int ep = 0; ep < 300; ++ep) {
    InventoryEnv::State st = env.reset();
    for (int t = 0; t < 40; ++t) {
      for (auto& o : orders) o = 25.0 * rng.uniform();
      std::vector<double> avail(m);
      for (std::size_t j = 1; j <= m; ++j) {
        const int lead = env.params().lead_time[j - 1];
        avail[j - 1] = st.inventory[j - 1] +
                       st.window[(static_cast<std::size_t>(lead) - 1) * rec + 2 * m + j];
      }
      env.step(st, orders, rng);
      for (std::size_t j = 1; j <= m; ++j) {
        const double inv = st.window[j - 1];
        const double lost = st.window[m + j - 1];
        const double shipped = st.window[2 * m + j - 1];
        const double ordered_downstream = st.window[3 * m + 1 + j - 1];
        CHECK(inv >= 0.0);
        CHECK(lost >= 0.0);
        CHECK(shipped >= 0.0);
        CHECK(shipped <= ordered_downstream + 1e-12);
        CHECK(shipped <= avail[j - 1] + 1e-12);
      }
    }
  }
}

TEST_CASE("per-period profit bound from prices and maximum demand") {
  const EchelonParams p = EchelonParams::defaults();
  const InventoryEnv env(p);
  double price_sum = 0.0;
  for (std::size_t j = 0; j < p.echelons(); ++j) price_sum += p.price[j];
  const double bound = price_sum * 21.0;  // max demand is 7 + 14
  Rng rng(107);
  std::vector<double> orders(env.action_dim());
  for (int ep = 0; ep < 200; ++ep) {
    InventoryEnv::State st = env.reset();
    for (int t = 0; t < 50; ++t) {
      for (auto& o : orders) o = 30.0 * rng.uniform();
      CHECK(env.step(st, orders, rng) <= bound);
    }
  }
}

TEST_CASE("rollout returns and discounting") {
  const InventoryEnv env(EchelonParams::single_echelon());
  const Policy policy(env.feature_dim(), 8, env.action_dim());
  Rng rng(109);
  const auto theta = [&] {
    Rng init(7);
    return policy.init_params(init);
  }();

  const Trajectory one = rollout(env, policy, theta, 1, 0.99, rng);
  CHECK(one.rewards.size() == 1);
  CHECK(one.ret == one.rewards[0]);

  const Trajectory undiscounted = rollout(env, policy, theta, 25, 1.0, rng);
  double sum = 0.0;
  for (double r : undiscounted.rewards) sum += r;
  CHECK(undiscounted.ret == doctest::Approx(sum).epsilon(1e-12));

  const Trajectory discounted = rollout(env, policy, theta, 25, 0.9, rng);
  double acc = 0.0, disc = 1.0;
  for (double r : discounted.rewards) {
    acc += disc * r;
    disc *= 0.9;
  }
  CHECK(discounted.ret == doctest::Approx(acc).epsilon(1e-12));
  CHECK_THROWS_AS(rollout(env, policy, theta, 0, 0.99, rng), std::invalid_argument);
  CHECK_THROWS_AS(rollout(env, policy, theta, 10, 0.0, rng), std::invalid_argument);
}

TEST_CASE("policy gradient matches finite differences") {
  const InventoryEnv env(EchelonParams::single_echelon());
  const Policy policy(env.feature_dim(), 6, env.action_dim());
  Rng rng(113);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> theta(policy.param_dim());
    for (auto& v : theta) v = 0.8 * (rng.uniform() - 0.5);
    theta[policy.param_dim() - 1] = 0.3;  // log-std

    const Trajectory traj = rollout(env, policy, theta, 20, 0.99, rng);
    const TrajEval ev = eval_trajectory(policy, traj, theta);
    CHECK(ev.log_pdf == doctest::Approx(traj.gen_log_pdf).epsilon(1e-12));

    const double h = 1e-6;
    std::vector<double> bumped(theta);
    for (std::size_t a = 0; a < theta.size(); a += 7) {  // sample coordinates
      bumped[a] = theta[a] + h;
      double up = 0.0, dn = 0.0;
      for (std::size_t t = 0; t < traj.features.size(); ++t) {
        up += policy.log_pdf(bumped, traj.features[t], traj.actions[t]);
      }
      bumped[a] = theta[a] - h;
      for (std::size_t t = 0; t < traj.features.size(); ++t) {
        dn += policy.log_pdf(bumped, traj.features[t], traj.actions[t]);
      }
      bumped[a] = theta[a];
      const double fd = (up - dn) / (2.0 * h);
      const double scale = std::max(1.0, std::fabs(fd));
      CHECK(std::fabs(ev.score[a] - fd) / scale < 1e-4);
    }
  }
}

TEST_CASE("importance ratio") {
  const InventoryEnv env(EchelonParams::single_echelon());
  const Policy policy(env.feature_dim(), 6, env.action_dim());
  Rng rng(127);
  std::vector<double> theta(policy.param_dim(), 0.05);
  const Trajectory traj = rollout(env, policy, theta, 15, 0.99, rng);

  CHECK(is_ratio(policy, traj, theta, theta) == 1.0);  // bit-exact in log space

  // Single-step episode with unit variance: the Gaussian ratio in closed form.
  std::vector<double> theta_new(theta);
  theta_new[policy.param_dim() - 2] += 0.4;  // shift a mean-head bias
  std::vector<double> t0(theta), t1(theta_new);
  t0[policy.param_dim() - 1] = 0.0;  // log-std = 0
  t1[policy.param_dim() - 1] = 0.0;
  const Trajectory one = rollout(env, policy, t0, 1, 0.99, rng);
  std::vector<double> mu_gen(1), mu_new(1);
  policy.mean(t0, one.features[0], mu_gen);
  policy.mean(t1, one.features[0], mu_new);
  const double a = one.actions[0][0];
  const double expect =
      std::exp(-0.5 * (a - mu_new[0]) * (a - mu_new[0]) + 0.5 * (a - mu_gen[0]) * (a - mu_gen[0]));
  CHECK(is_ratio(policy, one, t1, t0) == doctest::Approx(expect).epsilon(1e-12));

  // Tolerance window logic.
  const double rho = 1.3, eps = 0.2;
  const bool in_window = rho >= 1.0 - eps && rho <= 1.0 + eps;
  CHECK_FALSE(in_window);
}

TEST_CASE("dppo smoke: fresh sampling every iteration reduces to plain updates") {
  const InventoryEnv env(EchelonParams::single_echelon());
  DppoConfig cfg(DistortionFn::parse("identity"), uniform_grid(20));
  cfg.gamma_d = Schedule::from_initial(1.0, 1000.0, 0.70);
  cfg.gamma_q = Schedule::from_initial(1.0, 1000.0, 0.71);
  cfg.gamma_theta = Schedule::from_initial(1e-4, 1000.0, 0.99);
  cfg.bandwidth = Schedule::from_initial(1.0, 1000.0, 0.14);
  cfg.sample_interval = 1;  // fresh episode each iteration: rho = 1 exactly
  cfg.horizon = 20;
  cfg.hidden = 6;
  cfg.total_iterations = 50;
  cfg.log_every = 10;
  cfg.seed = 5;
  cfg.warmup_episodes = 16;
  const DppoResult res = dppo_run(env, cfg);
  CHECK(res.updates_skipped == 0);
  CHECK(res.episodes_generated == 16 + 50);
  CHECK(res.history.records.size() == 1 + 5);
  CHECK(res.history.final_state.d.empty());  // identity distortion: no jump rows

  // A tiny tolerance forces skip-and-resample behaviour.
  DppoConfig tight = cfg;
  tight.sample_interval = 25;
  tight.epsilon = 1e-12;
  tight.gamma_theta = Schedule::from_initial(1e-3, 1000.0, 0.99);
  tight.seed = 6;
  const DppoResult res2 = dppo_run(env, tight);
  CHECK(res2.updates_skipped > 0);
}
