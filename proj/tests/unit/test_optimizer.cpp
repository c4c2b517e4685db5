#include <doctest.h>

#include <cmath>
#include <vector>

#include "drm/math.hpp"
#include "drm/optimizer.hpp"
#include "drm/harness.hpp"

using namespace drm;

namespace {

SAConfig base_config(Algorithm algo, Grid grid, DistortionFn w, const ObservableModel& model) {
  SAConfig cfg(algo, std::move(grid), std::move(w));
  cfg.gamma_d = Schedule::from_initial(0.25, 500.0, 0.70);
  cfg.gamma_q = Schedule::from_initial(0.25, 500.0, 0.71);
  cfg.gamma_theta = Schedule::from_initial(0.0625, 500.0, 0.99);
  cfg.bandwidth = Schedule::from_initial(0.01, 500.0, 0.14);
  cfg.box = model.box();
  cfg.theta0.assign(model.dim(), 0.0);
  return cfg;
}

// Y = theta + e^theta Z. Under Wang(0.85) the objective theta - 0.85 e^theta
// is strongly concave with the interior optimum theta* = -ln 0.85, and the
// score stays non-degenerate there. Drives the rate sanity check.
class GaussMeanScale final : public ObservableModel {
 public:
  GaussMeanScale() : box_(Box::cube(1, 2.5)) {}
  std::size_t dim() const override { return 1; }
  const Box& box() const override { return box_; }
  std::string name() const override { return "gauss-mean-scale"; }
  void draw(std::span<const double> theta, Rng& rng, ModelSample& out) const override {
    out.x = theta[0] + std::exp(theta[0]) * rng.normal();
    out.y = out.x;
    out.score.resize(1);
    score(theta, out.x, out.score);
  }
  void score(std::span<const double> theta, double x, std::span<double> out) const override {
    const double s = std::exp(theta[0]);
    const double t = (x - theta[0]) / s;
    out[0] = t / s + (t * t - 1.0);  // d/dtheta of both the mean and log-scale
  }

 private:
  Box box_;
};

}  // namespace

TEST_CASE("schedule form and validation") {
  const Schedule s = Schedule::from_initial(0.25, 500.0, 0.71);
  CHECK(s(0) == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(s(100) < s(99));
  CHECK(s(1000) == doctest::Approx(0.25 * std::pow(500.0 / 1500.0, 0.71)).epsilon(1e-12));
  CHECK_THROWS_AS(Schedule::from_initial(0.0, 500.0, 0.7), std::invalid_argument);
}

TEST_CASE("projection clamps coordinates") {
  const Box box = Box::cube(2, 2.5);
  std::vector<double> inside{1.0, -2.0};
  project(inside, box);
  CHECK(inside[0] == 1.0);
  CHECK(inside[1] == -2.0);
  std::vector<double> outside{3.0, -3.0};
  project(outside, box);
  CHECK(outside[0] == 2.5);
  CHECK(outside[1] == -2.5);
  std::vector<double> boundary{2.5, -2.5};
  project(boundary, box);
  CHECK(boundary[0] == 2.5);
  CHECK(boundary[1] == -2.5);
}

TEST_CASE("config validation enforces the exponent ordering") {
  const GaussLocation model;
  SAConfig cfg = base_config(Algorithm::DM, uniform_grid(3), DistortionFn::cvar(0.7), model);
  CHECK_NOTHROW(make_plan(cfg, model.dim()));

  SAConfig bad_beta = cfg;
  bad_beta.gamma_q.exponent = 0.99;  // beta !< gamma
  CHECK_THROWS_AS(make_plan(bad_beta, model.dim()), std::invalid_argument);

  SAConfig bad_alpha = cfg;
  bad_alpha.gamma_d.exponent = 0.72;  // alpha !< beta
  CHECK_THROWS_AS(make_plan(bad_alpha, model.dim()), std::invalid_argument);

  SAConfig bad_eta = cfg;
  bad_eta.bandwidth.exponent = 0.5;  // eta !< 2 alpha - 1
  CHECK_THROWS_AS(make_plan(bad_eta, model.dim()), std::invalid_argument);

  SAConfig outside = cfg;
  outside.theta0 = {3.0};
  CHECK_THROWS_AS(make_plan(outside, model.dim()), std::invalid_argument);

  SAConfig batched = cfg;
  batched.batch_size = 0;
  CHECK_THROWS_AS(make_plan(batched, model.dim()), std::invalid_argument);

  // QF rejects distortions with actual jumps, but accepts kinks off-grid.
  SAConfig qf_disc(Algorithm::QF, uniform_grid(98), DistortionFn::discontinuous_composite(5.0));
  qf_disc.gamma_q = cfg.gamma_q;
  qf_disc.gamma_theta = cfg.gamma_theta;
  qf_disc.box = model.box();
  qf_disc.theta0 = {0.0};
  CHECK_THROWS_AS(make_plan(qf_disc, model.dim()), non_differentiable_error);

  SAConfig qf_cvar(Algorithm::QF, uniform_grid(99), DistortionFn::cvar(0.7));
  qf_cvar.gamma_q = cfg.gamma_q;
  qf_cvar.gamma_theta = cfg.gamma_theta;
  qf_cvar.box = model.box();
  qf_cvar.theta0 = {0.0};
  CHECK_NOTHROW(make_plan(qf_cvar, model.dim()));
}

TEST_CASE("dm_step: stationarity and flat weights") {
  const GaussLocation model;
  // Grid inside the flat region of the reflected CVaR: all weights vanish.
  SAConfig cfg = base_config(Algorithm::DM, Grid(std::vector<double>{0.52, 0.6, 0.68}),
                             DistortionFn::cvar(0.7), model);
  cfg.theta0 = {0.5};
  const StepPlan plan = make_plan(cfg, model.dim());
  for (double v : plan.dw) CHECK(v == 0.0);

  Rng rng(71);
  SAState st = init_state(cfg, model, plan, rng);
  ModelSample s = model.sample(cfg.theta0, rng);
  const double theta_before = st.theta[0];
  sa_step(st, s, cfg, plan);
  CHECK(st.theta[0] == theta_before);  // zero weights: no drift, interior point
  CHECK(st.k == 1);

  // One-interval grid: update direction is -D * dw exactly.
  SAConfig one = base_config(Algorithm::DM, Grid(std::vector<double>{0.25, 0.75}),
                             DistortionFn::cvar(0.7), model);
  const StepPlan plan1 = make_plan(one, model.dim());
  SAState st1 = init_state(one, model, plan1, rng);
  st1.d[0][0] = 2.0;
  st1.q = {-100.0, -99.0};  // sample lands above: indicator and kernel vanish
  ModelSample s1 = model.sample(one.theta0, rng);
  const double expect = st1.theta[0] + one.gamma_theta(0) * (-2.0) * plan1.dw[0];
  sa_step(st1, s1, one, plan1);
  CHECK(st1.theta[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("qf_step: zero-contribution cases") {
  const GaussLocation model;
  SAConfig cfg = base_config(Algorithm::QF, uniform_grid(5), DistortionFn::cvar(0.7), model);
  const StepPlan plan = make_plan(cfg, model.dim());
  Rng rng(73);
  SAState st = init_state(cfg, model, plan, rng);

  ModelSample s;
  s.x = s.y = 1e9;  // above every quantile estimate
  s.score = {1.0};
  const double theta_before = st.theta[0];
  sa_step(st, s, cfg, plan);
  CHECK(st.theta[0] == theta_before);

  // Equal consecutive quantile estimates contribute nothing.
  SAState st2 = init_state(cfg, model, plan, rng);
  st2.q.assign(st2.q.size(), 0.4);
  ModelSample s2;
  s2.x = s2.y = -1.0;
  s2.score = {1.0};
  const double before2 = st2.theta[0];
  sa_step(st2, s2, cfg, plan);
  CHECK(st2.theta[0] == before2);
}

TEST_CASE("mean maximization drives theta to the box edge") {
  const GaussLocation model;
  for (Algorithm algo : {Algorithm::DM, Algorithm::QF}) {
    SAConfig cfg = base_config(algo, uniform_grid(20), DistortionFn::parse("identity"), model);
    cfg.theta0 = {2.0};
    cfg.total_iterations = 100000;
    cfg.log_every = 100000;
    cfg.seed = 9;
    const RunHistory hist = run(cfg, model);
    CHECK(std::fabs(hist.final_state.theta[0] - 2.5) < 0.05);
  }
}

TEST_CASE("hybrid equals qf bitwise on smooth distortions") {
  const auto model = parse_model("mixture:d=2");
  SAConfig qf = base_config(Algorithm::QF, sqrt_grid(60), DistortionFn::wang(-0.85), *model);
  qf.gamma_q = Schedule::from_initial(1.0, 1000.0, 0.71);
  qf.gamma_theta = Schedule::from_initial(0.01, 1000.0, 0.99);
  qf.theta0.assign(model->dim(), 0.1);
  qf.total_iterations = 10000;
  qf.log_every = 1000;
  qf.seed = 77;
  SAConfig hy = qf;
  hy.algorithm = Algorithm::Hybrid;

  const RunHistory h1 = run(qf, *model);
  const RunHistory h2 = run(hy, *model);
  REQUIRE(h1.records.size() == h2.records.size());
  for (std::size_t i = 0; i < h1.records.size(); ++i) {
    for (std::size_t c = 0; c < h1.records[i].theta.size(); ++c) {
      CHECK(h1.records[i].theta[c] == h2.records[i].theta[c]);  // bitwise
    }
  }
  CHECK(h1.final_state.q == h2.final_state.q);
}

TEST_CASE("hybrid allocates D rows only on jump intervals") {
  const auto model = parse_model("mixture:d=2");
  SAConfig hy = base_config(Algorithm::Hybrid, uniform_grid(98),
                            DistortionFn::discontinuous_composite(5.0), *model);
  hy.theta0.assign(model->dim(), 0.0);
  const StepPlan plan = make_plan(hy, model->dim());
  CHECK(plan.jump.size() == 3);
  Rng rng(79);
  SAState st = init_state(hy, *model, plan, rng);
  CHECK(st.d.size() == 3);
  CHECK(st.d_index == plan.jump);
}

TEST_CASE("hybrid with no smooth intervals matches dm up to the D convention") {
  const GaussLocation model;
  const Grid g(std::vector<double>{0.25, 0.75});  // single interval holding the VaR jump
  SAConfig dm = base_config(Algorithm::DM, g, DistortionFn::var(0.7), model);
  SAConfig hy = dm;
  hy.algorithm = Algorithm::Hybrid;
  const StepPlan plan_dm = make_plan(dm, model.dim());
  const StepPlan plan_hy = make_plan(hy, model.dim());
  CHECK(plan_hy.jump.size() == 1);
  CHECK(plan_hy.smooth.empty());

  Rng r1(83), r2(83);
  SAState s_dm = init_state(dm, model, plan_dm, r1);
  SAState s_hy = init_state(hy, model, plan_hy, r2);
  ModelSample sample = model.sample(dm.theta0, r1);
  sa_step(s_dm, sample, dm, plan_dm);
  sa_step(s_hy, sample, hy, plan_hy);
  CHECK(s_dm.q == s_hy.q);
  CHECK(s_dm.d[0] == s_hy.d[0]);
  // DM integrates the pre-update row (zero); hybrid uses the post-update one.
  CHECK(s_dm.theta[0] == dm.theta0[0]);
  const double expect = dm.theta0[0] + dm.gamma_theta(0) * (-s_hy.d[0][0]) * plan_hy.dw[0];
  CHECK(s_hy.theta[0] == doctest::Approx(expect).epsilon(1e-15));
}

TEST_CASE("batching baseline") {
  const GaussLocation model;
  SAConfig cfg = base_config(Algorithm::Batching, uniform_grid(3), DistortionFn::cvar(0.7), model);
  cfg.batch_size = 4;
  const StepPlan plan = make_plan(cfg, model.dim());
  Rng rng(89);
  SAState st = init_state(cfg, model, plan, rng);

  // Identical batch values freeze the update.
  std::vector<ModelSample> batch(4);
  for (auto& s : batch) {
    s.y = 1.5;
    s.score = {0.3};
  }
  const double before = st.theta[0];
  batching_sa_step(st, batch, cfg, plan);
  CHECK(st.theta[0] == before);
  for (double q : st.q) CHECK(q == 1.5);

  // Order-statistic convention: ceil(z * n), 1-based.
  SAConfig half = base_config(Algorithm::Batching, Grid(std::vector<double>{0.4, 0.5}),
                              DistortionFn::cvar(0.7), model);
  half.batch_size = 4;
  const StepPlan plan2 = make_plan(half, model.dim());
  SAState st2 = init_state(half, model, plan2, rng);
  std::vector<ModelSample> batch2(4);
  for (int i = 0; i < 4; ++i) {
    batch2[i].y = double(i + 1);
    batch2[i].score = {0.0};
  }
  batching_sa_step(st2, batch2, half, plan2);
  CHECK(st2.q[1] == 2.0);  // z = 0.5 on {1,2,3,4}
}

TEST_CASE("run: logging, determinism, and feasibility") {
  const auto model = parse_model("mixture:d=2");
  SAConfig cfg = base_config(Algorithm::DM, uniform_grid(10), DistortionFn::cvar(0.7), *model);
  cfg.theta0.assign(model->dim(), 0.25);
  cfg.total_iterations = 0;
  const RunHistory empty = run(cfg, *model);
  CHECK(empty.records.size() == 1);
  CHECK(empty.records[0].k == 0);

  cfg.total_iterations = 700;
  cfg.log_every = 200;
  cfg.seed = 4242;
  const RunHistory a = run(cfg, *model);
  const RunHistory b = run(cfg, *model);
  REQUIRE(a.records.size() == b.records.size());
  for (std::size_t i = 0; i < a.records.size(); ++i) {
    CHECK(a.records[i].k == b.records[i].k);
    CHECK(a.records[i].theta == b.records[i].theta);
    CHECK(a.records[i].drm == b.records[i].drm);
  }
  // Iterates stay inside the box, iteration indices increase.
  std::int64_t prev_k = -1;
  for (const auto& rec : a.records) {
    CHECK(rec.k > prev_k);
    prev_k = rec.k;
    CHECK(cfg.box.contains(rec.theta));
  }
}

TEST_CASE("qf rate sanity on a locally quadratic objective") {
  const GaussMeanScale model;
  const double theta_star = -std::log(0.85);
  const std::vector<std::int64_t> ks{1000, 1778, 3162, 5623, 10000, 17783, 31623, 56234, 100000};
  std::vector<double> mse(ks.size(), 0.0);
  const int reps = 20;
  for (int rep = 0; rep < reps; ++rep) {
    SAConfig cfg = base_config(Algorithm::QF, uniform_grid(20), DistortionFn::wang(0.85), model);
    cfg.gamma_theta = Schedule::from_initial(0.5, 500.0, 0.99);
    cfg.theta0 = {-1.0};
    cfg.seed = 1000 + rep;
    const StepPlan plan = make_plan(cfg, model.dim());
    Rng rng(cfg.seed);
    SAState st = init_state(cfg, model, plan, rng);
    ModelSample s;
    std::size_t next = 0;
    for (std::int64_t k = 0; k < 100000; ++k) {
      model.draw(st.theta, rng, s);
      sa_step(st, s, cfg, plan);
      if (next < ks.size() && k + 1 == ks[next]) {
        const double err = st.theta[0] - theta_star;
        mse[next] += err * err;
        ++next;
      }
    }
  }
  std::vector<double> kd(ks.begin(), ks.end());
  for (auto& m : mse) m /= reps;
  const double slope = rate_slope(kd, mse, 1e3, 1e5);
  CHECK(slope > -0.9);
  CHECK(slope < -0.4);
}
