#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "drm/distortion.hpp"
#include "drm/estimators.hpp"
#include "drm/model.hpp"

namespace drm {

/// Polynomially decaying sequence value(k) = a / (k0 + k)^exponent.
struct Schedule {
  double a = 1.0;
  double k0 = 1.0;
  double exponent = 1.0;

  double operator()(std::int64_t k) const;
  /// Schedule whose value at k = 0 equals `initial`.
  static Schedule from_initial(double initial, double k0, double exponent);
};

enum class Algorithm { DM, QF, Hybrid, Batching };

Algorithm parse_algorithm(std::string_view text);
std::string algorithm_name(Algorithm a);

struct SAConfig {
  Algorithm algorithm;
  Grid grid;
  DistortionFn distortion;
  Schedule gamma_d;    // quantile-gradient step (DM/Hybrid)
  Schedule gamma_q;    // quantile step
  Schedule gamma_theta;
  Schedule bandwidth;  // kernel bandwidth (DM/Hybrid)
  Box box;
  std::vector<double> theta0;
  int batch_size = 1;
  std::int64_t total_iterations = 0;
  std::int64_t log_every = 500;
  std::uint64_t seed = 1;
  double lq = 0.0;  // sort_clip Lipschitz floor; 0 keeps plain sorting
  int warmup_samples = 256;

  SAConfig(Algorithm alg, Grid g, DistortionFn w)
      : algorithm(alg), grid(std::move(g)), distortion(std::move(w)) {}
};

/// Immutable per-run precomputation: interval weights, the jump/smooth split,
/// and the QF weights w'(1 - z_i) on smooth intervals.
struct StepPlan {
  std::vector<double> dw;             // w(1-z_i) - w(1-z_{i-1}), per interval
  std::vector<std::size_t> jump;      // intervals driven by the DM estimator
  std::vector<std::size_t> smooth;    // intervals driven by the QF estimator
  std::vector<double> qf_weight;      // indexed by interval; 0 on jump rows
  bool post_update_d = false;         // hybrid integrates D_{k+1}, DM uses D_k
};

/// Validates the configuration against the parameter dimension and builds
/// the plan. Throws std::invalid_argument (or non_differentiable_error for QF
/// on a distortion that is not continuously differentiable).
StepPlan make_plan(const SAConfig& cfg, std::size_t dim);

struct SAState {
  std::vector<double> theta;
  std::vector<double> q;                    // tracked at levels z_0..z_N
  std::vector<std::size_t> d_index;         // intervals owning a D row
  std::vector<std::vector<double>> d;       // rows aligned with d_index
  std::int64_t k = 0;
};

SAState init_state(const SAConfig& cfg, const ObservableModel& model, const StepPlan& plan,
                   Rng& rng);

/// Per-coordinate clamp onto the box.
void project(std::span<double> theta, const Box& box);

/// One coupled update; `rho` is the importance ratio (1 for static problems).
/// The batch form averages the estimators over the samples of one iteration.
void sa_step(SAState& state, std::span<const ModelSample> batch, const SAConfig& cfg,
             const StepPlan& plan, double rho = 1.0);
void sa_step(SAState& state, const ModelSample& sample, const SAConfig& cfg,
             const StepPlan& plan, double rho = 1.0);

/// Single-timescale baseline: empirical batch quantiles replace the trackers.
void batching_sa_step(SAState& state, std::span<const ModelSample> batch, const SAConfig& cfg,
                      const StepPlan& plan);

// Spec-level convenience wrappers; each validates and plans on the fly.
SAState dm_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                const ObservableModel& model);
SAState qf_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                const ObservableModel& model);
SAState hybrid_step(SAState state, const ModelSample& sample, const SAConfig& cfg,
                    const ObservableModel& model);
SAState batching_step(SAState state, std::span<const ModelSample> batch, const SAConfig& cfg,
                      const ObservableModel& model);

struct RunRecord {
  std::int64_t k = 0;
  std::vector<double> theta;
  double drm = 0.0;
  double w2 = 0.0;  // NaN when the task has no oracle
  double ms = 0.0;
};

struct RunHistory {
  std::vector<RunRecord> records;
  SAState final_state{};
};

/// Optional per-log metric (e.g. Wasserstein-2 distance to an oracle).
using MetricFn = std::function<double(std::span<const double> theta)>;

/// Runs the configured algorithm; deterministic given (config, seed).
RunHistory run(const SAConfig& cfg, const ObservableModel& model,
               const MetricFn& metric = nullptr);

}  // namespace drm
