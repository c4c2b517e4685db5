#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "drm/optimizer.hpp"

namespace drm {

/// Flat key-value configuration. Sections `[name]` prefix keys as `name.key`;
/// serialization is sorted and flat, so a round trip reproduces the map.
class Config {
 public:
  static Config from_string(const std::string& text);
  static Config from_file(const std::string& path);

  std::string serialize() const;
  void save(const std::string& path) const;

  bool has(const std::string& key) const { return kv_.count(key) > 0; }
  void set(const std::string& key, const std::string& value) { kv_[key] = value; }
  void set_num(const std::string& key, double value);

  const std::string& get(const std::string& key) const;   // throws, names key
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double num(const std::string& key) const;
  double num_or(const std::string& key, double fallback) const;
  std::int64_t integer_or(const std::string& key, std::int64_t fallback) const;

  const std::map<std::string, std::string>& entries() const { return kv_; }
  bool operator==(const Config& other) const { return kv_ == other.kv_; }

 private:
  std::map<std::string, std::string> kv_;
};

/// Least-squares slope of log(mse) against log(k) restricted to [k_min, k_max].
/// Requires at least five logged points in range.
double rate_slope(const std::vector<double>& ks, const std::vector<double>& mse, double k_min,
                  double k_max);

struct AggregatePoint {
  std::int64_t k = 0;
  double mean = 0.0;
  double lo = 0.0;  // 2.5% across replications
  double hi = 0.0;  // 97.5% across replications
};

/// Replication band for one column of the run records (drm or w2).
std::vector<AggregatePoint> aggregate_metric(const std::vector<RunHistory>& runs, bool use_w2);

struct Series {
  std::string label;
  std::string color;
  std::vector<double> x;
  std::vector<double> y;
};

void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<Series>& series, bool log_x,
                    bool log_y);

void write_run_csv(const std::string& path, const RunHistory& hist);

void save_checkpoint(const std::string& prefix, std::span<const double> theta,
                     const std::map<std::string, std::string>& metadata);
std::vector<double> load_checkpoint(const std::string& prefix);

/// Bounded worker pool; degrades to sequential execution on one core.
void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn);

struct ExperimentResult {
  std::string out_dir;
  std::vector<RunHistory> runs;
  std::vector<double> per_rep;              // task metric per replication
  std::map<std::string, double> stats;      // named summary statistics
};

/// Executes a configured experiment (task = portfolio | dppo | tracker-bench),
/// writes per-run CSVs, the aggregate CSV, an SVG learning curve and a summary
/// into the output directory, and returns the in-memory results.
ExperimentResult run_experiment(const Config& cfg);

}  // namespace drm
