#include "drm/harness.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include <json.hpp>

#include "drm/inventory.hpp"
#include "drm/math.hpp"
#include "drm/oracle.hpp"

namespace fs = std::filesystem;

namespace drm {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

Config Config::from_string(const std::string& text) {
  Config cfg;
  std::istringstream in(text);
  std::string line, section;
  while (std::getline(in, line)) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[' && line.back() == ']') {
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: malformed line '" + line + "'");
    }
    std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw std::invalid_argument("config: empty key in '" + line + "'");
    if (!section.empty()) key = section + "." + key;
    cfg.kv_[key] = value;
  }
  return cfg;
}

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_string(buf.str());
}

std::string Config::serialize() const {
  std::ostringstream out;
  for (const auto& [k, v] : kv_) out << k << " = " << v << "\n";
  return out.str();
}

void Config::save(const std::string& path) const {
  std::ofstream out(path);
  out << serialize();
}

void Config::set_num(const std::string& key, double value) { kv_[key] = fmt_double(value); }

const std::string& Config::get(const std::string& key) const {
  const auto it = kv_.find(key);
  if (it == kv_.end()) throw std::invalid_argument("config: missing key '" + key + "'");
  return it->second;
}

std::string Config::get_or(const std::string& key, const std::string& fallback) const {
  const auto it = kv_.find(key);
  return it == kv_.end() ? fallback : it->second;
}

double Config::num(const std::string& key) const {
  const std::string& raw = get(key);
  try {
    std::size_t used = 0;
    const double v = std::stod(raw, &used);
    if (used != raw.size()) throw std::invalid_argument(raw);
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: key '" + key + "' is not a number: '" + raw + "'");
  }
}

double Config::num_or(const std::string& key, double fallback) const {
  return has(key) ? num(key) : fallback;
}

std::int64_t Config::integer_or(const std::string& key, std::int64_t fallback) const {
  if (!has(key)) return fallback;
  const double v = num(key);
  const auto i = static_cast<std::int64_t>(std::llround(v));
  if (static_cast<double>(i) != v) {
    throw std::invalid_argument("config: key '" + key + "' must be an integer");
  }
  return i;
}

double rate_slope(const std::vector<double>& ks, const std::vector<double>& mse, double k_min,
                  double k_max) {
  if (ks.size() != mse.size()) throw std::invalid_argument("rate_slope: size mismatch");
  std::vector<double> lx, ly;
  for (std::size_t i = 0; i < ks.size(); ++i) {
    if (ks[i] < k_min || ks[i] > k_max) continue;
    if (!(ks[i] > 0.0) || !(mse[i] > 0.0)) continue;
    lx.push_back(std::log(ks[i]));
    ly.push_back(std::log(mse[i]));
  }
  if (lx.size() < 5) {
    throw std::invalid_argument("rate_slope: fewer than five logged points in range");
  }
  return ols_slope(lx, ly);
}

namespace {

double band_quantile(std::vector<double> v, double p) { return empirical_quantile(std::move(v), p); }

}  // namespace

std::vector<AggregatePoint> aggregate_metric(const std::vector<RunHistory>& runs, bool use_w2) {
  if (runs.empty()) throw std::invalid_argument("aggregate_metric: no runs");
  const std::size_t rows = runs.front().records.size();
  for (const auto& r : runs) {
    if (r.records.size() != rows) throw std::invalid_argument("aggregate_metric: ragged records");
  }
  std::vector<AggregatePoint> out(rows);
  std::vector<double> col(runs.size());
  for (std::size_t i = 0; i < rows; ++i) {
    for (std::size_t r = 0; r < runs.size(); ++r) {
      const auto& rec = runs[r].records[i];
      col[r] = use_w2 ? rec.w2 : rec.drm;
    }
    AggregatePoint p;
    p.k = runs.front().records[i].k;
    double acc = 0.0;
    for (double v : col) acc += v;
    p.mean = acc / static_cast<double>(col.size());
    p.lo = band_quantile(col, 0.025);
    p.hi = band_quantile(col, 0.975);
    out[i] = p;
  }
  return out;
}

void write_run_csv(const std::string& path, const RunHistory& hist) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  const std::size_t dim = hist.records.empty() ? 0 : hist.records.front().theta.size();
  out << "k";
  for (std::size_t i = 0; i < dim; ++i) out << ",theta_" << i;
  out << ",drm,w2,ms\n";
  for (const auto& rec : hist.records) {
    out << rec.k;
    for (double t : rec.theta) out << ',' << fmt_double(t);
    out << ',' << fmt_double(rec.drm) << ',' << fmt_double(rec.w2) << ',' << fmt_double(rec.ms)
        << '\n';
  }
}

void save_checkpoint(const std::string& prefix, std::span<const double> theta,
                     const std::map<std::string, std::string>& metadata) {
  std::ofstream bin(prefix + ".theta", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot write '" + prefix + ".theta'");
  bin.write(reinterpret_cast<const char*>(theta.data()),
            static_cast<std::streamsize>(theta.size() * sizeof(double)));
  nlohmann::json meta;
  meta["dim"] = theta.size();
  for (const auto& [k, v] : metadata) meta[k] = v;
  std::ofstream side(prefix + ".json");
  side << meta.dump(2) << "\n";
}

std::vector<double> load_checkpoint(const std::string& prefix) {
  std::ifstream side(prefix + ".json");
  if (!side) throw std::runtime_error("cannot read '" + prefix + ".json'");
  nlohmann::json meta = nlohmann::json::parse(side);
  const auto dim = meta.at("dim").get<std::size_t>();
  std::vector<double> theta(dim);
  std::ifstream bin(prefix + ".theta", std::ios::binary);
  if (!bin) throw std::runtime_error("cannot read '" + prefix + ".theta'");
  bin.read(reinterpret_cast<char*>(theta.data()),
           static_cast<std::streamsize>(dim * sizeof(double)));
  if (!bin) throw std::runtime_error("checkpoint truncated: '" + prefix + ".theta'");
  return theta;
}

void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(count)));
  if (threads <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(threads);
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void write_svg_plot(const std::string& path, const std::string& title, const std::string& xlabel,
                    const std::string& ylabel, const std::vector<Series>& series, bool log_x,
                    bool log_y) {
  const double width = 760, height = 480;
  const double ml = 70, mr = 20, mt = 40, mb = 55;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  const auto tx = [&](double v) { return log_x ? std::log10(v) : v; };
  const auto ty = [&](double v) { return log_y ? std::log10(v) : v; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0) || (log_x && s.x[i] <= 0.0)) continue;
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      ymin = std::min(ymin, ty(s.y[i]));
      ymax = std::max(ymax, ty(s.y[i]));
    }
  }
  if (xmin > xmax) {
    xmin = 0.0;
    xmax = 1.0;
  }
  if (ymin > ymax) {
    ymin = 0.0;
    ymax = 1.0;
  }
  if (xmax == xmin) xmax = xmin + 1.0;
  if (ymax == ymin) ymax = ymin + 1.0;
  const auto px = [&](double v) { return ml + (tx(v) - xmin) / (xmax - xmin) * (width - ml - mr); };
  const auto py = [&](double v) {
    return height - mb - (ty(v) - ymin) / (ymax - ymin) * (height - mt - mb);
  };

  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << width << "' height='" << height
      << "' viewBox='0 0 " << width << " " << height << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << width / 2 << "' y='24' text-anchor='middle' font-size='16'>" << title
      << "</text>\n";
  // axes
  out << "<line x1='" << ml << "' y1='" << height - mb << "' x2='" << width - mr << "' y2='"
      << height - mb << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << height - mb
      << "' stroke='black'/>\n";
  for (int i = 0; i <= 5; ++i) {
    const double fx = xmin + (xmax - xmin) * i / 5.0;
    const double fy = ymin + (ymax - ymin) * i / 5.0;
    const double gx = ml + (width - ml - mr) * i / 5.0;
    const double gy = height - mb - (height - mt - mb) * i / 5.0;
    const double vx = log_x ? std::pow(10.0, fx) : fx;
    const double vy = log_y ? std::pow(10.0, fy) : fy;
    char lx[32], ly[32];
    std::snprintf(lx, sizeof(lx), "%.3g", vx);
    std::snprintf(ly, sizeof(ly), "%.3g", vy);
    out << "<line x1='" << gx << "' y1='" << height - mb << "' x2='" << gx << "' y2='"
        << height - mb + 5 << "' stroke='black'/>\n";
    out << "<text x='" << gx << "' y='" << height - mb + 20
        << "' text-anchor='middle' font-size='11'>" << lx << "</text>\n";
    out << "<line x1='" << ml - 5 << "' y1='" << gy << "' x2='" << ml << "' y2='" << gy
        << "' stroke='black'/>\n";
    out << "<text x='" << ml - 8 << "' y='" << gy + 4 << "' text-anchor='end' font-size='11'>"
        << ly << "</text>\n";
  }
  out << "<text x='" << (ml + width - mr) / 2 << "' y='" << height - 12
      << "' text-anchor='middle' font-size='13'>" << xlabel << "</text>\n";
  out << "<text x='18' y='" << (mt + height - mb) / 2
      << "' text-anchor='middle' font-size='13' transform='rotate(-90 18 "
      << (mt + height - mb) / 2 << ")'>" << ylabel << "</text>\n";
  double legend_y = mt + 6;
  for (const auto& s : series) {
    out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      if (!std::isfinite(s.y[i]) || (log_y && s.y[i] <= 0.0) || (log_x && s.x[i] <= 0.0)) continue;
      out << px(s.x[i]) << ',' << py(s.y[i]) << ' ';
    }
    out << "'/>\n";
    out << "<line x1='" << width - mr - 150 << "' y1='" << legend_y << "' x2='"
        << width - mr - 125 << "' y2='" << legend_y << "' stroke='" << s.color
        << "' stroke-width='2'/>\n";
    out << "<text x='" << width - mr - 118 << "' y='" << legend_y + 4 << "' font-size='12'>"
        << s.label << "</text>\n";
    legend_y += 18;
  }
  out << "</svg>\n";
}

// ---------------------------------------------------------------------------
// Experiment tasks
// ---------------------------------------------------------------------------

namespace {

Grid parse_grid(const std::string& text) {
  const auto pos = text.find(':');
  if (pos != std::string::npos) {
    const std::string kind = text.substr(0, pos);
    const int n = std::stoi(text.substr(pos + 1));
    if (kind == "uniform") return uniform_grid(n);
    if (kind == "sqrt") return sqrt_grid(n);
  }
  throw std::invalid_argument("config: bad grid spec '" + text + "' (uniform:N or sqrt:M)");
}

struct ScheduleDefaults {
  double k0, gd0, gq0, gt0, h0;
  std::string grid;
  double eta = 0.14;
};

// Published portfolio hyperparameters per distortion instance, with the
// kernel schedule and (for the QF/hybrid paths) the quantile rate
// recalibrated for the desk-scale single-run budget.
ScheduleDefaults portfolio_defaults(DistortionKind kind, Algorithm algo) {
  ScheduleDefaults def;
  switch (kind) {
    case DistortionKind::SShape:
      def = {1e3, 6.25e-2, 2.5e-1, 6.25e-2, 1e-3, "uniform:99"};
      break;
    case DistortionKind::Wang:
      def = {1e3, 1e-1, 1.0, 1e-2, 1e-2, "sqrt:250"};
      break;
    default:
      def = {5e2, 2.5e-1, 2.5e-1, 6.25e-2, 3e-1, "uniform:99", 0.30};
      if (algo == Algorithm::QF || algo == Algorithm::Hybrid) def.gq0 = 1e-1;
      break;
  }
  return def;
}

struct ScheduleSet {
  Schedule gd, gq, gt, h;
};

ScheduleSet read_schedules(const Config& cfg, const ScheduleDefaults& def) {
  const double k0 = cfg.num_or("schedule.k0", def.k0);
  const double alpha = cfg.num_or("schedule.alpha", 0.70);
  const double beta = cfg.num_or("schedule.beta", 0.71);
  const double gamma = cfg.num_or("schedule.gamma", 0.99);
  const double eta = cfg.num_or("schedule.eta", def.eta);
  ScheduleSet s;
  s.gd = Schedule::from_initial(cfg.num_or("schedule.gd0", def.gd0), k0, alpha);
  s.gq = Schedule::from_initial(cfg.num_or("schedule.gq0", def.gq0), k0, beta);
  s.gt = Schedule::from_initial(cfg.num_or("schedule.gt0", def.gt0), k0, gamma);
  s.h = Schedule::from_initial(cfg.num_or("schedule.h0", def.h0), k0, eta);
  return s;
}

std::vector<double> parse_vector(const std::string& text) {
  std::vector<double> v;
  std::istringstream in(text);
  std::string tok;
  while (std::getline(in, tok, ',')) v.push_back(std::stod(trim(tok)));
  return v;
}

unsigned thread_count(const Config& cfg) {
  const auto v = cfg.integer_or("threads", static_cast<std::int64_t>(std::thread::hardware_concurrency()));
  return static_cast<unsigned>(std::max<std::int64_t>(1, v));
}

void write_aggregates(const std::string& dir, const std::vector<RunHistory>& runs,
                      bool has_metric, const std::string& metric_name) {
  const auto agg_drm = aggregate_metric(runs, false);
  std::ofstream out(dir + "/aggregate.csv");
  out << "k,drm_mean,drm_lo,drm_hi";
  if (has_metric) out << ',' << metric_name << "_mean," << metric_name << "_lo," << metric_name
                      << "_hi";
  out << '\n';
  std::vector<AggregatePoint> agg_w2;
  if (has_metric) agg_w2 = aggregate_metric(runs, true);
  for (std::size_t i = 0; i < agg_drm.size(); ++i) {
    out << agg_drm[i].k << ',' << fmt_double(agg_drm[i].mean) << ',' << fmt_double(agg_drm[i].lo)
        << ',' << fmt_double(agg_drm[i].hi);
    if (has_metric) {
      out << ',' << fmt_double(agg_w2[i].mean) << ',' << fmt_double(agg_w2[i].lo) << ','
          << fmt_double(agg_w2[i].hi);
    }
    out << '\n';
  }
  // Learning-curve plot of the aggregate band.
  Series mean_s{"mean", "#1f77b4", {}, {}}, lo_s{"2.5%", "#a0c4e8", {}, {}},
      hi_s{"97.5%", "#a0c4e8", {}, {}};
  const auto& src = has_metric ? agg_w2 : agg_drm;
  for (const auto& p : src) {
    if (p.k <= 0) continue;
    mean_s.x.push_back(static_cast<double>(p.k));
    mean_s.y.push_back(p.mean);
    lo_s.x.push_back(static_cast<double>(p.k));
    lo_s.y.push_back(p.lo);
    hi_s.x.push_back(static_cast<double>(p.k));
    hi_s.y.push_back(p.hi);
  }
  write_svg_plot(dir + "/curve.svg", has_metric ? metric_name + " vs iteration" : "DRM estimate",
                 "iteration", has_metric ? metric_name : "drm", {mean_s, lo_s, hi_s}, true,
                 has_metric);
}

double median_of(std::vector<double> v) { return empirical_quantile(std::move(v), 0.5); }

ExperimentResult run_portfolio(const Config& cfg, const std::string& out_dir) {
  const DistortionFn w = DistortionFn::parse(cfg.get_or("model.distortion", "cvar:0.7"));
  const Algorithm algo = parse_algorithm(cfg.get_or("run.algo", "hybrid"));
  const ScheduleDefaults defs = portfolio_defaults(w.kind(), algo);
  const Grid grid = parse_grid(cfg.get_or("model.grid", defs.grid));
  const auto model = parse_model(cfg.get_or("model.model", "mixture:d=10"));
  ScheduleSet sched = read_schedules(cfg, defs);

  const std::int64_t reps = cfg.integer_or("reps", 20);
  const std::int64_t iters = cfg.integer_or("run.iters", 200000);
  const std::int64_t log_every = cfg.integer_or("run.log_every", 500);
  const auto base_seed = static_cast<std::uint64_t>(cfg.integer_or("seed", 1));
  std::int64_t batch = cfg.integer_or("run.batch", 4);
  if (algo == Algorithm::Batching) {
    // Larger baseline batches scale the gradient step proportionally.
    const double scale = static_cast<double>(batch) / 4.0;
    if (scale > 1.0) sched.gt.a *= scale;
  }

  // Oracle metric; the identity distortion has a degenerate extreme-case
  // problem, in which case no W2 column is produced.
  std::unique_ptr<WorstCaseOracle> oracle;
  try {
    oracle = std::make_unique<WorstCaseOracle>(w);
  } catch (const degenerate_oracle_error&) {
    oracle = nullptr;
  }
  const int w2_res = static_cast<int>(cfg.integer_or("w2.log_resolution", 129));
  const int w2_final_res = static_cast<int>(cfg.integer_or("w2.final_resolution", 4097));
  const auto* mixture = dynamic_cast<const GaussMixture*>(model.get());

  const auto w2_metric = [&](std::span<const double> theta, int res) {
    std::vector<double> mids(static_cast<std::size_t>(res));
    for (int j = 0; j < res; ++j) mids[static_cast<std::size_t>(j)] = (j + 0.5) / res;
    std::vector<double> qm;
    if (mixture != nullptr) {
      qm = mixture->quantile_sweep(theta, mids);
    } else {
      qm.resize(mids.size());
      for (std::size_t j = 0; j < mids.size(); ++j) qm[j] = model->quantile(theta, mids[j]);
    }
    const QuantileFn fitted = [&](double z) {
      const auto j = static_cast<std::size_t>(std::llround(z * res - 0.5));
      return qm[j];
    };
    return wasserstein2(fitted, oracle->quantile_fn(), res);
  };

  ExperimentResult result;
  result.runs.resize(static_cast<std::size_t>(reps));
  result.per_rep.assign(static_cast<std::size_t>(reps), 0.0);

  parallel_for(static_cast<std::size_t>(reps), thread_count(cfg), [&](std::size_t rep) {
    const std::uint64_t seed = base_seed + rep;
    SAConfig sa(algo, grid, w);
    sa.gamma_d = sched.gd;
    sa.gamma_q = sched.gq;
    sa.gamma_theta = sched.gt;
    sa.bandwidth = sched.h;
    sa.box = model->box();
    sa.batch_size = static_cast<int>(batch);
    sa.total_iterations = iters;
    sa.log_every = log_every;
    sa.seed = seed;
    sa.lq = cfg.num_or("schedule.lq", 0.0);
    if (cfg.has("model.theta0")) {
      sa.theta0 = parse_vector(cfg.get("model.theta0"));
    } else {
      Rng init = Rng(seed).stream(0xa11ce);
      sa.theta0.resize(model->dim());
      for (std::size_t i = 0; i < sa.theta0.size(); ++i) {
        sa.theta0[i] = sa.box.lo[i] + (sa.box.hi[i] - sa.box.lo[i]) * init.uniform();
      }
    }
    MetricFn metric;
    if (oracle) metric = [&](std::span<const double> th) { return w2_metric(th, w2_res); };
    RunHistory hist = run(sa, *model, metric);
    if (oracle) result.per_rep[rep] = w2_metric(hist.final_state.theta, w2_final_res);
    result.runs[rep] = std::move(hist);
  });

  for (std::size_t rep = 0; rep < result.runs.size(); ++rep) {
    char name[64];
    std::snprintf(name, sizeof(name), "/run_%03zu.csv", rep);
    write_run_csv(out_dir + name, result.runs[rep]);
  }
  write_aggregates(out_dir, result.runs, oracle != nullptr, "w2");

  std::ofstream summary(out_dir + "/summary.csv");
  summary << "rep,seed,final_k,final_drm,final_w2\n";
  for (std::size_t rep = 0; rep < result.runs.size(); ++rep) {
    const auto& rec = result.runs[rep].records.back();
    summary << rep << ',' << base_seed + rep << ',' << rec.k << ',' << fmt_double(rec.drm) << ','
            << fmt_double(oracle ? result.per_rep[rep] : std::numeric_limits<double>::quiet_NaN())
            << '\n';
  }
  if (oracle) {
    result.stats["median_final_w2"] = median_of(result.per_rep);
    result.stats["oracle_normalizer"] = oracle->normalizer();
  }
  return result;
}

ExperimentResult run_dppo(const Config& cfg, const std::string& out_dir) {
  const std::string env_name = cfg.get_or("dppo.env", "chain");
  const EchelonParams params = env_name == "single" ? EchelonParams::single_echelon()
                                                    : EchelonParams::defaults();
  const InventoryEnv env(params);

  DppoConfig dc(DistortionFn::parse(cfg.get_or("dppo.distortion", "identity")),
                parse_grid(cfg.get_or("dppo.grid", "uniform:50")));
  const ScheduleDefaults defs{2.5e5, 5.0, 1.0, 2.5e-4, 1.0, ""};
  const ScheduleSet sched = read_schedules(cfg, defs);
  dc.gamma_d = sched.gd;
  dc.gamma_q = sched.gq;
  dc.gamma_theta = sched.gt;
  dc.bandwidth = sched.h;
  dc.sample_interval = static_cast<int>(cfg.integer_or("dppo.k0_interval", 250));
  dc.epsilon = cfg.num_or("dppo.epsilon", 0.2);
  dc.horizon = static_cast<int>(cfg.integer_or("dppo.horizon", 100));
  dc.discount = cfg.num_or("dppo.discount", 0.99);
  dc.hidden = static_cast<std::size_t>(cfg.integer_or("dppo.hidden", 32));
  dc.weight_half_width = cfg.num_or("dppo.box", 10.0);
  dc.total_iterations = cfg.integer_or("run.iters", 50000);
  dc.log_every = cfg.integer_or("run.log_every", 500);
  dc.lq = cfg.num_or("schedule.lq", 0.0);

  const std::int64_t reps = cfg.integer_or("reps", 20);
  const auto base_seed = static_cast<std::uint64_t>(cfg.integer_or("seed", 1));
  const int eval_episodes = static_cast<int>(cfg.integer_or("eval.episodes", 500));

  ExperimentResult result;
  result.runs.resize(static_cast<std::size_t>(reps));
  result.per_rep.assign(static_cast<std::size_t>(reps), 0.0);
  std::vector<std::int64_t> episodes(static_cast<std::size_t>(reps)),
      skipped(static_cast<std::size_t>(reps));

  parallel_for(static_cast<std::size_t>(reps), thread_count(cfg), [&](std::size_t rep) {
    DppoConfig local = dc;
    local.seed = base_seed + rep;
    DppoResult res = dppo_run(env, local);
    Policy policy(env.feature_dim(), local.hidden, env.action_dim());
    Rng eval_rng = Rng(local.seed).stream(0xeaa1);
    result.per_rep[rep] = evaluate_mean_return(env, policy, res.theta, local.horizon,
                                               local.discount, eval_episodes, eval_rng);
    episodes[rep] = res.episodes_generated;
    skipped[rep] = res.updates_skipped;
    char name[64];
    std::snprintf(name, sizeof(name), "/policy_%03zu", rep);
    save_checkpoint(out_dir + name, res.theta,
                    {{"task", "dppo"},
                     {"env", env_name},
                     {"distortion", local.distortion.name()},
                     {"seed", std::to_string(local.seed)},
                     {"mean_return", fmt_double(result.per_rep[rep])}});
    result.runs[rep] = std::move(res.history);
  });

  for (std::size_t rep = 0; rep < result.runs.size(); ++rep) {
    char name[64];
    std::snprintf(name, sizeof(name), "/run_%03zu.csv", rep);
    write_run_csv(out_dir + name, result.runs[rep]);
  }
  write_aggregates(out_dir, result.runs, false, "");

  std::ofstream summary(out_dir + "/summary.csv");
  summary << "rep,seed,mean_return,episodes,updates_skipped\n";
  for (std::size_t rep = 0; rep < result.runs.size(); ++rep) {
    summary << rep << ',' << base_seed + rep << ',' << fmt_double(result.per_rep[rep]) << ','
            << episodes[rep] << ',' << skipped[rep] << '\n';
  }
  result.stats["median_mean_return"] = median_of(result.per_rep);
  return result;
}

ExperimentResult run_tracker_bench(const Config& cfg, const std::string& out_dir) {
  const std::string mode = cfg.get_or("bench.mode", "quantile");
  const double z = cfg.num_or("bench.z", 0.7);
  const double theta = cfg.num_or("bench.theta", 0.0);
  const std::int64_t iters = cfg.integer_or("run.iters", 100000);
  const auto base_seed = static_cast<std::uint64_t>(cfg.integer_or("seed", 1));
  const GaussLocation model;
  const std::vector<double> th{theta};
  const double true_q = model.quantile(th, z);

  // Log-spaced checkpoints.
  std::vector<std::int64_t> ks;
  for (double e = 2.0; ; e += 0.125) {
    const auto k = static_cast<std::int64_t>(std::llround(std::pow(10.0, e)));
    if (k > iters) break;
    if (ks.empty() || k != ks.back()) ks.push_back(k);
  }
  if (ks.empty() || ks.back() != iters) ks.push_back(iters);

  ExperimentResult result;
  if (mode == "quantile") {
    const std::int64_t reps = cfg.integer_or("reps", 100);
    const ScheduleSet sched = read_schedules(cfg, {5e2, 5e-2, 2.5e-1, 6.25e-2, 2e-1, ""});
    std::vector<std::vector<double>> sq_err(static_cast<std::size_t>(reps));
    parallel_for(static_cast<std::size_t>(reps), thread_count(cfg), [&](std::size_t rep) {
      Rng rng(base_seed + rep);
      double q = 0.0;
      std::size_t next = 0;
      auto& errs = sq_err[rep];
      errs.reserve(ks.size());
      ModelSample s;
      for (std::int64_t k = 0; k < iters; ++k) {
        model.draw(th, rng, s);
        q = quantile_step(q, z, s.y, sched.gq(k));
        if (next < ks.size() && k + 1 == ks[next]) {
          errs.push_back((q - true_q) * (q - true_q));
          ++next;
        }
      }
    });
    std::vector<double> kd(ks.begin(), ks.end()), mse(ks.size(), 0.0);
    for (const auto& errs : sq_err) {
      for (std::size_t i = 0; i < errs.size(); ++i) mse[i] += errs[i];
    }
    for (auto& m : mse) m /= static_cast<double>(reps);
    std::ofstream out(out_dir + "/mse.csv");
    out << "k,mse\n";
    for (std::size_t i = 0; i < kd.size(); ++i) {
      out << static_cast<std::int64_t>(kd[i]) << ',' << fmt_double(mse[i]) << '\n';
    }
    const double slope =
        rate_slope(kd, mse, cfg.num_or("bench.k_min", 1e3), cfg.num_or("bench.k_max", 1e5));
    result.stats["slope"] = slope;
    result.per_rep = mse;
    Series s{"mse", "#d62728", kd, mse};
    write_svg_plot(out_dir + "/curve.svg", "quantile tracker MSE", "iteration", "mse", {s}, true,
                   true);
    std::ofstream summary(out_dir + "/summary.csv");
    summary << "slope\n" << fmt_double(slope) << '\n';
  } else if (mode == "dgrad") {
    const std::int64_t reps = cfg.integer_or("reps", 20);
    const ScheduleSet sched = read_schedules(cfg, {1e3, 5e-2, 2.5e-1, 6.25e-2, 2e-1, ""});
    std::vector<double> final_d(static_cast<std::size_t>(reps), 0.0);
    parallel_for(static_cast<std::size_t>(reps), thread_count(cfg), [&](std::size_t rep) {
      Rng rng(base_seed + rep);
      double q = 0.0;
      std::vector<double> d{0.0}, g1(1);
      ModelSample s;
      for (std::int64_t k = 0; k < iters; ++k) {
        model.draw(th, rng, s);
        g1_score(s, q, g1);
        const double g3 = g3_kernel(s.y, q, sched.h(k));
        qgrad_step(d, g1, g3, sched.gd(k));
        q = quantile_step(q, z, s.y, sched.gq(k));
      }
      final_d[rep] = d[0];
    });
    double mean_d = 0.0;
    for (double v : final_d) mean_d += v;
    mean_d /= static_cast<double>(reps);
    result.per_rep = final_d;
    result.stats["mean_final_d"] = mean_d;
    result.stats["true_qgrad"] = 1.0;
    std::ofstream summary(out_dir + "/summary.csv");
    summary << "rep,final_d\n";
    for (std::size_t rep = 0; rep < final_d.size(); ++rep) {
      summary << rep << ',' << fmt_double(final_d[rep]) << '\n';
    }
  } else {
    throw std::invalid_argument("config: key 'bench.mode' must be quantile or dgrad");
  }
  return result;
}

}  // namespace

ExperimentResult run_experiment(const Config& cfg) {
  const std::string task = cfg.get("task");
  const std::string out_dir = cfg.get_or("out", "out");
  fs::create_directories(out_dir);
  cfg.save(out_dir + "/config.txt");

  ExperimentResult result;
  if (task == "portfolio") {
    result = run_portfolio(cfg, out_dir);
  } else if (task == "dppo") {
    result = run_dppo(cfg, out_dir);
  } else if (task == "tracker-bench") {
    result = run_tracker_bench(cfg, out_dir);
  } else {
    throw std::invalid_argument("config: key 'task' must be portfolio, dppo or tracker-bench");
  }
  result.out_dir = out_dir;
  std::ofstream stats(out_dir + "/stats.txt");
  for (const auto& [k, v] : result.stats) stats << k << " = " << fmt_double(v) << '\n';
  return result;
}

}  // namespace drm
