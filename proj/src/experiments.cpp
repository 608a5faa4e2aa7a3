#include "ewmm/experiments.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <thread>

#include "ewmm/catalog.hpp"
#include "ewmm/errors.hpp"

namespace ewmm {
namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

// Runs fn(0..n-1) on up to `threads` workers; rethrows the first failure.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mu;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Short label for file names: 2.5 -> "2.5", 0.15 -> "0.15".
std::string tag(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

std::int64_t stream_length(const ExperimentConfig& cfg, std::int64_t fallback) {
  return cfg.steps >= 0 ? cfg.steps : fallback;
}

ReturnSeries load_returns(const ExperimentConfig& cfg) {
  if (!cfg.input.empty()) {
    ReturnSeries s = load_csv_returns(cfg.input, {cfg.percent_to_decimal});
    if (cfg.steps >= 0 && static_cast<std::size_t>(cfg.steps) < s.size()) {
      s.rows.resize(static_cast<std::size_t>(cfg.steps));
      s.dates.resize(static_cast<std::size_t>(cfg.steps));
    }
    return s;
  }
  ReturnsStreamSpec spec = cfg.returns_data;
  spec.seed = cfg.seed;
  spec.T = stream_length(cfg, spec.T);
  return gen_returns_stream(spec);
}

FiniteMemoryOptions fm_options(const ExperimentConfig& cfg, TailMode mode) {
  FiniteMemoryOptions o;
  o.mode = mode;
  o.memory = cfg.window;
  o.tail_memory = cfg.tail_window;
  o.probes = cfg.probes;
  o.probe_scale = cfg.probe_scale;
  o.seed = cfg.seed;
  return o;
}

// Accumulates per-step wall-clock for one strategy.
struct Timer {
  double cumulative = 0.0;
  template <class F>
  double time(F&& f) {
    const auto start = Clock::now();
    f();
    const double dt = seconds_since(start);
    cumulative += dt;
    return dt;
  }
};

nlohmann::json slopes(const Table& t, std::initializer_list<const char*> cumulative_columns, int warmup) {
  nlohmann::json j = nlohmann::json::object();
  const auto last = static_cast<std::int64_t>(t.rows.size());
  if (last < warmup + 2) return j;
  for (const char* c : cumulative_columns) {
    j[std::string("slope_") + c] = loglog_slope(t.values(c), warmup + 1, last);
    j[std::string("total_") + c] = t.rows.back()[t.column(c)];
  }
  return j;
}

}  // namespace

std::string_view to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::covariance: return "covariance";
    case ExperimentKind::quantile: return "quantile";
    case ExperimentKind::logistic: return "logistic";
    case ExperimentKind::bench: return "bench";
  }
  return "?";
}

ExperimentKind experiment_from_string(std::string_view s) {
  for (auto k : {ExperimentKind::covariance, ExperimentKind::quantile, ExperimentKind::logistic,
                 ExperimentKind::bench}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown experiment '" + std::string(s) + "'");
}

ExperimentConfig default_config(ExperimentKind kind) {
  ExperimentConfig c;
  c.experiment = kind;
  switch (kind) {
    case ExperimentKind::covariance:
      c.model = "sparse-precision";
      c.half_life = 63.0;
      c.lambdas = {2.5, 5.0, 7.5, 10.0};
      break;
    case ExperimentKind::quantile:
      c.model = "pinball";
      c.half_life = 100.0;
      c.window = 100;
      c.tail_window = 300;
      c.probes = 10;
      c.levels = {0.15, 0.5, 0.85};
      c.tail_mode = TailMode::fitted;
      c.probe_scale = ProbeScale::fifth_of_magnitude;
      break;
    case ExperimentKind::logistic:
      c.model = "logistic";
      c.half_life = 150.0;
      c.window = 150;
      c.lambdas = {0.5};
      c.tail_mode = TailMode::taylor;
      break;
    case ExperimentKind::bench:
      c.model = "ridge";
      c.half_life = 100.0;
      c.window = 100;
      c.lambdas = {1.0};
      c.levels = {0.5};
      c.steps = 1000;
      break;
  }
  return c;
}

void validate(const ExperimentConfig& c) {
  if (!(c.half_life > 0.0) || !std::isfinite(c.half_life)) throw ConfigError("half-life H must be positive");
  if (c.window < 1) throw ConfigError("window M must be at least 1");
  if (c.tail_window < 0) throw ConfigError("tail window M_tail must be nonnegative");
  if (c.probes < 0) throw ConfigError("probe count L must be nonnegative");
  if (c.warmup < 0) throw ConfigError("warmup must be nonnegative");
  if (c.solver.max_iters < 1) throw ConfigError("max_iters must be positive");
  if (!(c.solver.tolerance >= 0.0)) throw ConfigError("tolerance must be nonnegative");
  for (double l : c.lambdas) {
    if (!(l >= 0.0) || !std::isfinite(l)) throw ConfigError("lambda must be nonnegative");
  }
  for (double eta : c.levels) {
    if (!(eta > 0.0 && eta < 1.0)) throw ConfigError("quantile levels must lie in (0,1)");
  }
  if (c.experiment == ExperimentKind::covariance && c.lambdas.empty()) {
    throw ConfigError("covariance experiment needs at least one lambda");
  }
  if (c.experiment == ExperimentKind::quantile && c.levels.empty()) {
    throw ConfigError("quantile experiment needs at least one level");
  }
  if (c.experiment == ExperimentKind::quantile && c.tail_mode == TailMode::taylor) {
    throw ConfigError("pinball loss has no Hessian; the quantile experiment needs --tail-mode fitted");
  }
  if (c.experiment == ExperimentKind::logistic && c.lambdas.size() != 1) {
    throw ConfigError("logistic experiment takes a single lambda");
  }
}

void apply_json(ExperimentConfig& c, const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  try {
    if (j.contains("experiment")) {
      const auto kind = experiment_from_string(j.at("experiment").get<std::string>());
      if (kind != c.experiment) c = default_config(kind);
    }
    for (const auto& [key, v] : j.items()) {
      if (key == "experiment") continue;
      else if (key == "model") c.model = v.get<std::string>();
      else if (key == "H" || key == "half_life") c.half_life = v.get<double>();
      else if (key == "M" || key == "window") c.window = v.get<int>();
      else if (key == "M_tail" || key == "tail_window") c.tail_window = v.get<int>();
      else if (key == "L" || key == "probes") c.probes = v.get<int>();
      else if (key == "lambda") c.lambdas = v.is_array() ? v.get<std::vector<double>>() : std::vector<double>{v.get<double>()};
      else if (key == "levels") c.levels = v.get<std::vector<double>>();
      else if (key == "tail_mode") c.tail_mode = tail_mode_from_string(v.get<std::string>());
      else if (key == "probe_scale") {
        const auto s = v.get<std::string>();
        if (s == "norm_plus_epsilon") c.probe_scale = ProbeScale::norm_plus_epsilon;
        else if (s == "fifth_of_magnitude") c.probe_scale = ProbeScale::fifth_of_magnitude;
        else throw ConfigError("unknown probe_scale '" + s + "'");
      }
      else if (key == "seed") c.seed = v.get<std::uint64_t>();
      else if (key == "T" || key == "steps") c.steps = v.get<std::int64_t>();
      else if (key == "input") c.input = v.get<std::string>();
      else if (key == "percent_to_decimal") c.percent_to_decimal = v.get<bool>();
      else if (key == "out") c.out_dir = v.get<std::string>();
      else if (key == "compare") c.compare = v.get<bool>();
      else if (key == "timing") c.timing = v.get<bool>();
      else if (key == "warmup") c.warmup = v.get<int>();
      else if (key == "threads") c.threads = v.get<int>();
      else if (key == "tolerance") c.solver.tolerance = v.get<double>();
      else if (key == "max_iters") c.solver.max_iters = v.get<int>();
      else if (key == "generator") {
        switch (c.experiment) {
          case ExperimentKind::covariance: c.returns_data = v.get<ReturnsStreamSpec>(); break;
          case ExperimentKind::quantile: c.quantile_data = v.get<QuantileStreamSpec>(); break;
          case ExperimentKind::logistic: c.logistic_data = v.get<LogisticStreamSpec>(); break;
          case ExperimentKind::bench: throw ConfigError("bench generates its own data; 'generator' is not accepted");
        }
      }
      else throw ConfigError("unknown config key '" + key + "'");
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

nlohmann::json to_json(const ExperimentConfig& c) {
  nlohmann::json j = {
      {"experiment", std::string(to_string(c.experiment))},
      {"model", c.model},
      {"H", c.half_life},
      {"M", c.window},
      {"M_tail", c.tail_window},
      {"L", c.probes},
      {"lambda", c.lambdas},
      {"levels", c.levels},
      {"tail_mode", std::string(to_string(c.tail_mode))},
      {"probe_scale", c.probe_scale == ProbeScale::norm_plus_epsilon ? "norm_plus_epsilon" : "fifth_of_magnitude"},
      {"seed", c.seed},
      {"T", c.steps},
      {"input", c.input},
      {"percent_to_decimal", c.percent_to_decimal},
      {"compare", c.compare},
      {"timing", c.timing},
      {"warmup", c.warmup},
      {"tolerance", c.solver.tolerance},
      {"max_iters", c.solver.max_iters},
  };
  if (c.input.empty()) {
    switch (c.experiment) {
      case ExperimentKind::covariance: j["generator"] = c.returns_data; break;
      case ExperimentKind::quantile: j["generator"] = c.quantile_data; break;
      case ExperimentKind::logistic: j["generator"] = c.logistic_data; break;
      case ExperimentKind::bench: break;
    }
    if (j.contains("generator")) j["generator"]["seed"] = c.seed;
  }
  return j;
}

void Table::add_column(std::string n, bool is_timing) {
  columns.push_back(std::move(n));
  timing.push_back(is_timing);
}

std::size_t Table::column(std::string_view n) const {
  for (std::size_t i = 0; i < columns.size(); ++i)
    if (columns[i] == n) return i;
  throw std::invalid_argument("no column '" + std::string(n) + "' in table " + name);
}

std::vector<double> Table::values(std::string_view n) const {
  const std::size_t k = column(n);
  std::vector<double> out;
  out.reserve(rows.size());
  for (const auto& r : rows) out.push_back(r[k]);
  return out;
}

double loglog_slope(const std::vector<double>& cum, std::int64_t first, std::int64_t last) {
  if (first < 1 || last > static_cast<std::int64_t>(cum.size()) || last - first < 1) {
    throw std::invalid_argument("loglog_slope: bad range");
  }
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::int64_t n = 0;
  for (std::int64_t t = first; t <= last; ++t) {
    const double c = cum[static_cast<std::size_t>(t - 1)];
    if (!(c > 0.0)) continue;
    const double x = std::log(static_cast<double>(t));
    const double y = std::log(c);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
    ++n;
  }
  if (n < 2) throw std::invalid_argument("loglog_slope: fewer than two positive points");
  const double nd = static_cast<double>(n);
  return (nd * sxy - sx * sy) / (nd * sxx - sx * sx);
}

double rms_deviation(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("rms_deviation: size mismatch");
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double rms(const std::vector<double>& a) {
  if (a.empty()) return 0.0;
  double s = 0.0;
  for (double v : a) s += v * v;
  return std::sqrt(s / static_cast<double>(a.size()));
}

int sweep_threads(int requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("EWMM_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v > 0) return static_cast<int>(v);
    throw ConfigError("EWMM_THREADS must be a positive integer");
  }
  return std::max(1u, std::thread::hardware_concurrency());
}

// Covariance: recursive gauss-cov with the sparse-precision regularizer per lambda.
ExperimentResult run_covariance(const ExperimentConfig& cfg) {
  validate(cfg);
  const ReturnSeries data = load_returns(cfg);
  const Index n = data.dim();
  ExperimentResult res{cfg, std::vector<Table>(cfg.lambdas.size()), nlohmann::json::object(),
                       nlohmann::json::object()};

  parallel_for(cfg.lambdas.size(), sweep_threads(cfg.threads), [&](std::size_t k) {
    const double lambda = cfg.lambdas[k];
    const ModelSpec spec = make_model("sparse-precision", {n, lambda});
    const auto sched = DecaySchedule::from_halflife(cfg.half_life);
    QuadRecursiveEwmm rec(spec.loss, spec.reg, sched, cfg.solver);
    std::optional<NaiveEwmm> naive;
    if (cfg.compare) naive.emplace(spec.loss, spec.reg, sched, cfg.solver);

    Table& t = res.tables[k];
    t.name = "covariance_lambda_" + tag(lambda);
    t.label_column = data.date_column;
    for (const char* c : {"t", "nnz", "objective", "iterations", "duality_gap"}) t.add_column(c);
    if (naive) {
      t.add_column("nnz_naive");
      t.add_column("max_abs_diff");
    }
    t.add_column("step_time_recursive", true);
    t.add_column("cumulative_time_recursive", true);
    if (naive) {
      t.add_column("step_time_naive", true);
      t.add_column("cumulative_time_naive", true);
    }

    Timer tr, tn;
    int max_nnz = 0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const Sample x = Sample::point(data.rows[i]);
      const double dt = tr.time([&] { rec.step(x); });
      const SymMatrix prec = smat(rec.estimate());
      const int nnz = offdiag_nonzeros(prec, 1e-4);
      max_nnz = std::max(max_nnz, nnz);
      std::vector<double> row = {static_cast<double>(i + 1), static_cast<double>(nnz),
                                 rec.last_result().objective_value,
                                 static_cast<double>(rec.last_result().iterations),
                                 rec.last_result().certificate};
      double dn = 0.0;
      if (naive) {
        dn = tn.time([&] { naive->step(x); });
        row.push_back(offdiag_nonzeros(smat(naive->estimate()), 1e-4));
        row.push_back((naive->estimate() - rec.estimate()).cwiseAbs().maxCoeff());
      }
      row.push_back(dt);
      row.push_back(tr.cumulative);
      if (naive) {
        row.push_back(dn);
        row.push_back(tn.cumulative);
      }
      t.labels.push_back(data.dates[i]);
      t.rows.push_back(std::move(row));
    }
  });

  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.lambdas.size(); ++k) {
    const auto nnz = res.tables[k].values("nnz");
    per.push_back({{"lambda", cfg.lambdas[k]},
                   {"max_nnz", nnz.empty() ? 0.0 : *std::max_element(nnz.begin(), nnz.end())},
                   {"final_nnz", nnz.empty() ? 0.0 : nnz.back()}});
    if (cfg.compare) {
      res.timing_summary[res.tables[k].name] =
          slopes(res.tables[k], {"cumulative_time_recursive", "cumulative_time_naive"}, cfg.warmup);
    }
  }
  res.summary["assets"] = n;
  res.summary["steps"] = data.size();
  res.summary["max_offdiag"] = n * (n - 1) / 2;
  res.summary["lambdas"] = per;
  return res;
}

// Quantile: naive exact vs finite-memory per level.
ExperimentResult run_quantile(const ExperimentConfig& cfg) {
  validate(cfg);
  std::vector<double> xs;
  std::vector<std::vector<double>> truth;
  std::size_t negative_sigma = 0;
  if (!cfg.input.empty()) {
    const ReturnSeries s = load_csv_returns(cfg.input, {cfg.percent_to_decimal});
    const std::size_t len = cfg.steps >= 0 ? std::min<std::size_t>(s.size(), cfg.steps) : s.size();
    for (std::size_t i = 0; i < len; ++i) xs.push_back(s.rows[i](0));
  } else {
    QuantileStreamSpec spec = cfg.quantile_data;
    spec.seed = cfg.seed;
    spec.T = stream_length(cfg, spec.T);
    QuantileStream q = gen_quantile_stream(spec, cfg.levels);
    xs = std::move(q.x);
    truth = std::move(q.true_quantiles);
    negative_sigma = q.negative_sigma_steps.size();
  }

  ExperimentResult res{cfg, std::vector<Table>(cfg.levels.size()), nlohmann::json::object(),
                       nlohmann::json::object()};
  parallel_for(cfg.levels.size(), sweep_threads(cfg.threads), [&](std::size_t k) {
    const double eta = cfg.levels[k];
    const ModelSpec spec = make_model("pinball", {1, 0.0, 1.0, eta});
    const auto sched = DecaySchedule::from_halflife(cfg.half_life);
    NaiveEwmm exact(spec.loss, spec.reg, sched, cfg.solver);
    FiniteMemoryEwmm approx(spec.loss, spec.reg, sched, fm_options(cfg, cfg.tail_mode), cfg.solver);

    Table& t = res.tables[k];
    t.name = "quantile_eta_" + tag(eta);
    t.add_column("t");
    t.add_column("x");
    if (!truth.empty()) t.add_column("true_quantile");
    for (const char* c : {"exact", "approx", "tail_residual", "tail_fallbacks"}) t.add_column(c);
    for (const char* c : {"step_time_exact", "cumulative_time_exact", "step_time_approx", "cumulative_time_approx"}) {
      t.add_column(c, true);
    }

    Timer te, ta;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const Sample x = Sample::scalar(xs[i]);
      const double de = te.time([&] { exact.step(x); });
      const double da = ta.time([&] { approx.step(x); });
      std::vector<double> row = {static_cast<double>(i + 1), xs[i]};
      if (!truth.empty()) row.push_back(truth[k][i]);
      row.push_back(exact.estimate()(0));
      row.push_back(approx.estimate()(0));
      row.push_back(approx.diagnostics().residual_rms);
      row.push_back(approx.diagnostics().fallbacks);
      for (double v : {de, te.cumulative, da, ta.cumulative}) row.push_back(v);
      t.rows.push_back(std::move(row));
    }
  });

  nlohmann::json per = nlohmann::json::array();
  for (std::size_t k = 0; k < cfg.levels.size(); ++k) {
    const Table& t = res.tables[k];
    const auto ex = t.values("exact");
    const auto ap = t.values("approx");
    const double r = rms(ex);
    per.push_back({{"eta", cfg.levels[k]},
                   {"rms_exact", r},
                   {"rms_deviation", rms_deviation(ex, ap)},
                   {"relative_deviation", r > 0.0 ? rms_deviation(ex, ap) / r : 0.0},
                   {"tail_fallbacks", t.rows.empty() ? 0.0 : t.rows.back()[t.column("tail_fallbacks")]}});
    res.timing_summary[t.name] = slopes(t, {"cumulative_time_exact", "cumulative_time_approx"}, cfg.warmup);
  }
  res.summary["steps"] = xs.size();
  res.summary["negative_sigma_steps"] = negative_sigma;
  res.summary["levels"] = per;
  return res;
}

// Logistic: naive exact vs finite-memory with a ridge penalty.
ExperimentResult run_logistic(const ExperimentConfig& cfg) {
  validate(cfg);
  const double lambda = cfg.lambdas.front();
  std::vector<Sample> samples;
  std::vector<Vector> truth;
  if (!cfg.input.empty()) {
    // Columns: features..., label in {-1, +1} last.
    const ReturnSeries s = load_csv_returns(cfg.input, {});
    if (s.dim() < 2) throw DataError("logistic input needs at least one feature column and a label column");
    const std::size_t len = cfg.steps >= 0 ? std::min<std::size_t>(s.size(), cfg.steps) : s.size();
    for (std::size_t i = 0; i < len; ++i) {
      const Vector& r = s.rows[i];
      const double y = r(r.size() - 1);
      if (y != 1.0 && y != -1.0) throw DataError("label must be -1 or +1", i + 2);
      samples.push_back(Sample::labeled(r.head(r.size() - 1), y));
    }
  } else {
    LogisticStreamSpec spec = cfg.logistic_data;
    spec.seed = cfg.seed;
    spec.T = stream_length(cfg, spec.T);
    LogisticStream st = gen_logistic_stream(spec);
    samples = std::move(st.samples);
    truth = std::move(st.theta_true);
  }
  const Index m = samples.empty() ? cfg.logistic_data.a.size() : samples.front().x.size();

  const ModelSpec spec = make_model("logistic", {m, lambda});
  const auto sched = DecaySchedule::from_halflife(cfg.half_life);
  NaiveEwmm exact(spec.loss, spec.reg, sched, cfg.solver);
  FiniteMemoryEwmm approx(spec.loss, spec.reg, sched, fm_options(cfg, cfg.tail_mode), cfg.solver);

  ExperimentResult res{cfg, std::vector<Table>(1), nlohmann::json::object(), nlohmann::json::object()};
  Table& t = res.tables[0];
  t.name = "logistic_lambda_" + tag(lambda);
  t.add_column("t");
  t.add_column("y");
  auto coords = [&](const std::string& prefix) {
    for (Index i = 0; i < m; ++i) t.add_column(prefix + std::to_string(i + 1));
  };
  if (!truth.empty()) coords("theta_true_");
  coords("exact_");
  coords("approx_");
  for (const char* c : {"objective_exact", "objective_approx", "iterations_exact", "iterations_approx"}) t.add_column(c);
  for (const char* c : {"step_time_exact", "cumulative_time_exact", "step_time_approx", "cumulative_time_approx"}) {
    t.add_column(c, true);
  }

  Timer te, ta;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double de = te.time([&] { exact.step(samples[i]); });
    const double da = ta.time([&] { approx.step(samples[i]); });
    std::vector<double> row = {static_cast<double>(i + 1), samples[i].y};
    if (!truth.empty())
      for (Index c = 0; c < m; ++c) row.push_back(truth[i](c));
    for (Index c = 0; c < m; ++c) row.push_back(exact.estimate()(c));
    for (Index c = 0; c < m; ++c) row.push_back(approx.estimate()(c));
    row.push_back(exact.last_result().objective_value);
    row.push_back(approx.last_result().objective_value);
    row.push_back(exact.last_result().iterations);
    row.push_back(approx.last_result().iterations);
    for (double v : {de, te.cumulative, da, ta.cumulative}) row.push_back(v);
    t.rows.push_back(std::move(row));
  }

  nlohmann::json per = nlohmann::json::array();
  double worst = 0.0;
  for (Index c = 0; c < m; ++c) {
    const auto ex = t.values("exact_" + std::to_string(c + 1));
    const auto ap = t.values("approx_" + std::to_string(c + 1));
    double mad = 0.0;
    for (std::size_t i = 0; i < ex.size(); ++i) mad += std::abs(ex[i] - ap[i]);
    if (!ex.empty()) mad /= static_cast<double>(ex.size());
    const double r = rms(ex);
    const double rel = r > 0.0 ? mad / r : 0.0;
    worst = std::max(worst, rel);
    per.push_back({{"coordinate", c + 1}, {"mean_abs_deviation", mad}, {"rms_exact", r}, {"relative", rel}});
  }
  res.summary["steps"] = samples.size();
  res.summary["beta"] = sched.beta();
  res.summary["coordinates"] = per;
  res.summary["worst_relative"] = worst;
  res.timing_summary[t.name] = slopes(t, {"cumulative_time_exact", "cumulative_time_approx"}, cfg.warmup);
  return res;
}

// Bench: naive vs the fixed-cost strategy for a catalog model on generated data.
ExperimentResult run_bench(const ExperimentConfig& cfg) {
  validate(cfg);
  const std::int64_t T = stream_length(cfg, 1000);
  if (T < 0) throw ConfigError("bench length must be nonnegative");
  const double lambda = cfg.lambdas.empty() ? 0.0 : cfg.lambdas.front();
  const double eta = cfg.levels.empty() ? 0.5 : cfg.levels.front();

  std::vector<Sample> samples;
  Index dim = 5;
  const std::string& id = cfg.model;
  if (id == "pinball") {
    QuantileStreamSpec q;
    q.T = T;
    q.seed = cfg.seed;
    for (double v : gen_quantile_stream(q, {eta}).x) samples.push_back(Sample::scalar(v));
    dim = 1;
  } else if (id == "logistic") {
    LogisticStreamSpec l;
    l.T = T;
    l.seed = cfg.seed;
    samples = gen_logistic_stream(l).samples;
    dim = 3;
  } else if (id == "gauss-cov" || id == "sparse-precision") {
    ReturnsStreamSpec r;
    r.T = T;
    r.seed = cfg.seed;
    dim = r.n;
    for (auto& row : gen_returns_stream(r).rows) samples.push_back(Sample::point(std::move(row)));
  } else if (id == "pmf") {
    dim = 4;
    CounterRng rng(cfg.seed, RngStream::bench_data);
    for (std::int64_t t = 0; t < T; ++t) {
      samples.push_back(Sample::category(1 + static_cast<int>(rng.uniform() * static_cast<double>(dim))));
    }
  } else if (id == "ewma" || id == "huber") {
    dim = 3;
    CounterRng rng(cfg.seed, RngStream::bench_data);
    for (std::int64_t t = 0; t < T; ++t) {
      Vector x(dim);
      for (Index i = 0; i < dim; ++i) x(i) = rng.normal();
      samples.push_back(Sample::point(std::move(x)));
    }
  } else {
    // Regression models: y = z^T theta* + noise.
    Vector truth(dim);
    for (Index i = 0; i < dim; ++i) truth(i) = 1.0 / static_cast<double>(i + 1) * (i % 2 ? -1.0 : 1.0);
    CounterRng rng(cfg.seed, RngStream::bench_data);
    for (std::int64_t t = 0; t < T; ++t) {
      Vector z(dim);
      for (Index i = 0; i < dim; ++i) z(i) = rng.normal();
      const double y = z.dot(truth) + 0.5 * rng.normal();
      samples.push_back(Sample::labeled(std::move(z), y));
    }
  }

  const ModelSpec spec = make_model(id, {dim, lambda, 1.0, eta});
  const auto sched = DecaySchedule::from_halflife(cfg.half_life);
  NaiveEwmm naive(spec.loss, spec.reg, sched, cfg.solver);
  std::unique_ptr<Estimator> fast;
  std::string strategy;
  const auto caps = spec.loss->capabilities();
  if (caps.has_quadratic_decomposition) {
    fast = std::make_unique<QuadRecursiveEwmm>(spec.loss, spec.reg, sched, cfg.solver);
    strategy = "quad-recursive";
  } else {
    TailMode mode = cfg.tail_mode;
    if (mode == TailMode::taylor && !caps.has_hessian) mode = TailMode::fitted;
    fast = std::make_unique<FiniteMemoryEwmm>(spec.loss, spec.reg, sched, fm_options(cfg, mode), cfg.solver);
    strategy = "finite-memory-" + std::string(to_string(mode));
  }

  ExperimentResult res{cfg, std::vector<Table>(1), nlohmann::json::object(), nlohmann::json::object()};
  Table& t = res.tables[0];
  t.name = "bench_" + id;
  for (const char* c : {"t", "objective_naive", "objective_fast", "max_abs_diff"}) t.add_column(c);
  for (const char* c : {"step_time_naive", "cumulative_time_naive", "step_time_fast", "cumulative_time_fast"}) {
    t.add_column(c, true);
  }
  Timer tn, tf;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double dn = tn.time([&] { naive.step(samples[i]); });
    const double df = tf.time([&] { fast->step(samples[i]); });
    t.rows.push_back({static_cast<double>(i + 1), naive.last_result().objective_value,
                      fast->last_result().objective_value,
                      (naive.estimate() - fast->estimate()).cwiseAbs().maxCoeff(), dn, tn.cumulative, df,
                      tf.cumulative});
  }
  res.summary["model"] = id;
  res.summary["strategy"] = strategy;
  res.summary["steps"] = samples.size();
  res.summary["max_abs_diff"] = 0.0;
  for (double d : t.values("max_abs_diff")) {
    res.summary["max_abs_diff"] = std::max(res.summary["max_abs_diff"].get<double>(), d);
  }
  res.timing_summary[t.name] = slopes(t, {"cumulative_time_naive", "cumulative_time_fast"}, cfg.warmup);
  return res;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  switch (cfg.experiment) {
    case ExperimentKind::covariance: return run_covariance(cfg);
    case ExperimentKind::quantile: return run_quantile(cfg);
    case ExperimentKind::logistic: return run_logistic(cfg);
    case ExperimentKind::bench: return run_bench(cfg);
  }
  throw ConfigError("unknown experiment");
}

void write_table(std::ostream& out, const Table& table, bool timing) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < table.columns.size(); ++i)
    if (timing || !table.timing[i]) keep.push_back(i);
  const bool labels = !table.label_column.empty();
  for (std::size_t k = 0; k < keep.size(); ++k) {
    if (k) out << ',';
    out << table.columns[keep[k]];
    if (k == 0 && labels) out << ',' << table.label_column;
  }
  out << '\n';
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    for (std::size_t k = 0; k < keep.size(); ++k) {
      if (k) out << ',';
      out << format_number(table.rows[r][keep[k]]);
      if (k == 0 && labels) out << ',' << (r < table.labels.size() ? table.labels[r] : "");
    }
    out << '\n';
  }
}

std::vector<std::string> write_outputs(const ExperimentResult& result) {
  namespace fs = std::filesystem;
  const fs::path dir(result.config.out_dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ConfigError("cannot create output directory '" + dir.string() + "': " + ec.message());

  std::vector<std::string> written;
  nlohmann::json files = nlohmann::json::array();
  for (const Table& t : result.tables) {
    const fs::path p = dir / (t.name + ".csv");
    std::ofstream out(p, std::ios::binary);
    if (!out) throw ConfigError("cannot write '" + p.string() + "'");
    write_table(out, t, result.config.timing);
    files.push_back(p.filename().string());
    written.push_back(p.string());
  }
  nlohmann::json manifest = {{"version", kVersion},
                             {"experiment", std::string(to_string(result.config.experiment))},
                             {"seed", result.config.seed},
                             {"config", to_json(result.config)},
                             {"files", files},
                             {"summary", result.summary}};
  if (result.config.timing) manifest["timing"] = result.timing_summary;
  const fs::path mp = dir / "manifest.json";
  std::ofstream out(mp, std::ios::binary);
  if (!out) throw ConfigError("cannot write '" + mp.string() + "'");
  out << manifest.dump(2) << '\n';
  written.push_back(mp.string());
  return written;
}

}  // namespace ewmm
