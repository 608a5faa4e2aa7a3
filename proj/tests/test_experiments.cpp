#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ewmm/catalog.hpp"
#include "ewmm/errors.hpp"
#include "ewmm/experiments.hpp"
#include "oracles.hpp"

using namespace ewmm;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("ewmm_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("log-log slope") {
  std::vector<double> sq, lin;
  for (int t = 1; t <= 500; ++t) {
    sq.push_back(3.0 * t * t);
    lin.push_back(0.5 * t);
  }
  CHECK(loglog_slope(sq, 21, 500) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(loglog_slope(lin, 1, 500) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(loglog_slope(sq, 0, 10), std::invalid_argument);
  CHECK_THROWS_AS(loglog_slope(sq, 10, 501), std::invalid_argument);
  CHECK(rms({3.0, 4.0}) == doctest::Approx(std::sqrt(12.5)));
  CHECK(rms_deviation({1.0, 2.0}, {1.0, 4.0}) == doctest::Approx(std::sqrt(2.0)));
}

TEST_CASE("presets") {
  const auto c = default_config(ExperimentKind::covariance);
  CHECK(c.half_life == 63.0);
  CHECK(c.lambdas == std::vector<double>{2.5, 5.0, 7.5, 10.0});
  const auto q = default_config(ExperimentKind::quantile);
  CHECK(q.half_life == 100.0);
  CHECK(q.window == 100);
  CHECK(q.tail_window == 300);
  CHECK(q.probes == 10);
  CHECK(q.tail_mode == TailMode::fitted);
  CHECK(q.levels == std::vector<double>{0.15, 0.5, 0.85});
  const auto l = default_config(ExperimentKind::logistic);
  CHECK(l.half_life == 150.0);
  CHECK(l.window == 150);
  CHECK(l.lambdas == std::vector<double>{0.5});
  CHECK(l.tail_mode == TailMode::taylor);
  for (auto k : {ExperimentKind::covariance, ExperimentKind::quantile, ExperimentKind::logistic, ExperimentKind::bench}) {
    CHECK_NOTHROW(validate(default_config(k)));
    CHECK(experiment_from_string(to_string(k)) == k);
  }
  CHECK_THROWS_AS(experiment_from_string("portfolio"), ConfigError);
}

TEST_CASE("config JSON") {
  auto c = default_config(ExperimentKind::covariance);
  apply_json(c, nlohmann::json::parse(R"({"experiment":"quantile","H":50,"M":20,"M_tail":40,"L":12,"seed":4})"));
  CHECK(c.experiment == ExperimentKind::quantile);
  CHECK(c.half_life == 50.0);
  CHECK(c.window == 20);
  CHECK(c.tail_window == 40);
  CHECK(c.probes == 12);
  CHECK(c.seed == 4u);
  CHECK(c.tail_mode == TailMode::fitted);

  auto back = default_config(ExperimentKind::covariance);
  apply_json(back, to_json(c));
  CHECK(to_json(back) == to_json(c));

  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"halflife":3})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"H":"long"})")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"([1,2])")), ConfigError);
  CHECK_THROWS_AS(apply_json(c, nlohmann::json::parse(R"({"tail_mode":"cubic"})")), ConfigError);

  auto bad = default_config(ExperimentKind::quantile);
  bad.half_life = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = default_config(ExperimentKind::quantile);
  bad.window = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = default_config(ExperimentKind::covariance);
  bad.lambdas = {-1.0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = default_config(ExperimentKind::quantile);
  bad.tail_mode = TailMode::taylor;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("empty stream produces headers only") {
  auto c = default_config(ExperimentKind::bench);
  c.steps = 0;
  const auto r = run_bench(c);
  REQUIRE(r.tables.size() == 1u);
  CHECK(r.tables[0].rows.empty());
  std::ostringstream out;
  write_table(out, r.tables[0], false);
  CHECK(out.str() == "t,objective_naive,objective_fast,max_abs_diff\n");
}

TEST_CASE("covariance with no penalty is the inverse EWMA covariance") {
  const fs::path dir = scratch("cov0");
  ReturnsStreamSpec rs;
  rs.T = 60;
  rs.n = 2;
  const auto series = gen_returns_stream(rs);
  write_csv_returns((dir / "r.csv").string(), series);

  auto c = default_config(ExperimentKind::covariance);
  c.input = (dir / "r.csv").string();
  c.lambdas = {0.0};
  c.half_life = 10.0;
  c.compare = true;
  const auto res = run_covariance(c);
  const Table& t = res.tables[0];
  CHECK(t.labels.front() == "D00001");

  // Re-run the estimator to read the matrices and compare with the closed form.
  const ModelSpec spec = make_model("sparse-precision", {2, 0.0});
  const auto sched = DecaySchedule::from_halflife(10.0);
  QuadRecursiveEwmm rec(spec.loss, spec.reg, sched);
  std::vector<oracle::Vec> xs;
  for (std::size_t i = 0; i < series.size(); ++i) {
    xs.push_back(series.rows[i]);
    rec.step(Sample::point(series.rows[i]));
    if (i >= 2) {
      const oracle::Mat inv = oracle::ewma_cov(xs, static_cast<long>(i + 1), sched.beta()).inverse();
      CHECK(oracle::rel_err(oracle::Mat(smat(rec.estimate()).dense()), inv) <= 1e-6);
    }
  }
  for (double d : t.values("max_abs_diff")) CHECK(d <= 1e-8);
}

TEST_CASE("covariance sparsity on the checked-in series") {
  auto c = default_config(ExperimentKind::covariance);
  c.input = std::string(EWMM_TEST_DATA_DIR) + "/returns_10.csv";
  c.steps = 300;
  c.timing = false;
  const auto res = run_covariance(c);
  REQUIRE(res.tables.size() == 4u);
  for (const auto& t : res.tables)
    for (double v : t.values("nnz")) CHECK(v <= 45.0);
  CHECK(res.summary["max_offdiag"] == 45);
}

TEST_CASE("quantile experiment on a constant stream") {
  const fs::path dir = scratch("constq");
  {
    std::ofstream f(dir / "c.csv");
    f << "date,x\n";
    for (int t = 1; t <= 120; ++t) f << "d" << t << ",1.75\n";
  }
  auto c = default_config(ExperimentKind::quantile);
  c.input = (dir / "c.csv").string();
  c.window = 10;
  c.tail_window = 20;
  const auto res = run_quantile(c);
  REQUIRE(res.tables.size() == 3u);
  // Exact estimates are c at every level; the fitted-tail approximation is
  // exact at the median only (see the finite-memory engine tests).
  for (const auto& t : res.tables) {
    for (double v : t.values("exact")) CHECK(v == doctest::Approx(1.75).epsilon(1e-9));
  }
  for (double v : res.tables[1].values("approx")) CHECK(v == doctest::Approx(1.75).epsilon(1e-9));
  CHECK(res.summary["levels"][1]["relative_deviation"].get<double>() <= 1e-9);
}

TEST_CASE("logistic estimates align with a fixed direction on noiseless data") {
  LogisticStreamSpec spec;
  spec.T = 700;
  spec.a = Vector::Zero(3);
  spec.b = (Vector(3) << 0.8, -0.5, 0.3).finished();
  spec.period_b = 1e15;
  spec.sigma = 0.0;
  const auto st = gen_logistic_stream(spec);
  const ModelSpec m = make_model("logistic", {3, 1e-6});
  const double H = 150.0;
  NaiveEwmm naive(m.loss, m.reg, DecaySchedule::from_halflife(H));
  for (std::size_t i = 0; i < st.samples.size(); ++i) {
    naive.step(st.samples[i]);
    if (static_cast<double>(i + 1) > 4 * H) {
      const Vector& th = naive.estimate();
      CHECK(th.dot(spec.b) / (th.norm() * spec.b.norm()) >= 0.99);
    }
  }
}

TEST_CASE("outputs are deterministic without timing") {
  auto run = [](const std::string& tagname, int threads) {
    auto c = default_config(ExperimentKind::quantile);
    c.steps = 150;
    c.window = 10;
    c.tail_window = 20;
    c.timing = false;
    c.threads = threads;
    c.out_dir = scratch(tagname).string();
    const auto files = write_outputs(run_quantile(c));
    std::string all;
    for (const auto& f : files) all += slurp(f);
    return std::make_pair(files.size(), all);
  };
  const auto a = run("det_a", 1);
  const auto b = run("det_b", 3);
  CHECK(a.first == 4u);
  CHECK(a.second == b.second);

  const auto manifest = nlohmann::json::parse(slurp(fs::temp_directory_path() / "ewmm_test_det_a" / "manifest.json"));
  CHECK(manifest["version"] == kVersion);
  CHECK(manifest["seed"] == 0);
  CHECK(manifest["experiment"] == "quantile");
  CHECK_FALSE(manifest.contains("timing"));
}

TEST_CASE("sweep parallelism") {
  CHECK(sweep_threads(3) == 3);
  ::setenv("EWMM_THREADS", "2", 1);
  CHECK(sweep_threads(0) == 2);
  ::setenv("EWMM_THREADS", "zero", 1);
  CHECK_THROWS_AS(sweep_threads(0), ConfigError);
  ::unsetenv("EWMM_THREADS");
  CHECK(sweep_threads(0) >= 1);
}

TEST_CASE("bench picks a strategy per model") {
  auto c = default_config(ExperimentKind::bench);
  c.steps = 60;
  c.window = 10;
  c.tail_window = 10;
  c.timing = false;
  for (const char* id : {"ridge", "ewma", "pmf", "gauss-cov"}) {
    c.model = id;
    const auto r = run_bench(c);
    CHECK(r.summary["strategy"] == "quad-recursive");
    // gauss-cov has no minimizer until the covariance has full rank (t > n = 10).
    const auto diff = r.tables[0].values("max_abs_diff");
    for (std::size_t i = 20; i < diff.size(); ++i) CHECK(diff[i] <= 1e-6);
  }
  c.model = "huber";
  CHECK(run_bench(c).summary["strategy"] == "finite-memory-taylor");
  c.model = "pinball";
  CHECK(run_bench(c).summary["strategy"] == "finite-memory-fitted");
  c.model = "nope";
  CHECK_THROWS_AS(run_bench(c), ConfigError);
}

TEST_CASE("data errors surface from experiments") {
  const fs::path dir = scratch("bad");
  {
    std::ofstream f(dir / "bad.csv");
    f << "date,a,b\nd1,1,2\nd2,1,x\n";
  }
  auto c = default_config(ExperimentKind::covariance);
  c.input = (dir / "bad.csv").string();
  try {
    run_covariance(c);
    FAIL("expected a DataError");
  } catch (const DataError& e) {
    CHECK(e.line() == 3u);
    CHECK(std::string(e.what()).find("bad.csv") != std::string::npos);
  }
}
