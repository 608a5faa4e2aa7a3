// ewmm: runs the streaming-estimation experiments and writes plot-ready CSVs.
//
// Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.

#include <cstdio>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "ewmm/errors.hpp"
#include "ewmm/experiments.hpp"

namespace {

struct Flags {
  std::string config;
  std::string input;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  bool compare = false;
  bool no_timing = false;
  std::string tail_mode;
  double half_life = 0.0;
  int window = 0;
  int tail_window = -1;
  int probes = -1;
};

ewmm::ExperimentConfig build_config(ewmm::ExperimentKind kind, const Flags& f, CLI::App& sub) {
  ewmm::ExperimentConfig cfg = ewmm::default_config(kind);
  if (!f.config.empty()) {
    std::ifstream in(f.config);
    if (!in) throw ewmm::ConfigError("cannot open config '" + f.config + "'");
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw ewmm::ConfigError("config '" + f.config + "': " + e.what());
    }
    if (j.contains("experiment") && j["experiment"] != std::string(ewmm::to_string(kind))) {
      throw ewmm::ConfigError("config is for experiment '" + j["experiment"].dump() + "', not '" +
                              std::string(ewmm::to_string(kind)) + "'");
    }
    ewmm::apply_json(cfg, j);
  }
  // Command-line flags override the config file.
  if (sub.count("--input")) cfg.input = f.input;
  if (sub.count("--out")) cfg.out_dir = f.out;
  if (sub.count("--seed")) cfg.seed = f.seed;
  if (f.compare) cfg.compare = true;
  if (f.no_timing) cfg.timing = false;
  if (sub.count("--tail-mode")) cfg.tail_mode = ewmm::tail_mode_from_string(f.tail_mode);
  if (sub.count("--half-life")) cfg.half_life = f.half_life;
  if (sub.count("--window")) cfg.window = f.window;
  if (sub.count("--tail-window")) cfg.tail_window = f.tail_window;
  if (sub.count("--probes")) cfg.probes = f.probes;
  ewmm::validate(cfg);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Exponentially weighted moving models: experiment runner"};
  app.set_version_flag("--version", ewmm::kVersion);
  app.require_subcommand(1);

  Flags f;
  std::vector<std::pair<ewmm::ExperimentKind, CLI::App*>> subs;
  const std::pair<ewmm::ExperimentKind, const char*> kinds[] = {
      {ewmm::ExperimentKind::covariance, "Sparse inverse covariance over a lambda grid"},
      {ewmm::ExperimentKind::quantile, "Rolling quantiles: exact vs fitted-tail finite memory"},
      {ewmm::ExperimentKind::logistic, "Time-varying logistic regression: exact vs finite memory"},
      {ewmm::ExperimentKind::bench, "Cumulative timing of naive vs fixed-cost strategies"},
  };
  for (const auto& [kind, desc] : kinds) {
    CLI::App* s = app.add_subcommand(std::string(ewmm::to_string(kind)), desc);
    s->add_option("--config", f.config, "JSON experiment config");
    s->add_option("--input", f.input, "CSV input (header row, date column first)");
    s->add_option("--out", f.out, "Output directory");
    s->add_option("--seed", f.seed, "Random seed");
    s->add_flag("--compare", f.compare, "Also run the naive strategy (covariance)");
    s->add_flag("--no-timing", f.no_timing, "Omit timing columns for deterministic output");
    s->add_option("--tail-mode", f.tail_mode, "Tail surrogate")->check(CLI::IsMember({"taylor", "fitted"}));
    s->add_option("--half-life", f.half_life, "Half-life H");
    s->add_option("--window", f.window, "Window M");
    s->add_option("--tail-window", f.tail_window, "Tail window M_tail");
    s->add_option("--probes", f.probes, "Probe count L");
    subs.emplace_back(kind, s);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    for (auto& [kind, s] : subs) {
      if (!s->parsed()) continue;
      const ewmm::ExperimentConfig cfg = build_config(kind, f, *s);
      const ewmm::ExperimentResult res = ewmm::run_experiment(cfg);
      for (const auto& p : ewmm::write_outputs(res)) std::cout << p << '\n';
    }
  } catch (const ewmm::ConfigError& e) {
    std::cerr << "ewmm: config error: " << e.what() << '\n';
    return 2;
  } catch (const ewmm::DataError& e) {
    std::cerr << "ewmm: data error: " << e.what() << '\n';
    return 3;
  } catch (const ewmm::NumericalFailure& e) {
    std::cerr << "ewmm: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const ewmm::NotPositiveDefinite& e) {
    std::cerr << "ewmm: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const ewmm::DomainSamplingError& e) {
    std::cerr << "ewmm: numerical failure: " << e.what() << '\n';
    return 4;
  } catch (const std::invalid_argument& e) {
    std::cerr << "ewmm: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "ewmm: numerical failure: " << e.what() << '\n';
    return 4;
  }
  return 0;
}
