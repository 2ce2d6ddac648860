// Command-line front end: run sweeps, studies, the demo and the invariant
// checks; every data subcommand writes a CSV plus <out>.meta.json.

#include "invariant_checks.hpp"

#include <mckean/mckean.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

namespace {

struct CommonOptions
{
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> threads;
};

void
add_common(CLI::App* app, CommonOptions& o)
{
  app->add_option("--config", o.config, "JSON experiment config (defaults when omitted)");
  app->add_option("--out", o.out, "output CSV path");
  app->add_option("--seed", o.seed, "master seed (overrides the config)");
  app->add_option("--threads", o.threads, "worker threads (overrides config and MCKEAN_THREADS)");
}

mckean::ExperimentConfig
load(const CommonOptions& o)
{
  mckean::ExperimentConfig c =
    o.config.empty() ? mckean::ExperimentConfig{} : mckean::ExperimentConfig::from_file(o.config);
  if (o.seed)
    c.seed = *o.seed;
  if (o.threads) {
    if (*o.threads == 0)
      throw mckean::ConfigError("--threads", "must be at least 1");
    c.threads = *o.threads;
  }
  return c;
}

std::ofstream
open_out(const std::string& path)
{
  std::ofstream os(path, std::ios::binary);
  if (!os)
    throw mckean::ConfigError("--out", "cannot write '" + path + "'");
  return os;
}

void
write_outputs(const std::string& command,
              const std::string& path,
              const mckean::ExperimentConfig& c,
              const mckean::SweepResult& r,
              double seconds)
{
  {
    std::ofstream os = open_out(path);
    mckean::write_csv(os, r.rows);
  }
  std::ofstream meta = open_out(path + ".meta.json");
  meta << mckean::metadata(c, r, command, seconds, mckean::resolve_threads(c)).dump(2) << '\n';
  for (const auto& e : r.errors)
    std::cerr << "cell error: " << e << '\n';
  std::cerr << "wrote " << path << " (" << r.rows.size() << " rows)\n";
}

double
seconds_since(std::chrono::steady_clock::time_point start)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

int
run_mode(const std::string& command,
         CommonOptions& o,
         std::optional<mckean::Mode> forced,
         const std::string& trajectory_path)
{
  mckean::ExperimentConfig c = load(o);
  if (forced) {
    const bool sweep_pair = *forced == mckean::Mode::variance_sweep &&
                            c.mode == mckean::Mode::bias_sweep;
    if (!sweep_pair)
      c.mode = *forced;
  }
  if (o.out.empty())
    o.out = mckean::to_string(c.mode) + ".csv";
  const auto start = std::chrono::steady_clock::now();
  mckean::SweepResult result;
  if (c.mode == mckean::Mode::demo) {
    const mckean::DemoOutput demo = mckean::run_demo(c);
    result = demo.summary;
    std::ofstream tr = open_out(o.out + ".trajectory.csv");
    mckean::write_demo_trajectories(tr, demo.trajectories);
  } else {
    result = mckean::run_experiment(c);
  }
  if (!trajectory_path.empty()) {
    const mckean::TestCase tc = c.make_test_case();
    const mckean::RejectionSampler s = tc.initial_sampler();
    const mckean::ParticleSystem<mckean::TestCase> sys(
      tc, mckean::Kernel(c.d, c.eps.front()), mckean::GridSchedule(c.T, c.n), c.seed);
    const mckean::ParticleEnsemble e = sys.run(
      [&s](mckean::RngStream& rng, std::span<double> x) { s.draw(rng, x); }, c.N.front(), true);
    std::ofstream tf = open_out(trajectory_path);
    mckean::write_trajectory(tf, e, c.T, c.seed);
  }
  write_outputs(command, o.out, c, result, seconds_since(start));
  return result.errors.empty() ? 0 : 3;
}

int
run_check(CommonOptions& o)
{
  const mckean::ExperimentConfig c = load(o);
  const auto start = std::chrono::steady_clock::now();
  const auto results = mckean::cli::run_invariant_checks(c.seed);
  bool all = true;
  mckean::SweepResult r;
  for (const auto& res : results) {
    std::cout << (res.passed ? "PASS " : "FAIL ") << res.name << "  value="
              << mckean::format_number(res.value) << "  (" << res.detail << ")\n";
    all = all && res.passed;
    r.rows.push_back({ "check", 1, 0, 0.0, 0, -1, res.name, res.passed ? 1.0 : 0.0, c.seed });
  }
  const double secs = seconds_since(start);
  std::cout << (all ? "all checks passed" : "some checks FAILED") << " in "
            << mckean::format_number(secs) << " s\n";
  if (!o.out.empty())
    write_outputs("check", o.out, c, r, secs);
  return all ? 0 : 1;
}

} // namespace

int
main(int argc, char** argv)
{
  CLI::App app{ "Monte Carlo engine for weighted McKean-Vlasov particle systems" };
  app.require_subcommand(1);

  CommonOptions run_o, sweep_o, chaos_o, dt_o, demo_o, check_o;
  std::string trajectory;
  auto* run = app.add_subcommand("run", "run the mode named in the config");
  add_common(run, run_o);
  run->add_option("--trajectory", trajectory,
                   "also dump replica 0 of the first (N, eps) cell as a binary trajectory");
  auto* sweep = app.add_subcommand("sweep", "variance / bias sweep over (N, eps)");
  add_common(sweep, sweep_o);
  auto* chaos = app.add_subcommand("chaos", "self-convergence study against N_ref");
  add_common(chaos, chaos_o);
  auto* dts = app.add_subcommand("dtsweep", "coupled time-refinement study over n_list");
  add_common(dts, dt_o);
  auto* demo = app.add_subcommand("demo-nonuniqueness", "two solutions of the linking ODE");
  add_common(demo, demo_o);
  auto* chk = app.add_subcommand("check", "fast invariant suite");
  add_common(chk, check_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run)
      return run_mode("run", run_o, std::nullopt, trajectory);
    if (*sweep)
      return run_mode("sweep", sweep_o, mckean::Mode::variance_sweep, "");
    if (*chaos)
      return run_mode("chaos", chaos_o, mckean::Mode::chaos_study, "");
    if (*dts)
      return run_mode("dtsweep", dt_o, mckean::Mode::dt_sweep, "");
    if (*demo)
      return run_mode("demo-nonuniqueness", demo_o, mckean::Mode::demo, "");
    if (*chk)
      return run_check(check_o);
  } catch (const mckean::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
