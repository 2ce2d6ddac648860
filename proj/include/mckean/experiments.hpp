#pragma once

#include "config.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "linking.hpp"
#include "metrics.hpp"
#include "parallel.hpp"
#include "particles.hpp"
#include "sampling.hpp"
#include "testcase.hpp"

#include <json.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#ifndef MCKEAN_GIT_REVISION
#define MCKEAN_GIT_REVISION "unknown"
#endif

namespace mckean {

//! One long-format output record; replica = -1 marks an aggregate.
struct Row
{
  std::string mode;
  std::size_t d = 0;
  std::size_t N = 0;
  double eps = 0.0;
  std::size_t n = 0;
  long replica = -1;
  std::string metric;
  double value = 0.0;
  std::uint64_t seed = 0;

  bool operator==(const Row&) const = default;
};

struct SweepResult
{
  std::vector<Row> rows;
  std::size_t excluded_points = 0;
  std::vector<std::string> errors;

  //! Value of the first aggregate row matching (metric, N, eps, n); NaN
  //! when absent. `n = 0` matches any n.
  double aggregate(const std::string& metric,
                   std::size_t N,
                   double eps,
                   std::size_t n = 0) const
  {
    for (const Row& r : rows)
      if (r.replica == -1 && r.metric == metric && r.N == N && r.eps == eps &&
          (n == 0 || r.n == n))
        return r.value;
    return std::numeric_limits<double>::quiet_NaN();
  }
};

inline constexpr const char* csv_header = "mode,d,N,eps,n,replica,metric,value,seed";

//! Shortest round-trip decimal form; "nan" / "inf" / "-inf" otherwise.
inline std::string
format_number(double v)
{
  if (std::isnan(v))
    return "nan";
  if (std::isinf(v))
    return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline void
write_csv(std::ostream& os, const std::vector<Row>& rows)
{
  os << csv_header << '\n';
  for (const Row& r : rows)
    os << r.mode << ',' << r.d << ',' << r.N << ',' << format_number(r.eps) << ','
       << r.n << ',' << r.replica << ',' << r.metric << ','
       << format_number(r.value) << ',' << r.seed << '\n';
}

//! Mass of the particle density by trapezoid quadrature on a grid of
//! spacing eps/10 covering the particles plus 12 eps (d = 1 only).
template<CoefficientBundle C>
double
particle_mass_1d(const ParticleSystem<C>& system, const ParticleEnsemble& e)
{
  if (e.dim() != 1)
    throw Unsupported("particle_mass_1d is only defined for d = 1");
  const double eps = system.kernel().bandwidth();
  const double lo = e.positions.minCoeff() - 12.0 * eps;
  const double hi = e.positions.maxCoeff() + 12.0 * eps;
  const auto intervals = static_cast<Eigen::Index>(std::ceil((hi - lo) / (eps / 10.0)));
  const double h = (hi - lo) / static_cast<double>(intervals);
  PointSet grid(intervals + 1, 1);
  for (Eigen::Index i = 0; i <= intervals; ++i)
    grid(i, 0) = lo + h * static_cast<double>(i);
  const std::vector<double> v = system.eval_density(e, grid);
  double sum = 0.5 * (v.front() + v.back());
  for (std::size_t i = 1; i + 1 < v.size(); ++i)
    sum += v[i];
  return sum * h;
}

//! Per-replica outcome of one (N, eps) cell: the particle density at the
//! evaluation points at time T.
struct ReplicaOutcome
{
  std::vector<double> values;
  double mass = std::numeric_limits<double>::quiet_NaN();
  std::string error;
};

struct CellOutcome
{
  std::size_t N = 0;
  double eps = 0.0;
  std::vector<ReplicaOutcome> replicas;

  bool ok() const
  {
    return std::all_of(replicas.begin(), replicas.end(),
                       [](const ReplicaOutcome& r) { return r.error.empty(); });
  }
};

//! Shared state of a variance / bias sweep: the test case, its initial
//! sampler, and one set of evaluation points drawn from v(0, .) for every
//! cell.
class SweepContext
{
public:
  explicit SweepContext(const ExperimentConfig& config)
    : config_(validated(config))
    , tc_(std::make_unique<TestCase>(config.make_test_case()))
    , sampler_(std::make_unique<RejectionSampler>(tc_->initial_sampler()))
  {
    const PointSet drawn =
      sampler_->sample(config_.seed, 0, StreamPurpose::evaluation_points, config_.Q);
    std::vector<double> v0(config_.Q);
    std::vector<double> y(config_.d);
    for (std::size_t j = 0; j < config_.Q; ++j) {
      row_to(drawn, j, y);
      v0[j] = tc_->initial_density(y);
    }
    const double vmax = *std::max_element(v0.begin(), v0.end());
    std::vector<std::size_t> keep;
    for (std::size_t j = 0; j < config_.Q; ++j)
      if (v0[j] >= config_.exclusion_threshold * vmax && v0[j] > 0.0)
        keep.push_back(j);
    excluded_ = config_.Q - keep.size();
    if (keep.empty())
      throw ConfigError("exclusion_threshold", "every evaluation point was excluded");
    points_.resize(static_cast<Eigen::Index>(keep.size()),
                   static_cast<Eigen::Index>(config_.d));
    for (std::size_t q = 0; q < keep.size(); ++q) {
      points_.row(static_cast<Eigen::Index>(q)) =
        drawn.row(static_cast<Eigen::Index>(keep[q]));
      row_to(points_, q, y);
      initial_.push_back(v0[keep[q]]);
      exact_.push_back(tc_->exact_solution(config_.T, y));
    }
  }

  const ExperimentConfig& config() const { return config_; }
  const TestCase& test_case() const { return *tc_; }
  const RejectionSampler& sampler() const { return *sampler_; }
  const PointSet& eval_points() const { return points_; }
  const std::vector<double>& exact() const { return exact_; }
  const std::vector<double>& initial() const { return initial_; }
  std::size_t excluded_points() const { return excluded_; }
  //! Mass is checked when the tilt vanishes (conservative case) in d = 1.
  bool reports_mass() const { return config_.d == 1 && tc_->A().isZero(0.0); }

  ReplicaOutcome run_replica(std::size_t N, double eps, std::uint32_t replica) const
  {
    ReplicaOutcome out;
    try {
      const ParticleSystem<TestCase> sys(*tc_,
                                         Kernel(config_.d, eps),
                                         GridSchedule(config_.T, config_.n),
                                         config_.seed,
                                         replica);
      const ParticleEnsemble e = sys.run(initial_draw(), N);
      out.values = sys.eval_density(e, points_);
      if (reports_mass())
        out.mass = particle_mass_1d(sys, e);
    } catch (const BlowUp& err) {
      out.error = err.what();
    }
    return out;
  }

  //! Runs every (cell, replica) pair on a worker pool; results are gathered
  //! by key.
  std::vector<CellOutcome> run_cells(const std::vector<std::pair<std::size_t, double>>& cells,
                                     std::size_t threads) const
  {
    std::vector<CellOutcome> out(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) {
      out[c].N = cells[c].first;
      out[c].eps = cells[c].second;
      out[c].replicas.resize(config_.M);
    }
    parallel_tasks(cells.size() * config_.M, threads, [&](std::size_t task) {
      const std::size_t c = task / config_.M;
      const std::size_t r = task % config_.M;
      out[c].replicas[r] =
        run_replica(cells[c].first, cells[c].second, static_cast<std::uint32_t>(r));
    });
    return out;
  }

  //! Replica x point matrix of a successful cell.
  static Eigen::MatrixXd values_matrix(const CellOutcome& cell)
  {
    const auto M = static_cast<Eigen::Index>(cell.replicas.size());
    const auto Q = static_cast<Eigen::Index>(cell.replicas.front().values.size());
    Eigen::MatrixXd v(M, Q);
    for (Eigen::Index i = 0; i < M; ++i)
      for (Eigen::Index j = 0; j < Q; ++j)
        v(i, j) = cell.replicas[static_cast<std::size_t>(i)].values[static_cast<std::size_t>(j)];
    return v;
  }

  //! Rows for one cell: per-replica mise (and mass), then aggregates.
  std::vector<Row> cell_rows(const std::string& mode, const CellOutcome& cell) const
  {
    std::vector<Row> rows;
    auto row = [&](long replica, const std::string& metric, double value) {
      rows.push_back(
        { mode, config_.d, cell.N, cell.eps, config_.n, replica, metric, value, config_.seed });
    };
    if (!cell.ok()) {
      for (std::size_t r = 0; r < cell.replicas.size(); ++r)
        if (!cell.replicas[r].error.empty())
          row(static_cast<long>(r), "error", std::numeric_limits<double>::quiet_NaN());
      return rows;
    }
    const Eigen::MatrixXd values = values_matrix(cell);
    const MiseEstimate est = mise(values, exact_, initial_, config_.T);
    for (std::size_t r = 0; r < cell.replicas.size(); ++r) {
      row(static_cast<long>(r), "mise", est.per_replica[r]);
      if (reports_mass())
        row(static_cast<long>(r), "mass", cell.replicas[r].mass);
    }
    if (values.rows() >= 2) {
      const BiasVariance bv = bias_variance(values, exact_, initial_);
      row(-1, "variance", bv.variance);
      row(-1, "bias_sq", bv.bias_sq);
      row(-1, "bias_sq_se", bv.bias_sq_se);
      row(-1, "mise", bv.mise);
    } else {
      row(-1, "mise", est.value);
    }
    row(-1, "excluded_points", static_cast<double>(excluded_));
    return rows;
  }

  //! Draws one point of v(0, .) from a keyed stream.
  std::function<void(RngStream&, std::span<double>)> initial_draw() const
  {
    return [s = sampler_.get()](RngStream& rng, std::span<double> x) { s->draw(rng, x); };
  }

private:
  static const ExperimentConfig& validated(const ExperimentConfig& c)
  {
    c.validate();
    return c;
  }

  static void row_to(const PointSet& p, std::size_t i, std::vector<double>& y)
  {
    for (std::size_t c = 0; c < y.size(); ++c)
      y[c] = p(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
  }

  ExperimentConfig config_;
  std::unique_ptr<TestCase> tc_;
  std::unique_ptr<RejectionSampler> sampler_;
  PointSet points_;
  std::vector<double> initial_;
  std::vector<double> exact_;
  std::size_t excluded_ = 0;
};

inline std::size_t
resolve_threads(const ExperimentConfig& c)
{
  return c.threads == 0 ? default_thread_count() : c.threads;
}

//! Every (N, eps) cell with M replicas; variance, squared bias and MISE at T.
inline SweepResult
run_variance_bias_sweep(const ExperimentConfig& config)
{
  if (config.mode != Mode::variance_sweep && config.mode != Mode::bias_sweep)
    throw ConfigError("mode", "variance/bias sweep needs mode variance-sweep or bias-sweep");
  const SweepContext ctx(config);
  std::vector<std::pair<std::size_t, double>> cells;
  for (std::size_t N : config.N)
    for (double e : config.eps)
      cells.emplace_back(N, e);
  const std::vector<CellOutcome> outcomes = ctx.run_cells(cells, resolve_threads(config));
  SweepResult res;
  res.excluded_points = ctx.excluded_points();
  for (const CellOutcome& cell : outcomes) {
    const auto rows = ctx.cell_rows(to_string(config.mode), cell);
    res.rows.insert(res.rows.end(), rows.begin(), rows.end());
    for (std::size_t r = 0; r < cell.replicas.size(); ++r)
      if (!cell.replicas[r].error.empty())
        res.errors.push_back("N=" + std::to_string(cell.N) + " eps=" +
                             format_number(cell.eps) + " replica=" + std::to_string(r) +
                             ": " + cell.replicas[r].error);
  }
  return res;
}

//! Coupled coarse/fine runs for every coarse step count in n_list:
//! strong error (1/N) sum_i max_k |fine - coarse|^2 per replica.
inline SweepResult
run_dt_sweep(const ExperimentConfig& config)
{
  config.validate();
  const TestCase tc = config.make_test_case();
  const RejectionSampler sampler = tc.initial_sampler();
  auto draw = [&sampler](RngStream& rng, std::span<double> x) { sampler.draw(rng, x); };
  struct Cell
  {
    std::size_t N;
    double eps;
    std::size_t n;
  };
  std::vector<Cell> cells;
  for (std::size_t N : config.N)
    for (double e : config.eps)
      for (std::size_t n : config.n_list)
        cells.push_back({ N, e, n });
  std::vector<double> err(cells.size() * config.M, 0.0);
  std::vector<std::string> msg(err.size());
  parallel_tasks(err.size(), resolve_threads(config), [&](std::size_t task) {
    const Cell& c = cells[task / config.M];
    const auto r = static_cast<std::uint32_t>(task % config.M);
    try {
      const RefinementPair pair = coupled_refinement_run(
        tc, Kernel(config.d, c.eps), GridSchedule(config.T, c.n), draw, c.N, config.seed, r);
      err[task] = refinement_strong_error(pair);
    } catch (const BlowUp& e) {
      msg[task] = e.what();
    }
  });
  SweepResult res;
  const std::string mode = to_string(Mode::dt_sweep);
  for (std::size_t ci = 0; ci < cells.size(); ++ci) {
    const Cell& c = cells[ci];
    bool failed = false;
    double sum = 0.0, sq = 0.0;
    for (std::size_t r = 0; r < config.M; ++r) {
      const std::size_t task = ci * config.M + r;
      if (!msg[task].empty()) {
        failed = true;
        res.rows.push_back({ mode, config.d, c.N, c.eps, c.n, static_cast<long>(r), "error",
                             std::numeric_limits<double>::quiet_NaN(), config.seed });
        res.errors.push_back("n=" + std::to_string(c.n) + " replica=" + std::to_string(r) +
                             ": " + msg[task]);
        continue;
      }
      res.rows.push_back(
        { mode, config.d, c.N, c.eps, c.n, static_cast<long>(r), "strong_mse", err[task], config.seed });
      sum += err[task];
      sq += err[task] * err[task];
    }
    if (failed)
      continue;
    const double M = static_cast<double>(config.M);
    const double mean = sum / M;
    const double se = config.M > 1 ? std::sqrt(std::max(0.0, sq / M - mean * mean) / (M - 1.0)) : 0.0;
    res.rows.push_back({ mode, config.d, c.N, c.eps, c.n, -1, "strong_mse", mean, config.seed });
    res.rows.push_back({ mode, config.d, c.N, c.eps, c.n, -1, "strong_mse_se", se, config.seed });
    res.rows.push_back({ mode, config.d, c.N, c.eps, c.n, -1, "dt", config.T / static_cast<double>(c.n), config.seed });
  }
  return res;
}

//! Self-convergence against a reference system of N_ref particles. The
//! system with N particles reuses the first N initial-position and Brownian
//! streams of the reference, so particle i is coupled to reference
//! particle i. Reports (1/N) sum_i max_k |xi^N_i - xi^ref_i|^2 and the
//! largest density difference at T over the evaluation points.
inline SweepResult
run_chaos_study(const ExperimentConfig& config)
{
  config.validate();
  for (std::size_t N : config.N)
    if (N > config.N_ref)
      throw InvalidInput("chaos study: N_ref must be at least every N");
  const SweepContext ctx(config);
  const std::size_t cells = config.eps.size() * config.M;
  const std::size_t K = config.N.size();
  std::vector<double> path_err(cells * K), dens_err(cells * K);
  std::vector<std::string> msg(cells);
  parallel_tasks(cells, resolve_threads(config), [&](std::size_t task) {
    const double eps = config.eps[task / config.M];
    const auto r = static_cast<std::uint32_t>(task % config.M);
    try {
      const ParticleSystem<TestCase> sys(ctx.test_case(), Kernel(config.d, eps),
                                         GridSchedule(config.T, config.n), config.seed, r);
      const ParticleEnsemble ref = sys.run(ctx.initial_draw(), config.N_ref, true);
      const std::vector<double> ref_density = sys.eval_density(ref, ctx.eval_points());
      for (std::size_t q = 0; q < K; ++q) {
        const std::size_t N = config.N[q];
        const ParticleEnsemble e = sys.run(ctx.initial_draw(), N, true);
        Eigen::ArrayXd sup = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(N));
        for (std::size_t k = 0; k < e.trajectory.size(); ++k)
          sup = sup.max((e.trajectory[k] - ref.trajectory[k].topRows(static_cast<Eigen::Index>(N)))
                          .rowwise()
                          .squaredNorm()
                          .array());
        path_err[task * K + q] = sup.mean();
        const std::vector<double> dens = sys.eval_density(e, ctx.eval_points());
        double worst = 0.0;
        for (std::size_t j = 0; j < dens.size(); ++j)
          worst = std::max(worst, std::abs(dens[j] - ref_density[j]));
        dens_err[task * K + q] = worst;
      }
    } catch (const BlowUp& e) {
      msg[task] = e.what();
    }
  });

  SweepResult res;
  res.excluded_points = ctx.excluded_points();
  const std::string mode = to_string(Mode::chaos_study);
  for (std::size_t ei = 0; ei < config.eps.size(); ++ei) {
    const double eps = config.eps[ei];
    bool failed = false;
    for (std::size_t r = 0; r < config.M; ++r) {
      const std::size_t task = ei * config.M + r;
      if (!msg[task].empty()) {
        failed = true;
        res.rows.push_back({ mode, config.d, config.N_ref, eps, config.n, static_cast<long>(r),
                             "error", std::numeric_limits<double>::quiet_NaN(), config.seed });
        res.errors.push_back("eps=" + format_number(eps) + " replica=" + std::to_string(r) +
                             ": " + msg[task]);
      }
    }
    if (failed)
      continue;
    for (std::size_t q = 0; q < K; ++q) {
      double ps = 0.0, ds = 0.0;
      for (std::size_t r = 0; r < config.M; ++r) {
        const std::size_t idx = (ei * config.M + r) * K + q;
        res.rows.push_back({ mode, config.d, config.N[q], eps, config.n, static_cast<long>(r),
                             "path_mse", path_err[idx], config.seed });
        res.rows.push_back({ mode, config.d, config.N[q], eps, config.n, static_cast<long>(r),
                             "density_sup_err", dens_err[idx], config.seed });
        ps += path_err[idx];
        ds += dens_err[idx];
      }
      const double M = static_cast<double>(config.M);
      res.rows.push_back({ mode, config.d, config.N[q], eps, config.n, -1, "path_mse", ps / M, config.seed });
      res.rows.push_back({ mode, config.d, config.N[q], eps, config.n, -1, "density_sup_err", ds / M, config.seed });
    }
  }
  return res;
}

//! Summary rows of the two-solution demo; the trajectories themselves are
//! in `trajectories`.
struct DemoOutput
{
  SweepResult summary;
  NonuniquenessResult trajectories;
};

inline DemoOutput
run_demo(const ExperimentConfig& config)
{
  config.validate();
  DemoOutput out;
  out.trajectories =
    nonuniqueness_demo(config.demo.alpha, config.demo.C, config.demo.t_max, config.demo.dt);
  const auto& tr = out.trajectories;
  const std::string mode = to_string(Mode::demo);
  const std::size_t steps = tr.times.size() - 1;
  auto row = [&](const std::string& metric, double v) {
    out.summary.rows.push_back({ mode, 1, 0, 0.0, steps, -1, metric, v, config.seed });
  };
  row("max_abs_diff", tr.max_abs_diff);
  row("phi2_at_t_max", tr.phi2.back());
  row("residual_phi1", tr.residual1);
  row("residual_phi2", tr.residual2);
  row("residual_bound", 5.0 * config.demo.dt);
  return out;
}

//! t, phi1, phi2 table of the demo.
inline void
write_demo_trajectories(std::ostream& os, const NonuniquenessResult& r)
{
  os << "t,phi1,phi2\n";
  for (std::size_t k = 0; k < r.times.size(); ++k)
    os << format_number(r.times[k]) << ',' << format_number(r.phi1[k]) << ','
       << format_number(r.phi2[k]) << '\n';
}

//! Dispatches on config.mode.
inline SweepResult
run_experiment(const ExperimentConfig& config)
{
  switch (config.mode) {
    case Mode::variance_sweep:
    case Mode::bias_sweep:
      return run_variance_bias_sweep(config);
    case Mode::dt_sweep:
      return run_dt_sweep(config);
    case Mode::chaos_study:
      return run_chaos_study(config);
    case Mode::demo:
      return run_demo(config).summary;
  }
  throw ConfigError("mode", "unhandled mode");
}

//! Sidecar written next to every CSV as `<out>.meta.json`.
inline nlohmann::json
metadata(const ExperimentConfig& config,
         const SweepResult& result,
         const std::string& command,
         double wall_seconds,
         std::size_t threads)
{
  return nlohmann::json{
    { "command", command },
    { "config", config.to_json() },
    { "seed", config.seed },
    { "git_revision", MCKEAN_GIT_REVISION },
    { "wall_time_seconds", wall_seconds },
    { "threads", threads },
    { "csv_columns", csv_header },
    { "variance_convention", "1/M (population); mise = variance + bias_sq" },
    { "time_integral_rule", "left endpoint" },
    { "excluded_eval_points", result.excluded_points },
    { "errors", result.errors },
  };
}

} // namespace mckean
