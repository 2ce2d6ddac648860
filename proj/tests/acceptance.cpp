// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// criterion fails. Optional argument: directory for the CSVs behind the
// rate fits.

#include <mckean/mckean.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

using namespace mckean;

namespace {

struct Verdict
{
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<Verdict> verdicts;
std::filesystem::path out_dir;

void
report(const std::string& name, bool passed, const std::string& detail)
{
  verdicts.push_back({ name, passed, detail });
  std::cout << (passed ? "PASS " : "FAIL ") << name << ": " << detail << std::endl;
}

std::string
fmt(double v)
{
  std::ostringstream os;
  os.precision(4);
  os << v;
  return os.str();
}

std::string
list(const std::vector<double>& v)
{
  std::string s = "[";
  for (std::size_t i = 0; i < v.size(); ++i)
    s += (i ? ", " : "") + fmt(v[i]);
  return s + "]";
}

void
save(const std::string& file, const std::vector<Row>& rows)
{
  if (out_dir.empty())
    return;
  std::ofstream os(out_dir / file);
  write_csv(os, rows);
}

double
seconds_since(std::chrono::steady_clock::time_point t0)
{
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

//! Desk protocol shared by the three kernel-rate criteria.
ExperimentConfig
desk_config()
{
  ExperimentConfig c;
  c.d = 1;
  c.m = 1.5;
  c.A = Eigen::MatrixXd::Constant(1, 1, 2.0 / 3.0);
  c.T = 1.0;
  c.n = 10;
  c.M = 50;
  c.Q = 1000;
  c.seed = 1;
  return c;
}

// ---------------------------------------------------------------------------
// Kernel-rate criteria: variance in N, variance in eps, bias in eps.

void
kernel_rate_criteria()
{
  const auto t0 = std::chrono::steady_clock::now();
  const ExperimentConfig cfg = desk_config();
  const SweepContext ctx(cfg);
  const std::vector<std::size_t> N_list{ 256, 512, 1024, 2048, 4096 };
  const std::vector<double> var_eps{ 0.2, 0.3, 0.45, 0.65, 1.0 };
  const std::vector<double> bias_eps{ 0.25, 0.35, 0.5, 0.7, 1.0 };

  std::vector<std::pair<std::size_t, double>> cells;
  auto add = [&cells](std::size_t N, double e) {
    if (std::find(cells.begin(), cells.end(), std::make_pair(N, e)) == cells.end())
      cells.emplace_back(N, e);
  };
  for (std::size_t N : N_list)
    add(N, 0.5);
  for (double e : var_eps)
    add(4096, e);
  for (double e : bias_eps)
    add(4096, e);
  const std::vector<CellOutcome> outcomes = ctx.run_cells(cells, resolve_threads(cfg));

  std::map<std::pair<std::size_t, double>, BiasVariance> bv;
  std::vector<Row> rows;
  bool any_error = false;
  for (const CellOutcome& cell : outcomes) {
    const auto r = ctx.cell_rows("variance-sweep", cell);
    rows.insert(rows.end(), r.begin(), r.end());
    if (!cell.ok()) {
      any_error = true;
      continue;
    }
    bv[{ cell.N, cell.eps }] =
      bias_variance(SweepContext::values_matrix(cell), ctx.exact(), ctx.initial());
  }
  save("kernel_rates.csv", rows);
  std::cout << "# kernel-rate sweep: " << cells.size() << " cells, M=" << cfg.M
            << ", Q kept=" << ctx.eval_points().rows() << " (excluded "
            << ctx.excluded_points() << "), " << fmt(seconds_since(t0)) << " s" << std::endl;
  auto missing = [&](std::size_t N, double e) { return bv.find({ N, e }) == bv.end(); };

  {
    std::vector<double> xs, ys;
    bool ok = !any_error;
    for (std::size_t N : N_list) {
      if (missing(N, 0.5)) {
        ok = false;
        continue;
      }
      xs.push_back(static_cast<double>(N));
      ys.push_back(bv[{ N, 0.5 }].variance);
    }
    if (!ok || xs.size() < 3) {
      report("variance_in_N_rate", false, "replica failures left too few cells");
    } else {
      const SlopeFit f = loglog_slope(xs, ys);
      report("variance_in_N_rate", f.slope >= -1.2 && f.slope <= -0.8 && f.r2 >= 0.95,
             "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2) +
               " (need slope in [-1.2,-0.8], r2>=0.95); V=" + list(ys));
    }
  }
  {
    std::vector<double> xs, ys;
    for (double e : var_eps)
      if (!missing(4096, e)) {
        xs.push_back(e);
        ys.push_back(bv[{ 4096, e }].variance);
      }
    if (xs.size() != var_eps.size()) {
      report("variance_in_eps_rate", false, "replica failures left missing cells");
    } else {
      const SlopeFit f = loglog_slope(xs, ys);
      report("variance_in_eps_rate", f.slope >= -1.3 && f.slope <= -0.7,
             "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2) + " (need [-1.3,-0.7]); V=" + list(ys));
    }
  }
  {
    std::vector<double> xs, ys, dropped;
    for (double e : bias_eps) {
      if (missing(4096, e))
        continue;
      const BiasVariance& b = bv[{ 4096, e }];
      if (b.bias_sq < 3.0 * b.bias_sq_se) {
        dropped.push_back(e);
        continue;
      }
      xs.push_back(e);
      ys.push_back(b.bias_sq);
    }
    if (xs.size() < 3) {
      report("bias_rate", false,
             "fewer than 3 bias-dominated points; excluded eps=" + list(dropped));
    } else {
      const SlopeFit f = loglog_slope(xs, ys);
      report("bias_rate", f.slope >= 3.2 && f.slope <= 4.8,
             "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2) + " (need [3.2,4.8]) over eps=" +
               list(xs) + " B2=" + list(ys) + "; excluded (B2 < 3 se) eps=" + list(dropped));
    }
  }
}

// ---------------------------------------------------------------------------

void
dt_rate_criterion()
{
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = desk_config();
  c.mode = Mode::dt_sweep;
  c.N = { 1024 };
  c.eps = { 0.5 };
  c.M = 20;
  c.n_list = { 8, 16, 32, 64 };
  const SweepResult r = run_dt_sweep(c);
  save("dt_rate.csv", r.rows);
  std::vector<double> xs, ys;
  for (std::size_t n : c.n_list) {
    const double v = r.aggregate("strong_mse", 1024, 0.5, n);
    if (std::isnan(v))
      continue;
    xs.push_back(c.T / static_cast<double>(n));
    ys.push_back(v);
  }
  if (!r.errors.empty() || xs.size() != c.n_list.size()) {
    report("dt_rate", false, "replica failures: " + std::to_string(r.errors.size()));
    return;
  }
  const SlopeFit f = loglog_slope(xs, ys);
  report("dt_rate", f.slope >= 0.7 && f.slope <= 1.3,
         "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2) + " (need [0.7,1.3]); MSE=" + list(ys) +
           " at dt=" + list(xs) + "; " + fmt(seconds_since(t0)) + " s");
}

void
chaos_rate_criterion()
{
  const auto t0 = std::chrono::steady_clock::now();
  ExperimentConfig c = desk_config();
  c.mode = Mode::chaos_study;
  c.N = { 128, 256, 512, 1024, 2048, 4096 };
  c.N_ref = 8192;
  c.eps = { 0.5 };
  c.M = 10;
  const SweepResult r = run_chaos_study(c);
  save("chaos_rate.csv", r.rows);
  std::vector<double> xs, ys;
  for (std::size_t N : c.N) {
    xs.push_back(static_cast<double>(N));
    ys.push_back(r.aggregate("path_mse", N, 0.5));
  }
  if (!r.errors.empty() || std::any_of(ys.begin(), ys.end(), [](double v) { return std::isnan(v); })) {
    report("chaos_rate", false, "replica failures: " + std::to_string(r.errors.size()));
    return;
  }
  const SlopeFit f = loglog_slope(xs, ys);
  report("chaos_rate", f.slope >= -1.3 && f.slope <= -0.7,
         "slope=" + fmt(f.slope) + " r2=" + fmt(f.r2) + " (need [-1.3,-0.7]); path MSE=" +
           list(ys) + "; M=" + std::to_string(c.M) + ", eps=0.5, " + fmt(seconds_since(t0)) +
           " s");
}

void
conservative_mass_criterion()
{
  ExperimentConfig c = desk_config();
  c.A = Eigen::MatrixXd::Zero(1, 1);
  c.eps = { 0.5 };
  const SweepResult r = run_variance_bias_sweep(c);
  save("conservative_mass.csv", r.rows);
  double worst = 0.0;
  std::size_t count = 0;
  for (const Row& row : r.rows)
    if (row.metric == "mass") {
      ++count;
      worst = std::max(worst, std::abs(row.value - 1.0));
    }
  const std::size_t expected = c.N.size() * c.M;
  report("conservative_mass", r.errors.empty() && count == expected && worst <= 1e-6,
         "max |mass-1|=" + fmt(worst) + " over " + std::to_string(count) + " of " +
           std::to_string(expected) + " replicas (need <= 1e-6)");
}

// ---------------------------------------------------------------------------
// Picard suite.

EmpiricalPathMeasure
random_measure(RngStream& rng, std::size_t N, std::size_t n, double T)
{
  EmpiricalPathMeasure m;
  PointSet x(static_cast<Eigen::Index>(N), 1);
  for (Eigen::Index i = 0; i < x.rows(); ++i)
    x(i, 0) = rng.normal();
  const double dt = T / static_cast<double>(n);
  for (std::size_t k = 0; k <= n; ++k) {
    m.grid.push_back(static_cast<double>(k) * dt);
    m.snapshots.push_back(x);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
      x(i, 0) += std::sqrt(dt) * rng.normal();
  }
  Eigen::ArrayXd w(static_cast<Eigen::Index>(N));
  for (Eigen::Index i = 0; i < w.size(); ++i)
    w[i] = 0.2 + rng.uniform();
  m.weights = w / w.sum();
  return m;
}

double
lambda_clip(double, std::span<const double>, double z)
{
  return std::clamp(z, 0.0, 1.0);
}

//! The fixed point is non-anticipative, so it can be built column by
//! column without iterating.
std::vector<std::vector<double>>
forward_substitution(const EmpiricalPathMeasure& m, double eps)
{
  const std::size_t N = m.size(), cols = m.grid.size();
  auto K = [eps](double r) {
    return std::exp(-r * r / (2 * eps * eps)) / (eps * std::sqrt(2 * std::numbers::pi));
  };
  std::vector<std::vector<double>> z(N, std::vector<double>(cols, 0.0));
  std::vector<double> logv(N, 0.0);
  for (std::size_t k = 0; k < cols; ++k) {
    if (k > 0)
      for (std::size_t j = 0; j < N; ++j)
        logv[j] += (m.grid[k] - m.grid[k - 1]) *
                   std::min(1.0, std::max(0.0, z[j][k - 1]));
    for (std::size_t i = 0; i < N; ++i) {
      double s = 0.0;
      for (std::size_t j = 0; j < N; ++j)
        s += m.weights[static_cast<Eigen::Index>(j)] *
             K(m.snapshots[k](static_cast<Eigen::Index>(i), 0) -
               m.snapshots[k](static_cast<Eigen::Index>(j), 0)) *
             std::exp(logv[j]);
      z[i][k] = s;
    }
  }
  return z;
}

void
picard_criterion()
{
  RngStream rng(2024, { 0, 0, 0, StreamPurpose::test });
  CoefficientBounds bounds;
  bounds.M_lambda = 1.0;
  bounds.L_lambda = 1.0;
  double worst_ratio = 0.0, worst_oracle = 0.0, worst_closed = 0.0;
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t N = 2 + rng.next_u32() % 7;
    const std::size_t n = 4 + rng.next_u32() % 9;
    const double T = 0.5 + rng.uniform();
    const double eps = 0.3 + 0.7 * rng.uniform();
    const EmpiricalPathMeasure m = random_measure(rng, N, n, T);
    const Kernel K(1, eps);
    const double zmax = 2.0 * K.sup_bound() * std::exp(T);
    for (int pair = 0; pair < 10; ++pair) {
      Eigen::MatrixXd a(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(n + 1));
      Eigen::MatrixXd b(a.rows(), a.cols());
      for (Eigen::Index i = 0; i < a.size(); ++i) {
        a(i) = zmax * rng.uniform();
        b(i) = zmax * rng.uniform();
      }
      worst_ratio = std::max(worst_ratio, contraction_ratio(m, K, lambda_clip, bounds, a, b));
    }
    const LinkedDensity u = solve_picard(m, K, lambda_clip, { 1e-13, 200 });
    const auto oracle = forward_substitution(m, eps);
    for (std::size_t i = 0; i < N; ++i)
      for (std::size_t k = 0; k <= n; ++k)
        worst_oracle = std::max(
          worst_oracle,
          std::abs(u.u_on_paths(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) -
                   oracle[i][k]));
    const double lam = 2.0 * rng.uniform() - 1.0;
    const LinkedDensity c =
      solve_picard(m, K, [lam](double, std::span<const double>, double) { return lam; });
    for (std::size_t k = 0; k <= n; ++k)
      for (double y : { -1.0, 0.0, 0.7 }) {
        const std::span<const double> ys(&y, 1);
        const double exact = std::exp(lam * m.grid[k]) * kde(K, m.snapshots[k], m.weights, ys);
        worst_closed = std::max(worst_closed, std::abs(c.eval(k, ys) - exact) / exact);
      }
  }
  report("picard_suite",
         worst_ratio <= 0.55 && worst_oracle <= 1e-10 && worst_closed <= 1e-12,
         "max contraction=" + fmt(worst_ratio) + " (need <= 0.55), |fixed point - oracle|=" +
           fmt(worst_oracle) + " (need <= 1e-10), constant-Lambda rel err=" +
           fmt(worst_closed) + " over 40 random measures");
}

void
stability_criterion()
{
  RngStream rng(77, { 0, 0, 0, StreamPurpose::test });
  CoefficientBounds bounds;
  bounds.M_lambda = 1.0;
  bounds.L_lambda = 1.0;
  double worst = 0.0, worst_clamped = 0.0;
  std::size_t samples = 0;
  for (int pair = 0; pair < 10; ++pair) {
    const std::size_t N = 4 + rng.next_u32() % 9;
    const std::size_t n = 4 + rng.next_u32() % 9;
    const EmpiricalPathMeasure a = random_measure(rng, N, n, 1.0);
    EmpiricalPathMeasure b = a;
    const double scale = std::pow(10.0, -2.0 + 2.0 * rng.uniform());
    for (auto& s : b.snapshots)
      for (Eigen::Index i = 0; i < s.rows(); ++i)
        s(i, 0) += scale * rng.normal();
    const Kernel K(1, 0.3 + 0.7 * rng.uniform());
    const StabilityReport r =
      check_stability_inequality(a, b, K, lambda_clip, bounds, 100, 1000 + pair);
    worst = std::max(worst, r.max_ratio);
    worst_clamped = std::max(worst_clamped, r.max_ratio_clamped);
    samples += r.samples;
  }
  report("stability_inequality", worst <= 1.0 && worst_clamped <= 1.0 && samples == 1000,
         "max LHS/RHS=" + fmt(worst) + ", clamped-distance max=" + fmt(worst_clamped) + " over " +
           std::to_string(samples) + " samples (need <= 1)");
}

// ---------------------------------------------------------------------------

void
oracle_equivalences()
{
  RngStream rng(5, { 0, 0, 0, StreamPurpose::test });
  double w2_err = 0.0;
  for (std::size_t n = 1; n <= 6; ++n)
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> a(n), b(n);
      for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = rng.normal() * 1.5 - 0.3;
      }
      std::vector<std::size_t> p(n);
      std::iota(p.begin(), p.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i)
          s += (a[i] - b[p[i]]) * (a[i] - b[p[i]]);
        best = std::min(best, s);
      } while (std::next_permutation(p.begin(), p.end()));
      w2_err = std::max(w2_err, std::abs(marginal_w2_1d(a, b) - std::sqrt(best / n)));
    }

  const TestCase tc = TestCase::isotropic(1.5, 1, 0.0);
  const RejectionSampler s = tc.initial_sampler();
  const ParticleSystem sys(tc, Kernel(1, 0.5), GridSchedule(1.0, 10), 3);
  const ParticleEnsemble e =
    sys.run([&s](RngStream& r, std::span<double> x) { s.draw(r, x); }, 1024);
  PointSet q(201, 1);
  for (Eigen::Index i = 0; i < q.rows(); ++i)
    q(i, 0) = -3.0 + 0.03 * static_cast<double>(i);
  const std::vector<double> dens = sys.eval_density(e, q);
  const Eigen::ArrayXd w = uniform_weights(1024);
  std::size_t mismatches = 0;
  for (Eigen::Index i = 0; i < q.rows(); ++i) {
    const double y = q(i, 0);
    if (dens[static_cast<std::size_t>(i)] !=
        kde(sys.kernel(), e.positions, w, std::span<const double>(&y, 1)))
      ++mismatches;
  }

  const TestCase tilted = TestCase::isotropic(1.5, 1, 2.0 / 3.0);
  const RejectionSampler ts = tilted.initial_sampler();
  const std::size_t n = 100000;
  const PointSet pts = ts.sample(99, 0, StreamPurpose::test, n);
  std::vector<double> xs(pts.data(), pts.data() + n);
  std::sort(xs.begin(), xs.end());
  const double R = tilted.barenblatt_params().support_radius(2.0);
  auto v0 = [&](double x) { return tilted.initial_density(std::span<const double>(&x, 1)); };
  double F = 0.0, prev = -R, ks = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    F += trapezoid(v0, prev, xs[i], 64);
    prev = xs[i];
    ks = std::max({ ks, std::abs(F - static_cast<double>(i) / n),
                    std::abs(F - static_cast<double>(i + 1) / n) });
  }
  report("oracle_equivalences", w2_err <= 1e-12 && mismatches == 0 && ks <= 0.01,
         "W2 vs brute force max err=" + fmt(w2_err) + " (N<=6), zero-Lambda density != KDE at " +
           std::to_string(mismatches) + " of 201 points, KS=" + fmt(ks) +
           " at 1e5 draws (need <= 0.01)");
}

void
determinism_criterion()
{
  auto csv = [](ExperimentConfig c, std::size_t threads) {
    c.threads = threads;
    std::ostringstream os;
    write_csv(os, run_experiment(c).rows);
    return os.str();
  };
  ExperimentConfig sweep = desk_config();
  sweep.N = { 64, 128 };
  sweep.eps = { 0.3, 0.5 };
  sweep.M = 6;
  sweep.Q = 200;
  ExperimentConfig dt = sweep;
  dt.mode = Mode::dt_sweep;
  dt.N = { 64 };
  dt.eps = { 0.5 };
  dt.n_list = { 4, 8 };
  ExperimentConfig chaos = sweep;
  chaos.mode = Mode::chaos_study;
  chaos.N = { 32, 64 };
  chaos.N_ref = 128;
  chaos.eps = { 0.5 };
  bool same = true;
  std::string detail;
  for (const auto* c : { &sweep, &dt, &chaos }) {
    const std::string ref = csv(*c, 1);
    for (std::size_t t : { 1u, 2u, 4u })
      if (csv(*c, t) != ref) {
        same = false;
        detail += to_string(c->mode) + " differs at threads=" + std::to_string(t) + "; ";
      }
  }
  report("determinism", same,
         same ? "identical CSV bodies for variance-sweep, dt-sweep and chaos-study at "
                "1, 1 (repeat), 2 and 4 threads"
              : detail);
}

} // namespace

int
main(int argc, char** argv)
{
  if (argc > 1) {
    out_dir = argv[1];
    std::filesystem::create_directories(out_dir);
  }
  const auto t0 = std::chrono::steady_clock::now();
  std::cout << "# threads=" << default_thread_count() << std::endl;
  try {
    oracle_equivalences();
    picard_criterion();
    stability_criterion();
    determinism_criterion();
    conservative_mass_criterion();
    dt_rate_criterion();
    chaos_rate_criterion();
    kernel_rate_criteria();
  } catch (const std::exception& e) {
    std::cout << "FAIL aborted: " << e.what() << std::endl;
    return 1;
  }
  const auto failed =
    std::count_if(verdicts.begin(), verdicts.end(), [](const Verdict& v) { return !v.passed; });
  std::cout << "# " << verdicts.size() - static_cast<std::size_t>(failed) << " of "
            << verdicts.size() << " criteria passed in " << fmt(seconds_since(t0)) << " s"
            << std::endl;
  return failed == 0 ? 0 : 1;
}
