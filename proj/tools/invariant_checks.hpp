#pragma once

#include <mckean/mckean.hpp>
#include <mckean/quadrature.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

namespace mckean::cli {

struct CheckResult
{
  std::string name;
  bool passed = false;
  double value = 0.0;
  std::string detail;
};

namespace detail {

inline CheckResult
check(std::string name, bool passed, double value, std::string detail)
{
  return { std::move(name), passed, value, std::move(detail) };
}

inline EmpiricalPathMeasure
random_measure(std::size_t N, std::size_t n, std::uint64_t seed, std::uint32_t replica)
{
  EmpiricalPathMeasure m;
  for (std::size_t k = 0; k <= n; ++k)
    m.grid.push_back(static_cast<double>(k) / static_cast<double>(n));
  PointSet x(static_cast<Eigen::Index>(N), 1);
  for (std::size_t i = 0; i < N; ++i) {
    RngStream rng(seed, { replica, static_cast<std::uint32_t>(i), 0, StreamPurpose::test });
    x(static_cast<Eigen::Index>(i), 0) = rng.normal();
  }
  m.snapshots.push_back(x);
  for (std::size_t k = 1; k <= n; ++k) {
    for (std::size_t i = 0; i < N; ++i) {
      RngStream rng(seed, { replica, static_cast<std::uint32_t>(i),
                            static_cast<std::uint32_t>(k), StreamPurpose::test });
      x(static_cast<Eigen::Index>(i), 0) += std::sqrt(1.0 / static_cast<double>(n)) * rng.normal();
    }
    m.snapshots.push_back(x);
  }
  m.weights = uniform_weights(static_cast<Eigen::Index>(N));
  return m;
}

} // namespace detail

//! Fast invariant suite behind `mckean check`.
inline std::vector<CheckResult>
run_invariant_checks(std::uint64_t seed)
{
  using detail::check;
  std::vector<CheckResult> out;

  {
    const Kernel k(1, 0.5);
    const double mass = trapezoid([&](double x) { return k.eval(x); }, -5.0, 5.0, 2000);
    out.push_back(check("kernel_mass_d1", std::abs(mass - 1.0) <= 1e-8, mass, "tol 1e-8"));
    const Kernel k2(2, 0.5);
    const double mass2 = trapezoid_2d(
      [&](double x, double y) {
        const double p[2] = { x, y };
        return k2.eval(std::span<const double>(p, 2));
      },
      -5.0, 5.0, -5.0, 5.0, 400);
    out.push_back(check("kernel_mass_d2", std::abs(mass2 - 1.0) <= 1e-8, mass2, "tol 1e-8"));
  }

  {
    const BarenblattParams p(1.5, 1);
    const double R = p.support_radius(2.0);
    const double mass = trapezoid(
      [&](double x) { return barenblatt(p, 2.0, std::span<const double>(&x, 1)); }, -R, R, 200000);
    out.push_back(check("barenblatt_mass", std::abs(mass - 1.0) <= 1e-6, mass, "tol 1e-6"));
  }

  {
    const auto r = philox4x32({ 0, 0, 0, 0 }, { 0, 0 });
    const bool ok = r == std::array<std::uint32_t, 4>{ 0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8 };
    out.push_back(check("philox_known_answer", ok, ok ? 1.0 : 0.0, "counter 0, key 0"));
  }

  {
    const TestCase tc = TestCase::isotropic(1.5, 1, 2.0 / 3.0);
    const RejectionSampler s = tc.initial_sampler();
    const std::size_t count = 100000;
    const PointSet pts = s.sample(seed, 0, StreamPurpose::test, count);
    std::vector<double> xs(pts.data(), pts.data() + count);
    std::sort(xs.begin(), xs.end());
    const double R = tc.barenblatt_params().support_radius(2.0);
    const std::size_t cells = 20000;
    const double h = 2.0 * R / static_cast<double>(cells);
    std::vector<double> grid(cells + 1), cdf(cells + 1, 0.0);
    for (std::size_t i = 0; i <= cells; ++i)
      grid[i] = -R + h * static_cast<double>(i);
    double prev = tc.initial_density(std::span<const double>(&grid[0], 1));
    for (std::size_t i = 1; i <= cells; ++i) {
      const double cur = tc.initial_density(std::span<const double>(&grid[i], 1));
      cdf[i] = cdf[i - 1] + 0.5 * h * (prev + cur);
      prev = cur;
    }
    double ks = 0.0;
    for (std::size_t i = 0; i < count; ++i) {
      const double x = xs[i];
      const auto pos = static_cast<std::size_t>(
        std::clamp((x + R) / h, 0.0, static_cast<double>(cells - 1)));
      const double frac = (x - grid[pos]) / h;
      const double F = cdf[pos] + frac * (cdf[pos + 1] - cdf[pos]);
      ks = std::max({ ks, std::abs(F - static_cast<double>(i) / count),
                      std::abs(F - static_cast<double>(i + 1) / count) });
    }
    out.push_back(check("sampler_ks", ks <= 0.01, ks, "1e5 draws, tol 0.01"));
  }

  {
    const TestCase tc = TestCase::isotropic(1.5, 1, 0.0);
    const RejectionSampler s = tc.initial_sampler();
    auto draw = [&s](RngStream& rng, std::span<double> x) { s.draw(rng, x); };
    const ParticleSystem<TestCase> sys(tc, Kernel(1, 0.5), GridSchedule(1.0, 10), seed);
    const ParticleEnsemble e = sys.run(draw, 512);
    PointSet q(64, 1);
    for (Eigen::Index i = 0; i < 64; ++i)
      q(i, 0) = -3.0 + 6.0 * static_cast<double>(i) / 63.0;
    const std::vector<double> v = sys.eval_density(e, q);
    const Eigen::ArrayXd w = uniform_weights(512);
    bool same = (e.log_weights == 0.0).all();
    for (Eigen::Index i = 0; i < 64; ++i) {
      const double y = q(i, 0);
      same = same && v[static_cast<std::size_t>(i)] ==
                       kde(sys.kernel(), e.positions, w, std::span<const double>(&y, 1));
    }
    out.push_back(check("zero_lambda_density_is_kde", same, same ? 1.0 : 0.0, "bitwise"));
    const double mass = particle_mass_1d(sys, e);
    out.push_back(check("conservative_mass", std::abs(mass - 1.0) <= 1e-6, mass,
                        "A = 0, N = 512, tol 1e-6"));
  }

  {
    const double lambda0 = 0.7;
    EmpiricalPathMeasure m;
    for (std::size_t k = 0; k <= 10; ++k) {
      m.grid.push_back(0.1 * static_cast<double>(k));
      m.snapshots.push_back(PointSet::Zero(1, 1));
    }
    m.weights = uniform_weights(1);
    const Kernel K(1, 1.0);
    const LinkedDensity u = solve_picard(
      m, K, [lambda0](double, std::span<const double>, double) { return lambda0; });
    double worst = 0.0;
    for (std::size_t k = 0; k <= 10; ++k) {
      const double y = 0.3;
      const double exact = K.eval(y) * std::exp(lambda0 * m.grid[k]);
      worst = std::max(worst, std::abs(u.eval(k, std::span<const double>(&y, 1)) - exact) / exact);
    }
    out.push_back(check("picard_constant_lambda", worst <= 1e-13, worst, "relative error"));
  }

  {
    const Kernel K(1, 0.5);
    const LambdaFn lam = [](double, std::span<const double>, double z) {
      return std::clamp(z, 0.0, 1.0);
    };
    CoefficientBounds b;
    b.M_lambda = 1.0;
    b.L_lambda = 1.0;
    double worst = 0.0;
    for (std::uint32_t r = 0; r < 10; ++r) {
      const EmpiricalPathMeasure m = detail::random_measure(6, 8, seed, r);
      Eigen::MatrixXd Za(6, 9), Zb(6, 9);
      for (Eigen::Index i = 0; i < Za.size(); ++i) {
        RngStream rng(seed, { 100 + r, static_cast<std::uint32_t>(i), 0, StreamPurpose::test });
        Za.data()[i] = K.sup_bound() * rng.uniform();
        Zb.data()[i] = K.sup_bound() * rng.uniform();
      }
      worst = std::max(worst, contraction_ratio(m, K, lam, b, Za, Zb));
    }
    out.push_back(check("picard_contraction", worst <= 0.55, worst, "tol 0.55"));

    const EmpiricalPathMeasure a = detail::random_measure(8, 10, seed, 20);
    const EmpiricalPathMeasure bm = detail::random_measure(8, 10, seed, 21);
    const StabilityReport rep = check_stability_inequality(a, bm, K, lam, b, 200, seed);
    out.push_back(check("stability_inequality", rep.max_ratio <= 1.0, rep.max_ratio,
                        "200 samples, ratio <= 1"));
  }

  {
    double worst = 0.0;
    for (std::uint32_t r = 0; r < 5; ++r) {
      std::vector<double> a(5), b(5);
      for (std::size_t i = 0; i < 5; ++i) {
        RngStream rng(seed, { 200 + r, static_cast<std::uint32_t>(i), 0, StreamPurpose::test });
        a[i] = rng.normal();
        b[i] = 2.0 * rng.normal() + 1.0;
      }
      std::vector<std::size_t> perm(5);
      std::iota(perm.begin(), perm.end(), 0);
      double best = std::numeric_limits<double>::infinity();
      do {
        double s = 0.0;
        for (std::size_t i = 0; i < 5; ++i)
          s += (a[i] - b[perm[i]]) * (a[i] - b[perm[i]]);
        best = std::min(best, std::sqrt(s / 5.0));
      } while (std::next_permutation(perm.begin(), perm.end()));
      worst = std::max(worst, std::abs(best - marginal_w2_1d(a, b)));
    }
    out.push_back(check("marginal_w2_bruteforce", worst <= 1e-12, worst, "N = 5"));
  }

  {
    const NonuniquenessResult r = nonuniqueness_demo(0.5, 2.0, 2.0, 1e-3);
    const bool ok = r.residual2 <= 5e-3 && r.residual1 == 0.0 && r.max_abs_diff > 0.5;
    out.push_back(check("nonuniqueness_demo", ok, r.max_abs_diff,
                        "residual <= 5 dt, max |phi1 - phi2| > 0.5 on [0, 2]"));
  }

  {
    ExperimentConfig c;
    c.N = { 64, 128 };
    c.eps = { 0.5, 0.8 };
    c.M = 3;
    c.Q = 50;
    c.seed = seed;
    c.threads = 1;
    const SweepResult r1 = run_variance_bias_sweep(c);
    c.threads = 3;
    const SweepResult r2 = run_variance_bias_sweep(c);
    const bool ok = r1.rows == r2.rows;
    out.push_back(check("determinism_threads", ok, ok ? 1.0 : 0.0, "threads 1 vs 3"));
  }
  return out;
}

} // namespace mckean::cli
