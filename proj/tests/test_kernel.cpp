#include <mckean/kernel.hpp>
#include <mckean/quadrature.hpp>
#include <mckean/sampling.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

using namespace mckean;

TEST(Kernel, PointValues)
{
  EXPECT_NEAR(Kernel(1, 1.0).eval(0.0), 0.3989423, 1e-7);
  EXPECT_NEAR(Kernel(1, 0.5).eval(0.0), 0.7978846, 1e-7);
  const std::vector<double> origin{ 0.0, 0.0 };
  EXPECT_NEAR(Kernel(2, 1.0).eval(origin), 0.1591549, 1e-7);
}

TEST(Kernel, MatchesGaussianFormula)
{
  const Kernel k(3, 0.7);
  const std::vector<double> x{ 0.3, -0.2, 1.1 };
  const double r2 = 0.09 + 0.04 + 1.21;
  const double expected =
    std::pow(0.7, -3) * std::pow(2 * std::numbers::pi, -1.5) * std::exp(-r2 / (2 * 0.49));
  EXPECT_NEAR(k.eval(x), expected, 1e-15);
}

TEST(Kernel, Bounds)
{
  EXPECT_NEAR(Kernel(1, 1.0).sup_bound(), 0.3989423, 1e-7);
  EXPECT_NEAR(Kernel(1, 0.5).sup_bound(), 0.7978846, 1e-7);
  EXPECT_NEAR(Kernel(1, 1.0).lipschitz_bound(), 0.2419707, 1e-7);
}

TEST(Kernel, LipschitzBoundMatchesGridMaximumOfDerivative)
{
  for (double eps : { 0.3, 1.0, 2.5 }) {
    const Kernel k(1, eps);
    // Central differences on a fine grid; the maximum slope sits at |x| = eps.
    double best = 0.0;
    const double h = 1e-6 * eps;
    for (int i = 0; i <= 200000; ++i) {
      const double x = -5.0 * eps + 10.0 * eps * i / 200000.0;
      best = std::max(best, std::abs(k.eval(x + h) - k.eval(x - h)) / (2 * h));
    }
    EXPECT_NEAR(k.lipschitz_bound(), best, 1e-6 * best) << "eps=" << eps;
  }
}

TEST(Kernel, QuadratureMass)
{
  for (double eps : { 0.2, 1.0 }) {
    const Kernel k(1, eps);
    const double m1 =
      trapezoid([&](double x) { return k.eval(x); }, -10 * eps, 10 * eps, 4000);
    EXPECT_NEAR(m1, 1.0, 1e-8);
    const Kernel k2(2, eps);
    const double m2 = trapezoid_2d(
      [&](double x, double y) {
        const double p[2] = { x, y };
        return k2.eval(std::span<const double>(p, 2));
      },
      -10 * eps, 10 * eps, -10 * eps, 10 * eps, 400);
    EXPECT_NEAR(m2, 1.0, 1e-8);
  }
}

TEST(Kernel, SymmetryDecayAndLipschitzOnRandomPairs)
{
  const Kernel k(2, 0.8);
  RngStream rng(7, { 0, 0, 0, StreamPurpose::test });
  for (int i = 0; i < 2000; ++i) {
    const std::vector<double> x{ 2 * rng.normal(), 2 * rng.normal() };
    const std::vector<double> mx{ -x[0], -x[1] };
    const std::vector<double> y{ 2 * rng.normal(), 2 * rng.normal() };
    EXPECT_EQ(k.eval(x), k.eval(mx));
    const double nx = std::hypot(x[0], x[1]);
    const double ny = std::hypot(y[0], y[1]);
    if (nx <= ny)
      EXPECT_GE(k.eval(x), k.eval(y));
    else
      EXPECT_LE(k.eval(x), k.eval(y));
    const double dist = std::hypot(x[0] - y[0], x[1] - y[1]);
    EXPECT_LE(std::abs(k.eval(x) - k.eval(y)), k.lipschitz_bound() * dist + 1e-15);
  }
}

TEST(Kernel, FarTailIsNotTruncated)
{
  const Kernel k(1, 1.0);
  EXPECT_GT(k.eval(10.0), 0.0); // exp(-50)
}

TEST(Kernel, Errors)
{
  EXPECT_THROW(Kernel(1, 0.0), InvalidInput);
  EXPECT_THROW(Kernel(0, 1.0), InvalidInput);
  const Kernel k(1, 1.0);
  EXPECT_THROW(k.eval(std::numeric_limits<double>::quiet_NaN()), InvalidInput);
  EXPECT_THROW(k.eval(std::numeric_limits<double>::infinity()), InvalidInput);
}

TEST(KernelSum, MatchesDirectLoop)
{
  for (std::size_t d : { 1u, 3u }) {
    const Kernel k(d, 0.6);
    RngStream rng(3, { 0, static_cast<std::uint32_t>(d), 0, StreamPurpose::test });
    PointSet src(50, static_cast<Eigen::Index>(d));
    Eigen::ArrayXd w(50), lf(50);
    for (Eigen::Index i = 0; i < 50; ++i) {
      for (Eigen::Index c = 0; c < src.cols(); ++c)
        src(i, c) = rng.normal();
      w[i] = rng.uniform();
      lf[i] = 0.3 * rng.normal();
    }
    std::vector<double> y(d, 0.25);
    double direct = 0.0, plain = 0.0;
    for (Eigen::Index i = 0; i < 50; ++i) {
      std::vector<double> diff(d);
      for (std::size_t c = 0; c < d; ++c)
        diff[c] = y[c] - src(i, static_cast<Eigen::Index>(c));
      direct += w[i] * k.eval(diff) * std::exp(lf[i]);
      plain += w[i] * k.eval(diff);
    }
    EXPECT_NEAR(kernel_sum(k, src, w, lf, y), direct, 1e-13 * direct);
    EXPECT_NEAR(kde(k, src, w, y), plain, 1e-13 * plain);
  }
}

TEST(KernelSum, ZeroLogFactorsGiveBitwiseKde)
{
  const Kernel k(1, 0.4);
  PointSet src(33, 1);
  for (Eigen::Index i = 0; i < 33; ++i)
    src(i, 0) = std::sin(static_cast<double>(i));
  const Eigen::ArrayXd w = uniform_weights(33);
  const Eigen::ArrayXd zeros = Eigen::ArrayXd::Zero(33);
  for (double y : { -1.0, 0.0, 0.37, 2.0 }) {
    const std::vector<double> q{ y };
    EXPECT_EQ(kernel_sum(k, src, w, zeros, q), kde(k, src, w, q));
  }
}
