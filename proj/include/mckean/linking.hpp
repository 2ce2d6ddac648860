#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "metrics.hpp"
#include "path_measure.hpp"
#include "sampling.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <vector>

namespace mckean {

//! Lambda(t, x, z).
using LambdaFn = std::function<double(double, std::span<const double>, double)>;

struct PicardOptions
{
  double tol = 1e-10;
  std::size_t max_iter = 200;
};

//! Fixed point of the linking equation on an empirical path measure,
//!   u(t_k, y) = sum_j w_j K(y - X^j_{t_k}) V^j_{t_k},
//!   V^j_{t_k} = exp(sum_{l<k} (t_{l+1} - t_l) Lambda(t_l, X^j_{t_l}, u(t_l, X^j_{t_l}))).
struct LinkedDensity
{
  EmpiricalPathMeasure measure;
  Kernel kernel{ 1, 1.0 };
  Eigen::MatrixXd u_on_paths; //!< N x (n+1), u(t_k, X^j_{t_k})
  Eigen::MatrixXd log_v;      //!< N x (n+1), log V^j_{t_k}
  Eigen::MatrixXd v_weights;  //!< exp(log_v)
  std::size_t iterations = 0;
  double residual = 0.0;

  //! u(t_k, y) at an arbitrary point, O(N).
  double eval(std::size_t k, std::span<const double> y) const
  {
    if (k >= measure.grid.size())
      throw InvalidInput("LinkedDensity::eval: grid index out of range");
    const Eigen::ArrayXd lf = log_v.col(static_cast<Eigen::Index>(k)).array();
    return kernel_sum(kernel, measure.snapshots[k], measure.weights, lf, y);
  }
};

namespace detail {

inline void
check_linking_inputs(const EmpiricalPathMeasure& m, const Kernel& kernel)
{
  m.validate();
  if (m.dim() != kernel.dim())
    throw InvalidInput("kernel and path dimensions differ");
}

} // namespace detail

//! log V table for a candidate Z (left-endpoint rule).
inline Eigen::MatrixXd
log_weight_table(const EmpiricalPathMeasure& m,
                 const LambdaFn& lambda,
                 const Eigen::MatrixXd& Z)
{
  const auto N = static_cast<Eigen::Index>(m.size());
  const auto cols = static_cast<Eigen::Index>(m.grid.size());
  Eigen::MatrixXd lv = Eigen::MatrixXd::Zero(N, cols);
  if (!lambda)
    return lv;
  for (Eigen::Index j = 0; j < N; ++j)
    for (Eigen::Index k = 1; k < cols; ++k) {
      const auto l = static_cast<std::size_t>(k - 1);
      const double dt = m.grid[l + 1] - m.grid[l];
      const std::vector<double> x = m.point(static_cast<std::size_t>(j), l);
      lv(j, k) = lv(j, k - 1) + dt * lambda(m.grid[l], x, Z(j, k - 1));
    }
  return lv;
}

//! Values on the paths of a kernel sum with given log-weights,
//!   out(i, k) = sum_j w_j K(X^i_{t_k} - X^j_{t_k}) exp(lv(j, k)).
inline Eigen::MatrixXd
kernel_table(const EmpiricalPathMeasure& m,
             const Kernel& kernel,
             const Eigen::MatrixXd& lv)
{
  const auto N = static_cast<Eigen::Index>(m.size());
  const auto cols = static_cast<Eigen::Index>(m.grid.size());
  Eigen::MatrixXd out(N, cols);
  for (Eigen::Index k = 0; k < cols; ++k) {
    const PointSet& snap = m.snapshots[static_cast<std::size_t>(k)];
    const Eigen::ArrayXd lf = lv.col(k).array();
    for (Eigen::Index i = 0; i < N; ++i) {
      const std::vector<double> y = m.point(static_cast<std::size_t>(i),
                                            static_cast<std::size_t>(k));
      out(i, k) = kernel_sum(kernel, snap, m.weights, lf, y);
    }
  }
  return out;
}

//! One application of the table map Z -> tau(T^m(Z)).
inline Eigen::MatrixXd
picard_map(const EmpiricalPathMeasure& m,
           const Kernel& kernel,
           const LambdaFn& lambda,
           const Eigen::MatrixXd& Z)
{
  return kernel_table(m, kernel, log_weight_table(m, lambda, Z));
}

//! sum_j w_j max_k e^{-M t_k} |Z(j, k)|.
inline double
weighted_sup_norm(const EmpiricalPathMeasure& m,
                  const Eigen::MatrixXd& Z,
                  double M)
{
  double total = 0.0;
  for (Eigen::Index j = 0; j < Z.rows(); ++j) {
    double sup = 0.0;
    for (Eigen::Index k = 0; k < Z.cols(); ++k)
      sup = std::max(sup,
                     std::exp(-M * m.grid[static_cast<std::size_t>(k)]) *
                       std::abs(Z(j, k)));
    total += m.weights[j] * sup;
  }
  return total;
}

//! Norm exponent 2 M_K e^{T M_Lambda} L_Lambda, at which the table map
//! contracts by at least 1/2.
inline double
contraction_exponent(const Kernel& kernel, const CoefficientBounds& b, double T)
{
  return 2.0 * kernel.sup_bound() * std::exp(T * b.M_lambda) * b.L_lambda;
}

//! |Phi(Za) - Phi(Zb)| / |Za - Zb| in the weighted sup norm with exponent
//! `contraction_exponent`. Returns 0 when Za = Zb.
inline double
contraction_ratio(const EmpiricalPathMeasure& m,
                  const Kernel& kernel,
                  const LambdaFn& lambda,
                  const CoefficientBounds& bounds,
                  const Eigen::MatrixXd& Za,
                  const Eigen::MatrixXd& Zb)
{
  const double M = contraction_exponent(kernel, bounds, m.grid.back());
  const double den = weighted_sup_norm(m, Za - Zb, M);
  if (den == 0.0)
    return 0.0;
  const Eigen::MatrixXd diff =
    picard_map(m, kernel, lambda, Za) - picard_map(m, kernel, lambda, Zb);
  return weighted_sup_norm(m, diff, M) / den;
}

//! Picard iteration from Z = 0 until the sup-norm change is <= tol.
//! An empty `lambda` means Lambda = 0: the result is the kernel density
//! estimate of each marginal, computed directly.
inline LinkedDensity
solve_picard(const EmpiricalPathMeasure& m,
             const Kernel& kernel,
             const LambdaFn& lambda,
             PicardOptions opts = {})
{
  detail::check_linking_inputs(m, kernel);
  if (!(opts.tol > 0.0))
    throw InvalidInput("solve_picard: tol must be positive");
  if (opts.max_iter == 0)
    throw InvalidInput("solve_picard: max_iter must be positive");

  LinkedDensity out;
  out.measure = m;
  out.kernel = kernel;
  const auto N = static_cast<Eigen::Index>(m.size());
  const auto cols = static_cast<Eigen::Index>(m.grid.size());
  if (!lambda) {
    out.log_v = Eigen::MatrixXd::Zero(N, cols);
    out.u_on_paths.resize(N, cols);
    for (Eigen::Index k = 0; k < cols; ++k) {
      const PointSet& snap = m.snapshots[static_cast<std::size_t>(k)];
      for (Eigen::Index i = 0; i < N; ++i)
        out.u_on_paths(i, k) =
          kde(kernel, snap, m.weights,
              m.point(static_cast<std::size_t>(i), static_cast<std::size_t>(k)));
    }
    out.v_weights = Eigen::MatrixXd::Ones(N, cols);
    out.iterations = 1;
    out.residual = 0.0;
    return out;
  }

  Eigen::MatrixXd Z = Eigen::MatrixXd::Zero(N, cols);
  double residual = std::numeric_limits<double>::infinity();
  for (std::size_t it = 1; it <= opts.max_iter; ++it) {
    Eigen::MatrixXd next = picard_map(m, kernel, lambda, Z);
    residual = (next - Z).cwiseAbs().maxCoeff();
    Z = std::move(next);
    if (residual <= opts.tol) {
      out.u_on_paths = Z;
      out.log_v = log_weight_table(m, lambda, Z);
      out.v_weights = out.log_v.array().exp().matrix();
      out.iterations = it;
      out.residual = residual;
      return out;
    }
  }
  throw NonConvergence(residual, opts.max_iter);
}

struct StabilityConstants
{
  double c_prime = 0.0; //!< C'_{K,Lambda}(t)
  double c = 0.0;       //!< C_{K,Lambda}(t)
  double c_clamped = 0.0; //!< constant for the distance clamped at 1
};

//! C'(t) = 2 e^{2t M_L} (L_K^2 + 2 M_K^2 L_L^2 t),
//! C(t) = 2 C'(t) (t + 2) (1 + e^{2t C'(t)}),
//! clamped: 2 e^{2t M_L} (max(L_K, 2M_K)^2 + 2 M_K^2 max(L_L, 2M_L)^2 t).
inline StabilityConstants
stability_constants(double M_K, double L_K, double M_L, double L_L, double t)
{
  if (!(t >= 0.0))
    throw InvalidInput("stability_constants: t must be >= 0");
  StabilityConstants s;
  const double growth = 2.0 * std::exp(2.0 * t * M_L);
  s.c_prime = growth * (L_K * L_K + 2.0 * M_K * M_K * L_L * L_L * t);
  s.c = 2.0 * s.c_prime * (t + 2.0) * (1.0 + std::exp(2.0 * t * s.c_prime));
  const double a = std::max(L_K, 2.0 * M_K);
  const double b = std::max(L_L, 2.0 * M_L);
  s.c_clamped = growth * (a * a + 2.0 * M_K * M_K * b * b * t);
  return s;
}

inline StabilityConstants
stability_constants(const Kernel& kernel, const CoefficientBounds& b, double t)
{
  return stability_constants(
    kernel.sup_bound(), kernel.lipschitz_bound(), b.M_lambda, b.L_lambda, t);
}

struct StabilityReport
{
  double max_ratio = 0.0;         //!< LHS / (C(t) [|y-y'|^2 + W_t^2])
  double max_ratio_clamped = 0.0; //!< same with the clamped distance
  std::size_t samples = 0;
};

//! Samples (t_k, y, y') and compares |u^a(t,y) - u^b(t,y')|^2 with the
//! stability bound, W_t taken as the identity-coupling upper bound. y is a
//! jittered path point of `a`; y' = y + N(0, s^2) with s drawn from
//! {0, 0.1, 1}.
inline StabilityReport
check_stability_inequality(const EmpiricalPathMeasure& a,
                           const EmpiricalPathMeasure& b,
                           const Kernel& kernel,
                           const LambdaFn& lambda,
                           const CoefficientBounds& bounds,
                           std::size_t samples,
                           std::uint64_t seed,
                           PicardOptions opts = {})
{
  if (a.grid != b.grid || a.size() != b.size() || a.dim() != b.dim())
    throw InvalidInput("stability check needs equal N, dimension and grid");
  const LinkedDensity ua = solve_picard(a, kernel, lambda, opts);
  const LinkedDensity ub = solve_picard(b, kernel, lambda, opts);
  const std::size_t d = a.dim();
  StabilityReport rep;
  rep.samples = samples;
  auto ratio = [](double lhs, double rhs) {
    if (lhs == 0.0)
      return 0.0;
    return rhs == 0.0 ? std::numeric_limits<double>::infinity() : lhs / rhs;
  };
  for (std::size_t s = 0; s < samples; ++s) {
    RngStream rng(seed, { 0, static_cast<std::uint32_t>(s), 0, StreamPurpose::test });
    const std::size_t k = static_cast<std::size_t>(rng.next_u32() % a.grid.size());
    const std::size_t j = static_cast<std::size_t>(rng.next_u32() % a.size());
    const double scales[3] = { 0.0, 0.1, 1.0 };
    const double sp = scales[rng.next_u32() % 3];
    std::vector<double> y = a.point(j, k), y2(d);
    double dy2 = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      y[c] += kernel.bandwidth() * rng.normal();
      y2[c] = y[c] + sp * rng.normal();
      dy2 += (y[c] - y2[c]) * (y[c] - y2[c]);
    }
    const double t = a.grid[k];
    const double diff = ua.eval(k, y) - ub.eval(k, y2);
    const double lhs = diff * diff;
    const StabilityConstants sc = stability_constants(kernel, bounds, t);
    const double w = path_w2_upper(a, b, t);
    const double wc = path_w2_upper(a, b, t, true);
    rep.max_ratio = std::max(rep.max_ratio, ratio(lhs, sc.c * (dy2 + w * w)));
    rep.max_ratio_clamped =
      std::max(rep.max_ratio_clamped, ratio(lhs, sc.c_clamped * (dy2 + wc * wc)));
  }
  return rep;
}

//! Two solutions of phi(t) = exp(int_0^t beta(phi(r)) dr) with
//! beta(r) = |r-1|^alpha on [0, C], |C-1|^alpha above C, 1 below 0.
struct NonuniquenessResult
{
  std::vector<double> times;
  std::vector<double> phi1; //!< identically 1
  std::vector<double> phi2; //!< F^{-1}(t)
  //! max_k |phi(t_k) - exp(sum_{l<k} dt beta(phi(t_l)))|
  double residual1 = 0.0;
  double residual2 = 0.0;
  double max_abs_diff = 0.0;
};

inline double
example_beta(double r, double alpha, double C_cap)
{
  if (r <= 0.0)
    return 1.0;
  if (r >= C_cap)
    return std::pow(C_cap - 1.0, alpha);
  return std::pow(std::abs(r - 1.0), alpha);
}

//! F(u) = int_1^u dr / (r beta(r)) for u >= 1.
inline double
example_F(double u, double alpha, double C_cap)
{
  if (u < 1.0)
    throw InvalidInput("example_F: defined here for u >= 1");
  // With w = (r-1)^{1-alpha} the integrand is 1 / ((1-alpha)(1 + w^{1/(1-alpha)})).
  auto below_cap = [alpha](double v) {
    const double p = 1.0 / (1.0 - alpha);
    const double wmax = std::pow(v - 1.0, 1.0 - alpha);
    if (wmax == 0.0)
      return 0.0;
    return boost::math::quadrature::gauss_kronrod<double, 61>::integrate(
      [p, alpha](double w) { return 1.0 / ((1.0 - alpha) * (1.0 + std::pow(w, p))); },
      0.0,
      wmax,
      6,
      1e-12);
  };
  if (u <= C_cap)
    return below_cap(u);
  return below_cap(C_cap) + std::log(u / C_cap) / std::pow(C_cap - 1.0, alpha);
}

inline double
example_F_inverse(double t, double alpha, double C_cap)
{
  if (!(t >= 0.0))
    throw InvalidInput("example_F_inverse: t must be >= 0");
  if (t == 0.0)
    return 1.0;
  const double F_cap = example_F(C_cap, alpha, C_cap);
  if (t >= F_cap)
    return C_cap * std::exp((t - F_cap) * std::pow(C_cap - 1.0, alpha));
  std::uintmax_t iters = 200;
  const auto root = boost::math::tools::toms748_solve(
    [&](double u) { return example_F(u, alpha, C_cap) - t; },
    1.0,
    C_cap,
    -t,
    F_cap - t,
    boost::math::tools::eps_tolerance<double>(50),
    iters);
  return 0.5 * (root.first + root.second);
}

inline NonuniquenessResult
nonuniqueness_demo(double alpha, double C_cap, double t_max, double dt)
{
  if (!(alpha > 0.0 && alpha < 1.0))
    throw InvalidInput("nonuniqueness_demo: alpha must lie in (0, 1)");
  if (!(C_cap > 1.0))
    throw InvalidInput("nonuniqueness_demo: C must exceed 1");
  if (!(t_max > 0.0) || !(dt > 0.0))
    throw InvalidInput("nonuniqueness_demo: t_max and dt must be positive");
  const auto n = static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
  NonuniquenessResult r;
  r.times.resize(n + 1);
  r.phi1.assign(n + 1, 1.0);
  r.phi2.resize(n + 1);
  for (std::size_t k = 0; k <= n; ++k) {
    r.times[k] = std::min(static_cast<double>(k) * dt, t_max);
    r.phi2[k] = example_F_inverse(r.times[k], alpha, C_cap);
    r.max_abs_diff = std::max(r.max_abs_diff, std::abs(r.phi2[k] - r.phi1[k]));
  }
  double int1 = 0.0, int2 = 0.0;
  for (std::size_t k = 0; k <= n; ++k) {
    r.residual1 = std::max(r.residual1, std::abs(r.phi1[k] - std::exp(int1)));
    r.residual2 = std::max(r.residual2, std::abs(r.phi2[k] - std::exp(int2)));
    if (k < n) {
      const double h = r.times[k + 1] - r.times[k];
      int1 += h * example_beta(r.phi1[k], alpha, C_cap);
      int2 += h * example_beta(r.phi2[k], alpha, C_cap);
    }
  }
  return r;
}

} // namespace mckean
