#pragma once

#include "errors.hpp"
#include "path_measure.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <vector>

namespace mckean {

//! Importance-weighted Monte Carlo MISE at time t:
//!   1/(M Q) sum_i sum_j |u_i(X_j) - v_t(X_j)|^2 / v_0(X_j),  X_j ~ v_0.
struct MiseEstimate
{
  double t = 0.0;
  double value = 0.0;
  std::size_t M = 0;
  std::size_t Q = 0;
  std::vector<double> per_replica;
};

//! MISE = variance + squared bias, all three over the same points.
//! The replica variance uses the 1/M (population) normalizer, so the identity
//! holds exactly up to rounding.
struct BiasVariance
{
  double variance = 0.0;
  double bias_sq = 0.0;
  double mise = 0.0;
  //! Jackknife standard error of bias_sq over replicas.
  double bias_sq_se = 0.0;
};

namespace detail {

inline void
check_estimator_inputs(const Eigen::MatrixXd& values,
                       std::span<const double> exact,
                       std::span<const double> initial)
{
  const auto Q = static_cast<std::size_t>(values.cols());
  if (values.rows() == 0 || Q == 0)
    throw InvalidInput("need at least one replica and one evaluation point");
  if (exact.size() != Q || initial.size() != Q)
    throw InvalidInput("exact/initial values must match the evaluation points");
  for (double v0 : initial)
    if (!(v0 > 0.0))
      throw InvalidInput("initial density vanishes at an evaluation point");
}

inline double
weighted_bias_sq(const Eigen::MatrixXd& values,
                 const Eigen::ArrayXd& mean,
                 std::span<const double> exact,
                 std::span<const double> initial)
{
  double sum = 0.0;
  for (Eigen::Index j = 0; j < values.cols(); ++j) {
    const double e = mean[j] - exact[static_cast<std::size_t>(j)];
    sum += e * e / initial[static_cast<std::size_t>(j)];
  }
  return sum / static_cast<double>(values.cols());
}

} // namespace detail

//! `values(i, j)` = u_i(X_j) for replica i; `exact[j]` = v_t(X_j);
//! `initial[j]` = v_0(X_j) > 0.
inline MiseEstimate
mise(const Eigen::MatrixXd& values,
     std::span<const double> exact,
     std::span<const double> initial,
     double t)
{
  detail::check_estimator_inputs(values, exact, initial);
  MiseEstimate out;
  out.t = t;
  out.M = static_cast<std::size_t>(values.rows());
  out.Q = static_cast<std::size_t>(values.cols());
  out.per_replica.resize(out.M);
  for (std::size_t i = 0; i < out.M; ++i) {
    double sum = 0.0;
    for (std::size_t j = 0; j < out.Q; ++j) {
      const double e =
        values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) - exact[j];
      sum += e * e / initial[j];
    }
    out.per_replica[i] = sum / static_cast<double>(out.Q);
  }
  double total = 0.0;
  for (double r : out.per_replica)
    total += r;
  out.value = total / static_cast<double>(out.M);
  return out;
}

//! Closure form: evaluates every replica density and v_t at the points.
inline MiseEstimate
mise(const std::vector<std::function<double(std::span<const double>)>>& replicas,
     const std::function<double(std::span<const double>)>& exact,
     const std::function<double(std::span<const double>)>& initial,
     const PointSet& points,
     double t)
{
  const auto Q = static_cast<std::size_t>(points.rows());
  Eigen::MatrixXd values(static_cast<Eigen::Index>(replicas.size()), points.rows());
  std::vector<double> ex(Q), in(Q), y(static_cast<std::size_t>(points.cols()));
  for (std::size_t j = 0; j < Q; ++j) {
    for (std::size_t c = 0; c < y.size(); ++c)
      y[c] = points(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
    ex[j] = exact(y);
    in[j] = initial(y);
    for (std::size_t i = 0; i < replicas.size(); ++i)
      values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = replicas[i](y);
  }
  return mise(values, ex, in, t);
}

//! Variance / squared-bias split of the MISE; the mean field is the replica
//! average. Requires M >= 2.
inline BiasVariance
bias_variance(const Eigen::MatrixXd& values,
              std::span<const double> exact,
              std::span<const double> initial)
{
  detail::check_estimator_inputs(values, exact, initial);
  const Eigen::Index M = values.rows();
  const Eigen::Index Q = values.cols();
  if (M < 2)
    throw InvalidInput("bias_variance needs at least two replicas");
  const Eigen::ArrayXd mean = values.colwise().mean().transpose().array();
  BiasVariance out;
  double var_sum = 0.0;
  for (Eigen::Index j = 0; j < Q; ++j) {
    const double var =
      (values.col(j).array() - mean[j]).square().sum() / static_cast<double>(M);
    var_sum += var / initial[static_cast<std::size_t>(j)];
  }
  out.variance = var_sum / static_cast<double>(Q);
  out.bias_sq = detail::weighted_bias_sq(values, mean, exact, initial);
  out.mise = mise(values, exact, initial, 0.0).value;

  // Leave-one-replica-out bias^2.
  std::vector<double> loo(static_cast<std::size_t>(M));
  const Eigen::ArrayXd total = mean * static_cast<double>(M);
  for (Eigen::Index i = 0; i < M; ++i) {
    const Eigen::ArrayXd m_i =
      (total - values.row(i).transpose().array()) / static_cast<double>(M - 1);
    loo[static_cast<std::size_t>(i)] =
      detail::weighted_bias_sq(values, m_i, exact, initial);
  }
  double loo_mean = 0.0;
  for (double b : loo)
    loo_mean += b;
  loo_mean /= static_cast<double>(M);
  double ss = 0.0;
  for (double b : loo)
    ss += (b - loo_mean) * (b - loo_mean);
  out.bias_sq_se =
    std::sqrt(static_cast<double>(M - 1) / static_cast<double>(M) * ss);
  return out;
}

//! Identity-coupling bound on the order-2 path Wasserstein distance:
//!   W_t(a, b)^2 <= 1/N sum_j sup_{s <= t} |a_j(s) - b_j(s)|^2.
//! Returns the square root. With `clamp_at_one` each path term is
//! min(sup|.|^2, 1), the bound for the modified distance.
inline double
path_w2_upper(const EmpiricalPathMeasure& a,
              const EmpiricalPathMeasure& b,
              double t,
              bool clamp_at_one = false)
{
  if (a.size() != b.size() || a.dim() != b.dim())
    throw InvalidInput("path_w2_upper: measures differ in N or dimension");
  if (a.grid != b.grid)
    throw InvalidInput("path_w2_upper: measures live on different grids");
  const auto N = static_cast<Eigen::Index>(a.size());
  Eigen::ArrayXd sup = Eigen::ArrayXd::Zero(N);
  for (std::size_t k = 0; k < a.grid.size() && a.grid[k] <= t; ++k)
    sup = sup.max((a.snapshots[k] - b.snapshots[k]).rowwise().squaredNorm().array());
  if (clamp_at_one)
    sup = sup.min(1.0);
  return std::sqrt(sup.mean());
}

//! Exact order-2 Wasserstein distance between two 1-d empirical measures
//! with equal counts: the sorted pairing is optimal.
inline double
marginal_w2_1d(std::vector<double> a, std::vector<double> b)
{
  if (a.size() != b.size() || a.empty())
    throw InvalidInput("marginal_w2_1d: need equal, nonzero sample counts");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    sum += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(sum / static_cast<double>(a.size()));
}

inline double
marginal_w2_1d(const PointSet& a, const PointSet& b)
{
  if (a.cols() != 1 || b.cols() != 1)
    throw Unsupported("marginal_w2_1d is only defined for d = 1");
  return marginal_w2_1d(std::vector<double>(a.data(), a.data() + a.rows()),
                        std::vector<double>(b.data(), b.data() + b.rows()));
}

struct SlopeFit
{
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
};

//! Ordinary least squares of log y on log x.
inline SlopeFit
loglog_slope(std::span<const double> xs, std::span<const double> ys)
{
  if (xs.size() != ys.size())
    throw InvalidInput("loglog_slope: xs and ys differ in length");
  if (xs.size() < 3)
    throw InvalidInput("loglog_slope: need at least three points");
  const std::size_t n = xs.size();
  std::vector<double> lx(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(xs[i] > 0.0) || !(ys[i] > 0.0))
      throw InvalidInput("loglog_slope: inputs must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    mx += lx[i];
    my += ly[i];
  }
  mx /= static_cast<double>(n);
  my /= static_cast<double>(n);
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxx += (lx[i] - mx) * (lx[i] - mx);
    sxy += (lx[i] - mx) * (ly[i] - my);
    syy += (ly[i] - my) * (ly[i] - my);
  }
  if (sxx == 0.0)
    throw InvalidInput("loglog_slope: xs are all equal");
  SlopeFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r2 = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  return fit;
}

} // namespace mckean
