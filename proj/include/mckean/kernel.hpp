#pragma once

#include "errors.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>

namespace mckean {

//! N points in R^d, one per row. Column-major so each coordinate is a
//! contiguous array, which is what the kernel sums vectorize over.
using PointSet = Eigen::MatrixXd;

//! Gaussian mollifier K^eps(x) = eps^{-d} phi^d(x / eps), phi^d the standard
//! normal density on R^d.
class Kernel
{
public:
  Kernel(std::size_t dim, double bandwidth)
    : dim_(dim)
    , bandwidth_(bandwidth)
  {
    if (dim == 0)
      throw InvalidInput("kernel dimension must be positive");
    if (!(bandwidth > 0.0) || !std::isfinite(bandwidth))
      throw InvalidInput("kernel bandwidth must be positive and finite");
    norm_ = std::pow(bandwidth_, -static_cast<double>(dim_)) *
            std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(dim_));
    neg_half_inv_var_ = -0.5 / (bandwidth_ * bandwidth_);
  }

  std::size_t dim() const { return dim_; }
  double bandwidth() const { return bandwidth_; }

  //! Value at the origin, which is also sup |K| (M_K).
  double sup_bound() const { return norm_; }

  //! sup |grad K| = eps^{-d-1} (2 pi)^{-d/2} e^{-1/2} (L_K), attained on the
  //! sphere |x| = eps.
  double lipschitz_bound() const
  {
    return norm_ / bandwidth_ * std::exp(-0.5);
  }

  double eval(std::span<const double> x) const
  {
    if (x.size() != dim_)
      throw InvalidInput("point dimension does not match kernel dimension");
    double r2 = 0.0;
    for (double c : x) {
      if (!std::isfinite(c))
        throw InvalidInput("non-finite kernel argument");
      r2 += c * c;
    }
    return norm_ * std::exp(r2 * neg_half_inv_var_);
  }

  double eval(double x) const
  {
    const double one[1] = { x };
    return eval(std::span<const double>(one, 1));
  }

  //! -1 / (2 eps^2), the factor multiplying |x|^2 in the exponent.
  double exponent_scale() const { return neg_half_inv_var_; }

private:
  std::size_t dim_;
  double bandwidth_;
  double norm_;
  double neg_half_inv_var_;
};

namespace detail {

// |x_j - y|^2 for every row j of `sources`.
inline void
squared_distances(const PointSet& sources,
                  std::span<const double> query,
                  Eigen::ArrayXd& out)
{
  out = (sources.col(0).array() - query[0]).square();
  for (Eigen::Index c = 1; c < sources.cols(); ++c)
    out += (sources.col(c).array() - query[c]).square();
}

} // namespace detail

//! Weighted kernel sum  sum_j w_j K(y - x_j) exp(f_j).
//!
//! This is the single summation routine behind every density estimate in the
//! library (plain KDE, the particle density and the linking-equation
//! density), so estimates that agree mathematically also agree bitwise when
//! the log-factors are zero. `log_factors` may be empty.
inline double
kernel_sum(const Kernel& kernel,
           const PointSet& sources,
           const Eigen::ArrayXd& weights,
           const Eigen::ArrayXd& log_factors,
           std::span<const double> query)
{
  const double scale = kernel.exponent_scale();
  if (sources.rows() == 0)
    return 0.0;
  if (sources.cols() == 1) {
    const double y = query[0];
    if (log_factors.size() == 0)
      return kernel.sup_bound() *
             (weights *
              ((sources.col(0).array() - y).square() * scale).exp())
               .sum();
    return kernel.sup_bound() *
           (weights *
            ((sources.col(0).array() - y).square() * scale + log_factors)
              .exp())
             .sum();
  }
  thread_local Eigen::ArrayXd r2;
  detail::squared_distances(sources, query, r2);
  if (log_factors.size() == 0)
    return kernel.sup_bound() * (weights * (r2 * scale).exp()).sum();
  return kernel.sup_bound() *
         (weights * (r2 * scale + log_factors).exp()).sum();
}

//! Weighted kernel density estimate sum_j w_j K(y - x_j) at one point.
inline double
kde(const Kernel& kernel,
    const PointSet& sources,
    const Eigen::ArrayXd& weights,
    std::span<const double> query)
{
  return kernel_sum(kernel, sources, weights, Eigen::ArrayXd(), query);
}

//! Uniform weights 1/N.
inline Eigen::ArrayXd
uniform_weights(Eigen::Index n)
{
  return Eigen::ArrayXd::Constant(n, 1.0 / static_cast<double>(n));
}

} // namespace mckean
