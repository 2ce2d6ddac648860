#pragma once

#include <Eigen/Dense>
#include <concepts>
#include <cstddef>
#include <functional>
#include <limits>
#include <span>

namespace mckean {

//! Declared bounds of a coefficient bundle. Infinity means "not bounded /
//! unknown"; only the checks that need a bound look at it.
struct CoefficientBounds
{
  static constexpr double inf = std::numeric_limits<double>::infinity();
  double M_phi = inf;
  double M_g = inf;
  double M_lambda = inf;
  double L_phi = inf;
  double L_g = inf;
  double L_lambda = inf;
};

//! Evaluation interface for (Phi, g, Lambda) of the McKean SDE
//!   dY = Phi(t, Y, u(t, Y)) dW + g(t, Y, u(t, Y)) dt,
//! with Feynman-Kac weight exp(int Lambda(s, Y_s, u(s, Y_s)) ds).
//! Phi is d x p, g is a d-vector, Lambda a scalar; z is a density value.
template<class C>
concept CoefficientBundle =
  requires(const C& c, double t, std::span<const double> x, double z) {
    { c.dim() } -> std::convertible_to<std::size_t>;
    { c.noise_dim() } -> std::convertible_to<std::size_t>;
    { c.phi(t, x, z) } -> std::convertible_to<Eigen::MatrixXd>;
    { c.drift(t, x, z) } -> std::convertible_to<Eigen::VectorXd>;
    { c.lambda(t, x, z) } -> std::convertible_to<double>;
    { c.bounds() } -> std::convertible_to<CoefficientBounds>;
  };

//! Phi = sigma I_d, g = constant vector, Lambda = constant.
class ConstantCoefficients
{
public:
  ConstantCoefficients(std::size_t dim,
                       double sigma,
                       Eigen::VectorXd drift,
                       double lambda)
    : dim_(dim)
    , sigma_(sigma)
    , drift_(std::move(drift))
    , lambda_(lambda)
  {}

  ConstantCoefficients(std::size_t dim, double sigma, double drift, double lambda)
    : ConstantCoefficients(dim,
                           sigma,
                           Eigen::VectorXd::Constant(static_cast<Eigen::Index>(dim), drift),
                           lambda)
  {}

  std::size_t dim() const { return dim_; }
  std::size_t noise_dim() const { return dim_; }
  Eigen::MatrixXd phi(double, std::span<const double>, double) const
  {
    const auto d = static_cast<Eigen::Index>(dim_);
    return sigma_ * Eigen::MatrixXd::Identity(d, d);
  }
  Eigen::VectorXd drift(double, std::span<const double>, double) const
  {
    return drift_;
  }
  double lambda(double, std::span<const double>, double) const
  {
    return lambda_;
  }
  CoefficientBounds bounds() const
  {
    CoefficientBounds b;
    b.M_phi = std::abs(sigma_);
    b.M_g = drift_.norm();
    b.M_lambda = std::abs(lambda_);
    b.L_phi = b.L_g = b.L_lambda = 0.0;
    return b;
  }

private:
  std::size_t dim_;
  double sigma_;
  Eigen::VectorXd drift_;
  double lambda_;
};

//! Coefficients from arbitrary callables; used by tests and small studies.
class FunctionCoefficients
{
public:
  using PhiFn =
    std::function<Eigen::MatrixXd(double, std::span<const double>, double)>;
  using DriftFn =
    std::function<Eigen::VectorXd(double, std::span<const double>, double)>;
  using LambdaFn = std::function<double(double, std::span<const double>, double)>;

  FunctionCoefficients(std::size_t dim,
                       std::size_t noise_dim,
                       PhiFn phi,
                       DriftFn drift,
                       LambdaFn lambda,
                       CoefficientBounds bounds = {})
    : dim_(dim)
    , noise_dim_(noise_dim)
    , phi_(std::move(phi))
    , drift_(std::move(drift))
    , lambda_(std::move(lambda))
    , bounds_(bounds)
  {}

  std::size_t dim() const { return dim_; }
  std::size_t noise_dim() const { return noise_dim_; }
  Eigen::MatrixXd phi(double t, std::span<const double> x, double z) const
  {
    return phi_(t, x, z);
  }
  Eigen::VectorXd drift(double t, std::span<const double> x, double z) const
  {
    return drift_(t, x, z);
  }
  double lambda(double t, std::span<const double> x, double z) const
  {
    return lambda_(t, x, z);
  }
  CoefficientBounds bounds() const { return bounds_; }

private:
  std::size_t dim_;
  std::size_t noise_dim_;
  PhiFn phi_;
  DriftFn drift_;
  LambdaFn lambda_;
  CoefficientBounds bounds_;
};

} // namespace mckean
