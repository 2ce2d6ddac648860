#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "quadrature.hpp"
#include "sampling.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>

namespace mckean {

//! Which closed form is used for the Barenblatt-Pattle profile.
//!
//! classical_squared: (D - kappa t^{-2 beta} |x|^2)_+^{1/(m-1)} t^{-alpha},
//!   D chosen for unit mass. This is an exact solution of
//!   dv/dt = 1/2 Lap(v^m) for the kappa below.
//! paper_literal_abs: 1/2 (D - kappa t^{-2 beta} |x|)_+^{1/(m-1)} t^{-alpha}
//!   with D = [2 kappa^{-d/2} pi^{d/2} G(m/(m-1)) / G(d/2 + m/(m-1))]^e,
//!   kept verbatim for audit. Neither unit mass nor a PDE solution.
enum class BarenblattVariant
{
  classical_squared,
  paper_literal_abs,
};

//! Which coefficient triple (Phi, g, Lambda) the porous-media test case uses.
//!
//! Both share Phi = (z/f)^{(m-1)/2} I_d and w = (z/f)^{m-1}.
//! printed:    g = w A_s (x - mu),   Lambda = w Tr(A_s).
//! consistent: g = -w A_s (x - mu),  Lambda = w/2 (|A_s (x - mu)|^2 - Tr A_s).
//! Only the consistent triple makes B_m(t+2, x) f(x) an exact solution.
enum class CoefficientForm
{
  consistent,
  printed,
};

inline std::string
to_string(BarenblattVariant v)
{
  return v == BarenblattVariant::classical_squared ? "classical-squared"
                                                   : "paper-literal-abs";
}

inline std::string
to_string(CoefficientForm f)
{
  return f == CoefficientForm::consistent ? "consistent" : "printed";
}

struct BarenblattParams
{
  BarenblattParams(double m_,
                   std::size_t dim_,
                   BarenblattVariant variant_ = BarenblattVariant::classical_squared)
    : m(m_)
    , dim(dim_)
    , variant(variant_)
  {
    if (!(m > 1.0) || !std::isfinite(m))
      throw InvalidInput("Barenblatt exponent m must be > 1");
    if (dim == 0)
      throw InvalidInput("Barenblatt dimension must be positive");
    const double d = static_cast<double>(dim);
    alpha = d / ((m - 1.0) * d + 2.0);
    beta = alpha / d;
    kappa = (m - 1.0) * beta / m;
    const double gamma_ratio =
      std::exp(std::lgamma(m / (m - 1.0)) - std::lgamma(0.5 * d + m / (m - 1.0)));
    const double x = std::pow(kappa, -0.5 * d) *
                     std::pow(std::numbers::pi, 0.5 * d) * gamma_ratio;
    const double e = 2.0 * (1.0 - m) / (2.0 + d * (m - 1.0));
    if (variant == BarenblattVariant::classical_squared) {
      D = std::pow(x, e);
      prefactor = 1.0;
    } else {
      D = std::pow(2.0 * x, e);
      prefactor = 0.5;
    }
  }

  //! Radius of the support of B_m(t, .).
  double support_radius(double t) const
  {
    if (variant == BarenblattVariant::classical_squared)
      return std::sqrt(D / kappa) * std::pow(t, beta);
    return D / kappa * std::pow(t, 2.0 * beta);
  }

  double m;
  std::size_t dim;
  BarenblattVariant variant;
  double alpha = 0.0;
  double beta = 0.0;
  double kappa = 0.0;
  double D = 0.0;
  double prefactor = 1.0;
};

//! B_m(t, x) for the selected variant. Compactly supported, continuous.
inline double
barenblatt(const BarenblattParams& p, double t, std::span<const double> x)
{
  if (!(t > 0.0))
    throw InvalidInput("barenblatt: t must be positive");
  if (x.size() != p.dim)
    throw InvalidInput("barenblatt: point dimension mismatch");
  double r2 = 0.0;
  for (double c : x)
    r2 += c * c;
  const double r =
    p.variant == BarenblattVariant::classical_squared ? r2 : std::sqrt(r2);
  const double base = p.D - p.kappa * std::pow(t, -2.0 * p.beta) * r;
  if (!(base > 0.0))
    return 0.0;
  return p.prefactor * std::pow(base, 1.0 / (p.m - 1.0)) *
         std::pow(t, -p.alpha);
}

//! Porous-media test problem with a Gaussian tilt, exact solution
//! v(t, x) = B_m(t + 2, x) f(x), f(x) = C exp(-1/2 (x-mu).A(x-mu)).
//! Satisfies CoefficientBundle.
class TestCase
{
public:
  static constexpr double default_f_floor = 1e-12;

  TestCase(BarenblattParams barenblatt,
           Eigen::VectorXd mu,
           Eigen::MatrixXd A,
           CoefficientForm form = CoefficientForm::consistent,
           double f_floor = default_f_floor)
    : b_(barenblatt)
    , mu_(std::move(mu))
    , A_(std::move(A))
    , form_(form)
    , f_floor_(f_floor)
  {
    const auto d = static_cast<Eigen::Index>(b_.dim);
    if (mu_.size() != d)
      throw InvalidInput("test case: mu has wrong dimension");
    if (A_.rows() != d || A_.cols() != d)
      throw InvalidInput("test case: A must be d x d");
    if (!(f_floor_ > 0.0))
      throw InvalidInput("test case: f_floor must be positive");
    A_sym_ = 0.5 * (A_ + A_.transpose());
    trace_ = A_sym_.trace();
    zero_tilt_ = A_.isZero(0.0);
    norm_c_ = zero_tilt_ ? 1.0 : 1.0 / tilted_mass();
  }

  //! Isotropic tilt A = a I_d.
  static TestCase isotropic(double m,
                            std::size_t dim,
                            double a,
                            BarenblattVariant variant = BarenblattVariant::classical_squared,
                            CoefficientForm form = CoefficientForm::consistent,
                            double f_floor = default_f_floor)
  {
    const auto d = static_cast<Eigen::Index>(dim);
    return TestCase(BarenblattParams(m, dim, variant),
                    Eigen::VectorXd::Zero(d),
                    a * Eigen::MatrixXd::Identity(d, d),
                    form,
                    f_floor);
  }

  std::size_t dim() const { return b_.dim; }
  std::size_t noise_dim() const { return b_.dim; }
  const BarenblattParams& barenblatt_params() const { return b_; }
  const Eigen::VectorXd& mu() const { return mu_; }
  const Eigen::MatrixXd& A() const { return A_; }
  CoefficientForm form() const { return form_; }
  double f_floor() const { return f_floor_; }

  //! The constant C normalizing v(0, .) to a probability density.
  double normC() const { return norm_c_; }

  double quadratic_form(std::span<const double> x) const
  {
    const auto d = static_cast<Eigen::Index>(b_.dim);
    Eigen::VectorXd u(d);
    for (Eigen::Index c = 0; c < d; ++c)
      u[c] = x[static_cast<std::size_t>(c)] - mu_[c];
    return u.dot(A_ * u);
  }

  //! f(x) = max(C exp(-1/2 (x-mu).A(x-mu)), f_floor).
  double f_tilt(std::span<const double> x) const
  {
    if (zero_tilt_)
      return 1.0;
    return std::max(norm_c_ * std::exp(-0.5 * quadratic_form(x)), f_floor_);
  }

  Eigen::MatrixXd phi(double, std::span<const double> x, double z) const
  {
    check_density(z);
    const double m = b_.m;
    const double s = std::pow(f_tilt(x), 0.5 * (1.0 - m)) *
                     std::pow(z, 0.5 * (m - 1.0));
    const auto d = static_cast<Eigen::Index>(b_.dim);
    return s * Eigen::MatrixXd::Identity(d, d);
  }

  Eigen::VectorXd drift(double, std::span<const double> x, double z) const
  {
    check_density(z);
    const double w = weight_factor(x, z);
    const Eigen::VectorXd grad = A_sym_ * centered(x);
    return form_ == CoefficientForm::printed ? Eigen::VectorXd(w * grad)
                                             : Eigen::VectorXd(-w * grad);
  }

  double lambda(double, std::span<const double> x, double z) const
  {
    check_density(z);
    const double w = weight_factor(x, z);
    if (form_ == CoefficientForm::printed)
      return w * trace_;
    const Eigen::VectorXd grad = A_sym_ * centered(x);
    return 0.5 * w * (grad.squaredNorm() - trace_);
  }

  CoefficientBounds bounds() const { return {}; }

  //! v(t, x) = B_m(t + 2, x) f(x).
  double exact_solution(double t, std::span<const double> x) const
  {
    if (!(t >= 0.0))
      throw InvalidInput("exact_solution: t must be >= 0");
    const double b = barenblatt(b_, t + 2.0, x);
    return b == 0.0 ? 0.0 : b * f_tilt(x);
  }

  double initial_density(std::span<const double> x) const
  {
    return exact_solution(0.0, x);
  }

  //! Rejection sampler for v(0, .): proposal N(mu, sigma_p^2 I) with
  //! sigma_p = 1.2 R / 2, R the support radius of B_m(2, .).
  RejectionSampler initial_sampler(double safety = 1.05) const
  {
    const double radius = b_.support_radius(2.0);
    return RejectionSampler(
      [tc = *this](std::span<const double> x) { return tc.initial_density(x); },
      mu_,
      1.2 * radius / 2.0,
      Eigen::VectorXd::Zero(static_cast<Eigen::Index>(b_.dim)),
      radius,
      safety);
  }

private:
  static void check_density(double z)
  {
    if (!(z >= 0.0))
      throw InvalidInput("coefficient evaluated at a negative density value");
  }

  Eigen::VectorXd centered(std::span<const double> x) const
  {
    const auto d = static_cast<Eigen::Index>(b_.dim);
    Eigen::VectorXd u(d);
    for (Eigen::Index c = 0; c < d; ++c)
      u[c] = x[static_cast<std::size_t>(c)] - mu_[c];
    return u;
  }

  // f^{1-m} z^{m-1}
  double weight_factor(std::span<const double> x, double z) const
  {
    const double m = b_.m;
    return std::pow(f_tilt(x), 1.0 - m) * std::pow(z, m - 1.0);
  }

  // int B_m(2, x) exp(-1/2 (x-mu).A(x-mu)) dx
  double tilted_mass() const
  {
    const double radius = b_.support_radius(2.0);
    auto integrand = [this](std::span<const double> x) {
      const double b = barenblatt(b_, 2.0, x);
      return b == 0.0 ? 0.0 : b * std::exp(-0.5 * quadratic_form(x));
    };
    if (b_.dim == 1) {
      return trapezoid(
        [&](double x) { return integrand(std::span<const double>(&x, 1)); },
        -radius,
        radius,
        20000);
    }
    if (b_.dim == 2) {
      // Integrate along chords of the disk so both rules see the support edge.
      return trapezoid(
        [&](double y) {
          const double half = std::sqrt(std::max(0.0, radius * radius - y * y));
          return trapezoid(
            [&](double x) {
              const double p[2] = { x, y };
              return integrand(std::span<const double>(p, 2));
            },
            -half,
            half,
            1000);
        },
        -radius,
        radius,
        1000);
    }
    // Importance sampling with N(0, (R/2)^2 I) proposals.
    const std::size_t samples = 1000000;
    const double sigma = radius / 2.0;
    const double d = static_cast<double>(b_.dim);
    const double log_q_norm =
      -0.5 * d * std::log(2.0 * std::numbers::pi * sigma * sigma);
    RngStream rng(0x5eedc0de5eedc0deULL, { 0, 0, 0, StreamPurpose::normalization });
    std::vector<double> x(b_.dim);
    double sum = 0.0;
    for (std::size_t i = 0; i < samples; ++i) {
      double r2 = 0.0;
      for (double& c : x) {
        c = sigma * rng.normal();
        r2 += c * c;
      }
      const double q = std::exp(log_q_norm - 0.5 * r2 / (sigma * sigma));
      sum += integrand(x) / q;
    }
    return sum / static_cast<double>(samples);
  }

  BarenblattParams b_;
  Eigen::VectorXd mu_;
  Eigen::MatrixXd A_;
  Eigen::MatrixXd A_sym_;
  CoefficientForm form_;
  double f_floor_;
  double trace_ = 0.0;
  bool zero_tilt_ = false;
  double norm_c_ = 1.0;
};

} // namespace mckean
