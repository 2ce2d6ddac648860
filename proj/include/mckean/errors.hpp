#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mckean {

//! Raised on malformed arguments: non-finite coordinates, t <= 0, z < 0, ...
class InvalidInput : public std::invalid_argument
{
public:
  using std::invalid_argument::invalid_argument;
};

//! Operation exists but not for this dimension / configuration.
class Unsupported : public std::logic_error
{
public:
  using std::logic_error::logic_error;
};

//! Bad experiment or sampler configuration. `field()` names the culprit.
class ConfigError : public std::runtime_error
{
public:
  ConfigError(std::string field, const std::string& what)
    : std::runtime_error(field + ": " + what)
    , field_(std::move(field))
  {}
  const std::string& field() const noexcept { return field_; }

private:
  std::string field_;
};

//! Picard iteration ran out of iterations.
class NonConvergence : public std::runtime_error
{
public:
  NonConvergence(double residual, std::size_t iterations)
    : std::runtime_error("Picard iteration did not converge after " +
                         std::to_string(iterations) +
                         " iterations, last residual " +
                         std::to_string(residual))
    , residual_(residual)
    , iterations_(iterations)
  {}
  double residual() const noexcept { return residual_; }
  std::size_t iterations() const noexcept { return iterations_; }

private:
  double residual_;
  std::size_t iterations_;
};

//! A particle left the finite reals during a step.
class BlowUp : public std::runtime_error
{
public:
  BlowUp(std::size_t particle, std::size_t step)
    : std::runtime_error("non-finite position for particle " +
                         std::to_string(particle) + " at step " +
                         std::to_string(step))
    , particle_(particle)
    , step_(step)
  {}
  std::size_t particle() const noexcept { return particle_; }
  std::size_t step() const noexcept { return step_; }

private:
  std::size_t particle_;
  std::size_t step_;
};

} // namespace mckean
