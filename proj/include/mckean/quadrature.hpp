#pragma once

#include "errors.hpp"

#include <cstddef>

namespace mckean {

//! Composite trapezoid rule for f on [a, b] with `intervals` panels.
template<class F>
double
trapezoid(F&& f, double a, double b, std::size_t intervals)
{
  if (intervals == 0)
    throw InvalidInput("trapezoid: need at least one interval");
  if (b == a)
    return 0.0;
  const double h = (b - a) / static_cast<double>(intervals);
  double sum = 0.5 * (f(a) + f(b));
  for (std::size_t i = 1; i < intervals; ++i)
    sum += f(a + h * static_cast<double>(i));
  return sum * h;
}

//! Tensor-grid trapezoid of f(x, y) over [ax, bx] x [ay, by].
template<class F>
double
trapezoid_2d(F&& f,
             double ax,
             double bx,
             double ay,
             double by,
             std::size_t intervals)
{
  return trapezoid(
    [&](double y) {
      return trapezoid([&](double x) { return f(x, y); }, ax, bx, intervals);
    },
    ay,
    by,
    intervals);
}

} // namespace mckean
