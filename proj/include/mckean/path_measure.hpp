#pragma once

#include "errors.hpp"
#include "kernel.hpp"
#include "particles.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <vector>

namespace mckean {

//! Finite weighted measure on paths sampled on a grid,
//! m = sum_j w_j delta_{X(omega_j)}.
//!
//! `snapshots[k]` holds every path's position at `grid[k]` (N x d), so the
//! kernel sums at a fixed time run over contiguous coordinates.
struct EmpiricalPathMeasure
{
  std::vector<double> grid;
  std::vector<PointSet> snapshots;
  Eigen::ArrayXd weights;

  std::size_t size() const
  {
    return snapshots.empty() ? 0 : static_cast<std::size_t>(snapshots[0].rows());
  }
  std::size_t dim() const
  {
    return snapshots.empty() ? 0 : static_cast<std::size_t>(snapshots[0].cols());
  }
  std::size_t steps() const { return grid.empty() ? 0 : grid.size() - 1; }

  //! Position of path j at grid index k.
  std::vector<double> point(std::size_t j, std::size_t k) const
  {
    std::vector<double> out(dim());
    for (std::size_t c = 0; c < out.size(); ++c)
      out[c] = snapshots[k](static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
    return out;
  }

  //! Throws InvalidInput unless the grid starts at 0 and increases strictly,
  //! snapshots match the grid, and the weights are a probability vector.
  void validate() const
  {
    if (grid.empty() || grid.front() != 0.0)
      throw InvalidInput("path grid must start at t_0 = 0");
    for (std::size_t k = 1; k < grid.size(); ++k)
      if (!(grid[k] > grid[k - 1]))
        throw InvalidInput("path grid must be strictly increasing");
    if (snapshots.size() != grid.size())
      throw InvalidInput("one snapshot per grid time required");
    const Eigen::Index N = snapshots[0].rows();
    if (N == 0)
      throw InvalidInput("path measure has no paths");
    for (const auto& s : snapshots)
      if (s.rows() != N || s.cols() != snapshots[0].cols())
        throw InvalidInput("inconsistent snapshot shapes");
    if (weights.size() != N)
      throw InvalidInput("one weight per path required");
    if ((weights < 0.0).any())
      throw InvalidInput("path weights must be nonnegative");
    if (std::abs(weights.sum() - 1.0) > 1e-12)
      throw InvalidInput("path weights must sum to 1");
  }

  //! Same paths restricted to grid[0..k].
  EmpiricalPathMeasure truncated(std::size_t k) const
  {
    if (k >= grid.size())
      throw InvalidInput("truncation index beyond the grid");
    EmpiricalPathMeasure out;
    out.grid.assign(grid.begin(), grid.begin() + static_cast<std::ptrdiff_t>(k + 1));
    out.snapshots.assign(snapshots.begin(),
                         snapshots.begin() + static_cast<std::ptrdiff_t>(k + 1));
    out.weights = weights;
    return out;
  }

  //! Uniform measure on the recorded trajectory of a particle run.
  static EmpiricalPathMeasure from_trajectory(const ParticleEnsemble& e,
                                              const GridSchedule& schedule)
  {
    if (e.trajectory.empty())
      throw InvalidInput("ensemble has no recorded trajectory");
    EmpiricalPathMeasure m;
    m.snapshots = e.trajectory;
    m.grid.resize(e.trajectory.size());
    for (std::size_t k = 0; k < m.grid.size(); ++k)
      m.grid[k] = schedule.time(k);
    m.weights = uniform_weights(static_cast<Eigen::Index>(e.size()));
    return m;
  }
};

} // namespace mckean
