#pragma once

#include "coefficients.hpp"
#include "errors.hpp"
#include "kernel.hpp"
#include "parallel.hpp"
#include "sampling.hpp"

#include <Eigen/Dense>
#include <bit>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <utility>
#include <vector>

namespace mckean {

//! Regular grid t_k = k T / n and the left-point map r(s).
struct GridSchedule
{
  GridSchedule(double horizon, std::size_t steps)
    : T(horizon)
    , n(steps)
  {
    if (!(T > 0.0) || !std::isfinite(T))
      throw InvalidInput("grid horizon T must be positive");
    if (n == 0)
      throw InvalidInput("grid needs at least one step");
    dt = T / static_cast<double>(n);
  }

  double time(std::size_t k) const
  {
    return k >= n ? T : static_cast<double>(k) * dt;
  }

  //! Index k with s in [t_k, t_{k+1}); the last point maps to n.
  std::size_t index(double s) const
  {
    if (s >= T)
      return n;
    if (s <= 0.0)
      return 0;
    auto k = static_cast<std::size_t>(std::floor(s / dt));
    // floor(s/dt) can land one past when s is a grid point up to rounding.
    while (k > 0 && time(k) > s)
      --k;
    while (k + 1 < n && time(k + 1) <= s)
      ++k;
    return k;
  }

  //! r(s) = t_k for s in [t_k, t_{k+1}).
  double left_point(double s) const { return time(index(s)); }

  std::vector<double> times() const
  {
    std::vector<double> out(n + 1);
    for (std::size_t k = 0; k <= n; ++k)
      out[k] = time(k);
    return out;
  }

  double T;
  std::size_t n;
  double dt = 0.0;
};

//! State of the discretized weighted particle system at t_k.
struct ParticleEnsemble
{
  PointSet positions;         //!< N x d
  Eigen::ArrayXd log_weights; //!< log V^i_{t_k}
  //! Stream identifier per particle; draws are keyed by label, not by row,
  //! so permuting rows together with labels permutes the dynamics.
  std::vector<std::uint32_t> labels;
  std::size_t step_index = 0;
  bool record_trajectory = false;
  std::vector<PointSet> trajectory; //!< positions at t_0 .. t_k when recorded

  std::size_t size() const { return static_cast<std::size_t>(positions.rows()); }
  std::size_t dim() const { return static_cast<std::size_t>(positions.cols()); }
};

//! Fills `out` (length p) with the Brownian increment of particle `label`
//! over step `k`.
using IncrementFn =
  std::function<void(std::size_t k, std::uint32_t label, std::span<double> out)>;

//! Euler scheme for the weighted interacting particle system
//!
//!   x_i <- x_i + Phi(t_k, x_i, z_i) dW_i + g(t_k, x_i, z_i) dt
//!   log V_i <- log V_i + dt Lambda(t_k, x_i, z_i)
//!   z_i = v_k(x_i),  v_k(y) = 1/N sum_j K(y - x_j) V_j
//!
//! with every z_i computed from the pre-step snapshot (self-interaction
//! included). Brownian draws come from RngStream(seed, {replica, label, k}).
template<CoefficientBundle Coefficients>
class ParticleSystem
{
public:
  ParticleSystem(const Coefficients& coefficients,
                 Kernel kernel,
                 GridSchedule grid,
                 std::uint64_t seed,
                 std::uint32_t replica = 0,
                 std::size_t threads = 1)
    : coeffs_(coefficients)
    , kernel_(kernel)
    , grid_(grid)
    , seed_(seed)
    , replica_(replica)
    , threads_(threads)
  {
    if (kernel_.dim() != coeffs_.dim())
      throw InvalidInput("kernel and coefficient dimensions differ");
  }

  const Kernel& kernel() const { return kernel_; }
  const GridSchedule& grid() const { return grid_; }
  std::uint64_t seed() const { return seed_; }
  std::uint32_t replica() const { return replica_; }

  //! N i.i.d. initial positions. `sampler(rng, out)` draws one point of the
  //! initial law from the stream keyed by the particle label.
  template<class Sampler>
  ParticleEnsemble init(Sampler&& sampler,
                        std::size_t N,
                        bool record_trajectory = false) const
  {
    if (N == 0)
      throw InvalidInput("particle count must be positive");
    const std::size_t d = coeffs_.dim();
    ParticleEnsemble e;
    e.positions.resize(static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(d));
    e.log_weights = Eigen::ArrayXd::Zero(static_cast<Eigen::Index>(N));
    e.labels.resize(N);
    std::iota(e.labels.begin(), e.labels.end(), 0u);
    e.record_trajectory = record_trajectory;
    std::vector<double> x(d);
    for (std::size_t i = 0; i < N; ++i) {
      RngStream rng(seed_,
                    { replica_, e.labels[i], 0, StreamPurpose::initial_position });
      sampler(rng, std::span<double>(x));
      for (std::size_t c = 0; c < d; ++c)
        e.positions(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = x[c];
    }
    if (record_trajectory)
      e.trajectory.push_back(e.positions);
    return e;
  }

  //! v_k(y) = 1/N sum_j K(y - x_j) exp(log V_j) at every row of `queries`.
  std::vector<double> eval_density(const ParticleEnsemble& e,
                                   const PointSet& queries) const
  {
    const Eigen::ArrayXd w = uniform_weights(static_cast<Eigen::Index>(e.size()));
    std::vector<double> out(static_cast<std::size_t>(queries.rows()));
    parallel_for(out.size(), threads_, [&](std::size_t begin, std::size_t end) {
      std::vector<double> y(static_cast<std::size_t>(queries.cols()));
      for (std::size_t q = begin; q < end; ++q) {
        for (std::size_t c = 0; c < y.size(); ++c)
          y[c] = queries(static_cast<Eigen::Index>(q), static_cast<Eigen::Index>(c));
        out[q] = kernel_sum(kernel_, e.positions, w, e.log_weights, y);
      }
    });
    return out;
  }

  //! Standard increments: N(0, dt I_p) from the keyed Brownian stream.
  IncrementFn brownian_increments() const
  {
    return [seed = seed_, replica = replica_, dt = grid_.dt](
             std::size_t k, std::uint32_t label, std::span<double> out) {
      RngStream rng(seed,
                    { replica, label, static_cast<std::uint32_t>(k),
                      StreamPurpose::brownian });
      const double sd = std::sqrt(dt);
      for (double& v : out)
        v = sd * rng.normal();
    };
  }

  //! Advances `e` from t_k to t_{k+1}.
  void step(ParticleEnsemble& e) const { step(e, brownian_increments()); }

  void step(ParticleEnsemble& e, const IncrementFn& increments) const
  {
    const std::size_t k = e.step_index;
    if (k >= grid_.n)
      throw InvalidInput("step: ensemble already at the final grid time");
    const std::size_t N = e.size();
    const std::size_t d = e.dim();
    const std::size_t p = coeffs_.noise_dim();
    const double t = grid_.time(k);
    const double dt = grid_.dt;

    // Phase 1: density at own positions, from the frozen snapshot.
    const std::vector<double> z = eval_density(e, e.positions);

    // Phases 2-3: exclusive writes to row i.
    PointSet next(e.positions.rows(), e.positions.cols());
    Eigen::ArrayXd next_lw(e.log_weights.size());
    parallel_for(N, threads_, [&](std::size_t begin, std::size_t end) {
      std::vector<double> x(d);
      std::vector<double> dw(p);
      for (std::size_t i = begin; i < end; ++i) {
        const auto row = static_cast<Eigen::Index>(i);
        for (std::size_t c = 0; c < d; ++c)
          x[c] = e.positions(row, static_cast<Eigen::Index>(c));
        increments(k, e.labels[i], std::span<double>(dw));
        const Eigen::MatrixXd phi = coeffs_.phi(t, x, z[i]);
        const Eigen::VectorXd g = coeffs_.drift(t, x, z[i]);
        const double lambda = coeffs_.lambda(t, x, z[i]);
        const Eigen::Map<const Eigen::VectorXd> dwv(dw.data(),
                                                    static_cast<Eigen::Index>(p));
        const Eigen::VectorXd moved =
          Eigen::Map<const Eigen::VectorXd>(x.data(), static_cast<Eigen::Index>(d)) +
          phi * dwv + g * dt;
        if (!moved.allFinite())
          throw BlowUp(i, k);
        next.row(row) = moved.transpose();
        next_lw[row] = e.log_weights[row] + dt * lambda;
      }
    });
    e.positions = std::move(next);
    e.log_weights = std::move(next_lw);
    ++e.step_index;
    if (e.record_trajectory)
      e.trajectory.push_back(e.positions);
  }

  //! Initializes and runs all n steps.
  template<class Sampler>
  ParticleEnsemble run(Sampler&& sampler,
                       std::size_t N,
                       bool record_trajectory = false) const
  {
    ParticleEnsemble e = init(sampler, N, record_trajectory);
    while (e.step_index < grid_.n)
      step(e);
    return e;
  }

private:
  const Coefficients& coeffs_;
  Kernel kernel_;
  GridSchedule grid_;
  std::uint64_t seed_;
  std::uint32_t replica_;
  std::size_t threads_;
};

//! Coarse (dt) and fine (dt/2) runs driven by the same Brownian path.
struct RefinementPair
{
  ParticleEnsemble coarse;
  ParticleEnsemble fine;
};

//! Runs the system on `coarse_grid` and on its two-fold refinement. Fine
//! increments are drawn from the keyed stream of the fine grid; the coarse run
//! consumes their pairwise sums. Both trajectories are recorded.
template<CoefficientBundle Coefficients, class Sampler>
RefinementPair
coupled_refinement_run(const Coefficients& coeffs,
                       const Kernel& kernel,
                       const GridSchedule& coarse_grid,
                       Sampler&& sampler,
                       std::size_t N,
                       std::uint64_t seed,
                       std::uint32_t replica = 0,
                       std::size_t threads = 1)
{
  const GridSchedule fine_grid(coarse_grid.T, 2 * coarse_grid.n);
  const ParticleSystem<Coefficients> fine(coeffs, kernel, fine_grid, seed, replica, threads);
  const ParticleSystem<Coefficients> coarse(coeffs, kernel, coarse_grid, seed, replica, threads);
  const IncrementFn fine_inc = fine.brownian_increments();
  const std::size_t p = coeffs.noise_dim();
  const IncrementFn coarse_inc =
    [&fine_inc, p](std::size_t k, std::uint32_t label, std::span<double> out) {
      std::vector<double> a(p), b(p);
      fine_inc(2 * k, label, a);
      fine_inc(2 * k + 1, label, b);
      for (std::size_t c = 0; c < p; ++c)
        out[c] = a[c] + b[c];
    };

  RefinementPair result;
  result.fine = fine.init(sampler, N, true);
  result.coarse = result.fine;
  while (result.fine.step_index < fine_grid.n)
    fine.step(result.fine, fine_inc);
  while (result.coarse.step_index < coarse_grid.n)
    coarse.step(result.coarse, coarse_inc);
  return result;
}

//! (1/N) sum_i max_k |x^fine_i(t_k) - x^coarse_i(t_k)|^2 over the coarse grid.
inline double
refinement_strong_error(const RefinementPair& pair)
{
  const auto& c = pair.coarse.trajectory;
  const auto& f = pair.fine.trajectory;
  if (c.empty() || f.size() != 2 * (c.size() - 1) + 1)
    throw InvalidInput("refinement pair lacks matching trajectories");
  const Eigen::Index N = c.front().rows();
  Eigen::ArrayXd sup = Eigen::ArrayXd::Zero(N);
  for (std::size_t k = 0; k < c.size(); ++k)
    sup = sup.max((f[2 * k] - c[k]).rowwise().squaredNorm().array());
  return sup.mean();
}

namespace detail {

inline void
put_u64(std::ostream& os, std::uint64_t v)
{
  char bytes[8];
  for (int b = 0; b < 8; ++b)
    bytes[b] = static_cast<char>((v >> (8 * b)) & 0xFFu);
  os.write(bytes, 8);
}

inline std::uint64_t
get_u64(std::istream& is)
{
  unsigned char bytes[8];
  is.read(reinterpret_cast<char*>(bytes), 8);
  if (!is)
    throw InvalidInput("trajectory file truncated");
  std::uint64_t v = 0;
  for (int b = 7; b >= 0; --b)
    v = (v << 8) | bytes[b];
  return v;
}

} // namespace detail

//! Binary trajectory dump: header (N, d, n, T, seed) as little-endian 64-bit
//! words (T as IEEE-754 binary64 bits), then for each recorded step the N x d
//! positions row-major as little-endian float64.
inline void
write_trajectory(std::ostream& os,
                 const ParticleEnsemble& e,
                 double T,
                 std::uint64_t seed)
{
  if (e.trajectory.empty())
    throw InvalidInput("ensemble has no recorded trajectory");
  const auto N = static_cast<std::uint64_t>(e.size());
  const auto d = static_cast<std::uint64_t>(e.dim());
  detail::put_u64(os, N);
  detail::put_u64(os, d);
  detail::put_u64(os, static_cast<std::uint64_t>(e.trajectory.size() - 1));
  detail::put_u64(os, std::bit_cast<std::uint64_t>(T));
  detail::put_u64(os, seed);
  for (const PointSet& snap : e.trajectory)
    for (Eigen::Index i = 0; i < snap.rows(); ++i)
      for (Eigen::Index c = 0; c < snap.cols(); ++c)
        detail::put_u64(os, std::bit_cast<std::uint64_t>(snap(i, c)));
}

struct TrajectoryFile
{
  std::uint64_t N = 0;
  std::uint64_t dim = 0;
  std::uint64_t steps = 0;
  double T = 0.0;
  std::uint64_t seed = 0;
  std::vector<PointSet> snapshots;
};

inline TrajectoryFile
read_trajectory(std::istream& is)
{
  TrajectoryFile f;
  f.N = detail::get_u64(is);
  f.dim = detail::get_u64(is);
  f.steps = detail::get_u64(is);
  f.T = std::bit_cast<double>(detail::get_u64(is));
  f.seed = detail::get_u64(is);
  for (std::uint64_t k = 0; k <= f.steps; ++k) {
    PointSet snap(static_cast<Eigen::Index>(f.N), static_cast<Eigen::Index>(f.dim));
    for (Eigen::Index i = 0; i < snap.rows(); ++i)
      for (Eigen::Index c = 0; c < snap.cols(); ++c)
        snap(i, c) = std::bit_cast<double>(detail::get_u64(is));
    f.snapshots.push_back(std::move(snap));
  }
  return f;
}

} // namespace mckean
