#pragma once

#include "errors.hpp"

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <span>
#include <vector>

namespace mckean {

//! What a stream is used for. Part of the stream key, so two purposes never
//! share draws even with identical (replica, particle, step).
enum class StreamPurpose : std::uint32_t
{
  initial_position = 1,
  brownian = 2,
  evaluation_points = 3,
  normalization = 4,
  test = 5,
};

struct StreamKey
{
  std::uint32_t replica = 0;
  std::uint32_t particle = 0;
  std::uint32_t step = 0;
  StreamPurpose purpose = StreamPurpose::test;
};

//! Philox4x32-10 block function (Salmon et al., "Parallel random numbers:
//! as easy as 1, 2, 3"). Pure: output depends only on (counter, key).
inline std::array<std::uint32_t, 4>
philox4x32(std::array<std::uint32_t, 4> ctr, std::array<std::uint32_t, 2> key)
{
  constexpr std::uint32_t m0 = 0xD2511F53u;
  constexpr std::uint32_t m1 = 0xCD9E8D57u;
  constexpr std::uint32_t w0 = 0x9E3779B9u;
  constexpr std::uint32_t w1 = 0xBB67AE85u;
  for (int round = 0; round < 10; ++round) {
    const std::uint64_t p0 = static_cast<std::uint64_t>(m0) * ctr[0];
    const std::uint64_t p1 = static_cast<std::uint64_t>(m1) * ctr[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
    const auto lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
    const auto lo1 = static_cast<std::uint32_t>(p1);
    ctr = { hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0 };
    key[0] += w0;
    key[1] += w1;
  }
  return ctr;
}

//! Keyed, counter-based random stream.
//!
//! The Philox key is the master seed; the counter is (block, step, particle,
//! replica|purpose). The draw sequence is a function of (seed, key) alone,
//! independent of how many other streams exist or in which order they are
//! consumed. Streams are cheap values; create one wherever it is needed.
class RngStream
{
public:
  RngStream(std::uint64_t master_seed, StreamKey key)
    : key_{ static_cast<std::uint32_t>(master_seed),
            static_cast<std::uint32_t>(master_seed >> 32) }
    , ctr_{ 0u,
            key.step,
            key.particle,
            (key.replica << 8) | static_cast<std::uint32_t>(key.purpose) }
  {
    if (key.replica >= (1u << 24))
      throw InvalidInput("replica index exceeds 2^24");
  }

  std::uint32_t next_u32()
  {
    if (pos_ == 4) {
      buf_ = philox4x32(ctr_, key_);
      ++ctr_[0];
      pos_ = 0;
    }
    return buf_[pos_++];
  }

  std::uint64_t next_u64()
  {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  //! Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1p-53; }

  //! Standard normal, Box-Muller; the second variate is cached.
  double normal()
  {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double a = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(a);
    has_spare_ = true;
    return r * std::cos(a);
  }

private:
  std::array<std::uint32_t, 2> key_;
  std::array<std::uint32_t, 4> ctr_;
  std::array<std::uint32_t, 4> buf_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

//! count x dim i.i.d. N(0, dt) draws, row-major (one row per increment).
inline std::vector<double>
gaussian_increments(RngStream& rng, std::size_t count, std::size_t dim, double dt)
{
  if (!(dt > 0.0))
    throw InvalidInput("gaussian_increments: dt must be positive");
  const double sd = std::sqrt(dt);
  std::vector<double> out(count * dim);
  for (double& v : out)
    v = sd * rng.normal();
  return out;
}

//! Rejection sampler with an isotropic Gaussian instrumental law
//! N(center, sigma^2 I).
//!
//! The envelope constant is the maximum of target/proposal over a tensor grid
//! covering the target's support box, inflated by `safety`. Draws that land
//! where the audited envelope turns out to be violated are counted.
class RejectionSampler
{
public:
  using Density = std::function<double(std::span<const double>)>;

  struct Stats
  {
    std::uint64_t proposals = 0;
    std::uint64_t accepted = 0;
    std::uint64_t envelope_violations = 0;
    double acceptance_rate() const
    {
      return proposals ? static_cast<double>(accepted) /
                           static_cast<double>(proposals)
                       : 0.0;
    }
  };

  //! The target must vanish outside the box support_center +- half_width.
  //! `grid_points` is the total audit-grid size, spread over the dimensions.
  RejectionSampler(Density target,
                   Eigen::VectorXd center,
                   double sigma,
                   Eigen::VectorXd support_center,
                   double support_half_width,
                   double safety = 1.05,
                   std::size_t grid_points = 10000)
    : target_(std::move(target))
    , center_(std::move(center))
    , support_center_(std::move(support_center))
    , sigma_(sigma)
  {
    if (support_center_.size() != center_.size())
      throw ConfigError("support_center", "dimension mismatch");
    if (!(sigma > 0.0))
      throw ConfigError("proposal_sigma", "must be positive");
    if (!(support_half_width > 0.0))
      throw ConfigError("support_half_width", "must be positive");
    log_norm_ = -0.5 * static_cast<double>(dim()) *
                std::log(2.0 * std::numbers::pi * sigma_ * sigma_);
    audit_max_ratio_ = grid_max_ratio(support_half_width, grid_points);
    if (!(audit_max_ratio_ > 0.0) || !std::isfinite(audit_max_ratio_))
      throw ConfigError("target", "target density vanishes on the audit grid");
    envelope_ = safety * audit_max_ratio_;
  }

  std::size_t dim() const { return static_cast<std::size_t>(center_.size()); }
  double envelope() const { return envelope_; }
  double sigma() const { return sigma_; }
  const Eigen::VectorXd& center() const { return center_; }

  double proposal_density(std::span<const double> x) const
  {
    double r2 = 0.0;
    for (std::size_t c = 0; c < x.size(); ++c) {
      const double u = x[c] - center_[static_cast<Eigen::Index>(c)];
      r2 += u * u;
    }
    return std::exp(log_norm_ - 0.5 * r2 / (sigma_ * sigma_));
  }

  //! Max of target/(envelope * proposal) over a grid of `grid_points` points
  //! on the support box; <= 1 for a valid envelope.
  double audit(double support_half_width, std::size_t grid_points) const
  {
    return grid_max_ratio(support_half_width, grid_points) / envelope_;
  }

  //! One exact draw from the target, consuming `rng` until acceptance.
  void draw(RngStream& rng, std::span<double> out, Stats* stats = nullptr) const
  {
    constexpr std::uint64_t max_tries = 100000;
    for (std::uint64_t tries = 0; tries < max_tries; ++tries) {
      for (std::size_t c = 0; c < out.size(); ++c)
        out[c] = center_[static_cast<Eigen::Index>(c)] + sigma_ * rng.normal();
      const double q = proposal_density(out);
      const double p = target_(out);
      const double u = rng.uniform();
      if (stats)
        ++stats->proposals;
      if (p > envelope_ * q && stats)
        ++stats->envelope_violations;
      if (u * envelope_ * q < p) {
        if (stats)
          ++stats->accepted;
        return;
      }
    }
    throw ConfigError("proposal",
                      "rejection sampler failed to accept within 1e5 tries");
  }

  //! `count` draws, one stream per point keyed by (replica, first + i).
  //! Throws ConfigError when the acceptance rate drops below 1%.
  Eigen::MatrixXd sample(std::uint64_t seed,
                  std::uint32_t replica,
                  StreamPurpose purpose,
                  std::size_t count,
                  Stats* stats_out = nullptr) const
  {
    Stats stats;
    Eigen::MatrixXd pts(static_cast<Eigen::Index>(count),
                 static_cast<Eigen::Index>(dim()));
    std::vector<double> x(dim());
    for (std::size_t i = 0; i < count; ++i) {
      RngStream rng(seed,
                    { replica, static_cast<std::uint32_t>(i), 0, purpose });
      draw(rng, x, &stats);
      for (std::size_t c = 0; c < dim(); ++c)
        pts(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c)) = x[c];
    }
    if (count > 0 && stats.acceptance_rate() < 0.01)
      throw ConfigError("proposal", "acceptance rate below 1%");
    if (stats_out)
      *stats_out = stats;
    return pts;
  }

private:
  double grid_max_ratio(double half_width, std::size_t grid_points) const
  {
    const std::size_t d = dim();
    auto per_dim = static_cast<std::size_t>(
      std::floor(std::pow(static_cast<double>(grid_points), 1.0 / d) + 1e-9));
    per_dim = std::max<std::size_t>(per_dim, 3);
    std::vector<std::size_t> idx(d, 0);
    std::vector<double> x(d);
    double best = 0.0;
    const double h = 2.0 * half_width / static_cast<double>(per_dim - 1);
    while (true) {
      for (std::size_t c = 0; c < d; ++c)
        x[c] = support_center_[static_cast<Eigen::Index>(c)] - half_width +
               h * static_cast<double>(idx[c]);
      const double p = target_(x);
      if (p > 0.0)
        best = std::max(best, p / proposal_density(x));
      std::size_t c = 0;
      while (c < d && ++idx[c] == per_dim)
        idx[c++] = 0;
      if (c == d)
        break;
    }
    return best;
  }

  Density target_;
  Eigen::VectorXd center_;
  Eigen::VectorXd support_center_;
  double sigma_;
  double log_norm_ = 0.0;
  double audit_max_ratio_ = 0.0;
  double envelope_ = 1.0;
};

} // namespace mckean
