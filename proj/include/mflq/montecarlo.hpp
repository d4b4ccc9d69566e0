#pragma once

#include <cstdint>
#include <vector>

#include "mflq/turnpike.hpp"

namespace mflq {

struct SampledMoments {
  std::vector<double> t;
  std::vector<Vec> mean;    // empirical mean per grid node
  std::vector<Mat> second;  // empirical raw second moment per grid node
  int particles = 0;

  Mat covariance(std::size_t j) const { return second[j] - mean[j] * mean[j].transpose(); }
};

/// Euler-Maruyama particle simulation of the closed loop under `fb` from x,
/// with the empirical mean standing in for E X. The Brownian path of particle
/// i over grid step j is a pure function of (seed, i, j). `substeps` must be a
/// power of two; runs with different sub-step counts share the same paths.
SampledMoments simulate_closed_loop(const MeanFieldSystem& sys, const Feedback& fb, const Vec& x,
                                    int particles, std::uint64_t seed, int substeps = 4);

struct CrossValidationReport {
  std::vector<double> z_max;  // per node, largest |z| over components
  double max_abs_z = 0.0;
  double fraction_over_3 = 0.0;
  bool pass = false;
};

CrossValidationReport cross_validate(const SampledMoments& mc, const Trajectory& ode_mean);

/// Standard normal draw keyed by (seed, stream, counter).
double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter);

/// Brownian increments over the out.size() equal sub-intervals of grid step
/// `step` (length h) for one particle; out.size() must be a power of two.
void brownian_increments(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, double h,
                         Eigen::Ref<Vec> out);

}  // namespace mflq
