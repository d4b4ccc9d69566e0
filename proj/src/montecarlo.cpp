#include "mflq/montecarlo.hpp"

#include <cmath>
#include <limits>
#include <numbers>

#include <fmt/format.h>

#include "mflq/error.hpp"

namespace mflq {

namespace {

std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

double to_unit(std::uint64_t bits) {
  // 53 random bits into (0, 1).
  return (static_cast<double>(bits >> 11) + 0.5) * 0x1.0p-53;
}

}  // namespace

double counter_normal(std::uint64_t seed, std::uint64_t stream, std::uint64_t counter) {
  const std::uint64_t key = splitmix64(splitmix64(seed ^ splitmix64(stream)) ^ counter);
  const double u1 = to_unit(key);
  const double u2 = to_unit(splitmix64(key));
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

void brownian_increments(std::uint64_t seed, std::uint64_t particle, std::uint64_t step, double h,
                         Eigen::Ref<Vec> out) {
  // Levy construction over one grid step: draw the whole increment, then
  // split intervals at their midpoints (node i of a binary heap splits with
  // its own normal). Refining the sub-step keeps every coarser increment.
  const Index n = out.size();
  const std::uint64_t base = step << 32;
  out(0) = std::sqrt(h) * counter_normal(seed, particle, base);
  double len = h;
  for (Index width = 1; width < n; width *= 2) {
    for (Index i = width - 1; i >= 0; --i) {
      const double total = out(i);
      const double z = counter_normal(seed, particle, base | static_cast<std::uint64_t>(width + i));
      const double left = 0.5 * total + 0.5 * std::sqrt(len) * z;
      out(2 * i) = left;
      out(2 * i + 1) = total - left;
    }
    len *= 0.5;
  }
}

SampledMoments simulate_closed_loop(const MeanFieldSystem& sys, const Feedback& fb, const Vec& x,
                                    int particles, std::uint64_t seed, int substeps) {
  if (particles < 2) throw Error(ErrorKind::kInput, "simulation needs at least 2 particles");
  if (substeps < 1 || (substeps & (substeps - 1)) != 0) {
    throw Error(ErrorKind::kInput, "substeps must be a power of two");
  }
  const long K = static_cast<long>(fb.Theta.size()) - 1;
  const double h = sys.h();
  const double dt = h / substeps;
  const HatCoefficients& hat = sys.hat;

  Mat X = x.replicate(1, particles);
  Mat dW(substeps, particles);
  SampledMoments out;
  out.particles = particles;
  auto record = [&](long j) {
    out.t.push_back(static_cast<double>(j) * h);
    const Vec mean = X.rowwise().sum() / particles;
    out.mean.push_back(mean);
    out.second.push_back(X * X.transpose() / particles);
  };
  record(0);

  for (long j = 0; j < K; ++j) {
    for (int p = 0; p < particles; ++p) {
      brownian_increments(seed, static_cast<std::uint64_t>(p), static_cast<std::uint64_t>(j), h,
                          dW.col(p));
    }
    for (int s = 0; s < substeps; ++s) {
      // Coefficients frozen at the last half-grid sample at or before the
      // sub-step start (left-point evaluation, as Euler-Maruyama requires).
      const long k = 2 * j + (2 * s) / substeps;
      const auto i = static_cast<std::size_t>(k);
      const Mat& th = fb.Theta.half[i];
      const Mat& thh = fb.Theta_hat.half[i];
      const Mat& phi = fb.phi.half[i];
      const Vec xbar = X.rowwise().sum() / particles;
      const Vec ubar = thh * xbar + phi;
      const Mat a = sys.base.A.half(k) + sys.base.B.half(k) * th;
      const Mat c = sys.base.C.half(k) + sys.base.D.half(k) * th;
      // u_i = th (X_i - xbar) + ubar, so everything except th X_i is shared.
      const Vec shift = ubar - th * xbar;
      const Vec drift0 = (hat.A_hat.half(k) - sys.base.A.half(k)) * xbar +
                         sys.base.B.half(k) * shift +
                         (hat.B_hat.half(k) - sys.base.B.half(k)) * ubar + sys.b.half(k);
      const Vec diff0 = (hat.C_hat.half(k) - sys.base.C.half(k)) * xbar +
                        sys.base.D.half(k) * shift +
                        (hat.D_hat.half(k) - sys.base.D.half(k)) * ubar + sys.sigma.half(k);
      const Mat drift = (a * X).colwise() + drift0;
      const Mat diffusion = (c * X).colwise() + diff0;
      X += dt * drift + diffusion * dW.row(s).asDiagonal();
      if (!X.allFinite()) {
        throw Error(ErrorKind::kDivergence,
                    fmt::format("particle state became non-finite at step {}", j + 1));
      }
    }
    record(j + 1);
  }
  return out;
}

CrossValidationReport cross_validate(const SampledMoments& mc, const Trajectory& ode_mean) {
  if (mc.mean.size() != ode_mean.size()) {
    throw Error(ErrorKind::kInput, "cross-validation grids differ");
  }
  CrossValidationReport rep;
  std::size_t over = 0;
  for (std::size_t j = 0; j < mc.mean.size(); ++j) {
    const Mat cov = mc.covariance(j);
    double zmax = 0.0;
    for (Index c = 0; c < cov.rows(); ++c) {
      const double diff = mc.mean[j](c) - ode_mean.node(j)(c, 0);
      const double se = std::sqrt(std::max(0.0, cov(c, c)) / mc.particles);
      double z = 0.0;
      if (se > 0.0) {
        z = diff / se;
      } else if (diff != 0.0) {
        z = std::numeric_limits<double>::infinity();
      }
      zmax = std::max(zmax, std::abs(z));
    }
    rep.z_max.push_back(zmax);
    rep.max_abs_z = std::max(rep.max_abs_z, zmax);
    if (zmax > 3.0) ++over;
  }
  rep.fraction_over_3 = static_cast<double>(over) / static_cast<double>(mc.mean.size());
  rep.pass = rep.fraction_over_3 <= 0.01;
  return rep;
}

}  // namespace mflq
