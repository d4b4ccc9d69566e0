#include "mflq/periodic_lq.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mflq/error.hpp"
#include "mflq/numerics.hpp"

namespace mflq {

namespace {

const Projection kSym = [](Mat& m) { m = sym(m); };

std::size_t idx(long k) { return static_cast<std::size_t>(k); }

}  // namespace

ClosedLoopCoefficients closed_loop_coeffs(const MeanFieldSystem& sys,
                                          const PeriodicRiccatiSolution& sol) {
  const GridFunction& th = sol.P.gain;
  const GridFunction& thh = sol.Pi.gain;
  const HatCoefficients& hat = sys.hat;
  ClosedLoopCoefficients cl;
  cl.cal_A = map_grid(th, [&](long k) -> Mat {
    return sys.base.A.half(k) + sys.base.B.half(k) * th.half(k);
  });
  cl.cal_C = map_grid(th, [&](long k) -> Mat {
    return sys.base.C.half(k) + sys.base.D.half(k) * th.half(k);
  });
  cl.hat_cal_A = map_grid(th, [&](long k) -> Mat {
    return hat.A_hat.half(k) + hat.B_hat.half(k) * thh.half(k);
  });
  cl.hat_cal_C = map_grid(th, [&](long k) -> Mat {
    return hat.C_hat.half(k) + hat.D_hat.half(k) * thh.half(k);
  });
  cl.bar_cal_A = map_grid(th, [&](long k) -> Mat { return cl.hat_cal_A.half(k) - cl.cal_A.half(k); });
  cl.bar_cal_C = map_grid(th, [&](long k) -> Mat { return cl.hat_cal_C.half(k) - cl.cal_C.half(k); });
  return cl;
}

AuxiliaryWeights auxiliary_weights(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                                   const ClosedLoopCoefficients& cl) {
  const GridFunction& P = sol.P.grid;
  const GridFunction& Pi = sol.Pi.grid;
  const GridFunction& thh = sol.Pi.gain;
  const HatCoefficients& hat = sys.hat;
  AuxiliaryWeights w;
  w.Q1_bar = map_grid(P, [&](long k) -> Mat {
    const Mat& cc = cl.hat_cal_C.half(k);
    const Mat& t = thh.half(k);
    const Mat ts = t.transpose() * hat.S_hat.half(k);
    return sym(cc.transpose() * P.half(k) * cc + hat.Q_hat.half(k) +
               t.transpose() * hat.R_hat.half(k) * t + ts + ts.transpose());
  });
  w.R1_bar = map_grid(P, [&](long k) -> Mat {
    const Mat& dh = hat.D_hat.half(k);
    const Mat R_bar = hat.R_hat.half(k) - sys.base.R.half(k);
    return sym(R_bar + dh.transpose() * P.half(k) * dh);
  });
  w.S1_bar = map_grid(P, [&](long k) -> Mat { return -hat.B_hat.half(k).transpose() * Pi.half(k); });
  w.q1 = map_grid(P, [&](long k) -> Mat {
    return cl.hat_cal_C.half(k).transpose() * (P.half(k) * sys.sigma.half(k)) +
           thh.half(k).transpose() * sys.r.half(k) + sys.q.half(k);
  });
  w.r1 = map_grid(P, [&](long k) -> Mat {
    return hat.D_hat.half(k).transpose() * (P.half(k) * sys.sigma.half(k)) + sys.r.half(k);
  });
  w.R1_hat = map_grid(P, [&](long k) -> Mat { return sym(sys.base.R.half(k) + w.R1_bar.half(k)); });
  return w;
}

Trajectory solve_eta(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                     const ClosedLoopCoefficients& cl, const AuxiliaryWeights& aux,
                     PeriodicSolveInfo* info) {
  const HalfRhs linear = [&](long k, const Mat& y) -> Mat {
    return -(cl.hat_cal_A.half(k).transpose() * y);
  };
  const auto source = [&](long k) -> Mat {
    return -(aux.q1.half(k) + sol.Pi.grid.half(k) * sys.b.half(k));
  };
  PeriodicAffineSolution s = solve_periodic_affine(linear, source, StateBasis::full(sys.n, 1),
                                                   sys.steps, sys.h(), Direction::kBackward);
  if (info) *info = {s.condition, s.boundary_mismatch};
  return std::move(s.trajectory);
}

Trajectory v_star(const MeanFieldSystem& sys, const AuxiliaryWeights& aux, const Trajectory& eta) {
  Trajectory v{eta.t0, eta.h, {}};
  v.half.reserve(eta.half.size());
  for (std::size_t i = 0; i < eta.half.size(); ++i) {
    const long k = static_cast<long>(i);
    const Mat rhs = sys.hat.B_hat.half(k).transpose() * eta.half[i] + aux.r1.half(k);
    v.half.push_back(-llt_solve(aux.R1_hat.half(k), rhs, "R1_hat"));
  }
  return v;
}

Trajectory periodic_mean(const MeanFieldSystem& sys, const ClosedLoopCoefficients& cl,
                         const Trajectory& v, PeriodicSolveInfo* info) {
  const HalfRhs linear = [&](long k, const Mat& y) -> Mat { return cl.hat_cal_A.half(k) * y; };
  const auto source = [&](long k) -> Mat {
    return sys.hat.B_hat.half(k) * v.half[idx(k)] + sys.b.half(k);
  };
  PeriodicAffineSolution s = solve_periodic_affine(linear, source, StateBasis::full(sys.n, 1),
                                                   sys.steps, sys.h(), Direction::kForward);
  if (info) *info = {s.condition, s.boundary_mismatch};
  return std::move(s.trajectory);
}

std::pair<Trajectory, Trajectory> periodic_state_moments(const MeanFieldSystem& sys,
                                                         const ClosedLoopCoefficients& cl,
                                                         const Trajectory& v,
                                                         StateMomentsInfo* info, double tol,
                                                         int cap) {
  StateMomentsInfo local;
  StateMomentsInfo& inf = info ? *info : local;
  Trajectory mu = periodic_mean(sys, cl, v, &inf.mean);

  // Diffusion forcing w = hat_cal_C mu + D_hat v + sigma on the half grid.
  std::vector<Mat> wwT(mu.half.size());
  for (std::size_t i = 0; i < mu.half.size(); ++i) {
    const long k = static_cast<long>(i);
    const Mat w = cl.hat_cal_C.half(k) * mu.half[i] + sys.hat.D_hat.half(k) * v.half[i] +
                  sys.sigma.half(k);
    wwT[i] = w * w.transpose();
  }
  const HalfRhs linear = [&](long k, const Mat& S) -> Mat {
    const Mat AS = cl.cal_A.half(k) * S;
    return AS + AS.transpose() + cl.cal_C.half(k) * S * cl.cal_C.half(k).transpose();
  };
  const HalfRhs rhs = [&](long k, const Mat& S) -> Mat { return linear(k, S) + wwT[idx(k)]; };

  const Mat phi = one_period_map(linear, StateBasis::symmetric(sys.n), sys.steps, sys.h(),
                                 Direction::kForward);
  inf.moment_radius = spectral_radius(phi);
  if (!(inf.moment_radius < 1.0 - 1e-9)) {
    throw Error(ErrorKind::kStabilityPrecondition,
                fmt::format("closed loop (cal_A, cal_C) is not mean-square stable (radius {:.6f})",
                            inf.moment_radius));
  }
  inf.monotonicity_witness = std::numeric_limits<double>::infinity();

  // Geometric convergence at rate ~rho per sweep; past 0.9 the cap would be
  // reached before the tolerance, so take the fixed point directly.
  if (inf.moment_radius > 0.9) {
    inf.direct = true;
    PeriodicAffineSolution s = solve_periodic_affine(
        linear, [&](long k) -> Mat { return wwT[idx(k)]; }, StateBasis::symmetric(sys.n),
        sys.steps, sys.h(), Direction::kForward, kSym);
    return {std::move(mu), std::move(s.trajectory)};
  }

  Mat start = Mat::Zero(sys.n, sys.n);
  Trajectory prev;
  for (int sweep = 1; sweep <= cap; ++sweep) {
    Trajectory cur = integrate_on_grid(rhs, start, 0, sys.steps, sys.h(), Direction::kForward, kSym);
    inf.sweeps = sweep;
    if (sweep > 1) {
      double change = 0.0;
      for (std::size_t j = 0; j < cur.size(); ++j) {
        const Mat d = cur.node(j) - prev.node(j);
        change = std::max(change, d.norm());
        inf.monotonicity_witness = std::min(inf.monotonicity_witness, min_eigenvalue(d));
      }
      inf.sweep_changes.push_back(change);
      const std::size_t c = inf.sweep_changes.size();
      if (c >= 2 && inf.sweep_changes[c - 2] > 0.0 && change > 1e-12) {
        inf.contraction_factor = change / inf.sweep_changes[c - 2];
      }
      double scale = 0.0;
      for (const auto& m : cur.half) scale = std::max(scale, m.norm());
      if (change <= tol * std::max(1.0, scale)) {
        cur.half.back() = cur.front();
        return {std::move(mu), std::move(cur)};
      }
    }
    start = cur.back();
    prev = std::move(cur);
  }
  throw Error(ErrorKind::kConvergence,
              fmt::format("covariance sweeps did not converge in {} periods", cap));
}

double optimality_residual(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                           const AuxiliaryWeights& aux, const PeriodicLawMoments& law) {
  double r = 0.0;
  for (std::size_t j = 0; j < law.mu_star.size(); ++j) {
    const long k = 2 * static_cast<long>(j);
    const Mat& mu = law.mu_star.node(j);
    const Mat& v = law.v_star.node(j);
    const Mat y = sol.Pi.grid.half(k) * mu + law.eta.node(j);
    const Mat res = sys.hat.B_hat.half(k).transpose() * y + aux.S1_bar.half(k) * mu +
                    sys.base.R.half(k) * v + aux.R1_bar.half(k) * v + aux.r1.half(k);
    r = std::max(r, res.norm());
  }
  return r;
}

double periodic_cost(const MeanFieldSystem& sys, const ClosedLoopCoefficients& cl,
                     const AuxiliaryWeights& aux, const Trajectory& v) {
  const Trajectory mu = periodic_mean(sys, cl, v);
  std::vector<double> integrand(mu.half.size());
  for (std::size_t i = 0; i < mu.half.size(); ++i) {
    const long k = static_cast<long>(i);
    const Mat& x = mu.half[i];
    const Mat& u = v.half[i];
    const Mat val = u.transpose() * sys.base.R.half(k) * u + 2.0 * aux.q1.half(k).transpose() * x +
                    2.0 * aux.r1.half(k).transpose() * u +
                    x.transpose() * aux.Q1_bar.half(k) * x +
                    2.0 * u.transpose() * aux.S1_bar.half(k) * x +
                    u.transpose() * aux.R1_bar.half(k) * u;
    integrand[i] = val(0, 0);
  }
  return simpson_half(integrand, sys.h());
}

PeriodicLQSolution solve_periodic_lq(const MeanFieldSystem& sys, const PeriodicOptions& opts) {
  PeriodicLQSolution out;
  out.riccati = solve_periodic(sys, opts);
  out.cl = closed_loop_coeffs(sys, out.riccati);
  out.aux = auxiliary_weights(sys, out.riccati, out.cl);
  out.law.eta = solve_eta(sys, out.riccati, out.cl, out.aux, &out.eta_info);
  out.law.v_star = v_star(sys, out.aux, out.law.eta);
  std::tie(out.law.mu_star, out.law.Sigma_star) =
      periodic_state_moments(sys, out.cl, out.law.v_star, &out.moments_info);
  out.optimality_residual = optimality_residual(sys, out.riccati, out.aux, out.law);
  out.cost = periodic_cost(sys, out.cl, out.aux, out.law.v_star);
  return out;
}

}  // namespace mflq
