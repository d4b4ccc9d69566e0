#include "mflq/riccati.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mflq/error.hpp"
#include "mflq/numerics.hpp"

namespace mflq {

const char* to_string(PeriodicMethod m) {
  switch (m) {
    case PeriodicMethod::kKleinman: return "kleinman";
    case PeriodicMethod::kHorizonExtension: return "horizon-extension";
    case PeriodicMethod::kBoth: return "both";
  }
  return "?";
}

MeanFieldSystem make_system(const ProblemData& p) {
  require_assumptions(p);
  MeanFieldSystem s;
  s.base = {p.A.grid(), p.B.grid(), p.C.grid(), p.D.grid(), p.Q.grid(), p.S.grid(), p.R.grid()};
  s.hat = hat_coefficients(p);
  s.b = p.b.grid();
  s.sigma = p.sigma.grid();
  s.q = p.q.grid();
  s.r = p.r.grid();
  s.n = p.n;
  s.m = p.m;
  s.steps = p.steps;
  s.tau = p.tau;
  return s;
}

RiccatiCoefficients pi_coefficients(const MeanFieldSystem& sys, long k, const Mat& P) {
  const Mat& ch = sys.hat.C_hat.half(k);
  const Mat& dh = sys.hat.D_hat.half(k);
  const Mat pd = P * dh;
  return {sys.hat.A_hat.half(k),
          sys.hat.B_hat.half(k),
          Mat::Zero(sys.n, sys.n),
          Mat::Zero(sys.n, sys.m),
          sym(sys.hat.Q_hat.half(k) + ch.transpose() * P * ch),
          pd.transpose() * ch + sys.hat.S_hat.half(k),
          sym(sys.hat.R_hat.half(k) + dh.transpose() * pd)};
}

RiccatiSystem pi_system(const MeanFieldSystem& sys, const GridFunction& P) {
  std::vector<RiccatiCoefficients> cs;
  cs.reserve(2 * static_cast<std::size_t>(sys.steps));
  for (long k = 0; k < 2L * sys.steps; ++k) cs.push_back(pi_coefficients(sys, k, P.half(k)));
  auto pick = [&](Mat RiccatiCoefficients::*field) {
    return map_grid(P, [&](long k) -> Mat { return cs[static_cast<std::size_t>(k)].*field; });
  };
  return {pick(&RiccatiCoefficients::A), pick(&RiccatiCoefficients::B),
          pick(&RiccatiCoefficients::C), pick(&RiccatiCoefficients::D),
          pick(&RiccatiCoefficients::Q), pick(&RiccatiCoefficients::S),
          pick(&RiccatiCoefficients::R)};
}

Mat adjoint_derivative(const MeanFieldSystem& sys, long k, const Mat& y, const Mat& P,
                       const Mat& Pi, const Mat& theta_hat) {
  const Mat a = sys.hat.A_hat.half(k) + sys.hat.B_hat.half(k) * theta_hat;
  const Mat c = sys.hat.C_hat.half(k) + sys.hat.D_hat.half(k) * theta_hat;
  return -(a.transpose() * y + c.transpose() * (P * sys.sigma.half(k)) +
           theta_hat.transpose() * sys.r.half(k) + Pi * sys.b.half(k) + sys.q.half(k));
}

namespace {

HalfRhs coupled_rhs(const MeanFieldSystem& sys) {
  return [&sys](long k, const Mat& y) -> Mat {
    const Index n = sys.n;
    const Mat P = y.topRows(n);
    Mat d(2 * n, n);
    d.topRows(n) = riccati_derivative(P, sys.base.at(k));
    d.bottomRows(n) = riccati_derivative(y.bottomRows(n), pi_coefficients(sys, k, P));
    return d;
  };
}

Projection coupled_projection(Index n) {
  return [n](Mat& y) {
    y.topRows(n) = sym(y.topRows(n));
    y.bottomRows(n) = sym(y.bottomRows(n));
  };
}

std::pair<Trajectory, Trajectory> split(const Trajectory& y, Index n) {
  Trajectory P{y.t0, y.h, {}}, Pi{y.t0, y.h, {}};
  P.half.reserve(y.half.size());
  Pi.half.reserve(y.half.size());
  for (const auto& m : y.half) {
    P.half.push_back(m.topRows(n));
    Pi.half.push_back(m.bottomRows(n));
  }
  return {std::move(P), std::move(Pi)};
}

double sup_norm(const Trajectory& t) {
  double s = 0.0;
  for (const auto& m : t.half) s = std::max(s, m.norm());
  return s;
}

}  // namespace

FiniteHorizonSolution solve_finite_horizon(const MeanFieldSystem& sys, double T) {
  if (!(T >= 0.0) || !std::isfinite(T)) throw Error(ErrorKind::kInput, "horizon must be >= 0");
  FiniteHorizonSolution fin;
  fin.T_requested = T;
  fin.steps = std::lround(T / sys.h());
  fin.T = static_cast<double>(fin.steps) * sys.h();
  const long K = fin.steps;
  const Index n = sys.n;

  const Trajectory y = integrate_on_grid(coupled_rhs(sys), Mat::Zero(2 * n, n), K, K, sys.h(),
                                         Direction::kBackward, coupled_projection(n));
  std::tie(fin.P, fin.Pi) = split(y, n);

  const std::size_t samples = fin.P.half.size();
  std::vector<Eigen::LLT<Mat>> weights(samples);
  fin.Theta = fin.Theta_hat = Trajectory{0.0, sys.h(), {}};
  fin.Theta.half.reserve(samples);
  fin.Theta_hat.half.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const long k = static_cast<long>(i);
    const Mat& P = fin.P.half[i];
    fin.Theta.half.push_back(riccati_gain(P, sys.base.at(k)));
    const RiccatiCoefficients pc = pi_coefficients(sys, k, P);
    weights[i].compute(pc.R);
    if (weights[i].info() != Eigen::Success) {
      throw Error(ErrorKind::kDefiniteness, "Cholesky failed for R_hat + D_hat^T P D_hat");
    }
    fin.Theta_hat.half.push_back(-weights[i].solve(pc.B.transpose() * fin.Pi.half[i] + pc.S));
  }

  const HalfRhs adj = [&](long k, const Mat& v) -> Mat {
    const auto i = static_cast<std::size_t>(k);
    return adjoint_derivative(sys, k, v, fin.P.half[i], fin.Pi.half[i], fin.Theta_hat.half[i]);
  };
  fin.varphi = integrate_on_grid(adj, Mat::Zero(n, 1), K, K, sys.h(), Direction::kBackward);

  fin.phi = Trajectory{0.0, sys.h(), {}};
  fin.phi.half.reserve(samples);
  for (std::size_t i = 0; i < samples; ++i) {
    const long k = static_cast<long>(i);
    const Mat& dh = sys.hat.D_hat.half(k);
    const Mat rhs = sys.hat.B_hat.half(k).transpose() * fin.varphi.half[i] +
                    dh.transpose() * (fin.P.half[i] * sys.sigma.half(k)) + sys.r.half(k);
    fin.phi.half.push_back(-weights[i].solve(rhs));
  }
  return fin;
}

FiniteHorizonSolution solve_finite_horizon(const ProblemData& p, double T) {
  return solve_finite_horizon(make_system(p), T);
}

namespace {

// Moves the cross term into the state matrices:
//   A - B R^-1 S, C - D R^-1 S, Q - S^T R^-1 S, S = 0.
RiccatiSystem shifted_system(const RiccatiSystem& full) {
  const long half = 2L * full.steps();
  std::vector<Mat> rs(static_cast<std::size_t>(half));
  for (long k = 0; k < half; ++k) {
    rs[static_cast<std::size_t>(k)] = llt_solve(full.R.half(k), full.S.half(k), "R");
  }
  auto at = [&](long k) -> const Mat& { return rs[static_cast<std::size_t>(k)]; };
  RiccatiSystem out = full;
  out.A = map_grid(full.A, [&](long k) -> Mat { return full.A.half(k) - full.B.half(k) * at(k); });
  out.C = map_grid(full.A, [&](long k) -> Mat { return full.C.half(k) - full.D.half(k) * at(k); });
  out.Q = map_grid(full.A, [&](long k) -> Mat {
    return sym(full.Q.half(k) - full.S.half(k).transpose() * at(k));
  });
  out.S = GridFunction::zeros(full.tau(), full.steps(), full.m(), full.n());
  return out;
}

void finalize(RiccatiComponent& c, const RiccatiSystem& full, Trajectory traj, const char* what) {
  c.traj = std::move(traj);
  c.grid = c.traj.periodic(full.tau());
  c.gain = gains_on_grid(full, c.traj);
  c.residual = periodic_riccati_residual(full, c.traj);
  const auto [a, cc] = closed_loop(full, c.gain);
  c.closed_loop_radius = is_ms_stable(a, cc).spectral_radius;
  if (!(c.closed_loop_radius < 1.0 - 1e-9)) {
    throw Error(ErrorKind::kInternal,
                fmt::format("periodic {} gain is not a stabilizer (radius {:.6f})", what,
                            c.closed_loop_radius));
  }
}

RiccatiComponent solve_component(const RiccatiSystem& full, const PeriodicOptions& opts,
                                 const char* what) {
  RiccatiComponent c;
  const RiccatiSystem shifted = shifted_system(full);
  const GridFunction E = map_grid(shifted.Q, [&](long k) { return sqrtm_psd(shifted.Q.half(k), 1e-8); });
  c.detectability = detectability_test(shifted.A, shifted.C, E);

  if (opts.method != PeriodicMethod::kHorizonExtension) {
    try {
      StabilizerResult res;
      if (opts.route == KleinmanRoute::kShifted) {
        res = synthesize_stabilizer(shifted, E, std::nullopt, opts.kleinman);
      } else {
        if (c.detectability.detectable == Detectability::kNotDetectable) {
          throw Error(ErrorKind::kAssumption,
                      "observation pair is not exactly detectable: " + c.detectability.evidence);
        }
        auto [seed, label] = find_initial_stabilizer(full);
        res = kleinman_iteration(full, seed, opts.kleinman);
        res.seed = label;
      }
      c.iterations = res.iterations;
      c.monotonicity_witness = res.monotonicity_witness;
      c.seed = res.seed;
      c.kleinman = std::move(res.P);
    } catch (const Error& e) {
      if (opts.method == PeriodicMethod::kKleinman) throw;
      c.diagnostics = fmt::format("kleinman: {}", e.what());
    }
  }
  if (opts.method != PeriodicMethod::kKleinman) {
    try {
      SweepResult sw = riccati_sweep(full, opts.extension_tol, opts.extension_cap);
      if (sw.converged) {
        sw.P.half.back() = sw.P.front();
        c.extension = std::move(sw.P);
      } else {
        c.diagnostics += fmt::format("{}horizon extension: no convergence after {} periods "
                                     "(last change {:.3e})",
                                     c.diagnostics.empty() ? "" : "; ", sw.periods,
                                     sw.last_change);
      }
    } catch (const Error& e) {
      c.diagnostics += fmt::format("{}horizon extension: {}", c.diagnostics.empty() ? "" : "; ",
                                   e.what());
    }
  }
  if (!c.kleinman && !c.extension) {
    throw Error(ErrorKind::kConvergence,
                fmt::format("periodic {} equation: no method converged ({})", what, c.diagnostics));
  }
  if (c.kleinman && c.extension) c.method_agreement = sup_distance(*c.kleinman, *c.extension);
  c.method = c.kleinman ? "kleinman" : "horizon-extension";
  finalize(c, full, c.kleinman ? *c.kleinman : *c.extension, what);
  return c;
}

}  // namespace

RiccatiComponent solve_periodic_riccati(const MeanFieldSystem& sys, const PeriodicOptions& opts) {
  return solve_component(sys.base, opts, "P");
}

RiccatiComponent solve_periodic_pi(const MeanFieldSystem& sys, const GridFunction& P,
                                   const PeriodicOptions& opts) {
  return solve_component(pi_system(sys, P), opts, "Pi");
}

CoupledSweep coupled_sweep(const MeanFieldSystem& sys, const Mat& P_end, const Mat& Pi_end,
                           double tol, int cap) {
  const Index n = sys.n;
  const HalfRhs rhs = coupled_rhs(sys);
  const Projection proj = coupled_projection(n);
  Mat end(2 * n, n);
  end << P_end, Pi_end;
  CoupledSweep out;
  Trajectory prev;
  for (int period = 1; period <= cap; ++period) {
    Trajectory cur =
        integrate_on_grid(rhs, end, sys.steps, sys.steps, sys.h(), Direction::kBackward, proj);
    out.periods = period;
    out.last_change = (cur.front() - end).norm();
    end = cur.front();
    prev = std::move(cur);
    if (out.last_change <= tol * std::max(1.0, sup_norm(prev))) {
      out.converged = true;
      break;
    }
  }
  prev.half.back() = prev.front();
  std::tie(out.P, out.Pi) = split(prev, n);
  return out;
}

PeriodicRiccatiSolution solve_periodic(const MeanFieldSystem& sys, const PeriodicOptions& opts) {
  PeriodicRiccatiSolution sol;
  sol.P = solve_periodic_riccati(sys, opts);
  sol.Pi = solve_periodic_pi(sys, sol.P.grid, opts);
  if (!opts.refine) return sol;

  const CoupledSweep cs = coupled_sweep(sys, sol.P.traj.front(), sol.Pi.traj.front(),
                                        opts.refine_tol, opts.refine_cap);
  sol.refined = true;
  sol.refinement_periods = cs.periods;
  sol.refinement_change = cs.last_change;
  sol.refinement_shift =
      std::max(sup_distance(sol.P.traj, cs.P), sup_distance(sol.Pi.traj, cs.Pi));
  finalize(sol.P, sys.base, cs.P, "P");
  finalize(sol.Pi, pi_system(sys, sol.P.grid), cs.Pi, "Pi");
  return sol;
}

ShiftLawReport shift_law_check(const MeanFieldSystem& sys, double T, int k) {
  const FiniteHorizonSolution a = solve_finite_horizon(sys, T);
  const FiniteHorizonSolution b = solve_finite_horizon(sys, a.T + k * sys.tau);
  const std::size_t off = static_cast<std::size_t>(b.steps - a.steps);
  ShiftLawReport rep;
  rep.monotonicity_witness = std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < a.P.size(); ++j) {
    rep.P_shift = std::max(rep.P_shift, (b.P.node(j + off) - a.P.node(j)).norm());
    rep.Pi_shift = std::max(rep.Pi_shift, (b.Pi.node(j + off) - a.Pi.node(j)).norm());
    rep.monotonicity_witness =
        std::min(rep.monotonicity_witness, min_eigenvalue(b.Pi.node(j) - a.Pi.node(j)));
  }
  return rep;
}

FiniteResiduals finite_horizon_residuals(const MeanFieldSystem& sys,
                                         const FiniteHorizonSolution& fin) {
  FiniteResiduals r;
  if (fin.steps < 7) return r;
  const std::vector<Mat> P = fin.P.values(), Pi = fin.Pi.values(), v = fin.varphi.values();
  const double h = sys.h();
  for (std::size_t j = 3; j + 3 < P.size(); ++j) {
    const long k = 2 * static_cast<long>(j);
    r.P = std::max(r.P, (fd6_derivative(P, j, h, false) - riccati_derivative(P[j], sys.base.at(k)))
                            .norm());
    r.Pi = std::max(r.Pi, (fd6_derivative(Pi, j, h, false) -
                           riccati_derivative(Pi[j], pi_coefficients(sys, k, P[j])))
                              .norm());
    r.varphi = std::max(r.varphi, (fd6_derivative(v, j, h, false) -
                                   adjoint_derivative(sys, k, v[j], P[j], Pi[j],
                                                      fin.Theta_hat.node(j)))
                                      .norm());
  }
  return r;
}

}  // namespace mflq
