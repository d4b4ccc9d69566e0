#include "mflq/stability.hpp"

#include <algorithm>
#include <cmath>

#include <fmt/format.h>

#include "mflq/error.hpp"
#include "mflq/numerics.hpp"

namespace mflq {

namespace {

const Projection kSym = [](Mat& m) { m = sym(m); };

double sup_norm(const Trajectory& t) {
  double s = 0.0;
  for (const auto& m : t.half) s = std::max(s, m.norm());
  return s;
}

HalfRhs moment_rhs(const GridFunction& A, const GridFunction& C) {
  return [&A, &C](long k, const Mat& M) -> Mat {
    const Mat AM = A.half(k) * M;
    return AM + AM.transpose() + C.half(k) * M * C.half(k).transpose();
  };
}

HalfRhs lyapunov_rhs(const GridFunction& A, const GridFunction& C, const GridFunction* Lambda) {
  return [&A, &C, Lambda](long k, const Mat& P) -> Mat {
    const Mat PA = P * A.half(k);
    Mat d = PA + PA.transpose() + C.half(k).transpose() * P * C.half(k);
    if (Lambda) d += Lambda->half(k);
    return -d;
  };
}

}  // namespace

Mat moment_monodromy(const GridFunction& A, const GridFunction& C) {
  return one_period_map(moment_rhs(A, C), StateBasis::symmetric(A.rows()), A.steps(), A.h(),
                        Direction::kForward);
}

StabilityVerdict is_ms_stable(const GridFunction& A, const GridFunction& C, double margin) {
  StabilityVerdict v;
  v.margin = margin;
  v.spectral_radius = spectral_radius(moment_monodromy(A, C));
  v.stable = v.spectral_radius < 1.0 - margin;
  if (v.spectral_radius < 1.0) {
    v.decay_rate_estimate = v.spectral_radius > 0.0
                                ? -std::log(v.spectral_radius) / A.tau()
                                : std::numeric_limits<double>::infinity();
  }
  return v;
}

Trajectory solve_periodic_lyapunov_direct(const GridFunction& A, const GridFunction& C,
                                          const GridFunction& Lambda) {
  const HalfRhs linear = lyapunov_rhs(A, C, nullptr);
  return solve_periodic_affine(
             linear, [&Lambda](long k) -> Mat { return -Lambda.half(k); },
             StateBasis::symmetric(A.rows()), A.steps(), A.h(), Direction::kBackward, kSym)
      .trajectory;
}

Trajectory solve_periodic_lyapunov(const GridFunction& A, const GridFunction& C,
                                   const GridFunction& Lambda, const LyapunovOptions& opts) {
  const StabilityVerdict v = is_ms_stable(A, C);
  if (!v.stable) {
    throw Error(ErrorKind::kStabilityPrecondition,
                fmt::format("periodic Lyapunov equation needs a mean-square stable pair "
                            "(spectral radius {:.6f})",
                            v.spectral_radius));
  }
  if (v.spectral_radius > opts.direct_above) return solve_periodic_lyapunov_direct(A, C, Lambda);

  const HalfRhs rhs = lyapunov_rhs(A, C, &Lambda);
  const int N = A.steps();
  Mat end = Mat::Zero(A.rows(), A.rows());
  Trajectory prev;
  for (int sweep = 0; sweep < opts.max_sweeps; ++sweep) {
    Trajectory cur = integrate_on_grid(rhs, end, N, N, A.h(), Direction::kBackward, kSym);
    if (sweep > 0) {
      const double change = sup_distance(cur, prev);
      if (change <= opts.tol * std::max(1.0, sup_norm(cur))) {
        cur.half.back() = cur.front();
        return cur;
      }
    }
    end = cur.front();
    prev = std::move(cur);
  }
  throw Error(ErrorKind::kConvergence,
              fmt::format("periodic Lyapunov sweeps did not converge in {} periods",
                          opts.max_sweeps));
}

const char* to_string(Detectability d) {
  switch (d) {
    case Detectability::kDetectable: return "detectable";
    case Detectability::kNotDetectable: return "not_detectable";
    case Detectability::kInconclusive: return "inconclusive";
  }
  return "?";
}

const char* to_string(DetectabilityMethod m) {
  switch (m) {
    case DetectabilityMethod::kFullRankE: return "full_rank_E";
    case DetectabilityMethod::kStableSystem: return "stable_system";
    case DetectabilityMethod::kGramianHeuristic: return "gramian_heuristic";
  }
  return "?";
}

DetectabilityVerdict detectability_test(const GridFunction& A, const GridFunction& C,
                                        const GridFunction& E, int periods, double rank_tol) {
  DetectabilityVerdict out;
  const Index n = A.rows();
  const long half = 2L * A.steps();

  // (1) E(t) injective everywhere on the grid.
  const double scale = E.sup_norm();
  double smin = std::numeric_limits<double>::infinity();
  for (long k = 0; k < half; ++k) {
    const Mat& e = E.half(k);
    double s = 0.0;
    if (e.rows() >= n && scale > 0.0) {
      Eigen::JacobiSVD<Mat> svd(e);
      s = svd.singularValues()(n - 1) / scale;
    }
    smin = std::min(smin, s);
  }
  out.min_singular_value = smin;
  if (smin > rank_tol) {
    out.method = DetectabilityMethod::kFullRankE;
    out.detectable = Detectability::kDetectable;
    out.evidence = fmt::format("min relative singular value of E = {:.3e}", smin);
    return out;
  }

  // (2) Stable systems are detectable for every observation.
  const Mat phi = moment_monodromy(A, C);
  out.spectral_radius = spectral_radius(phi);
  if (out.spectral_radius < 1.0 - 1e-9) {
    out.method = DetectabilityMethod::kStableSystem;
    out.detectable = Detectability::kDetectable;
    out.evidence = fmt::format("moment spectral radius {:.6f}", out.spectral_radius);
    return out;
  }

  // (3) Observability Gramian of the lifted moment system with output
  // <E^T E, M(t)> = E|E X(t)|^2 over `periods` periods.
  out.method = DetectabilityMethod::kGramianHeuristic;
  const StateBasis basis = StateBasis::symmetric(n);
  const Index d = basis.dim();
  out.gramian_dim = d;
  const HalfRhs rhs = moment_rhs(A, C);
  const long steps = static_cast<long>(periods) * A.steps();
  std::vector<std::vector<double>> outputs(d);
  for (Index i = 0; i < d; ++i) {
    const Trajectory traj =
        integrate_on_grid(rhs, basis.element(i), 0, steps, A.h(), Direction::kForward);
    outputs[i].reserve(traj.half.size());
    for (std::size_t k = 0; k < traj.half.size(); ++k) {
      const Mat& e = E.half(static_cast<long>(k));
      outputs[i].push_back((e.transpose() * e * traj.half[k]).trace());
    }
  }
  Mat W(d, d);
  std::vector<double> prod(outputs[0].size());
  for (Index i = 0; i < d; ++i) {
    for (Index j = 0; j <= i; ++j) {
      for (std::size_t k = 0; k < prod.size(); ++k) prod[k] = outputs[i][k] * outputs[j][k];
      W(i, j) = W(j, i) = simpson_half(prod, A.h());
    }
  }
  Eigen::SelfAdjointEigenSolver<Mat> es(W);
  const Vec& ev = es.eigenvalues();
  const double top = ev.cwiseAbs().maxCoeff();
  Index rank = 0;
  std::vector<Index> null_idx;
  for (Index i = 0; i < d; ++i) {
    if (top > 1e-300 && ev(i) > rank_tol * top) {
      ++rank;
    } else {
      null_idx.push_back(i);
    }
  }
  out.gramian_rank = rank;
  if (rank == d) {
    out.detectable = Detectability::kDetectable;
    out.evidence = fmt::format("lifted Gramian has full rank {}", d);
    return out;
  }
  Mat V(d, static_cast<Index>(null_idx.size()));
  for (std::size_t c = 0; c < null_idx.size(); ++c) {
    V.col(static_cast<Index>(c)) = es.eigenvectors().col(null_idx[c]);
  }
  out.unobservable_radius = spectral_radius(V.transpose() * phi * V);
  if (out.unobservable_radius < 1.0 - 1e-9) {
    out.detectable = Detectability::kDetectable;
    out.evidence = fmt::format("unobservable moment modes stable (radius {:.6f}, rank {}/{})",
                               out.unobservable_radius, rank, d);
  } else if (rank == 0) {
    out.detectable = Detectability::kNotDetectable;
    out.evidence = fmt::format("observation Gramian vanishes and the moment spectral radius is "
                               "{:.6f}",
                               out.spectral_radius);
  } else {
    out.detectable = Detectability::kInconclusive;
    out.evidence = fmt::format("Gramian rank {}/{}, unobservable radius {:.6f}", rank, d,
                               out.unobservable_radius);
  }
  return out;
}

std::pair<GridFunction, GridFunction> closed_loop(const RiccatiSystem& sys,
                                                  const GridFunction& theta) {
  GridFunction a = map_grid(sys.A, [&](long k) -> Mat {
    return sys.A.half(k) + sys.B.half(k) * theta.half(k);
  });
  GridFunction c = map_grid(sys.A, [&](long k) -> Mat {
    return sys.C.half(k) + sys.D.half(k) * theta.half(k);
  });
  return {std::move(a), std::move(c)};
}

GridFunction gains_on_grid(const RiccatiSystem& sys, const Trajectory& P) {
  return map_grid(sys.A, [&](long k) -> Mat {
    return riccati_gain(P.half[static_cast<std::size_t>(k)], sys.at(k));
  });
}

StabilizerResult kleinman_iteration(const RiccatiSystem& sys, const GridFunction& theta0,
                                    const KleinmanOptions& opts) {
  StabilizerResult res;
  res.monotonicity_witness = std::numeric_limits<double>::infinity();
  GridFunction theta = theta0;
  Trajectory prev;
  for (int i = 0; i < opts.max_iterations; ++i) {
    const auto [acl, ccl] = closed_loop(sys, theta);
    const GridFunction weight = map_grid(sys.A, [&](long k) -> Mat {
      return closed_loop_weight(theta.half(k), sys.at(k));
    });
    Trajectory P;
    try {
      P = solve_periodic_lyapunov(acl, ccl, weight, opts.lyapunov);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kStabilityPrecondition) throw;
      if (i == 0) throw Error(ErrorKind::kNotStabilizable, "Kleinman seed is not a stabilizer");
      throw Error(ErrorKind::kInternal,
                  fmt::format("Kleinman iterate {} lost closed-loop stability", i));
    }
    theta = gains_on_grid(sys, P);
    if (i > 0) {
      double change = 0.0;
      for (std::size_t j = 0; j < P.size(); ++j) {
        const Mat diff = prev.node(j) - P.node(j);
        change = std::max(change, diff.norm());
        res.monotonicity_witness = std::min(res.monotonicity_witness, min_eigenvalue(diff));
      }
      if (change <= opts.tol * std::max(1.0, sup_norm(P))) {
        res.P = std::move(P);
        res.Theta = theta;
        res.iterations = i + 1;
        const auto [a, c] = closed_loop(sys, theta);
        res.closed_loop_radius = is_ms_stable(a, c).spectral_radius;
        if (!(res.closed_loop_radius < 1.0 - 1e-9)) {
          throw Error(ErrorKind::kInternal, "converged Kleinman gain is not a stabilizer");
        }
        return res;
      }
    }
    prev = std::move(P);
  }
  throw Error(ErrorKind::kConvergence,
              fmt::format("Kleinman iteration did not converge in {} iterations",
                          opts.max_iterations));
}

SweepResult riccati_sweep(const RiccatiSystem& sys, double tol, int max_periods,
                          const Mat* start) {
  const int N = sys.steps();
  const HalfRhs rhs = [&sys](long k, const Mat& P) { return riccati_derivative(P, sys.at(k)); };
  SweepResult res;
  Mat end = start ? *start : Mat::Zero(sys.n(), sys.n());
  Trajectory prev;
  for (int period = 1; period <= max_periods; ++period) {
    Trajectory cur = integrate_on_grid(rhs, end, N, N, sys.h(), Direction::kBackward, kSym);
    res.periods = period;
    if (period > 1) {
      res.last_change = sup_distance(cur, prev);
      if (res.last_change <= tol * std::max(1.0, sup_norm(cur))) {
        res.P = std::move(cur);
        res.converged = true;
        return res;
      }
    }
    end = cur.front();
    prev = std::move(cur);
  }
  res.P = std::move(prev);
  return res;
}

namespace {

RiccatiSystem with_penalty(const RiccatiSystem& sys, double eta, bool deterministic) {
  RiccatiSystem out = sys;
  const Mat eye = Mat::Identity(sys.n(), sys.n());
  out.Q = map_grid(sys.Q, [&](long k) -> Mat { return sys.Q.half(k) + eta * eye; });
  if (deterministic) {
    out.C = GridFunction::zeros(sys.tau(), sys.steps(), sys.n(), sys.n());
    out.D = GridFunction::zeros(sys.tau(), sys.steps(), sys.n(), sys.m());
  }
  return out;
}

}  // namespace

std::pair<GridFunction, std::string> find_initial_stabilizer(const RiccatiSystem& sys) {
  const GridFunction zero = GridFunction::zeros(sys.tau(), sys.steps(), sys.m(), sys.n());
  const auto stabilizes = [&sys](const GridFunction& theta) {
    const auto [a, c] = closed_loop(sys, theta);
    return is_ms_stable(a, c).stable;
  };
  if (stabilizes(zero)) return {zero, "zero gain"};
  for (double eta : {1.0, 10.0, 100.0}) {
    for (bool deterministic : {true, false}) {
      try {
        const RiccatiSystem aux = with_penalty(sys, eta, deterministic);
        const SweepResult sweep = riccati_sweep(aux);
        GridFunction theta = gains_on_grid(aux, sweep.P);
        if (stabilizes(theta)) {
          return {std::move(theta),
                  fmt::format("{} horizon-extension gain, penalty {}",
                              deterministic ? "deterministic" : "stochastic", eta)};
        }
      } catch (const Error&) {
        // divergent or indefinite candidate: try the next rung
      }
    }
  }
  throw Error(ErrorKind::kNotStabilizable, "no stabilizing seed found by the seed ladder");
}

StabilizerResult synthesize_stabilizer(const RiccatiSystem& sys, const GridFunction& E,
                                       const std::optional<GridFunction>& theta0,
                                       const KleinmanOptions& opts,
                                       DetectabilityVerdict* verdict) {
  const DetectabilityVerdict v = detectability_test(sys.A, sys.C, E);
  if (verdict) *verdict = v;
  if (v.detectable == Detectability::kNotDetectable) {
    throw Error(ErrorKind::kAssumption, "observation pair is not exactly detectable: " + v.evidence);
  }
  std::string seed = "caller-supplied gain";
  GridFunction start;
  if (theta0) {
    start = *theta0;
  } else {
    std::tie(start, seed) = find_initial_stabilizer(sys);
  }
  StabilizerResult res = kleinman_iteration(sys, start, opts);
  res.seed = seed;
  return res;
}

double periodic_riccati_residual(const RiccatiSystem& sys, const Trajectory& P) {
  std::vector<Mat> nodes = P.values();
  nodes.pop_back();
  double r = 0.0;
  for (std::size_t j = 0; j < nodes.size(); ++j) {
    const Mat d = fd6_derivative(nodes, j, sys.h(), true);
    r = std::max(r, (d - riccati_derivative(nodes[j], sys.at(2 * static_cast<long>(j)))).norm());
  }
  return r;
}

}  // namespace mflq
