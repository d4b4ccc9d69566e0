#pragma once

#include <optional>
#include <string>

#include "mflq/riccati_kernels.hpp"

namespace mflq {

/// Matrix (in the upper-triangle basis of symmetric n x n matrices) of the
/// one-period map M(0) -> M(tau) of M' = A M + M A^T + C M C^T.
Mat moment_monodromy(const GridFunction& A, const GridFunction& C);

struct StabilityVerdict {
  double spectral_radius = 0.0;
  bool stable = false;
  double margin = 1e-9;
  std::optional<double> decay_rate_estimate;  // -log(rho) / tau when rho < 1
};

StabilityVerdict is_ms_stable(const GridFunction& A, const GridFunction& C,
                              double margin = 1e-9);

struct LyapunovOptions {
  double tol = 1e-13;        // relative sup-norm change between sweeps
  int max_sweeps = 200;
  double direct_above = 0.8;  // spectral radius beyond which sweeps are too slow
};

/// Periodic solution of P' + PA + A^T P + C^T P C + Lambda = 0 on one period
/// (steps + 1 nodes). Refuses unstable (A, C).
Trajectory solve_periodic_lyapunov(const GridFunction& A, const GridFunction& C,
                                   const GridFunction& Lambda,
                                   const LyapunovOptions& opts = {});

/// The same equation solved through the monodromy fixed-point system, without
/// the stability precondition.
Trajectory solve_periodic_lyapunov_direct(const GridFunction& A, const GridFunction& C,
                                          const GridFunction& Lambda);

enum class Detectability { kDetectable, kNotDetectable, kInconclusive };
enum class DetectabilityMethod { kFullRankE, kStableSystem, kGramianHeuristic };

struct DetectabilityVerdict {
  DetectabilityMethod method = DetectabilityMethod::kFullRankE;
  Detectability detectable = Detectability::kInconclusive;
  double min_singular_value = 0.0;  // of E over the grid, relative to its sup norm
  double spectral_radius = 0.0;
  Index gramian_rank = 0;
  Index gramian_dim = 0;
  double unobservable_radius = 0.0;
  std::string evidence;
};

const char* to_string(Detectability d);
const char* to_string(DetectabilityMethod m);

DetectabilityVerdict detectability_test(const GridFunction& A, const GridFunction& C,
                                        const GridFunction& E, int periods = 4,
                                        double rank_tol = 1e-8);

struct KleinmanOptions {
  double tol = 1e-10;
  int max_iterations = 60;
  LyapunovOptions lyapunov;
};

struct StabilizerResult {
  Trajectory P;      // one period, steps + 1 nodes
  GridFunction Theta;
  int iterations = 0;
  double monotonicity_witness = 0.0;  // min eigenvalue of P_{i-1} - P_i seen
  double closed_loop_radius = 0.0;
  std::string seed;  // which rung of the seed ladder produced Theta_0
};

/// Kleinman iteration on the generic Riccati system from a stabilizing seed.
StabilizerResult kleinman_iteration(const RiccatiSystem& sys, const GridFunction& theta0,
                                    const KleinmanOptions& opts = {});

struct SweepResult {
  Trajectory P;  // last period swept, steps + 1 nodes
  int periods = 0;
  bool converged = false;
  double last_change = 0.0;
};

/// Horizon extension: integrates the Riccati equation backward period by
/// period from P = 0 (or from `start`) until two successive periods differ by
/// less than tol (relative).
SweepResult riccati_sweep(const RiccatiSystem& sys, double tol = 1e-9, int max_periods = 64,
                          const Mat* start = nullptr);

/// Seed ladder: zero gain if the open loop is stable; otherwise deterministic
/// then stochastic horizon-extension gains with the state penalty raised by
/// eta I for eta in {1, 10, 100}. Throws kNotStabilizable when all fail.
std::pair<GridFunction, std::string> find_initial_stabilizer(const RiccatiSystem& sys);

/// Full synthesis: detectability check of [A, C | E], a seed, then Kleinman.
/// `sys` must have S = 0 and Q = E^T E pointwise.
StabilizerResult synthesize_stabilizer(const RiccatiSystem& sys, const GridFunction& E,
                                       const std::optional<GridFunction>& theta0 = std::nullopt,
                                       const KleinmanOptions& opts = {},
                                       DetectabilityVerdict* verdict = nullptr);

/// Gains Theta(k) = riccati_gain(P(k)) on every half-grid sample of a
/// one-period trajectory.
GridFunction gains_on_grid(const RiccatiSystem& sys, const Trajectory& P);

/// Sup over nodes of the periodic Riccati residual, derivative by FD6.
double periodic_riccati_residual(const RiccatiSystem& sys, const Trajectory& P);

/// Closed loop (A + B Theta, C + D Theta).
std::pair<GridFunction, GridFunction> closed_loop(const RiccatiSystem& sys,
                                                  const GridFunction& theta);

}  // namespace mflq
