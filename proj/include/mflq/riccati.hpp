#pragma once

#include <optional>
#include <string>

#include "mflq/model.hpp"
#include "mflq/stability.hpp"

namespace mflq {

/// Grid views of a problem in the form the solvers consume.
struct MeanFieldSystem {
  RiccatiSystem base;  // A, B, C, D, Q, S, R
  HatCoefficients hat;
  GridFunction b, sigma, q, r;
  int n = 0, m = 0, steps = 0;
  double tau = 0.0;

  double h() const { return tau / steps; }
};

/// Validates the standing assumptions (throws kAssumption) and assembles the
/// grid views.
MeanFieldSystem make_system(const ProblemData& p);

/// Data of the Pi equation at one grid sample, viewed as a generic Riccati
/// equation with state matrix A_hat, no diffusion and P-dependent weights.
RiccatiCoefficients pi_coefficients(const MeanFieldSystem& sys, long k, const Mat& P);

/// Generic Riccati system for Pi given a periodic P.
RiccatiSystem pi_system(const MeanFieldSystem& sys, const GridFunction& P);

struct FiniteHorizonSolution {
  double T_requested = 0.0;
  double T = 0.0;  // snapped to the grid
  long steps = 0;  // T = steps * h
  Trajectory P, Pi, Theta, Theta_hat, varphi, phi;
};

FiniteHorizonSolution solve_finite_horizon(const MeanFieldSystem& sys, double T);
FiniteHorizonSolution solve_finite_horizon(const ProblemData& p, double T);

enum class PeriodicMethod { kKleinman, kHorizonExtension, kBoth };
enum class KleinmanRoute { kShifted, kDirect };

struct PeriodicOptions {
  PeriodicMethod method = PeriodicMethod::kBoth;
  KleinmanRoute route = KleinmanRoute::kShifted;
  KleinmanOptions kleinman;
  double extension_tol = 1e-9;
  int extension_cap = 64;
  bool refine = true;  // snap to the fixed point of the discrete coupled flow
  double refine_tol = 1e-14;
  int refine_cap = 400;
};

struct RiccatiComponent {
  Trajectory traj;      // one period, steps + 1 nodes
  GridFunction grid;    // periodic view of traj
  GridFunction gain;    // Theta or Theta_hat
  double residual = 0.0;
  double closed_loop_radius = 0.0;
  int iterations = 0;
  double monotonicity_witness = 0.0;
  std::string seed;
  std::string method;  // which method produced traj
  DetectabilityVerdict detectability;
  // Raw results of each method that ran (before any refinement).
  std::optional<Trajectory> kleinman, extension;
  double method_agreement = 0.0;  // sup distance between the two, when both ran
  std::string diagnostics;        // messages from a method that failed
};

/// P and Theta: Kleinman (shifted or direct route) with horizon extension as
/// fallback or cross-check, per options.
RiccatiComponent solve_periodic_riccati(const MeanFieldSystem& sys,
                                        const PeriodicOptions& opts = {});

/// Pi and Theta_hat for a given periodic P.
RiccatiComponent solve_periodic_pi(const MeanFieldSystem& sys, const GridFunction& P,
                                   const PeriodicOptions& opts = {});

struct PeriodicRiccatiSolution {
  RiccatiComponent P, Pi;
  bool refined = false;
  double refinement_shift = 0.0;  // sup distance raw vs refined
  double refinement_change = 0.0; // last sweep change of the refinement
  int refinement_periods = 0;
};

PeriodicRiccatiSolution solve_periodic(const MeanFieldSystem& sys,
                                       const PeriodicOptions& opts = {});

/// Coupled backward sweeps of the (P, Pi) flow, one period at a time, until
/// the change between periods is below tol (relative). Returns the last
/// period of P and Pi.
struct CoupledSweep {
  Trajectory P, Pi;
  int periods = 0;
  double last_change = 0.0;
  bool converged = false;
};
CoupledSweep coupled_sweep(const MeanFieldSystem& sys, const Mat& P_end, const Mat& Pi_end,
                           double tol, int cap);

struct ShiftLawReport {
  double P_shift = 0.0;
  double Pi_shift = 0.0;
  double monotonicity_witness = 0.0;
};

ShiftLawReport shift_law_check(const MeanFieldSystem& sys, double T, int k);

/// Sup over interior nodes (sixth-order differences) of the finite-horizon
/// residuals of the P, Pi and varphi equations.
struct FiniteResiduals {
  double P = 0.0, Pi = 0.0, varphi = 0.0;
};
FiniteResiduals finite_horizon_residuals(const MeanFieldSystem& sys,
                                         const FiniteHorizonSolution& fin);

/// Right-hand side of the backward adjoint equation
///   y' = -[(A_hat + B_hat Th)^T y + (C_hat + D_hat Th)^T P sigma + Th^T r + Pi b + q]
/// for given P, Pi, Theta_hat at sample k.
Mat adjoint_derivative(const MeanFieldSystem& sys, long k, const Mat& y, const Mat& P,
                       const Mat& Pi, const Mat& theta_hat);

const char* to_string(PeriodicMethod m);

}  // namespace mflq
