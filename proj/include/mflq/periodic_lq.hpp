#pragma once

#include "mflq/riccati.hpp"

namespace mflq {

struct ClosedLoopCoefficients {
  GridFunction cal_A, cal_C, hat_cal_A, hat_cal_C, bar_cal_A, bar_cal_C;
};

ClosedLoopCoefficients closed_loop_coeffs(const MeanFieldSystem& sys,
                                          const PeriodicRiccatiSolution& sol);

struct AuxiliaryWeights {
  GridFunction Q1_bar, R1_bar, S1_bar, q1, r1, R1_hat;
};

AuxiliaryWeights auxiliary_weights(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                                   const ClosedLoopCoefficients& cl);

struct PeriodicSolveInfo {
  double condition = 0.0;
  double boundary_mismatch = 0.0;
};

/// Periodic solution of eta' + hat_cal_A^T eta + q1 + Pi b = 0.
Trajectory solve_eta(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                     const ClosedLoopCoefficients& cl, const AuxiliaryWeights& aux,
                     PeriodicSolveInfo* info = nullptr);

/// v* = -R1_hat^-1 (B_hat^T eta + r1) on every half-grid sample.
Trajectory v_star(const MeanFieldSystem& sys, const AuxiliaryWeights& aux, const Trajectory& eta);

struct StateMomentsInfo {
  PeriodicSolveInfo mean;
  int sweeps = 0;
  double contraction_factor = 0.0;    // last observed ratio of sweep changes
  std::vector<double> sweep_changes;  // sup change per sweep
  double monotonicity_witness = 0.0;  // min eigenvalue of Sigma_{s} - Sigma_{s-1}
  double moment_radius = 0.0;         // spectral radius of the (cal_A, cal_C) monodromy
  bool direct = false;                // fixed point taken by a linear solve
};

struct PeriodicLawMoments {
  Trajectory mu_star, Sigma_star, eta, v_star;  // one period, steps + 1 nodes
};

/// Periodic mean of the state under a deterministic periodic control v.
Trajectory periodic_mean(const MeanFieldSystem& sys, const ClosedLoopCoefficients& cl,
                         const Trajectory& v, PeriodicSolveInfo* info = nullptr);

/// Periodic mean and central covariance of X* under v*.
std::pair<Trajectory, Trajectory> periodic_state_moments(const MeanFieldSystem& sys,
                                                         const ClosedLoopCoefficients& cl,
                                                         const Trajectory& v,
                                                         StateMomentsInfo* info = nullptr,
                                                         double tol = 1e-13, int cap = 500);

/// Sup over nodes of B_hat^T (Pi mu + eta) + S1_bar mu + (R + R1_bar) v + r1.
double optimality_residual(const MeanFieldSystem& sys, const PeriodicRiccatiSolution& sol,
                           const AuxiliaryWeights& aux, const PeriodicLawMoments& law);

/// J_tau(v) for a deterministic periodic control v (half-grid samples).
double periodic_cost(const MeanFieldSystem& sys, const ClosedLoopCoefficients& cl,
                     const AuxiliaryWeights& aux, const Trajectory& v);

struct PeriodicLQSolution {
  PeriodicRiccatiSolution riccati;
  ClosedLoopCoefficients cl;
  AuxiliaryWeights aux;
  PeriodicLawMoments law;
  PeriodicSolveInfo eta_info;
  StateMomentsInfo moments_info;
  double optimality_residual = 0.0;
  double cost = 0.0;
};

PeriodicLQSolution solve_periodic_lq(const MeanFieldSystem& sys, const PeriodicOptions& opts = {});

}  // namespace mflq
