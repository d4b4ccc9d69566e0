#pragma once

#include <optional>
#include <string>
#include <vector>

#include "mflq/numerics.hpp"
#include "mflq/periodic_lq.hpp"

namespace mflq {

/// Per-node gap curves on [0, T]. Matrix gaps use the Frobenius norm;
/// gap_state and gap_control are mean squares.
struct GapCurves {
  std::vector<double> t;
  std::vector<double> gap_P, gap_Pi, gap_Theta, gap_Theta_hat, gap_varphi, gap_phi;
  std::vector<double> gap_state, gap_control, w2_state;
};

void riccati_gap_curves(const FiniteHorizonSolution& fin, const PeriodicRiccatiSolution& per,
                        GapCurves& out);

void offset_gap_curves(const FiniteHorizonSolution& fin, const PeriodicLawMoments& law,
                       double tau, GapCurves& out);

/// Moments of the optimal finite-horizon state started at x, expressed
/// relative to the periodic law: mean offset dmu = E X_T - mu*, and the joint
/// central covariance of (X_T - X*, X* fluctuation) under the shared-noise
/// coupling with X*(0) independent of x.
struct CoupledMoments {
  Trajectory dmu;    // n x 1
  Trajectory joint;  // 2n x 2n
};

CoupledMoments coupled_moments(const MeanFieldSystem& sys, const FiniteHorizonSolution& fin,
                               const PeriodicLQSolution& per, const Vec& x);

/// Fills gap_state, gap_control and w2_state.
void trajectory_gap(const MeanFieldSystem& sys, const FiniteHorizonSolution& fin,
                    const PeriodicLQSolution& per, const Vec& x, GapCurves& out,
                    CoupledMoments* moments = nullptr);

/// Squared L2-Wasserstein distance between N(mu1, S1) and N(mu2, S2).
double gaussian_w2_squared(const Vec& mu1, const Mat& S1, const Vec& mu2, const Mat& S2);

/// The same with S1 = S2 + dS and mu1 = mu2 + dmu given in difference form,
/// which keeps accuracy when the two laws are close.
double gaussian_w2_squared_diff(const Vec& dmu, const Mat& S2, const Mat& dS);

/// Feedback u = Theta (X - E X) + Theta_hat E X + phi on the finite grid.
struct Feedback {
  Trajectory Theta, Theta_hat, phi;
};

/// Mean and central covariance of the closed-loop state from x under a
/// feedback, on the feedback's grid.
struct ClosedLoopMoments {
  Trajectory mean, cov;
};
ClosedLoopMoments closed_loop_moments(const MeanFieldSystem& sys, const Feedback& fb,
                                      const Vec& x);

/// Cost of a feedback from x over [0, T] computed from the closed-loop moments.
double evaluate_cost(const MeanFieldSystem& sys, const Feedback& fb, const Vec& x);

enum class Verdict { kPass, kFail, kDegenerateZero };
const char* to_string(Verdict v);

struct GapFit {
  std::string name;
  bool two_sided = false;
  std::optional<DecayFit> fit;          // backward gaps; for two-sided, the slower branch
  std::optional<DecayFit> left, right;  // two-sided branches
  Verdict verdict = Verdict::kFail;
  std::string note;
};

struct TurnpikeReport {
  double T = 0.0;
  long steps = 0;
  GapCurves curves;
  std::vector<GapFit> fits;
  double gap_state0_identity = 0.0;  // |gap_state(0) - (|x - mu*(0)|^2 + tr Sigma*(0))|
  double middle_third_ratio = 0.0;   // sup middle third / max endpoint of gap_state
  double coupling_violation = 0.0;   // max of w2^2 - gap_state
  double runtime_seconds = 0.0;
  bool all_pass() const;
};

inline constexpr double kMinRSquared = 0.98;

/// Fits every gap family: backward gaps against T - t, two-sided gaps split
/// at the interior minimum (left branch against t, right against T - t).
std::vector<GapFit> fit_turnpike_rates(const GapCurves& curves, double T);

GapFit fit_backward_gap(const std::string& name, const std::vector<double>& t,
                        const std::vector<double>& gap, double T);
GapFit fit_two_sided_gap(const std::string& name, const std::vector<double>& t,
                         const std::vector<double>& gap, double T);

TurnpikeReport run_turnpike(const MeanFieldSystem& sys, const PeriodicLQSolution& per, double T,
                            const Vec& x);

}  // namespace mflq
