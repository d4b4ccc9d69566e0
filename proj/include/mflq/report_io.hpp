#pragma once

#include <ostream>
#include <string>
#include <vector>

#include "mflq/montecarlo.hpp"
#include "mflq/riccati.hpp"
#include "mflq/turnpike.hpp"

namespace mflq {

/// Numbers in every output file use 17 significant digits.
std::string format_number(double v);

inline constexpr const char* kTurnpikeHeader =
    "t,gap_P,gap_Pi,gap_Theta,gap_Theta_hat,gap_varphi,gap_phi,gap_state_sq,gap_control_sq,"
    "w2_state";

void write_turnpike_csv(std::ostream& os, const GapCurves& c);
void write_turnpike_summary(std::ostream& os, const TurnpikeReport& rep);
void write_turnpike_json(std::ostream& os, const TurnpikeReport& rep);

void write_finite_horizon_csv(std::ostream& os, const FiniteHorizonSolution& fin);
void write_periodic_csv(std::ostream& os, const PeriodicLQSolution& sol);
void write_simulation_csv(std::ostream& os, const SampledMoments& mc, const Trajectory& ode_mean,
                          const CrossValidationReport& cv);

/// Writes `contents` to `path`, replacing any existing file.
void write_file(const std::string& path, const std::string& contents);

}  // namespace mflq
