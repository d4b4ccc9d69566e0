#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mflq/riccati.hpp"

namespace mflq::cli {

struct RunConfig {
  std::string command;
  std::string problem_path;
  std::string output_dir = ".";
  std::vector<int> horizon_periods;
  PeriodicOptions periodic;
  std::vector<double> x;  // initial state; empty means all ones
  std::uint64_t seed = 1;
  int particles = 10000;
  int substeps = 4;
};

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitInput = 2;

/// Runs one command line (without the program name). Human-readable output
/// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace mflq::cli
