#pragma once

#include <string>

#include "mflq/model.hpp"

namespace mflq {

// Problem files are JSON:
//   {"n": 1, "m": 1, "tau": 1.0, "grid_steps": 256,
//    "coefficients": {"A": {"kind": "constant", "value": [[-1]]}, ...}}
// A matrix is an array of rows. A bare number is accepted as 1x1 and a flat
// array of numbers as a column vector.
ProblemSpec parse_problem_spec(const std::string& json_text);
ProblemSpec load_problem_spec(const std::string& path);
ProblemData load_problem(const std::string& path);

}  // namespace mflq
