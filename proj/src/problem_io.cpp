#include "mflq/problem_io.hpp"

#include <fstream>
#include <sstream>

#include <fmt/format.h>
#include <json.hpp>

#include "mflq/error.hpp"

namespace mflq {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& where, const std::string& what) {
  throw Error(ErrorKind::kInput, fmt::format("{}: {}", where, what));
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) bad(where, "expected a number");
  return j.get<double>();
}

Mat parse_matrix(const json& j, const std::string& where) {
  if (j.is_number()) return Mat::Constant(1, 1, j.get<double>());
  if (!j.is_array() || j.empty()) bad(where, "expected a non-empty matrix");
  if (j.front().is_number()) {
    Mat col(static_cast<Index>(j.size()), 1);
    for (std::size_t i = 0; i < j.size(); ++i) col(static_cast<Index>(i), 0) = number(j[i], where);
    return col;
  }
  const std::size_t rows = j.size();
  if (!j.front().is_array()) bad(where, "matrix rows must be arrays");
  const std::size_t cols = j.front().size();
  Mat m(static_cast<Index>(rows), static_cast<Index>(cols));
  for (std::size_t i = 0; i < rows; ++i) {
    if (!j[i].is_array() || j[i].size() != cols) bad(where, "ragged matrix rows");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Index>(i), static_cast<Index>(c)) = number(j[i][c], where);
    }
  }
  return m;
}

const json& field(const json& obj, const char* key, const std::string& where) {
  auto it = obj.find(key);
  if (it == obj.end()) bad(where, fmt::format("missing field '{}'", key));
  return *it;
}

Builder parse_builder(const json& j, const std::string& where) {
  if (!j.is_object()) bad(where, "builder must be an object");
  const std::string kind = field(j, "kind", where).get<std::string>();
  if (kind == "constant") {
    return ConstantBuilder{parse_matrix(field(j, "value", where), where)};
  }
  if (kind == "fourier") {
    FourierBuilder f;
    f.mean = parse_matrix(field(j, "mean", where), where);
    if (auto it = j.find("harmonics"); it != j.end()) {
      if (!it->is_array()) bad(where, "harmonics must be an array");
      for (const auto& hj : *it) {
        const json& kj = field(hj, "k", where);
        if (!kj.is_number_integer()) bad(where, "harmonic index k must be an integer");
        Harmonic h;
        h.k = kj.get<int>();
        h.cos = hj.contains("cos") ? parse_matrix(hj["cos"], where)
                                   : Mat::Zero(f.mean.rows(), f.mean.cols());
        h.sin = hj.contains("sin") ? parse_matrix(hj["sin"], where)
                                   : Mat::Zero(f.mean.rows(), f.mean.cols());
        f.harmonics.push_back(std::move(h));
      }
    }
    return f;
  }
  if (kind == "pwc") {
    PiecewiseConstantBuilder p;
    const json& breaks = field(j, "breaks", where);
    const json& values = field(j, "values", where);
    if (!breaks.is_array() || !values.is_array()) bad(where, "pwc breaks/values must be arrays");
    for (const auto& b : breaks) p.breaks.push_back(number(b, where));
    for (const auto& v : values) p.values.push_back(parse_matrix(v, where));
    return p;
  }
  bad(where, fmt::format("unknown builder kind '{}'", kind));
}

int positive_int(const json& j, const char* key, const std::string& where) {
  const json& v = field(j, key, where);
  if (!v.is_number_integer()) bad(where, fmt::format("'{}' must be an integer", key));
  return v.get<int>();
}

}  // namespace

ProblemSpec parse_problem_spec(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInput, fmt::format("problem file is not valid JSON: {}", e.what()));
  }
  if (!j.is_object()) bad("problem", "top level must be an object");
  try {
    ProblemSpec spec;
    spec.n = positive_int(j, "n", "problem");
    spec.m = positive_int(j, "m", "problem");
    spec.tau = number(field(j, "tau", "problem"), "tau");
    if (j.contains("grid_steps")) spec.grid_steps = positive_int(j, "grid_steps", "problem");
    if (auto it = j.find("coefficients"); it != j.end()) {
      if (!it->is_object()) bad("coefficients", "must be an object");
      for (auto c = it->begin(); c != it->end(); ++c) {
        spec.coefficients[c.key()] = parse_builder(c.value(), "coefficient " + c.key());
      }
    }
    return spec;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kInput, fmt::format("malformed problem file: {}", e.what()));
  }
}

ProblemSpec load_problem_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::kInput, fmt::format("cannot open problem file '{}'", path));
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_problem_spec(ss.str());
}

ProblemData load_problem(const std::string& path) {
  return build_problem(load_problem_spec(path));
}

}  // namespace mflq
