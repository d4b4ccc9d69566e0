#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "mflq/grid.hpp"

namespace mflq {

struct ConstantBuilder {
  Mat value;
};

struct Harmonic {
  int k = 1;
  Mat cos;
  Mat sin;
};

// mean + sum_k cos_k cos(2 pi k t / tau) + sin_k sin(2 pi k t / tau)
struct FourierBuilder {
  Mat mean;
  std::vector<Harmonic> harmonics;
};

// values[i] holds on [breaks[i], breaks[i+1]); before breaks[0] the last value
// applies (it wraps around from the previous period).
struct PiecewiseConstantBuilder {
  std::vector<double> breaks;
  std::vector<Mat> values;
};

using Builder = std::variant<ConstantBuilder, FourierBuilder, PiecewiseConstantBuilder>;

class PeriodicMatrixFn {
 public:
  PeriodicMatrixFn() = default;
  PeriodicMatrixFn(Builder builder, double tau, int steps);

  /// Evaluation reduces t modulo tau. Times within 1e-9 (in half-step units)
  /// of a grid node or midpoint return the stored sample, so f(t + k tau)
  /// equals f(t) bit for bit there.
  Mat eval(double t) const;

  const GridFunction& grid() const { return grid_; }
  const Builder& builder() const { return builder_; }
  Index rows() const { return grid_.rows(); }
  Index cols() const { return grid_.cols(); }
  double period() const { return grid_.tau(); }

  /// The node samples t_j = j tau / N_s, j = 0..N_s-1.
  std::vector<Mat> grid_samples() const;

 private:
  Mat synthesize(double t, long half_index) const;

  Builder builder_;
  double tau_ = 0.0;
  int steps_ = 0;
  GridFunction grid_;
};

inline constexpr std::array<std::string_view, 18> kCoefficientNames = {
    "A", "A_bar", "B", "B_bar", "C", "C_bar", "D", "D_bar", "Q",
    "Q_bar", "S", "S_bar", "R", "R_bar", "b", "sigma", "q", "r"};

struct ProblemSpec {
  int n = 1;
  int m = 1;
  double tau = 1.0;
  int grid_steps = 256;
  std::map<std::string, Builder> coefficients;  // missing names default to zero
};

struct ProblemData {
  int n = 0;
  int m = 0;
  double tau = 0.0;
  int steps = 0;
  PeriodicMatrixFn A, A_bar, B, B_bar, C, C_bar, D, D_bar, Q, Q_bar, S, S_bar, R, R_bar;
  PeriodicMatrixFn b, sigma, q, r;

  double h() const { return tau / steps; }
  const PeriodicMatrixFn& coefficient(std::string_view name) const;
};

/// Expected shape of a named coefficient for dimensions (n, m).
std::pair<Index, Index> coefficient_shape(std::string_view name, int n, int m);

ProblemData build_problem(const ProblemSpec& spec);

struct HatCoefficients {
  GridFunction A_hat, B_hat, C_hat, D_hat, Q_hat, S_hat, R_hat;
};

HatCoefficients hat_coefficients(const ProblemData& p);

struct ValidationReport {
  // One entry per half-grid sample (nodes and midpoints of one period).
  std::vector<double> min_eig_R, min_eig_R_hat, min_eig_M, min_eig_M_hat;
  double delta_R = 0.0;      // min over the grid of lambda_min(R)
  double delta_R_hat = 0.0;  // same for R_hat
  double margin_M = 0.0;     // min over the grid of lambda_min(Q - S^T R^-1 S)
  double margin_M_hat = 0.0;
  double delta_required = 1e-8;
  double tol = 1e-9;
  bool a1_bounded = true;  // every coefficient is a finite grid function
  bool a2_ok = false;
  std::vector<std::string> failures;

  bool ok() const { return a1_bounded && a2_ok; }
};

ValidationReport validate_assumptions(const ProblemData& p, double tol = 1e-9);

/// Throws kAssumption with the report's failure list if validation fails.
void require_assumptions(const ProblemData& p);

}  // namespace mflq
