#pragma once

#include "mflq/grid.hpp"

namespace mflq {

/// Pointwise data of the generic Riccati equation
///   P' + PA + A^T P + C^T P C + Q
///      - (PB + C^T P D + S^T)(R + D^T P D)^-1 (B^T P + D^T P C + S) = 0.
struct RiccatiCoefficients {
  Mat A, B, C, D, Q, S, R;
};

/// The same data as periodic grid functions.
struct RiccatiSystem {
  GridFunction A, B, C, D, Q, S, R;

  RiccatiCoefficients at(long k) const {
    return {A.half(k), B.half(k), C.half(k), D.half(k), Q.half(k), S.half(k), R.half(k)};
  }
  int steps() const { return A.steps(); }
  double h() const { return A.h(); }
  double tau() const { return A.tau(); }
  Index n() const { return A.rows(); }
  Index m() const { return B.cols(); }
};

/// dP/dt implied by the equation above.
Mat riccati_derivative(const Mat& P, const RiccatiCoefficients& c);

/// Theta = -(R + D^T P D)^-1 (B^T P + D^T P C + S).
Mat riccati_gain(const Mat& P, const RiccatiCoefficients& c);

/// Closed-loop Lyapunov source Q + Theta^T S + S^T Theta + Theta^T R Theta.
Mat closed_loop_weight(const Mat& theta, const RiccatiCoefficients& c);

}  // namespace mflq
