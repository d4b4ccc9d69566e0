#include "mflq/riccati_kernels.hpp"

#include "mflq/numerics.hpp"

namespace mflq {

namespace {

// Returns (R + D^T P D, B^T P + D^T P C + S).
std::pair<Mat, Mat> gain_blocks(const Mat& P, const RiccatiCoefficients& c) {
  const Mat PD = P * c.D;
  Mat weight = c.R + c.D.transpose() * PD;
  Mat cross = c.B.transpose() * P + PD.transpose() * c.C + c.S;
  return {std::move(weight), std::move(cross)};
}

}  // namespace

Mat riccati_gain(const Mat& P, const RiccatiCoefficients& c) {
  const auto [weight, cross] = gain_blocks(P, c);
  return -llt_solve(weight, cross, "R + D^T P D");
}

Mat riccati_derivative(const Mat& P, const RiccatiCoefficients& c) {
  const auto [weight, cross] = gain_blocks(P, c);
  const Mat PA = P * c.A;
  Mat lin = PA + PA.transpose() + c.C.transpose() * P * c.C + c.Q;
  lin -= cross.transpose() * llt_solve(weight, cross, "R + D^T P D");
  return -lin;
}

Mat closed_loop_weight(const Mat& theta, const RiccatiCoefficients& c) {
  const Mat ts = theta.transpose() * c.S;
  return sym(c.Q + ts + ts.transpose() + theta.transpose() * c.R * theta);
}

}  // namespace mflq
