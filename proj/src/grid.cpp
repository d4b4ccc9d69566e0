#include "mflq/grid.hpp"

#include <algorithm>

#include "mflq/error.hpp"

namespace mflq {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kInput: return "input error";
    case ErrorKind::kAssumption: return "assumption violation";
    case ErrorKind::kDivergence: return "divergence";
    case ErrorKind::kConvergence: return "convergence failure";
    case ErrorKind::kNotPsd: return "not positive semi-definite";
    case ErrorKind::kDefiniteness: return "loss of definiteness";
    case ErrorKind::kStabilityPrecondition: return "stability precondition";
    case ErrorKind::kNotStabilizable: return "not stabilizable";
    case ErrorKind::kInsufficientData: return "insufficient data";
    case ErrorKind::kInternal: return "internal consistency";
  }
  return "error";
}

GridFunction::GridFunction(double tau, int steps, std::vector<Mat> half_samples)
    : tau_(tau), steps_(steps), samples_(std::move(half_samples)) {
  if (tau <= 0.0 || steps < 1) {
    throw Error(ErrorKind::kInput, "grid function needs tau > 0 and steps >= 1");
  }
  if (samples_.size() != 2 * static_cast<std::size_t>(steps)) {
    throw Error(ErrorKind::kInternal, "grid function sample count mismatch");
  }
  rows_ = samples_.front().rows();
  cols_ = samples_.front().cols();
  for (const auto& s : samples_) {
    if (s.rows() != rows_ || s.cols() != cols_) {
      throw Error(ErrorKind::kInternal, "grid function samples differ in shape");
    }
  }
}

GridFunction GridFunction::constant(double tau, int steps, const Mat& value) {
  return GridFunction(tau, steps,
                      std::vector<Mat>(2 * static_cast<std::size_t>(steps), value));
}

GridFunction GridFunction::zeros(double tau, int steps, Index rows, Index cols) {
  return constant(tau, steps, Mat::Zero(rows, cols));
}

const Mat& GridFunction::half(long k) const {
  const long period = 2L * steps_;
  long idx = k % period;
  if (idx < 0) idx += period;
  return samples_[static_cast<std::size_t>(idx)];
}

double GridFunction::sup_norm() const {
  double s = 0.0;
  for (const auto& m : samples_) s = std::max(s, m.norm());
  return s;
}

std::vector<Mat> Trajectory::values() const {
  std::vector<Mat> out;
  out.reserve(size());
  for (std::size_t j = 0; j < size(); ++j) out.push_back(node(j));
  return out;
}

GridFunction Trajectory::periodic(double tau) const {
  if (size() < 2) {
    throw Error(ErrorKind::kInternal, "periodic trajectory needs at least two nodes");
  }
  const int steps = static_cast<int>(size() - 1);
  std::vector<Mat> samples(half.begin(), half.end() - 1);
  return GridFunction(tau, steps, std::move(samples));
}

double sup_distance(const Trajectory& a, const Trajectory& b) {
  if (a.size() != b.size()) {
    throw Error(ErrorKind::kInternal, "sup_distance: trajectory lengths differ");
  }
  double d = 0.0;
  for (std::size_t j = 0; j < a.size(); ++j) d = std::max(d, (a.node(j) - b.node(j)).norm());
  return d;
}

}  // namespace mflq
