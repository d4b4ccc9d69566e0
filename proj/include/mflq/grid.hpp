#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace mflq {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;
using Index = Eigen::Index;

/// A tau-periodic matrix function sampled on the half-step grid.
///
/// With h = tau / steps, half-index k addresses time k * h / 2. Even k are the
/// grid nodes t_j = j h, odd k are the midpoints (j + 1/2) h. Every integrator
/// in the library steps with h and reads coefficients at nodes and midpoints
/// only, so a GridFunction is all a solver ever needs. Indexing wraps modulo
/// one period, which makes periodicity exact.
class GridFunction {
 public:
  GridFunction() = default;
  GridFunction(double tau, int steps, std::vector<Mat> half_samples);

  template <class F>
  static GridFunction generate(double tau, int steps, F&& f) {
    std::vector<Mat> samples;
    samples.reserve(2 * static_cast<std::size_t>(steps));
    for (long k = 0; k < 2L * steps; ++k) samples.emplace_back(f(k));
    return GridFunction(tau, steps, std::move(samples));
  }

  static GridFunction constant(double tau, int steps, const Mat& value);
  static GridFunction zeros(double tau, int steps, Index rows, Index cols);

  const Mat& half(long k) const;
  const Mat& node(long j) const { return half(2 * j); }
  const Mat& mid(long j) const { return half(2 * j + 1); }

  double tau() const { return tau_; }
  int steps() const { return steps_; }
  double h() const { return tau_ / steps_; }
  Index rows() const { return rows_; }
  Index cols() const { return cols_; }
  bool empty() const { return samples_.empty(); }

  /// Largest Frobenius norm over all half-grid samples.
  double sup_norm() const;

 private:
  double tau_ = 0.0;
  int steps_ = 0;
  Index rows_ = 0;
  Index cols_ = 0;
  std::vector<Mat> samples_;
};

/// Samples of a time-dependent matrix over [t0, t0 + (size() - 1) h], stored
/// in ascending time with midpoints interleaved: half[2j] is the value at
/// t0 + j h and half[2j + 1] the value at t0 + (j + 1/2) h.
struct Trajectory {
  double t0 = 0.0;
  double h = 0.0;
  std::vector<Mat> half;

  std::size_t size() const { return (half.size() + 1) / 2; }
  bool empty() const { return half.empty(); }
  const Mat& node(std::size_t j) const { return half[2 * j]; }
  const Mat& mid(std::size_t j) const { return half[2 * j + 1]; }
  const Mat& front() const { return half.front(); }
  const Mat& back() const { return half.back(); }
  double time(std::size_t j) const { return t0 + static_cast<double>(j) * h; }

  std::vector<Mat> values() const;

  /// Reinterprets a one-period trajectory (steps + 1 nodes, the last one
  /// closing the period) as a periodic GridFunction; the closing node is
  /// dropped.
  GridFunction periodic(double tau) const;
};

/// Pointwise combination on the half grid of `like`.
template <class F>
GridFunction map_grid(const GridFunction& like, F&& f) {
  return GridFunction::generate(like.tau(), like.steps(), std::forward<F>(f));
}

/// Largest Frobenius norm of the node-wise difference of two trajectories of
/// equal length.
double sup_distance(const Trajectory& a, const Trajectory& b);

}  // namespace mflq
