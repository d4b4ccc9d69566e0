#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "mflq/grid.hpp"

namespace mflq {

Mat sym(const Mat& m);
double min_eigenvalue(const Mat& m);
double asymmetry(const Mat& m);

/// Symmetric PSD square root. Eigenvalues in [-tol * max(1, |M|), 0) are
/// clamped to zero; anything more negative raises kNotPsd.
Mat sqrtm_psd(const Mat& m, double tol = 1e-10);

/// Solves (M) X = rhs for symmetric positive definite M via Cholesky and
/// raises kDefiniteness when the factorization fails.
Mat llt_solve(const Mat& m, const Mat& rhs, const char* what);

struct DecayFit {
  double K = 0.0;
  double lambda = 0.0;
  double r_squared = 0.0;
  std::pair<std::size_t, std::size_t> window{0, 0};  // inclusive index range
};

inline constexpr double kGapFloor = 1e-14;

DecayFit fit_exponential_decay(const std::vector<double>& x,
                               const std::vector<double>& gaps,
                               double drop_fraction = 0.15);

/// Classical fixed-step RK4 on [t0, t1]; t1 < t0 integrates backward. The
/// result is stored in ascending time (h > 0) regardless of direction.
Trajectory integrate_ode(const std::function<Mat(double, const Mat&)>& rhs,
                         const Mat& initial, double t0, double t1, int steps);

// Grid integrators address time by half-index k (time k * h / 2), so
// coefficient lookups hit the exact grid samples of a GridFunction.
using HalfRhs = std::function<Mat(long k, const Mat& y)>;
using Projection = std::function<void(Mat&)>;

enum class Direction { kForward, kBackward };

/// RK4 from node `start` for `steps` steps in the given direction. Midpoint
/// samples are filled by cubic Hermite interpolation from the node values and
/// slopes. The result covers nodes min..max in ascending order with t0 set to
/// the first node's time.
Trajectory integrate_on_grid(const HalfRhs& rhs, const Mat& initial, long start,
                             long steps, double h, Direction dir,
                             const Projection& project = nullptr);

/// Only the end value; no trajectory storage.
Mat propagate_on_grid(const HalfRhs& rhs, const Mat& initial, long start,
                      long steps, double h, Direction dir,
                      const Projection& project = nullptr);

/// Coordinates for a linear space of matrices: either all entries
/// (column-major) or the upper triangle of a symmetric matrix.
class StateBasis {
 public:
  static StateBasis full(Index rows, Index cols);
  static StateBasis symmetric(Index n);

  Index dim() const { return dim_; }
  Mat element(Index i) const;
  Vec coords(const Mat& m) const;
  Mat from_coords(const Vec& c) const;

 private:
  bool symmetric_ = false;
  Index rows_ = 0, cols_ = 0, dim_ = 0;
};

/// Matrix of the linear one-period map of y' = L(k, y) in the given basis.
Mat one_period_map(const HalfRhs& linear, const StateBasis& basis, int steps,
                   double h, Direction dir);

double spectral_radius(const Mat& m);

struct PeriodicAffineSolution {
  Trajectory trajectory;  // one period, steps + 1 nodes
  double condition = 0.0;
  double monodromy_radius = 0.0;
  double boundary_mismatch = 0.0;
};

/// Periodic solution of y' = L(k, y) + s(k) with period `steps` grid steps:
/// builds the monodromy, solves (I - Phi) y = c densely, then sweeps once.
/// For backward problems the fixed point is taken at the period end.
PeriodicAffineSolution solve_periodic_affine(const HalfRhs& linear,
                                             const std::function<Mat(long)>& source,
                                             const StateBasis& basis, int steps,
                                             double h, Direction dir,
                                             const Projection& project = nullptr);

/// Sixth-order centered difference derivative at node j of a node sequence.
/// For periodic data the sequence holds one period without the closing node.
Mat fd6_derivative(const std::vector<Mat>& nodes, std::size_t j, double h,
                   bool periodic);

/// Composite Simpson integral of scalar half-grid samples (odd entries are
/// midpoints).
double simpson_half(const std::vector<double>& half, double h);

}  // namespace mflq
