#include "mflq/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include <fmt/format.h>

#include "mflq/error.hpp"

namespace mflq {

Mat sym(const Mat& m) { return 0.5 * (m + m.transpose()); }

double min_eigenvalue(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(m), Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double asymmetry(const Mat& m) { return (m - m.transpose()).norm(); }

Mat sqrtm_psd(const Mat& m, double tol) {
  Eigen::SelfAdjointEigenSolver<Mat> es(sym(m));
  Vec ev = es.eigenvalues();
  const double scale = std::max(1.0, ev.cwiseAbs().maxCoeff());
  if (ev.size() > 0 && ev.minCoeff() < -tol * scale) {
    throw Error(ErrorKind::kNotPsd,
                fmt::format("sqrtm_psd: eigenvalue {:.3e} below tolerance", ev.minCoeff()));
  }
  Vec root = ev.cwiseMax(0.0).cwiseSqrt();
  const Mat& v = es.eigenvectors();
  return sym(v * root.asDiagonal() * v.transpose());
}

Mat llt_solve(const Mat& m, const Mat& rhs, const char* what) {
  Eigen::LLT<Mat> llt(sym(m));
  if (llt.info() != Eigen::Success) {
    throw Error(ErrorKind::kDefiniteness, fmt::format("Cholesky failed for {}", what));
  }
  return llt.solve(rhs);
}

DecayFit fit_exponential_decay(const std::vector<double>& x,
                               const std::vector<double>& gaps,
                               double drop_fraction) {
  if (x.size() != gaps.size()) {
    throw Error(ErrorKind::kInput, "fit_exponential_decay: length mismatch");
  }
  if (x.size() < 8) {
    throw Error(ErrorKind::kInsufficientData,
                fmt::format("decay fit needs at least 8 points, got {}", x.size()));
  }
  std::vector<std::size_t> usable;
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    if (std::isfinite(gaps[i]) && gaps[i] >= kGapFloor) usable.push_back(i);
  }
  if (usable.size() < 4) {
    throw Error(ErrorKind::kInsufficientData,
                fmt::format("decay fit has {} usable points above the floor", usable.size()));
  }
  std::size_t drop = static_cast<std::size_t>(std::floor(drop_fraction * usable.size()));
  drop = std::min(drop, (usable.size() - 4) / 2);
  const std::vector<std::size_t> kept(usable.begin() + drop, usable.end() - drop);

  const double cnt = static_cast<double>(kept.size());
  double sx = 0, sy = 0;
  for (auto i : kept) {
    sx += x[i];
    sy += std::log(gaps[i]);
  }
  const double mx = sx / cnt, my = sy / cnt;
  double sxx = 0, sxy = 0, syy = 0;
  for (auto i : kept) {
    const double dx = x[i] - mx, dy = std::log(gaps[i]) - my;
    sxx += dx * dx;
    sxy += dx * dy;
    syy += dy * dy;
  }
  if (sxx <= 0.0) {
    throw Error(ErrorKind::kInsufficientData, "decay fit abscissae are all equal");
  }
  const double slope = sxy / sxx;
  const double intercept = my - slope * mx;

  DecayFit fit;
  fit.K = std::exp(intercept);
  fit.lambda = -slope;
  double ss_res = 0;
  for (auto i : kept) {
    const double e = std::log(gaps[i]) - (intercept + slope * x[i]);
    ss_res += e * e;
  }
  // A flat log-curve is fitted perfectly by a zero slope.
  fit.r_squared = syy <= 1e-300 ? 1.0 : std::clamp(1.0 - ss_res / syy, 0.0, 1.0);
  fit.window = {kept.front(), kept.back()};
  return fit;
}

namespace {

void check_finite(const Mat& y, long step) {
  if (!y.allFinite()) {
    throw Error(ErrorKind::kDivergence,
                fmt::format("non-finite value in integration at step {}", step));
  }
}

Mat hermite_mid(const Mat& y0, const Mat& f0, const Mat& y1, const Mat& f1, double h) {
  return 0.5 * (y0 + y1) + (h / 8.0) * (f0 - f1);
}

}  // namespace

Trajectory integrate_ode(const std::function<Mat(double, const Mat&)>& rhs,
                         const Mat& initial, double t0, double t1, int steps) {
  if (steps < 1) throw Error(ErrorKind::kInput, "integrate_ode needs steps >= 1");
  const double dt = (t1 - t0) / steps;
  std::vector<Mat> ys{initial}, fs{rhs(t0, initial)};
  ys.reserve(steps + 1);
  fs.reserve(steps + 1);
  Mat y = initial;
  for (int s = 0; s < steps; ++s) {
    const double t = t0 + s * dt;
    const Mat& k1 = fs.back();
    Mat k2 = rhs(t + 0.5 * dt, y + 0.5 * dt * k1);
    Mat k3 = rhs(t + 0.5 * dt, y + 0.5 * dt * k2);
    Mat k4 = rhs(t + dt, y + dt * k3);
    y += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    check_finite(y, s + 1);
    ys.push_back(y);
    fs.push_back(rhs(t0 + (s + 1) * dt, y));
  }
  if (dt < 0) {
    std::reverse(ys.begin(), ys.end());
    std::reverse(fs.begin(), fs.end());
  }
  Trajectory traj;
  traj.t0 = std::min(t0, t1);
  traj.h = std::abs(dt);
  traj.half.reserve(2 * steps + 1);
  for (int j = 0; j <= steps; ++j) {
    traj.half.push_back(ys[j]);
    if (j < steps) traj.half.push_back(hermite_mid(ys[j], fs[j], ys[j + 1], fs[j + 1], traj.h));
  }
  return traj;
}

namespace {

// One RK4 step from node `node` in direction `sign` (+1 / -1). k1 is the slope
// at the starting node, supplied by the caller so it can be reused.
Mat rk4_step(const HalfRhs& rhs, const Mat& y, const Mat& k1, long node, int sign, double h) {
  const double dt = sign * h;
  const long kmid = 2 * node + sign;
  const long kend = 2 * node + 2 * sign;
  Mat k2 = rhs(kmid, y + 0.5 * dt * k1);
  Mat k3 = rhs(kmid, y + 0.5 * dt * k2);
  Mat k4 = rhs(kend, y + dt * k3);
  return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

}  // namespace

Trajectory integrate_on_grid(const HalfRhs& rhs, const Mat& initial, long start,
                             long steps, double h, Direction dir,
                             const Projection& project) {
  const int sign = dir == Direction::kForward ? 1 : -1;
  std::vector<Mat> ys, fs;
  ys.reserve(steps + 1);
  fs.reserve(steps + 1);
  Mat y = initial;
  if (project) project(y);
  ys.push_back(y);
  fs.push_back(rhs(2 * start, y));
  for (long s = 0; s < steps; ++s) {
    const long node = start + sign * s;
    y = rk4_step(rhs, y, fs.back(), node, sign, h);
    if (project) project(y);
    check_finite(y, s + 1);
    ys.push_back(y);
    fs.push_back(rhs(2 * (node + sign), y));
  }
  if (sign < 0) {
    std::reverse(ys.begin(), ys.end());
    std::reverse(fs.begin(), fs.end());
  }
  Trajectory traj;
  traj.h = h;
  traj.t0 = static_cast<double>(sign > 0 ? start : start - steps) * h;
  traj.half.reserve(2 * steps + 1);
  for (long j = 0; j <= steps; ++j) {
    traj.half.push_back(std::move(ys[j]));
    if (j < steps) {
      Mat mid = hermite_mid(traj.half.back(), fs[j], ys[j + 1], fs[j + 1], h);
      if (project) project(mid);
      traj.half.push_back(std::move(mid));
    }
  }
  return traj;
}

Mat propagate_on_grid(const HalfRhs& rhs, const Mat& initial, long start,
                      long steps, double h, Direction dir,
                      const Projection& project) {
  const int sign = dir == Direction::kForward ? 1 : -1;
  Mat y = initial;
  if (project) project(y);
  for (long s = 0; s < steps; ++s) {
    const long node = start + sign * s;
    y = rk4_step(rhs, y, rhs(2 * node, y), node, sign, h);
    if (project) project(y);
    check_finite(y, s + 1);
  }
  return y;
}

StateBasis StateBasis::full(Index rows, Index cols) {
  StateBasis b;
  b.rows_ = rows;
  b.cols_ = cols;
  b.dim_ = rows * cols;
  return b;
}

StateBasis StateBasis::symmetric(Index n) {
  StateBasis b;
  b.symmetric_ = true;
  b.rows_ = b.cols_ = n;
  b.dim_ = n * (n + 1) / 2;
  return b;
}

Mat StateBasis::element(Index i) const {
  Vec c = Vec::Zero(dim_);
  c(i) = 1.0;
  return from_coords(c);
}

Vec StateBasis::coords(const Mat& m) const {
  Vec c(dim_);
  if (!symmetric_) {
    for (Index j = 0, k = 0; j < cols_; ++j)
      for (Index i = 0; i < rows_; ++i) c(k++) = m(i, j);
    return c;
  }
  Index k = 0;
  for (Index j = 0; j < cols_; ++j)
    for (Index i = 0; i <= j; ++i) c(k++) = 0.5 * (m(i, j) + m(j, i));
  return c;
}

Mat StateBasis::from_coords(const Vec& c) const {
  Mat m(rows_, cols_);
  if (!symmetric_) {
    for (Index j = 0, k = 0; j < cols_; ++j)
      for (Index i = 0; i < rows_; ++i) m(i, j) = c(k++);
    return m;
  }
  Index k = 0;
  for (Index j = 0; j < cols_; ++j)
    for (Index i = 0; i <= j; ++i) {
      m(i, j) = c(k);
      m(j, i) = c(k);
      ++k;
    }
  return m;
}

Mat one_period_map(const HalfRhs& linear, const StateBasis& basis, int steps,
                   double h, Direction dir) {
  const long start = dir == Direction::kForward ? 0 : steps;
  Mat phi(basis.dim(), basis.dim());
  for (Index i = 0; i < basis.dim(); ++i) {
    phi.col(i) = basis.coords(propagate_on_grid(linear, basis.element(i), start, steps, h, dir));
  }
  return phi;
}

double spectral_radius(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::EigenSolver<Mat> es(m, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

PeriodicAffineSolution solve_periodic_affine(const HalfRhs& linear,
                                             const std::function<Mat(long)>& source,
                                             const StateBasis& basis, int steps,
                                             double h, Direction dir,
                                             const Projection& project) {
  const long start = dir == Direction::kForward ? 0 : steps;
  HalfRhs affine = [&](long k, const Mat& y) -> Mat { return linear(k, y) + source(k); };

  const Mat phi = one_period_map(linear, basis, steps, h, dir);
  const Mat zero = basis.from_coords(Vec::Zero(basis.dim()));
  const Vec c = basis.coords(propagate_on_grid(affine, zero, start, steps, h, dir));

  const Mat lhs = Mat::Identity(basis.dim(), basis.dim()) - phi;
  Eigen::JacobiSVD<Mat> svd(lhs);
  const Vec& sv = svd.singularValues();
  PeriodicAffineSolution out;
  out.monodromy_radius = spectral_radius(phi);
  out.condition = sv(sv.size() - 1) > 0 ? sv(0) / sv(sv.size() - 1)
                                         : std::numeric_limits<double>::infinity();
  if (!(out.condition < 1e12)) {
    throw Error(ErrorKind::kStabilityPrecondition,
                fmt::format("periodic fixed-point system is singular (condition {:.3e}, "
                            "monodromy radius {:.6f})",
                            out.condition, out.monodromy_radius));
  }
  const Vec y0 = lhs.fullPivLu().solve(c);
  out.trajectory = integrate_on_grid(affine, basis.from_coords(y0), start, steps, h, dir, project);
  const Mat& first = out.trajectory.front();
  const Mat& last = out.trajectory.back();
  out.boundary_mismatch = (first - last).norm();
  // Close the period exactly; the sweep end differs from the fixed point only
  // by roundoff of the linear solve.
  if (dir == Direction::kForward) {
    out.trajectory.half.back() = first;
  } else {
    out.trajectory.half.front() = last;
  }
  return out;
}

Mat fd6_derivative(const std::vector<Mat>& nodes, std::size_t j, double h, bool periodic) {
  static constexpr double c[3] = {3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0};
  const long n = static_cast<long>(nodes.size());
  auto at = [&](long i) -> const Mat& {
    if (periodic) {
      i %= n;
      if (i < 0) i += n;
    } else if (i < 0 || i >= n) {
      throw Error(ErrorKind::kInternal, "fd6_derivative: stencil outside the data");
    }
    return nodes[static_cast<std::size_t>(i)];
  };
  const long jj = static_cast<long>(j);
  Mat d = Mat::Zero(nodes[j].rows(), nodes[j].cols());
  for (long s = 1; s <= 3; ++s) d += c[s - 1] * (at(jj + s) - at(jj - s));
  return d / h;
}

double simpson_half(const std::vector<double>& half, double h) {
  if (half.size() < 3) return 0.0;
  double s = 0.0;
  for (std::size_t j = 0; j + 2 < half.size(); j += 2) {
    s += half[j] + 4.0 * half[j + 1] + half[j + 2];
  }
  return s * h / 6.0;
}

}  // namespace mflq
