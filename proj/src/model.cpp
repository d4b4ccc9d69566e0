#include "mflq/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <set>

#include <fmt/format.h>

#include "mflq/error.hpp"
#include "mflq/numerics.hpp"

namespace mflq {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::pair<Index, Index> builder_shape(const Builder& b) {
  return std::visit(
      Overloaded{
          [](const ConstantBuilder& c) { return std::pair{c.value.rows(), c.value.cols()}; },
          [](const FourierBuilder& f) { return std::pair{f.mean.rows(), f.mean.cols()}; },
          [](const PiecewiseConstantBuilder& p) {
            return p.values.empty() ? std::pair<Index, Index>{0, 0}
                                    : std::pair{p.values[0].rows(), p.values[0].cols()};
          }},
      b);
}

void check_builder(const Builder& b, double tau) {
  const auto [r, c] = builder_shape(b);
  auto same = [&](const Mat& m) { return m.rows() == r && m.cols() == c; };
  std::visit(Overloaded{
                 [](const ConstantBuilder&) {},
                 [&](const FourierBuilder& f) {
                   for (const auto& hm : f.harmonics) {
                     if (hm.k < 1) throw Error(ErrorKind::kInput, "harmonic index must be >= 1");
                     if (!same(hm.cos) || !same(hm.sin)) {
                       throw Error(ErrorKind::kInput, "harmonic matrices differ in shape from mean");
                     }
                   }
                 },
                 [&](const PiecewiseConstantBuilder& p) {
                   if (p.values.empty() || p.breaks.size() != p.values.size()) {
                     throw Error(ErrorKind::kInput, "pwc needs one value per breakpoint");
                   }
                   for (std::size_t i = 0; i < p.breaks.size(); ++i) {
                     if (p.breaks[i] < 0.0 || p.breaks[i] >= tau ||
                         (i > 0 && p.breaks[i] <= p.breaks[i - 1])) {
                       throw Error(ErrorKind::kInput, "pwc breakpoints must ascend within [0, tau)");
                     }
                     if (!same(p.values[i])) {
                       throw Error(ErrorKind::kInput, "pwc values differ in shape");
                     }
                   }
                 }},
             b);
}

}  // namespace

PeriodicMatrixFn::PeriodicMatrixFn(Builder builder, double tau, int steps)
    : builder_(std::move(builder)), tau_(tau), steps_(steps) {
  if (tau <= 0.0 || steps < 1) throw Error(ErrorKind::kInput, "invalid period or grid");
  check_builder(builder_, tau);
  const double hh = tau / (2.0 * steps);
  std::vector<Mat> half;
  half.reserve(2 * static_cast<std::size_t>(steps));
  for (long k = 0; k < 2L * steps; ++k) half.push_back(synthesize(k * hh, k));
  grid_ = GridFunction(tau, steps, std::move(half));
}

Mat PeriodicMatrixFn::synthesize(double t, long half_index) const {
  return std::visit(
      Overloaded{
          [](const ConstantBuilder& c) -> Mat { return c.value; },
          [&](const FourierBuilder& f) -> Mat {
            Mat v = f.mean;
            for (const auto& hm : f.harmonics) {
              double angle;
              if (half_index >= 0) {
                // Exact phase reduction on the grid: 2 pi k (j / 2N_s).
                const long period = 2L * steps_;
                const long idx = (static_cast<long>(hm.k) * half_index) % period;
                angle = 2.0 * std::numbers::pi * static_cast<double>(idx) / period;
              } else {
                angle = 2.0 * std::numbers::pi * hm.k * t / tau_;
              }
              v += std::cos(angle) * hm.cos + std::sin(angle) * hm.sin;
            }
            return v;
          },
          [&](const PiecewiseConstantBuilder& p) -> Mat {
            auto it = std::upper_bound(p.breaks.begin(), p.breaks.end(), t);
            if (it == p.breaks.begin()) return p.values.back();
            return p.values[static_cast<std::size_t>(it - p.breaks.begin()) - 1];
          }},
      builder_);
}


Mat PeriodicMatrixFn::eval(double t) const {
  double s = std::fmod(t, tau_);
  if (s < 0.0) s += tau_;
  const double x = s / (tau_ / (2.0 * steps_));
  const double k = std::round(x);
  if (std::abs(x - k) < 1e-9) return grid_.half(static_cast<long>(k));
  return synthesize(s, -1);
}

std::vector<Mat> PeriodicMatrixFn::grid_samples() const {
  std::vector<Mat> out;
  out.reserve(steps_);
  for (int j = 0; j < steps_; ++j) out.push_back(grid_.node(j));
  return out;
}

std::pair<Index, Index> coefficient_shape(std::string_view name, int n, int m) {
  static const std::set<std::string_view> nn = {"A", "A_bar", "C", "C_bar", "Q", "Q_bar"};
  static const std::set<std::string_view> nm = {"B", "B_bar", "D", "D_bar"};
  static const std::set<std::string_view> mn = {"S", "S_bar"};
  static const std::set<std::string_view> mm = {"R", "R_bar"};
  static const std::set<std::string_view> n1 = {"b", "sigma", "q"};
  if (nn.count(name)) return {n, n};
  if (nm.count(name)) return {n, m};
  if (mn.count(name)) return {m, n};
  if (mm.count(name)) return {m, m};
  if (n1.count(name)) return {n, 1};
  if (name == "r") return {m, 1};
  throw Error(ErrorKind::kInput, fmt::format("unknown coefficient '{}'", name));
}

const PeriodicMatrixFn& ProblemData::coefficient(std::string_view name) const {
  const PeriodicMatrixFn* table[] = {&A, &A_bar, &B, &B_bar, &C, &C_bar, &D, &D_bar, &Q,
                                     &Q_bar, &S, &S_bar, &R, &R_bar, &b, &sigma, &q, &r};
  for (std::size_t i = 0; i < kCoefficientNames.size(); ++i) {
    if (kCoefficientNames[i] == name) return *table[i];
  }
  throw Error(ErrorKind::kInput, fmt::format("unknown coefficient '{}'", name));
}

namespace {

bool is_symmetric_name(std::string_view name) {
  return name == "Q" || name == "Q_bar" || name == "R" || name == "R_bar";
}

void symmetrize_checked(Mat& m, std::string_view name) {
  const double scale = std::max(1.0, m.norm());
  if (asymmetry(m) > 1e-10 * scale) {
    throw Error(ErrorKind::kInput, fmt::format("coefficient {} is not symmetric", name));
  }
  m = sym(m);
}

Builder symmetrized(Builder b, std::string_view name) {
  std::visit(Overloaded{[&](ConstantBuilder& c) { symmetrize_checked(c.value, name); },
                        [&](FourierBuilder& f) {
                          symmetrize_checked(f.mean, name);
                          for (auto& hm : f.harmonics) {
                            symmetrize_checked(hm.cos, name);
                            symmetrize_checked(hm.sin, name);
                          }
                        },
                        [&](PiecewiseConstantBuilder& p) {
                          for (auto& v : p.values) symmetrize_checked(v, name);
                        }},
             b);
  return b;
}

}  // namespace

ProblemData build_problem(const ProblemSpec& spec) {
  if (spec.n < 1 || spec.m < 1) throw Error(ErrorKind::kInput, "dimensions must be positive");
  if (!(spec.tau > 0.0) || !std::isfinite(spec.tau)) {
    throw Error(ErrorKind::kInput, "period tau must be positive");
  }
  if (spec.grid_steps < 16) throw Error(ErrorKind::kInput, "grid_steps must be at least 16");
  for (const auto& [name, builder] : spec.coefficients) {
    (void)builder;
    coefficient_shape(name, spec.n, spec.m);  // rejects unknown names
  }

  ProblemData p;
  p.n = spec.n;
  p.m = spec.m;
  p.tau = spec.tau;
  p.steps = spec.grid_steps;
  PeriodicMatrixFn* table[] = {&p.A, &p.A_bar, &p.B, &p.B_bar, &p.C, &p.C_bar,
                               &p.D, &p.D_bar, &p.Q, &p.Q_bar, &p.S, &p.S_bar,
                               &p.R, &p.R_bar, &p.b, &p.sigma, &p.q, &p.r};
  for (std::size_t i = 0; i < kCoefficientNames.size(); ++i) {
    const std::string_view name = kCoefficientNames[i];
    const auto [rows, cols] = coefficient_shape(name, spec.n, spec.m);
    auto it = spec.coefficients.find(std::string(name));
    Builder b = it == spec.coefficients.end() ? Builder{ConstantBuilder{Mat::Zero(rows, cols)}}
                                              : it->second;
    const auto [br, bc] = builder_shape(b);
    if (br != rows || bc != cols) {
      throw Error(ErrorKind::kInput,
                  fmt::format("coefficient {} has shape {}x{}, expected {}x{}", name, br, bc,
                              rows, cols));
    }
    if (is_symmetric_name(name)) b = symmetrized(std::move(b), name);
    try {
      *table[i] = PeriodicMatrixFn(std::move(b), spec.tau, spec.grid_steps);
    } catch (const Error& e) {
      throw Error(e.kind(), fmt::format("coefficient {}: {}", name, e.what()));
    }
    if (!std::isfinite(table[i]->grid().sup_norm())) {
      throw Error(ErrorKind::kInput, fmt::format("coefficient {} has non-finite entries", name));
    }
  }
  return p;
}

HatCoefficients hat_coefficients(const ProblemData& p) {
  auto add = [](const PeriodicMatrixFn& a, const PeriodicMatrixFn& b) {
    return map_grid(a.grid(), [&](long k) -> Mat { return a.grid().half(k) + b.grid().half(k); });
  };
  return {add(p.A, p.A_bar), add(p.B, p.B_bar), add(p.C, p.C_bar), add(p.D, p.D_bar),
          add(p.Q, p.Q_bar), add(p.S, p.S_bar), add(p.R, p.R_bar)};
}

ValidationReport validate_assumptions(const ProblemData& p, double tol) {
  ValidationReport rep;
  rep.tol = tol;
  const HatCoefficients hat = hat_coefficients(p);
  const long half = 2L * p.steps;
  const double nan = std::numeric_limits<double>::quiet_NaN();

  auto margin = [&](const Mat& q, const Mat& s, const Mat& r) {
    Eigen::LLT<Mat> llt(r);
    if (llt.info() != Eigen::Success) return nan;
    return min_eigenvalue(q - s.transpose() * llt.solve(s));
  };

  for (long k = 0; k < half; ++k) {
    const Mat& R = p.R.grid().half(k);
    const Mat& Rh = hat.R_hat.half(k);
    rep.min_eig_R.push_back(min_eigenvalue(R));
    rep.min_eig_R_hat.push_back(min_eigenvalue(Rh));
    rep.min_eig_M.push_back(margin(p.Q.grid().half(k), p.S.grid().half(k), R));
    rep.min_eig_M_hat.push_back(margin(hat.Q_hat.half(k), hat.S_hat.half(k), Rh));
  }
  auto min_of = [](const std::vector<double>& v) {
    double out = v.front();
    for (double x : v) out = (std::isnan(x) || x < out) ? x : out;
    return out;
  };
  rep.delta_R = min_of(rep.min_eig_R);
  rep.delta_R_hat = min_of(rep.min_eig_R_hat);
  rep.margin_M = min_of(rep.min_eig_M);
  rep.margin_M_hat = min_of(rep.min_eig_M_hat);

  for (auto name : kCoefficientNames) {
    if (!std::isfinite(p.coefficient(name).grid().sup_norm())) {
      rep.a1_bounded = false;
      rep.failures.push_back(fmt::format("boundedness: coefficient {} is not bounded", name));
    }
  }
  const std::size_t a1_failures = rep.failures.size();
  if (!(rep.delta_R >= rep.delta_required)) {
    rep.failures.push_back(fmt::format("definiteness: R is not uniformly positive definite (delta = {:.6g})",
                                       rep.delta_R));
  }
  if (!(rep.delta_R_hat >= rep.delta_required)) {
    rep.failures.push_back(fmt::format(
        "definiteness: R_hat is not uniformly positive definite (delta = {:.6g})", rep.delta_R_hat));
  }
  if (std::isnan(rep.margin_M)) {
    rep.failures.push_back("definiteness: Q - S^T R^-1 S undefined where R is singular");
  } else if (!(rep.margin_M >= -tol)) {
    rep.failures.push_back(
        fmt::format("definiteness: Q - S^T R^-1 S is not PSD (min eigenvalue {:.6g})", rep.margin_M));
  }
  if (std::isnan(rep.margin_M_hat)) {
    rep.failures.push_back("definiteness: Q_hat - S_hat^T R_hat^-1 S_hat undefined where R_hat is singular");
  } else if (!(rep.margin_M_hat >= -tol)) {
    rep.failures.push_back(fmt::format(
        "definiteness: Q_hat - S_hat^T R_hat^-1 S_hat is not PSD (min eigenvalue {:.6g})",
        rep.margin_M_hat));
  }
  rep.a2_ok = rep.failures.size() == a1_failures;
  return rep;
}

void require_assumptions(const ProblemData& p) {
  const ValidationReport rep = validate_assumptions(p);
  if (rep.ok()) return;
  std::string msg = "standing assumptions violated:";
  for (const auto& f : rep.failures) msg += "\n  " + f;
  throw Error(ErrorKind::kAssumption, msg);
}

}  // namespace mflq
