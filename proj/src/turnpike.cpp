#include "mflq/turnpike.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <fmt/format.h>

#include "mflq/error.hpp"

namespace mflq {

void riccati_gap_curves(const FiniteHorizonSolution& fin, const PeriodicRiccatiSolution& per,
                        GapCurves& out) {
  const std::size_t nodes = fin.P.size();
  out.t.resize(nodes);
  out.gap_P.resize(nodes);
  out.gap_Pi.resize(nodes);
  out.gap_Theta.resize(nodes);
  out.gap_Theta_hat.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const long jj = static_cast<long>(j);
    out.t[j] = fin.P.time(j);
    out.gap_P[j] = (fin.P.node(j) - per.P.grid.node(jj)).norm();
    out.gap_Pi[j] = (fin.Pi.node(j) - per.Pi.grid.node(jj)).norm();
    out.gap_Theta[j] = (fin.Theta.node(j) - per.P.gain.node(jj)).norm();
    out.gap_Theta_hat[j] = (fin.Theta_hat.node(j) - per.Pi.gain.node(jj)).norm();
  }
}

void offset_gap_curves(const FiniteHorizonSolution& fin, const PeriodicLawMoments& law,
                       double tau, GapCurves& out) {
  const GridFunction eta = law.eta.periodic(tau);
  const GridFunction v = law.v_star.periodic(tau);
  const std::size_t nodes = fin.varphi.size();
  out.gap_varphi.resize(nodes);
  out.gap_phi.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const long jj = static_cast<long>(j);
    out.gap_varphi[j] = (eta.node(jj) - fin.varphi.node(j)).norm();
    out.gap_phi[j] = (fin.phi.node(j) - v.node(jj)).norm();
  }
}

CoupledMoments coupled_moments(const MeanFieldSystem& sys, const FiniteHorizonSolution& fin,
                               const PeriodicLQSolution& per, const Vec& x) {
  const Index n = sys.n;
  if (x.size() != n) throw Error(ErrorKind::kInput, "initial state has the wrong dimension");
  const GridFunction mu = per.law.mu_star.periodic(sys.tau);
  const GridFunction v = per.law.v_star.periodic(sys.tau);
  const GridFunction& th = per.riccati.P.gain;
  const GridFunction& thh = per.riccati.Pi.gain;
  const ClosedLoopCoefficients& cl = per.cl;
  const HatCoefficients& hat = sys.hat;

  // State layout: [ M (2n x 2n) | (dmu; 0) ].
  const HalfRhs rhs = [&](long k, const Mat& z) -> Mat {
    const auto i = static_cast<std::size_t>(k);
    const Mat& thT = fin.Theta.half[i];
    const Mat& thhT = fin.Theta_hat.half[i];
    const Mat& phiT = fin.phi.half[i];
    const Mat& B = sys.base.B.half(k);
    const Mat& D = sys.base.D.half(k);
    const Mat& Bh = hat.B_hat.half(k);
    const Mat& Dh = hat.D_hat.half(k);
    const Mat dth = thT - th.half(k);
    const Mat dthh = thhT - thh.half(k);
    const Mat dv = phiT - v.half(k);
    const Mat& mus = mu.half(k);
    const Mat dmu = z.block(0, 2 * n, n, 1);

    Mat F = Mat::Zero(2 * n, 2 * n), G = Mat::Zero(2 * n, 2 * n);
    F.topLeftCorner(n, n) = sys.base.A.half(k) + B * thT;
    F.topRightCorner(n, n) = B * dth;
    F.bottomRightCorner(n, n) = cl.cal_A.half(k);
    G.topLeftCorner(n, n) = sys.base.C.half(k) + D * thT;
    G.topRightCorner(n, n) = D * dth;
    G.bottomRightCorner(n, n) = cl.cal_C.half(k);
    Mat g(2 * n, 1);
    g.topRows(n) = (hat.C_hat.half(k) + Dh * thhT) * dmu + Dh * (dthh * mus + dv);
    g.bottomRows(n) = cl.hat_cal_C.half(k) * mus + Dh * v.half(k) + sys.sigma.half(k);

    const Mat M = z.leftCols(2 * n);
    const Mat FM = F * M;
    Mat d = Mat::Zero(2 * n, 2 * n + 1);
    d.leftCols(2 * n) = FM + FM.transpose() + G * M * G.transpose() + g * g.transpose();
    d.block(0, 2 * n, n, 1) = (hat.A_hat.half(k) + Bh * thhT) * dmu + Bh * (dthh * mus + dv);
    return d;
  };
  const Projection proj = [n](Mat& z) { z.leftCols(2 * n) = sym(z.leftCols(2 * n)); };

  const Mat& s0 = per.law.Sigma_star.front();
  Mat z0 = Mat::Zero(2 * n, 2 * n + 1);
  z0.topLeftCorner(n, n) = s0;
  z0.block(0, n, n, n) = -s0;
  z0.block(n, 0, n, n) = -s0;
  z0.block(n, n, n, n) = s0;
  z0.block(0, 2 * n, n, 1) = x - per.law.mu_star.front();

  const Trajectory zt =
      integrate_on_grid(rhs, z0, 0, fin.steps, sys.h(), Direction::kForward, proj);
  CoupledMoments out;
  out.dmu = Trajectory{zt.t0, zt.h, {}};
  out.joint = Trajectory{zt.t0, zt.h, {}};
  out.dmu.half.reserve(zt.half.size());
  out.joint.half.reserve(zt.half.size());
  for (const auto& z : zt.half) {
    out.joint.half.push_back(z.leftCols(2 * n));
    out.dmu.half.push_back(z.block(0, 2 * n, n, 1));
  }
  return out;
}

double gaussian_w2_squared(const Vec& mu1, const Mat& S1, const Vec& mu2, const Mat& S2) {
  const Mat r = sqrtm_psd(S2, 1e-8);
  const Mat cross = sqrtm_psd(r * S1 * r, 1e-8);
  return std::max(0.0, (mu1 - mu2).squaredNorm() + (S1 + S2 - 2.0 * cross).trace());
}

double gaussian_w2_squared_diff(const Vec& dmu, const Mat& S2, const Mat& dS) {
  const Index n = S2.rows();
  const double scale = std::max(1.0, S2.norm());
  if (min_eigenvalue(S2) <= 1e-10 * scale) {
    return gaussian_w2_squared(dmu, S2 + dS, Vec::Zero(n), S2);
  }
  // With R = S2^1/2 and A = R S1 R, X = S2 - A^1/2 solves the Sylvester
  // equation S2 X + X A^1/2 = -R dS R, so tr(S1 + S2 - 2 A^1/2) = tr dS + 2 tr X
  // without subtracting nearly equal square roots.
  const Mat r = sqrtm_psd(S2, 1e-8);
  const Mat ah = sqrtm_psd(r * (S2 + dS) * r, 1e-8);
  const Mat I = Mat::Identity(n, n);
  Mat kron(n * n, n * n);
  for (Index a = 0; a < n; ++a)
    for (Index b = 0; b < n; ++b)
      kron.block(a * n, b * n, n, n) = (a == b ? S2 : Mat::Zero(n, n)) + ah(b, a) * I;
  const Mat rhs = -(r * dS * r);
  const Vec xv = kron.partialPivLu().solve(Eigen::Map<const Vec>(rhs.data(), n * n));
  double trX = 0.0;
  for (Index i = 0; i < n; ++i) trX += xv(i * n + i);
  return std::max(0.0, dmu.squaredNorm() + dS.trace() + 2.0 * trX);
}

void trajectory_gap(const MeanFieldSystem& sys, const FiniteHorizonSolution& fin,
                    const PeriodicLQSolution& per, const Vec& x, GapCurves& out,
                    CoupledMoments* moments) {
  CoupledMoments cm = coupled_moments(sys, fin, per, x);
  const Index n = sys.n;
  const GridFunction mu = per.law.mu_star.periodic(sys.tau);
  const GridFunction v = per.law.v_star.periodic(sys.tau);
  const GridFunction sigma = per.law.Sigma_star.periodic(sys.tau);
  const GridFunction& th = per.riccati.P.gain;
  const GridFunction& thh = per.riccati.Pi.gain;
  const std::size_t nodes = cm.dmu.size();
  out.gap_state.resize(nodes);
  out.gap_control.resize(nodes);
  out.w2_state.resize(nodes);
  for (std::size_t j = 0; j < nodes; ++j) {
    const long jj = static_cast<long>(j);
    const Mat& M = cm.joint.node(j);
    const Vec dmu = cm.dmu.node(j);
    out.gap_state[j] = dmu.squaredNorm() + M.topLeftCorner(n, n).trace();

    const Mat& thT = fin.Theta.node(j);
    const Mat& thhT = fin.Theta_hat.node(j);
    Mat L(thT.rows(), 2 * n);
    L << thT, thT - th.node(jj);
    const Vec mean = thhT * dmu + (thhT - thh.node(jj)) * mu.node(jj) + fin.phi.node(j) - v.node(jj);
    out.gap_control[j] = mean.squaredNorm() + (L * M * L.transpose()).trace();

    const Mat dS = M.topLeftCorner(n, n) + M.topRightCorner(n, n) + M.bottomLeftCorner(n, n) +
                   (M.bottomRightCorner(n, n) - sigma.node(jj));
    out.w2_state[j] = std::sqrt(gaussian_w2_squared_diff(dmu, sigma.node(jj), sym(dS)));
  }
  if (moments) *moments = std::move(cm);
}

ClosedLoopMoments closed_loop_moments(const MeanFieldSystem& sys, const Feedback& fb,
                                      const Vec& x) {
  const Index n = sys.n;
  const long K = static_cast<long>(fb.Theta.size()) - 1;
  const HatCoefficients& hat = sys.hat;
  // State layout: [ Sigma (n x n) | mu ].
  const HalfRhs rhs = [&](long k, const Mat& z) -> Mat {
    const auto i = static_cast<std::size_t>(k);
    const Mat& th = fb.Theta.half[i];
    const Mat& thh = fb.Theta_hat.half[i];
    const Mat& phi = fb.phi.half[i];
    const Mat mu = z.col(n);
    const Mat S = z.leftCols(n);
    const Mat a = sys.base.A.half(k) + sys.base.B.half(k) * th;
    const Mat c = sys.base.C.half(k) + sys.base.D.half(k) * th;
    const Mat w = (hat.C_hat.half(k) + hat.D_hat.half(k) * thh) * mu + hat.D_hat.half(k) * phi +
                  sys.sigma.half(k);
    Mat d(n, n + 1);
    const Mat aS = a * S;
    d.leftCols(n) = aS + aS.transpose() + c * S * c.transpose() + w * w.transpose();
    d.col(n) = (hat.A_hat.half(k) + hat.B_hat.half(k) * thh) * mu + hat.B_hat.half(k) * phi +
               sys.b.half(k);
    return d;
  };
  const Projection proj = [n](Mat& z) { z.leftCols(n) = sym(z.leftCols(n)); };
  Mat z0 = Mat::Zero(n, n + 1);
  z0.col(n) = x;
  const Trajectory zt = integrate_on_grid(rhs, z0, 0, K, sys.h(), Direction::kForward, proj);
  ClosedLoopMoments out{{zt.t0, zt.h, {}}, {zt.t0, zt.h, {}}};
  for (const auto& z : zt.half) {
    out.mean.half.push_back(z.col(n));
    out.cov.half.push_back(z.leftCols(n));
  }
  return out;
}

double evaluate_cost(const MeanFieldSystem& sys, const Feedback& fb, const Vec& x) {
  const HatCoefficients& hat = sys.hat;
  const ClosedLoopMoments cm = closed_loop_moments(sys, fb, x);
  std::vector<double> integrand(cm.mean.half.size());
  for (std::size_t i = 0; i < integrand.size(); ++i) {
    const long k = static_cast<long>(i);
    const Mat& mu = cm.mean.half[i];
    const Mat& S = cm.cov.half[i];
    const Mat& th = fb.Theta.half[i];
    const Mat u = fb.Theta_hat.half[i] * mu + fb.phi.half[i];
    const Mat mean_part = mu.transpose() * hat.Q_hat.half(k) * mu +
                          2.0 * u.transpose() * hat.S_hat.half(k) * mu +
                          u.transpose() * hat.R_hat.half(k) * u +
                          2.0 * sys.q.half(k).transpose() * mu + 2.0 * sys.r.half(k).transpose() * u;
    const double fluct = (sys.base.Q.half(k) * S).trace() +
                         2.0 * (th.transpose() * sys.base.S.half(k) * S).trace() +
                         (th.transpose() * sys.base.R.half(k) * th * S).trace();
    integrand[i] = mean_part(0, 0) + fluct;
  }
  return simpson_half(integrand, sys.h());
}

const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::kPass: return "pass";
    case Verdict::kFail: return "fail";
    case Verdict::kDegenerateZero: return "degenerate-zero";
  }
  return "?";
}

namespace {

bool all_below_floor(const std::vector<double>& g) {
  return std::all_of(g.begin(), g.end(), [](double v) { return v < kGapFloor; });
}

bool passes(const DecayFit& f) { return f.r_squared >= kMinRSquared && f.lambda > 0.0; }

}  // namespace

GapFit fit_backward_gap(const std::string& name, const std::vector<double>& t,
                        const std::vector<double>& gap, double T) {
  GapFit out;
  out.name = name;
  if (all_below_floor(gap)) {
    out.verdict = Verdict::kDegenerateZero;
    return out;
  }
  std::vector<double> s(t.size());
  for (std::size_t j = 0; j < t.size(); ++j) s[j] = T - t[j];
  try {
    out.fit = fit_exponential_decay(s, gap);
    out.verdict = passes(*out.fit) ? Verdict::kPass : Verdict::kFail;
  } catch (const Error& e) {
    if (e.kind() != ErrorKind::kInsufficientData) throw;
    out.verdict = Verdict::kFail;
    out.note = e.what();
  }
  return out;
}

GapFit fit_two_sided_gap(const std::string& name, const std::vector<double>& t,
                         const std::vector<double>& gap, double T) {
  GapFit out;
  out.name = name;
  out.two_sided = true;
  if (all_below_floor(gap)) {
    out.verdict = Verdict::kDegenerateZero;
    return out;
  }
  const std::size_t split =
      static_cast<std::size_t>(std::min_element(gap.begin(), gap.end()) - gap.begin());

  auto branch = [&](std::size_t lo, std::size_t hi, bool from_end) -> std::optional<DecayFit> {
    std::vector<double> s, g;
    for (std::size_t j = lo; j <= hi; ++j) {
      s.push_back(from_end ? T - t[j] : t[j]);
      g.push_back(gap[j]);
    }
    if (all_below_floor(g)) return std::nullopt;
    try {
      return fit_exponential_decay(s, g);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::kInsufficientData) throw;
      out.note += fmt::format("{} branch skipped: {}. ", from_end ? "right" : "left", e.what());
      return std::nullopt;
    }
  };
  out.left = branch(0, split, false);
  out.right = branch(split, gap.size() - 1, true);
  if (!out.left && !out.right) {
    out.verdict = Verdict::kFail;
    return out;
  }
  bool ok = true;
  for (const auto* f : {&out.left, &out.right}) {
    if (!*f) continue;
    ok = ok && passes(**f);
    if (!out.fit || (*f)->lambda < out.fit->lambda) out.fit = **f;
  }
  out.verdict = ok ? Verdict::kPass : Verdict::kFail;
  return out;
}

std::vector<GapFit> fit_turnpike_rates(const GapCurves& c, double T) {
  std::vector<GapFit> fits;
  fits.push_back(fit_backward_gap("gap_P", c.t, c.gap_P, T));
  fits.push_back(fit_backward_gap("gap_Pi", c.t, c.gap_Pi, T));
  fits.push_back(fit_backward_gap("gap_Theta", c.t, c.gap_Theta, T));
  fits.push_back(fit_backward_gap("gap_Theta_hat", c.t, c.gap_Theta_hat, T));
  fits.push_back(fit_backward_gap("gap_varphi", c.t, c.gap_varphi, T));
  fits.push_back(fit_backward_gap("gap_phi", c.t, c.gap_phi, T));
  fits.push_back(fit_two_sided_gap("gap_state_sq", c.t, c.gap_state, T));
  fits.push_back(fit_two_sided_gap("gap_control_sq", c.t, c.gap_control, T));
  fits.push_back(fit_two_sided_gap("w2_state", c.t, c.w2_state, T));
  return fits;
}

bool TurnpikeReport::all_pass() const {
  return std::all_of(fits.begin(), fits.end(),
                     [](const GapFit& f) { return f.verdict != Verdict::kFail; });
}

TurnpikeReport run_turnpike(const MeanFieldSystem& sys, const PeriodicLQSolution& per, double T,
                            const Vec& x) {
  const auto start = std::chrono::steady_clock::now();
  TurnpikeReport rep;
  const FiniteHorizonSolution fin = solve_finite_horizon(sys, T);
  rep.T = fin.T;
  rep.steps = fin.steps;
  riccati_gap_curves(fin, per.riccati, rep.curves);
  offset_gap_curves(fin, per.law, sys.tau, rep.curves);
  trajectory_gap(sys, fin, per, x, rep.curves);

  const auto& gs = rep.curves.gap_state;
  const Vec mu0 = per.law.mu_star.front();
  rep.gap_state0_identity =
      std::abs(gs.front() - ((x - mu0).squaredNorm() + per.law.Sigma_star.front().trace()));
  double middle = 0.0;
  for (std::size_t j = 0; j < gs.size(); ++j) {
    const double t = rep.curves.t[j];
    if (t >= rep.T / 3.0 && t <= 2.0 * rep.T / 3.0) middle = std::max(middle, gs[j]);
    const double w2 = rep.curves.w2_state[j];
    rep.coupling_violation = std::max(rep.coupling_violation, w2 * w2 - gs[j]);
  }
  const double ends = std::max(gs.front(), gs.back());
  rep.middle_third_ratio = ends > 0.0 ? middle / ends : 0.0;
  if (fin.steps >= 7) rep.fits = fit_turnpike_rates(rep.curves, rep.T);
  rep.runtime_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return rep;
}

}  // namespace mflq
