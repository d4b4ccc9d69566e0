// Acceptance runner: one PASS/FAIL line per criterion. With --criterion N only
// that criterion runs. Exit status is nonzero if any selected criterion fails.

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <fmt/format.h>

#include "mflq/cli.hpp"
#include "mflq/montecarlo.hpp"
#include "mflq/numerics.hpp"
#include "mflq/turnpike.hpp"
#include "test_support.hpp"

using namespace mflq;
using namespace mflq::testing;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;
};

class Checks {
 public:
  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass_ = false;
      failures_.push_back(what);
    }
  }
  void note(const std::string& s) { notes_.push_back(s); }
  Outcome outcome() const {
    std::string d;
    for (const auto& n : notes_) d += (d.empty() ? "" : "; ") + n;
    for (const auto& f : failures_) d += (d.empty() ? "" : "; ") + ("FAILED " + f);
    return {pass_, d};
  }

 private:
  bool pass_ = true;
  std::vector<std::string> notes_, failures_;
};

using Clock = std::chrono::steady_clock;
double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string g(double v) { return fmt::format("{:.3g}", v); }

const double kSqrt2 = std::sqrt(2.0);

double sup_scalar(const Trajectory& t, double v) {
  double e = 0.0;
  for (const Mat& m : t.half) e = std::max(e, std::abs(m(0, 0) - v));
  return e;
}

const GapFit& fit_named(const TurnpikeReport& rep, const std::string& name) {
  for (const auto& f : rep.fits)
    if (f.name == name) return f;
  throw std::runtime_error("no fit named " + name);
}

Outcome criterion1() {
  Checks c;
  const auto sys = system_of(scalar_benchmark_spec());
  const auto t0 = Clock::now();
  const auto P = solve_periodic_riccati(sys);
  const auto Pi = solve_periodic_pi(sys, P.grid);
  const double elapsed = seconds_since(t0);
  const double root = kSqrt2 - 1.0;
  double theta_err = 0.0;
  for (long k = 0; k < 2L * sys.steps; ++k) {
    theta_err = std::max(theta_err, std::abs(P.gain.half(k)(0, 0) - (1.0 - kSqrt2)));
  }
  const double p_err = sup_scalar(P.traj, root);
  const double pi_err = sup_distance(Pi.traj, P.traj);
  c.note(fmt::format("|P-(sqrt2-1)|={} |Theta-(1-sqrt2)|={} |Pi-P|={} runtime={}s", g(p_err),
                     g(theta_err), g(pi_err), g(elapsed)));
  c.require(p_err < 1e-8, "P");
  c.require(theta_err < 1e-8, "Theta");
  c.require(pi_err < 1e-8, "Pi");
  c.require(elapsed < 1.0, "runtime");
  return c.outcome();
}

Outcome criterion2() {
  Checks c;
  const auto t0 = Clock::now();
  const auto sys = system_of(scalar_benchmark_spec());
  const auto per = solve_periodic_lq(sys);
  std::vector<double> lambdas;
  for (int k : {10, 20}) {
    const auto fin = solve_finite_horizon(sys, k * sys.tau);
    GapCurves curves;
    riccati_gap_curves(fin, per.riccati, curves);
    const GapFit f = fit_backward_gap("gap_P", curves.t, curves.gap_P, fin.T);
    if (!f.fit) throw std::runtime_error("gap_P fit missing");
    lambdas.push_back(f.fit->lambda);
    c.note(fmt::format("T={}: lambda={} r2={}", k, g(f.fit->lambda), g(f.fit->r_squared)));
    if (k == 10) {
      c.require(std::abs(f.fit->lambda / (2.0 * kSqrt2) - 1.0) < 0.15, "lambda within 15% of 2 sqrt2");
      c.require(f.fit->r_squared >= 0.99, "r2 >= 0.99");
    }
  }
  const double drift = std::abs(lambdas[1] - lambdas[0]) / lambdas[0];
  const double elapsed = seconds_since(t0);
  c.note(fmt::format("relative change {} runtime={}s", g(drift), g(elapsed)));
  c.require(drift < 0.10, "horizon independence");
  c.require(elapsed < 5.0, "runtime");
  return c.outcome();
}

Outcome criterion3() {
  Checks c;
  const auto sys = system_of(scalar_offsets_spec());
  const auto per = solve_periodic_lq(sys);
  const auto rep = run_turnpike(sys, per, 20.0, Vec::Ones(1));
  for (const char* name : {"gap_Pi", "gap_varphi", "gap_phi"}) {
    const GapFit& f = fit_named(rep, name);
    const bool ok = f.fit && f.fit->lambda > 0.0 && f.fit->r_squared >= 0.98;
    if (f.fit) c.note(fmt::format("{}: lambda={} r2={}", name, g(f.fit->lambda), g(f.fit->r_squared)));
    c.require(ok, name);
  }
  return c.outcome();
}

Outcome criterion4() {
  Checks c;
  double worst_sym = 0, worst_psd = 1e300, worst_shift = 0, worst_mono = 1e300, worst_res = 0,
         worst_agree = 0;
  for (unsigned seed = 1; seed <= 20; ++seed) {
    const auto sys = system_of(random_problem_spec(1000 + seed, false, 256));
    PeriodicOptions opts;
    opts.method = PeriodicMethod::kBoth;
    const auto per = solve_periodic(sys, opts);
    for (const auto* comp : {&per.P, &per.Pi}) {
      if (!comp->kleinman || !comp->extension) {
        c.require(false, fmt::format("seed {}: a method did not converge ({})", seed, comp->diagnostics));
        continue;
      }
      worst_agree = std::max(worst_agree, comp->method_agreement);
      worst_res = std::max(worst_res, comp->residual);
      for (const Mat& m : comp->traj.values()) {
        worst_sym = std::max(worst_sym, asymmetry(m));
        worst_psd = std::min(worst_psd, min_eigenvalue(m));
      }
    }
    const auto fin = solve_finite_horizon(sys, 3.0 * sys.tau);
    for (const auto* tr : {&fin.P, &fin.Pi}) {
      for (const Mat& m : tr->values()) {
        worst_sym = std::max(worst_sym, asymmetry(m));
        worst_psd = std::min(worst_psd, min_eigenvalue(m));
      }
    }
    const auto res = finite_horizon_residuals(sys, fin);
    worst_res = std::max({worst_res, res.P, res.Pi, res.varphi});
    const auto shift = shift_law_check(sys, 2.0 * sys.tau, 1);
    worst_shift = std::max({worst_shift, shift.P_shift, shift.Pi_shift});
    worst_mono = std::min(worst_mono, shift.monotonicity_witness);
  }
  c.note(fmt::format("asym={} min_eig={} shift={} monotone={} residual={} methods={}",
                     g(worst_sym), g(worst_psd), g(worst_shift), g(worst_mono), g(worst_res),
                     g(worst_agree)));
  c.require(worst_sym < 1e-10, "symmetry");
  c.require(worst_psd >= -1e-8, "PSD");
  c.require(worst_shift < 1e-8, "shift law");
  c.require(worst_mono >= -1e-8, "monotonicity in T");
  c.require(worst_res < 1e-6, "residuals");
  c.require(worst_agree < 1e-6, "Kleinman vs horizon extension");
  return c.outcome();
}

Outcome criterion5() {
  Checks c;
  double worst_pi = 0, worst_theta = 0;
  for (unsigned seed = 1; seed <= 10; ++seed) {
    const auto sys = system_of(random_problem_spec(2000 + seed, true, 256));
    const auto per = solve_periodic(sys);
    worst_pi = std::max(worst_pi, sup_distance(per.P.traj, per.Pi.traj));
    for (long k = 0; k < 2L * sys.steps; ++k) {
      worst_theta = std::max(worst_theta, (per.P.gain.half(k) - per.Pi.gain.half(k)).norm());
    }
  }
  c.note(fmt::format("sup|Pi-P|={} sup|Theta_hat-Theta|={}", g(worst_pi), g(worst_theta)));
  c.require(worst_pi < 1e-8, "Pi = P");
  c.require(worst_theta < 1e-8, "Theta_hat = Theta");
  return c.outcome();
}

struct Criterion6Run {
  TurnpikeReport rep;
  PeriodicLQSolution per;
};

Criterion6Run criterion6_run() {
  const auto sys = system_of(scalar_offsets_spec());
  auto per = solve_periodic_lq(sys);
  auto rep = run_turnpike(sys, per, 20.0, Vec::Constant(1, 5.0));
  return {std::move(rep), std::move(per)};
}

Outcome criterion6() {
  Checks c;
  const auto run = criterion6_run();
  const auto& gs = run.rep.curves.gap_state;
  const std::size_t N = gs.size();
  double middle = 0.0;
  for (std::size_t j = 0; j < N; ++j) {
    const double t = run.rep.curves.t[j];
    if (t >= run.rep.T / 3.0 && t <= 2.0 * run.rep.T / 3.0) middle = std::max(middle, gs[j]);
  }
  const double ratio = middle / std::max(gs.front(), gs.back());
  const double x = 5.0;
  const double identity = std::abs(gs.front() - (std::pow(x - run.per.law.mu_star.front()(0, 0), 2) +
                                                 run.per.law.Sigma_star.front()(0, 0)));
  const GapFit& f = fit_named(run.rep, "gap_state_sq");
  const bool branches = f.left && f.right && f.left->lambda > 0 && f.right->lambda > 0 &&
                        f.left->r_squared >= 0.98 && f.right->r_squared >= 0.98;
  c.note(fmt::format("middle-third ratio={} identity error={}", g(ratio), g(identity)));
  if (f.left && f.right) {
    c.note(fmt::format("left lambda={} r2={}, right lambda={} r2={}", g(f.left->lambda),
                       g(f.left->r_squared), g(f.right->lambda), g(f.right->r_squared)));
  }
  c.require(ratio <= 1e-4, "middle third");
  c.require(branches, "two-sided fit");
  c.require(identity < 1e-9, "gap_state(0) identity");
  return c.outcome();
}

Outcome criterion7() {
  Checks c;
  const auto run = criterion6_run();
  double worst = -1e300;
  const auto& cv = run.rep.curves;
  for (std::size_t j = 0; j < cv.t.size(); ++j) {
    worst = std::max(worst, cv.w2_state[j] * cv.w2_state[j] - cv.gap_state[j]);
  }
  c.note(fmt::format("max(w2^2 - gap_state)={} over {} nodes", g(worst), cv.t.size()));
  c.require(worst <= 1e-8, "coupling bound");
  return c.outcome();
}

Outcome criterion8() {
  Checks c;
  const auto sys = system_of(scalar_offsets_spec());
  const auto per = solve_periodic_lq(sys);
  c.note(fmt::format("optimality residual={}", g(per.optimality_residual)));
  c.require(per.optimality_residual < 1e-7, "optimality residual");

  const auto fin = solve_finite_horizon(sys, 20.0);
  const Feedback opt{fin.Theta, fin.Theta_hat, fin.phi};
  const Vec x = Vec::Ones(1);
  const double V = evaluate_cost(sys, opt, x);
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> N;
  double worst_gain = 1e300;
  for (int trial = 0; trial < 5; ++trial) {
    const double a = N(rng), b = N(rng), d = N(rng);
    const double norm = std::sqrt(a * a + b * b + d * d);
    Feedback fb = opt;
    for (Mat& m : fb.Theta.half) m.array() += 1e-2 * a / norm;
    for (Mat& m : fb.Theta_hat.half) m.array() += 1e-2 * b / norm;
    for (Mat& m : fb.phi.half) m.array() += 1e-2 * d / norm;
    worst_gain = std::min(worst_gain, evaluate_cost(sys, fb, x) - V);
  }
  c.note(fmt::format("V_T={} smallest perturbed excess={}", g(V), g(worst_gain)));
  c.require(worst_gain >= -1e-12, "perturbations never beat the optimum");
  return c.outcome();
}

Outcome criterion9() {
  Checks c;
  const auto t0 = Clock::now();
  const auto sys = system_of(scalar_offsets_spec());
  const auto fin = solve_finite_horizon(sys, 5.0);
  const Feedback fb{fin.Theta, fin.Theta_hat, fin.phi};
  const Vec x = Vec::Ones(1);
  const auto a = simulate_closed_loop(sys, fb, x, 10000, 20240601);
  const double elapsed = seconds_since(t0);
  const auto cv = cross_validate(a, closed_loop_moments(sys, fb, x).mean);
  const auto b = simulate_closed_loop(sys, fb, x, 10000, 20240601);
  bool identical = a.mean.size() == b.mean.size();
  for (std::size_t j = 0; identical && j < a.mean.size(); ++j) {
    identical = a.mean[j] == b.mean[j] && a.second[j] == b.second[j];
  }
  c.note(fmt::format("fraction |z|>3={} max|z|={} identical rerun={} runtime={}s",
                     g(cv.fraction_over_3), g(cv.max_abs_z), identical, g(elapsed)));
  c.require(cv.pass, "fraction of nodes with |z| > 3");
  c.require(identical, "bit-identical rerun");
  c.require(elapsed < 30.0, "runtime");
  return c.outcome();
}

Outcome criterion10() {
  Checks c;
  namespace fs = std::filesystem;
  const fs::path out = fs::temp_directory_path() / "mflq_acceptance_c10";
  fs::remove_all(out);
  std::ostringstream so, se;
  const auto t0 = Clock::now();
  const int code = cli::run({"turnpike", std::string(MFLQ_DATA_DIR) + "/sinusoidal_n4m2.json",
                             "--T", "20", "--out", out.string()},
                            so, se);
  const double elapsed = seconds_since(t0);
  const bool written = fs::exists(out / "turnpike_T20.csv") && fs::exists(out / "summary_T20.txt");
  const std::string summary = so.str();
  const auto verdict = summary.find("overall ");
  c.note(fmt::format("runtime={}s exit={} report {}", g(elapsed), code,
                     verdict == std::string::npos ? "missing"
                                                  : summary.substr(verdict, summary.find('\n', verdict) - verdict)));
  if (!se.str().empty()) c.note("stderr: " + se.str());
  c.require(elapsed < 60.0, "runtime");
  c.require(code == 0 || code == 1, "run completed with a verdict");
  c.require(written, "artifacts written");
  return c.outcome();
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"scalar periodic Riccati oracle", criterion1},
      {"Riccati turnpike rate", criterion2},
      {"Pi and offset turnpike", criterion3},
      {"structural invariants on 20 random problems", criterion4},
      {"mean-field degeneration", criterion5},
      {"trajectory turnpike", criterion6},
      {"Wasserstein coupling bound", criterion7},
      {"optimality", criterion8},
      {"Monte Carlo cross-check", criterion9},
      {"end-to-end runtime (n=4, m=2)", criterion10},
  };
  int only = 0;
  for (int i = 1; i < argc; ++i) {
    if (std::string(argv[i]) == "--criterion" && i + 1 < argc) only = std::atoi(argv[++i]);
  }
  if (only < 0 || only > static_cast<int>(criteria.size())) {
    std::cerr << "criterion must be in 1.." << criteria.size() << '\n';
    return 2;
  }
  bool all = true;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (only != 0 && static_cast<int>(i) + 1 != only) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << fmt::format("criterion {:>2} {} : {} ({})", i + 1, o.pass ? "PASS" : "FAIL",
                             criteria[i].first, o.detail)
              << std::endl;
  }
  return all ? 0 : 1;
}
