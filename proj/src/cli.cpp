#include "mflq/cli.hpp"

#include <cmath>
#include <filesystem>
#include <future>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "mflq/error.hpp"
#include "mflq/numerics.hpp"
#include "mflq/periodic_lq.hpp"
#include "mflq/problem_io.hpp"
#include "mflq/report_io.hpp"
#include "mflq/stability.hpp"
#include "mflq/turnpike.hpp"

namespace mflq::cli {

namespace {

namespace fs = std::filesystem;

std::string out_path(const RunConfig& cfg, const std::string& name) {
  return (fs::path(cfg.output_dir) / name).string();
}

template <class F>
std::string render(F&& f) {
  std::ostringstream os;
  f(os);
  return os.str();
}

Vec initial_state(const RunConfig& cfg, int n) {
  if (cfg.x.empty()) return Vec::Ones(n);
  if (static_cast<int>(cfg.x.size()) != n) {
    throw Error(ErrorKind::kInput,
                fmt::format("--x has {} entries but the state dimension is {}", cfg.x.size(), n));
  }
  return Eigen::Map<const Vec>(cfg.x.data(), n);
}

std::string margin_text(double v) {
  return std::isnan(v) ? std::string("undefined (singular control weight)") : format_number(v);
}

int cmd_validate(const ProblemData& p, std::ostream& out) {
  const ValidationReport rep = validate_assumptions(p);
  out << "boundedness: coefficients bounded: " << (rep.a1_bounded ? "yes (grid representation)" : "no")
      << '\n';
  out << "definiteness: delta = min lambda_min(R) = " << format_number(rep.delta_R) << '\n';
  out << "definiteness: delta_hat = min lambda_min(R_hat) = " << format_number(rep.delta_R_hat) << '\n';
  out << "definiteness: min lambda_min(Q - S^T R^-1 S) = " << margin_text(rep.margin_M) << '\n';
  out << "definiteness: min lambda_min(Q_hat - S_hat^T R_hat^-1 S_hat) = " << margin_text(rep.margin_M_hat)
      << '\n';
  out << "stabilizability: stabilizability and detectability: run the 'stability' command\n";
  for (const auto& f : rep.failures) out << "FAIL " << f << '\n';
  out << (rep.ok() ? "pass" : "fail") << '\n';
  return rep.ok() ? kExitOk : kExitFailure;
}

int cmd_stability(const ProblemData& p, const RunConfig& cfg, std::ostream& out) {
  const MeanFieldSystem sys = make_system(p);
  const StabilityVerdict open = is_ms_stable(sys.base.A, sys.base.C);
  out << fmt::format("open loop (A, C): spectral radius {} ({})\n",
                     format_number(open.spectral_radius), open.stable ? "stable" : "unstable");
  const auto [seed, label] = find_initial_stabilizer(sys.base);
  out << "stabilizing seed for [A, C; B, D]: " << label << '\n';

  const PeriodicRiccatiSolution sol = solve_periodic(sys, cfg.periodic);
  bool ok = true;
  for (const auto* c : {&sol.P, &sol.Pi}) {
    const char* name = c == &sol.P ? "P" : "Pi";
    const auto& d = c->detectability;
    out << fmt::format("{}: detectability {} via {} ({})\n", name, to_string(d.detectable),
                       to_string(d.method), d.evidence);
    out << fmt::format("{}: closed-loop spectral radius {}, residual {}\n", name,
                       format_number(c->closed_loop_radius), format_number(c->residual));
    ok = ok && d.detectable != Detectability::kNotDetectable && c->closed_loop_radius < 1.0;
  }
  out << (ok ? "pass" : "fail") << '\n';
  return ok ? kExitOk : kExitFailure;
}

int cmd_riccati(const ProblemData& p, const RunConfig& cfg, std::ostream& out) {
  const MeanFieldSystem sys = make_system(p);
  int status = kExitOk;
  for (int k : cfg.horizon_periods) {
    const FiniteHorizonSolution fin = solve_finite_horizon(sys, k * sys.tau);
    const FiniteResiduals res = finite_horizon_residuals(sys, fin);
    write_file(out_path(cfg, fmt::format("riccati_T{}.csv", k)),
               render([&](std::ostream& os) { write_finite_horizon_csv(os, fin); }));
    out << fmt::format("T={} residuals P={} Pi={} varphi={}\n", format_number(fin.T),
                       format_number(res.P), format_number(res.Pi), format_number(res.varphi));
    if (!(std::max({res.P, res.Pi, res.varphi}) < 1e-6)) status = kExitFailure;
  }
  return status;
}

std::string periodic_summary(const PeriodicLQSolution& sol) {
  std::ostringstream os;
  for (const auto* c : {&sol.riccati.P, &sol.riccati.Pi}) {
    const char* name = c == &sol.riccati.P ? "P" : "Pi";
    os << fmt::format("{} method={} iterations={} residual={} closed_loop_radius={}", name,
                      c->method, c->iterations, format_number(c->residual),
                      format_number(c->closed_loop_radius));
    if (c->kleinman && c->extension) {
      os << " kleinman_vs_extension=" << format_number(c->method_agreement);
    }
    if (!c->diagnostics.empty()) os << " diagnostics=\"" << c->diagnostics << '"';
    os << '\n';
  }
  os << "refinement_shift " << format_number(sol.riccati.refinement_shift) << '\n';
  os << "eta_condition " << format_number(sol.eta_info.condition) << '\n';
  os << "mean_condition " << format_number(sol.moments_info.mean.condition) << '\n';
  os << "covariance_sweeps " << sol.moments_info.sweeps << " contraction_factor "
     << format_number(sol.moments_info.contraction_factor) << '\n';
  os << "optimality_residual " << format_number(sol.optimality_residual) << '\n';
  os << "periodic_cost " << format_number(sol.cost) << '\n';
  return os.str();
}

int cmd_periodic(const ProblemData& p, const RunConfig& cfg, std::ostream& out) {
  const MeanFieldSystem sys = make_system(p);
  const PeriodicLQSolution sol = solve_periodic_lq(sys, cfg.periodic);
  write_file(out_path(cfg, "periodic.csv"),
             render([&](std::ostream& os) { write_periodic_csv(os, sol); }));
  const std::string summary = periodic_summary(sol);
  write_file(out_path(cfg, "periodic_summary.txt"), summary);
  out << summary;
  const bool ok = sol.riccati.P.residual < 1e-7 && sol.riccati.Pi.residual < 1e-7 &&
                  sol.optimality_residual < 1e-7;
  return ok ? kExitOk : kExitFailure;
}

int cmd_turnpike(const ProblemData& p, const RunConfig& cfg, std::ostream& out) {
  const MeanFieldSystem sys = make_system(p);
  const Vec x = initial_state(cfg, sys.n);
  const PeriodicLQSolution per = solve_periodic_lq(sys, cfg.periodic);

  std::vector<std::future<TurnpikeReport>> jobs;
  for (int k : cfg.horizon_periods) {
    jobs.push_back(std::async(std::launch::async,
                              [&, k] { return run_turnpike(sys, per, k * sys.tau, x); }));
  }
  bool ok = true;
  for (std::size_t i = 0; i < jobs.size(); ++i) {
    const int k = cfg.horizon_periods[i];
    const TurnpikeReport rep = jobs[i].get();
    write_file(out_path(cfg, fmt::format("turnpike_T{}.csv", k)),
               render([&](std::ostream& os) { write_turnpike_csv(os, rep.curves); }));
    const std::string summary = render([&](std::ostream& os) { write_turnpike_summary(os, rep); });
    write_file(out_path(cfg, fmt::format("summary_T{}.txt", k)), summary);
    write_file(out_path(cfg, fmt::format("summary_T{}.json", k)),
               render([&](std::ostream& os) { write_turnpike_json(os, rep); }));
    out << summary;
    ok = ok && rep.all_pass();
  }
  return ok ? kExitOk : kExitFailure;
}

int cmd_simulate(const ProblemData& p, const RunConfig& cfg, std::ostream& out) {
  const MeanFieldSystem sys = make_system(p);
  const Vec x = initial_state(cfg, sys.n);
  const int periods = cfg.horizon_periods.front();
  const FiniteHorizonSolution fin = solve_finite_horizon(sys, periods * sys.tau);
  const Feedback fb{fin.Theta, fin.Theta_hat, fin.phi};
  const SampledMoments mc = simulate_closed_loop(sys, fb, x, cfg.particles, cfg.seed, cfg.substeps);
  const ClosedLoopMoments ode = closed_loop_moments(sys, fb, x);
  const CrossValidationReport cv = cross_validate(mc, ode.mean);
  write_file(out_path(cfg, "simulate.csv"),
             render([&](std::ostream& os) { write_simulation_csv(os, mc, ode.mean, cv); }));
  out << fmt::format("particles={} seed={} T={} max|z|={} fraction(|z|>3)={} {}\n", cfg.particles,
                     cfg.seed, format_number(fin.T), format_number(cv.max_abs_z),
                     format_number(cv.fraction_over_3), cv.pass ? "pass" : "fail");
  return cv.pass ? kExitOk : kExitFailure;
}

void add_common(CLI::App* sub, RunConfig& cfg, std::string& method, std::string& route) {
  sub->add_option("problem", cfg.problem_path, "problem description (JSON)")
      ->required()
      ->check(CLI::ExistingFile);
  sub->add_option("--out", cfg.output_dir, "output directory");
  sub->add_option("--method", method, "periodic solver: kleinman | horizon-extension | both")
      ->check(CLI::IsMember({"kleinman", "horizon-extension", "both"}));
  sub->add_option("--route", route, "Kleinman route: shifted | direct")
      ->check(CLI::IsMember({"shifted", "direct"}));
  sub->add_option("--kleinman-tol", cfg.periodic.kleinman.tol, "Kleinman stopping tolerance")
      ->check(CLI::PositiveNumber);
  sub->add_option("--kleinman-cap", cfg.periodic.kleinman.max_iterations, "Kleinman iteration cap")
      ->check(CLI::PositiveNumber);
  sub->add_option("--extension-tol", cfg.periodic.extension_tol, "horizon-extension tolerance")
      ->check(CLI::PositiveNumber);
  sub->add_option("--extension-cap", cfg.periodic.extension_cap, "horizon-extension period cap")
      ->check(CLI::PositiveNumber);
  sub->add_option("--x", cfg.x, "initial state, comma separated (default all ones)")
      ->delimiter(',');
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  RunConfig cfg;
  std::string method = "both", route = "shifted";
  CLI::App app{"Periodic mean-field LQ solver and turnpike verifier", "mflq"};
  app.require_subcommand(1);

  auto* validate = app.add_subcommand("validate", "check the standing assumptions");
  auto* stability = app.add_subcommand("stability", "stability and detectability verdicts");
  auto* riccati = app.add_subcommand("riccati", "finite-horizon Riccati solve");
  auto* periodic = app.add_subcommand("periodic", "periodic Riccati and mean-field LQ solution");
  auto* turnpike = app.add_subcommand("turnpike", "turnpike gaps and decay fits");
  auto* simulate = app.add_subcommand("simulate", "Monte Carlo cross-check");
  for (auto* sub : {validate, stability, riccati, periodic, turnpike, simulate}) {
    add_common(sub, cfg, method, route);
  }
  int riccati_T = 10, simulate_T = 5;
  std::vector<int> turnpike_T{10, 20};
  riccati->add_option("--T", riccati_T, "horizon in periods")->check(CLI::PositiveNumber);
  turnpike->add_option("--T", turnpike_T, "horizons in periods, comma separated")
      ->delimiter(',')
      ->check(CLI::PositiveNumber);
  simulate->add_option("--T", simulate_T, "horizon in periods")->check(CLI::PositiveNumber);
  simulate->add_option("--particles", cfg.particles, "particle count")->check(CLI::Range(2, 100000000));
  simulate->add_option("--seed", cfg.seed, "random seed");
  simulate->add_option("--substeps", cfg.substeps, "Euler sub-steps per grid step (power of two)")
      ->check(CLI::Validator(
          [](std::string& v) {
            const long s = std::stol(v);
            return s >= 1 && (s & (s - 1)) == 0 ? std::string() : "must be a power of two";
          },
          "POW2"));

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitInput;
  }

  cfg.command = app.get_subcommands().front()->get_name();
  cfg.periodic.method = method == "kleinman"            ? PeriodicMethod::kKleinman
                        : method == "horizon-extension" ? PeriodicMethod::kHorizonExtension
                                                        : PeriodicMethod::kBoth;
  cfg.periodic.route = route == "direct" ? KleinmanRoute::kDirect : KleinmanRoute::kShifted;
  if (cfg.command == "riccati") cfg.horizon_periods = {riccati_T};
  if (cfg.command == "turnpike") cfg.horizon_periods = turnpike_T;
  if (cfg.command == "simulate") cfg.horizon_periods = {simulate_T};

  // Input phase: nothing is written until the problem and options check out.
  ProblemData problem;
  try {
    problem = load_problem(cfg.problem_path);
    if (!cfg.x.empty()) initial_state(cfg, problem.n);
    const bool writes = cfg.command == "riccati" || cfg.command == "periodic" ||
                        cfg.command == "turnpike" || cfg.command == "simulate";
    if (writes) {
      std::error_code ec;
      fs::create_directories(cfg.output_dir, ec);
      if (ec || !fs::is_directory(cfg.output_dir)) {
        throw Error(ErrorKind::kInput,
                    fmt::format("output directory '{}' is not usable", cfg.output_dir));
      }
    }
  } catch (const Error& e) {
    err << "input error: " << e.what() << '\n';
    return kExitInput;
  }

  try {
    if (cfg.command == "validate") return cmd_validate(problem, out);
    if (cfg.command == "stability") return cmd_stability(problem, cfg, out);
    if (cfg.command == "riccati") return cmd_riccati(problem, cfg, out);
    if (cfg.command == "periodic") return cmd_periodic(problem, cfg, out);
    if (cfg.command == "turnpike") return cmd_turnpike(problem, cfg, out);
    return cmd_simulate(problem, cfg, out);
  } catch (const Error& e) {
    err << to_string(e.kind()) << ": " << e.what() << '\n';
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
  }
  return kExitFailure;
}

}  // namespace mflq::cli
