#include "mflq/report_io.hpp"

#include <fstream>
#include <stdexcept>

#include <fmt/format.h>
#include <json.hpp>

namespace mflq {

std::string format_number(double v) { return fmt::format("{:.17g}", v); }

namespace {

// Column names for the entries of a matrix-valued series, e.g. P_01.
std::vector<std::string> entry_names(const std::string& base, const Mat& like) {
  std::vector<std::string> out;
  for (Index i = 0; i < like.rows(); ++i) {
    for (Index j = 0; j < like.cols(); ++j) {
      out.push_back(like.cols() == 1 ? fmt::format("{}_{}", base, i)
                                     : fmt::format("{}_{}{}", base, i, j));
    }
  }
  return out;
}

void append_entries(std::string& line, const Mat& m) {
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) line += "," + format_number(m(i, j));
}

struct Series {
  std::string name;
  const Trajectory* traj;
};

void write_series_csv(std::ostream& os, const std::vector<Series>& series) {
  std::string header = "t";
  for (const auto& s : series) {
    for (const auto& n : entry_names(s.name, s.traj->front())) header += "," + n;
  }
  os << header << '\n';
  const Trajectory& first = *series.front().traj;
  for (std::size_t j = 0; j < first.size(); ++j) {
    std::string line = format_number(first.time(j));
    for (const auto& s : series) append_entries(line, s.traj->node(j));
    os << line << '\n';
  }
}

nlohmann::json fit_json(const std::optional<DecayFit>& f) {
  if (!f) return nullptr;
  return {{"K", f->K},
          {"lambda", f->lambda},
          {"r_squared", f->r_squared},
          {"window", {f->window.first, f->window.second}}};
}

}  // namespace

void write_turnpike_csv(std::ostream& os, const GapCurves& c) {
  os << kTurnpikeHeader << '\n';
  for (std::size_t j = 0; j < c.t.size(); ++j) {
    os << format_number(c.t[j]);
    for (const auto* col : {&c.gap_P, &c.gap_Pi, &c.gap_Theta, &c.gap_Theta_hat, &c.gap_varphi,
                            &c.gap_phi, &c.gap_state, &c.gap_control, &c.w2_state}) {
      os << ',' << format_number((*col)[j]);
    }
    os << '\n';
  }
}

void write_turnpike_summary(std::ostream& os, const TurnpikeReport& rep) {
  os << "horizon T = " << format_number(rep.T) << " (" << rep.steps << " steps)\n";
  for (const auto& f : rep.fits) {
    if (f.fit) {
      os << fmt::format("{} K={} lambda={} r2={} {}", f.name, format_number(f.fit->K),
                        format_number(f.fit->lambda), format_number(f.fit->r_squared),
                        to_string(f.verdict));
    } else {
      os << fmt::format("{} K=- lambda=- r2=- {}", f.name, to_string(f.verdict));
    }
    if (f.two_sided) {
      for (const auto& [side, b] : {std::pair{"left", &f.left}, std::pair{"right", &f.right}}) {
        if (*b) {
          os << fmt::format(" {}:lambda={},r2={}", side, format_number((*b)->lambda),
                            format_number((*b)->r_squared));
        }
      }
    }
    if (!f.note.empty()) os << " (" << f.note << ")";
    os << '\n';
  }
  os << "gap_state(0) identity error " << format_number(rep.gap_state0_identity) << '\n';
  os << "middle-third ratio " << format_number(rep.middle_third_ratio) << '\n';
  os << "max w2^2 - gap_state " << format_number(rep.coupling_violation) << '\n';
  os << "overall " << (rep.all_pass() ? "pass" : "fail") << '\n';
}

void write_turnpike_json(std::ostream& os, const TurnpikeReport& rep) {
  nlohmann::json j;
  j["T"] = rep.T;
  j["steps"] = rep.steps;
  nlohmann::json fits = nlohmann::json::array();
  for (const auto& f : rep.fits) {
    fits.push_back({{"name", f.name},
                    {"two_sided", f.two_sided},
                    {"fit", fit_json(f.fit)},
                    {"left", fit_json(f.left)},
                    {"right", fit_json(f.right)},
                    {"verdict", to_string(f.verdict)},
                    {"note", f.note}});
  }
  j["fits"] = std::move(fits);
  j["gap_state0_identity"] = rep.gap_state0_identity;
  j["middle_third_ratio"] = rep.middle_third_ratio;
  j["coupling_violation"] = rep.coupling_violation;
  j["pass"] = rep.all_pass();
  os << j.dump(2) << '\n';
}

void write_finite_horizon_csv(std::ostream& os, const FiniteHorizonSolution& fin) {
  write_series_csv(os, {{"P", &fin.P},
                        {"Pi", &fin.Pi},
                        {"Theta", &fin.Theta},
                        {"Theta_hat", &fin.Theta_hat},
                        {"varphi", &fin.varphi},
                        {"phi", &fin.phi}});
}

void write_periodic_csv(std::ostream& os, const PeriodicLQSolution& sol) {
  // Gains live on the periodic grid; give them trajectory form for output.
  const int N = sol.riccati.P.grid.steps();
  auto as_traj = [&](const GridFunction& g) {
    Trajectory t{0.0, g.h(), {}};
    for (long k = 0; k <= 2L * N; ++k) t.half.push_back(g.half(k));
    return t;
  };
  const Trajectory th = as_traj(sol.riccati.P.gain);
  const Trajectory thh = as_traj(sol.riccati.Pi.gain);
  write_series_csv(os, {{"P", &sol.riccati.P.traj},
                        {"Pi", &sol.riccati.Pi.traj},
                        {"Theta", &th},
                        {"Theta_hat", &thh},
                        {"eta", &sol.law.eta},
                        {"v_star", &sol.law.v_star},
                        {"mu_star", &sol.law.mu_star},
                        {"Sigma_star", &sol.law.Sigma_star}});
}

void write_simulation_csv(std::ostream& os, const SampledMoments& mc, const Trajectory& ode_mean,
                          const CrossValidationReport& cv) {
  const Index n = mc.mean.front().size();
  std::string header = "t";
  for (Index i = 0; i < n; ++i) header += fmt::format(",mc_mean_{0},ode_mean_{0}", i);
  for (Index i = 0; i < n; ++i)
    for (Index j = 0; j < n; ++j) header += fmt::format(",mc_second_{}{}", i, j);
  header += ",z_max";
  os << header << '\n';
  for (std::size_t j = 0; j < mc.t.size(); ++j) {
    std::string line = format_number(mc.t[j]);
    for (Index i = 0; i < n; ++i) {
      line += "," + format_number(mc.mean[j](i)) + "," + format_number(ode_mean.node(j)(i, 0));
    }
    append_entries(line, mc.second[j]);
    line += "," + format_number(cv.z_max[j]);
    os << line << '\n';
  }
}

void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << contents;
  if (!out) throw std::runtime_error(fmt::format("failed writing '{}'", path));
}

}  // namespace mflq
