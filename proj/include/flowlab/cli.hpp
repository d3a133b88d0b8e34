#pragma once

#include "flowlab/config.hpp"
#include "flowlab/csv.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace flowlab {

enum ExitCode : int { kExitOk = 0, kExitFailure = 1, kExitInvalid = 2, kExitUnreliable = 3 };

struct RunResult {
  std::vector<ResultRow> rows;
  std::string trajectory_csv;  // simulate only
  std::vector<std::string> log;
  bool unreliable = false;
};

namespace detail {

class RowSink {
 public:
  RowSink(const ExperimentConfig& cfg, RunResult& out) : cfg_(cfg), out_(out) {}

  void add(const std::string& estimator, double t, double value, double se, std::size_t n, double h,
           std::vector<std::string> flags = {}) {
    flags.insert(flags.begin(), "seed=" + std::to_string(cfg_.sim.seed));
    out_.rows.push_back({estimator, cfg_.system_name, cfg_.hash, t, value, se, n, h, std::move(flags)});
  }

  void add(const std::string& estimator, const EstimateReport& r, std::vector<std::string> extra = {}) {
    auto flags = report_flags(r);
    flags.insert(flags.end(), extra.begin(), extra.end());
    add(estimator, r.t, r.value, r.std_error, r.n_paths, r.h, std::move(flags));
    if (r.unreliable) out_.unreliable = true;
    out_.log.push_back(estimator + ": paths=" + std::to_string(r.n_requested) + " failures=" +
                       std::to_string(r.n_failed) + " exits=" + std::to_string(r.n_exits) +
                       " clamped=" + std::to_string(r.n_clamped));
    for (const auto& note : r.notes) out_.log.push_back(estimator + ": " + note);
  }

  void log(const std::string& line) { out_.log.push_back(line); }

 private:
  const ExperimentConfig& cfg_;
  RunResult& out_;
};

inline std::string vec_flag(const std::string& key, const Vec& x) {
  std::string s = key + "=";
  for (Eigen::Index i = 0; i < x.size(); ++i) s += (i ? ":" : "") + format_double(x(i));
  return s;
}

inline void run_check(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.check;
  for (const auto& c : check_assumptions(cfg.system, s.spec)) {
    std::vector<std::string> flags{std::string("status=") + to_string(c.status)};
    if (c.p > 0.0) flags.push_back("p=" + format_double(c.p));
    if (c.worst_point.size()) flags.push_back(vec_flag("worst", c.worst_point));
    if (std::isfinite(c.fitted)) flags.push_back("fitted=" + format_double(c.fitted));
    if (c.skipped) flags.push_back("skipped=" + std::to_string(c.skipped));
    sink.add("check_" + c.name, 0.0, c.worst_margin, 0.0, c.samples, 0.0, flags);
    sink.log("check " + c.name + (c.p > 0.0 ? " p=" + format_double(c.p) : "") + ": " + to_string(c.status) + " (" +
             c.detail + ")");
  }
  const ThetaReport th = theta_g(cfg.system, s.theta_lambda, s.theta);
  sink.add("theta_g", 0.0, th.value, 0.0, th.grid_points, 0.0,
           {"lambda=" + format_double(s.theta_lambda), vec_flag("argmax", th.argmax),
            th.certified ? "certified" : "empirical"});
  for (const Vec& x : s.kp_points)
    for (double p : s.kp_orders) {
      const SpectralReport r = kp_max(cfg.system, x, p);
      sink.add("kp_max", 0.0, r.kp, 0.0, 1, 0.0, {"p=" + format_double(p), vec_flag("x", x)});
    }
}

inline void run_simulate(const ExperimentConfig& cfg, RowSink& sink, RunResult& out) {
  const auto& s = cfg.simulate;
  const auto& ic = cfg.sim.integrator;
  const BrownianPath path = sample_path(cfg.sim.seed, s.path_index, ic.n_steps(), ic.h, cfg.system.noise_dim());
  const Trajectory traj = integrate(cfg.system, s.x0, s.v0, path, ic, cfg.stride);
  out.trajectory_csv = render_trajectory(traj);
  std::vector<std::string> flags{"path_index=" + std::to_string(s.path_index)};
  if (traj.exploded) flags.push_back("exploded_at=" + std::to_string(*traj.exit_step));
  if (traj.clamped) flags.push_back("clamped=" + std::to_string(traj.clamped));
  const Vec& x = traj.x.back();
  const Vec& v = traj.v.back();
  for (Eigen::Index i = 0; i < x.size(); ++i)
    sink.add("simulate_x" + std::to_string(i + 1), traj.times.back(), x(i), 0.0, 1, ic.h, flags);
  for (Eigen::Index i = 0; i < v.size(); ++i)
    sink.add("simulate_v" + std::to_string(i + 1), traj.times.back(), v(i), 0.0, 1, ic.h, flags);
  sink.log("simulate: " + std::to_string(traj.times.size()) + " rows, exploded=" + (traj.exploded ? "1" : "0") +
           ", clamped=" + std::to_string(traj.clamped));
}

inline void run_gradient(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.gradient;
  const Payoff f = make_payoff(s.payoff, s.payoff_constant);
  const std::vector<std::string> extra{"payoff=" + s.payoff, vec_flag("x", s.x), vec_flag("v", s.v)};
  if (s.method == "bel" || s.method == "both")
    sink.add("bel_gradient", bel_gradient(cfg.system, s.x, s.v, f, s.t, cfg.sim), extra);
  if (s.method == "fd" || s.method == "both") {
    auto flags = extra;
    flags.push_back("delta=" + format_double(s.delta));
    sink.add("fd_gradient", fd_gradient(cfg.system, s.x, s.v, f, s.t, s.delta, cfg.sim), flags);
  }
}

inline void run_converge(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.converge;
  FamilyOptions fo;
  fo.quadrature = s.quadrature;
  fo.eps_ceiling = s.eps_ceiling;
  const MollifiedFamily family(cfg.system, fo);
  sink.log("converge: lambda0=" + format_double(family.lambda0()) + " eps0=" + format_double(family.eps0()) +
           " iota=" + format_double(family.iota()));
  const FamilyConvergence fc = family_convergence(family, s.eps, s.x, s.v, s.T, cfg.sim);
  auto emit = [&](const std::string& kind, const std::vector<GapRow>& rows) {
    for (const auto& r : rows) {
      const std::vector<std::string> extra{"eps_a=" + format_double(r.eps_a), "eps_b=" + format_double(r.eps_b),
                                           r.certified ? "certified" : "uncertified"};
      sink.add("flow_gap_" + kind, r.flow_gap, extra);
      sink.add("derivative_gap_" + kind, r.derivative_gap, extra);
    }
  };
  emit("consecutive", fc.consecutive);
  emit("to_finest", fc.to_finest);
}

inline void run_ibp(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.ibp;
  const IbpReport r = ibp_residual(cfg.system, s.t, s.options, cfg.sim);
  std::vector<std::string> flags{"grid=" + std::to_string(s.options.points_per_axis),
                                 "coordinate=" + std::to_string(s.options.coordinate),
                                 "n_omega=" + std::to_string(s.options.n_omega)};
  if (r.n_exits) flags.push_back("exits=" + std::to_string(r.n_exits));
  if (r.window_exceeded) flags.push_back("window_exceeded");
  sink.add("ibp_residual_mean", s.t, r.mean, 0.0, r.residuals.size(), cfg.sim.integrator.h, flags);
  sink.add("ibp_residual_max", s.t, r.max, 0.0, r.residuals.size(), cfg.sim.integrator.h, flags);
  sink.log("ibp: " + std::to_string(r.support_points) + " of " + std::to_string(r.grid_points) +
           " grid points in the test-function support");
}

inline void run_krylov(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.krylov;
  const KrylovReport r = krylov_check(cfg.system, s.x, s.T, s.options, cfg.sim);
  const std::vector<std::string> extra{"R=" + format_double(s.options.R), vec_flag("x", s.x)};
  sink.add("krylov_lhs", r.lhs, extra);
  sink.add("krylov_A", r.A, extra);
  sink.add("krylov_B", r.B, extra);
  auto flags = report_flags(r.lhs);
  flags.insert(flags.end(), extra.begin(), extra.end());
  sink.add("krylov_rhs_shape", s.T, r.rhs_shape, 0.0, r.lhs.n_paths, r.lhs.h, flags);
  sink.add("krylov_ratio", s.T, r.ratio, 0.0, r.lhs.n_paths, r.lhs.h, flags);
  sink.add("krylov_Q1_shape", s.T, r.Q1_shape, 0.0, 0, r.lhs.h, {"alpha=" + format_double(r.alpha)});
  sink.add("krylov_Q2_shape", s.T, r.Q2_shape, 0.0, 0, r.lhs.h, {"alpha=" + format_double(r.alpha)});
}

inline void run_moments(const ExperimentConfig& cfg, RowSink& sink) {
  const auto& s = cfg.moments;
  const MomentWindow w = moment_window(cfg.system, s.p);
  sink.add("moment_window", 0.0, w.T0, 0.0, 0, 0.0, {"p=" + format_double(s.p), "kappa=" + w.source});
  sink.add("derivative_moment", derivative_moment(cfg.system, s.x, s.v, s.p, s.t, cfg.sim),
           {"p=" + format_double(s.p)});
  const FlowMomentBound b = flow_moment_bound_check(cfg.system, s.x, s.lambda, s.T, cfg.sim, s.theta, s.checkpoints);
  sink.add("theta_g", 0.0, b.theta.value, 0.0, b.theta.grid_points, 0.0,
           {"lambda=" + format_double(s.lambda), b.theta.certified ? "certified" : "empirical"});
  for (const auto& c : b.checkpoints) {
    sink.add("flow_moment", c.lhs, {"lambda=" + format_double(s.lambda), c.pass ? "bound=pass" : "bound=fail"});
    sink.add("flow_moment_bound", c.t, c.rhs, 0.0, c.lhs.n_paths, c.lhs.h, {"lambda=" + format_double(s.lambda)});
  }
}

}  // namespace detail

/// Executes a resolved config; pure apart from the caller's IO.
inline RunResult execute(const ExperimentConfig& cfg) {
  RunResult out;
  detail::RowSink sink(cfg, out);
  const auto& c = cfg.command;
  if (c == "check") detail::run_check(cfg, sink);
  else if (c == "simulate") detail::run_simulate(cfg, sink, out);
  else if (c == "gradient") detail::run_gradient(cfg, sink);
  else if (c == "converge") detail::run_converge(cfg, sink);
  else if (c == "ibp") detail::run_ibp(cfg, sink);
  else if (c == "krylov") detail::run_krylov(cfg, sink);
  else if (c == "moments") detail::run_moments(cfg, sink);
  return out;
}

inline std::filesystem::path resolve_output_dir(const ExperimentConfig& cfg) {
  if (cfg.out_dir) return *cfg.out_dir;
  if (const char* env = std::getenv("FLOWLAB_OUT"); env && *env) return env;
  return "flowlab_out";
}

/// Full command: parse, validate, run, write artifacts. Returns the exit code.
inline int run_command(const std::string& command, const std::string& config_path, const Overrides& ov,
                       std::ostream& err = std::cerr) {
  ExperimentConfig cfg;
  try {
    cfg = parse_config(command, config_path, ov);
  } catch (const ConfigError& e) {
    err << "flowlab: " << e.what() << '\n';
    return kExitInvalid;
  }
  const auto dir = resolve_output_dir(cfg);
  try {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "config.echo.json", cfg.resolved.dump(2) + '\n');
    const auto start = std::chrono::steady_clock::now();
    RunResult res = execute(cfg);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!res.trajectory_csv.empty()) write_file_atomic(dir / "trajectory.csv", res.trajectory_csv);
    write_file_atomic(dir / "result.csv", render_csv(res.rows));
    std::ostringstream log;
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    log << "finished " << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ") << '\n'
        << "command " << command << '\n'
        << "config " << config_path << " hash " << cfg.hash << '\n'
        << "seed " << cfg.sim.seed << " workers " << cfg.sim.workers << '\n'
        << "elapsed_seconds " << format_double(seconds) << '\n';
    for (const auto& line : res.log) log << line << '\n';
    if (res.unreliable) log << "status unreliable\n";
    write_file_atomic(dir / "run.log", log.str());
    if (res.unreliable) {
      err << "flowlab: run flagged unreliable (see run.log)\n";
      return kExitUnreliable;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "flowlab: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const ParameterError& e) {
    err << "flowlab: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const RangeError& e) {
    err << "flowlab: " << e.what() << '\n';
    return kExitInvalid;
  } catch (const std::exception& e) {
    err << "flowlab: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace flowlab
