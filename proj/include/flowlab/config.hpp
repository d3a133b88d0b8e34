#pragma once

#include "flowlab/assumptions.hpp"
#include "flowlab/builtins.hpp"
#include "flowlab/estimators.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace flowlab {

inline constexpr const char* kConfigSchema = "flowlab.experiment/1";

/// Malformed or invalid configuration; maps to exit status 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"check", "simulate", "gradient", "converge", "ibp", "krylov", "moments"};
  return names;
}

namespace detail {

using json = nlohmann::json;

/// Reads typed fields from one JSON object, writes defaults back so the
/// echoed config is fully materialised, and rejects keys never read.
class BlockReader {
 public:
  BlockReader(json& parent, const std::string& key, std::string path) : path_(std::move(path)) {
    if (!parent.contains(key)) parent[key] = json::object();
    obj_ = &parent[key];
    if (!obj_->is_object()) throw ConfigError(path_ + ": expected an object");
  }

  double number(const std::string& key, double fallback) {
    json& v = slot(key, fallback);
    if (!v.is_number()) throw ConfigError(where(key) + ": expected a number");
    return v.get<double>();
  }

  double positive(const std::string& key, double fallback) {
    const double v = number(key, fallback);
    if (!(v > 0.0)) throw ConfigError(where(key) + ": must be positive");
    return v;
  }

  std::optional<double> optional_number(const std::string& key) {
    seen_.insert(key);
    if (!obj_->contains(key) || (*obj_)[key].is_null()) {
      (*obj_)[key] = nullptr;
      return std::nullopt;
    }
    if (!(*obj_)[key].is_number()) throw ConfigError(where(key) + ": expected a number or null");
    return (*obj_)[key].get<double>();
  }

  std::uint64_t count(const std::string& key, std::uint64_t fallback, std::uint64_t min = 0) {
    json& v = slot(key, fallback);
    std::uint64_t out = 0;
    if (v.is_number_unsigned()) {
      out = v.get<std::uint64_t>();
    } else if (v.is_number_integer() && v.get<std::int64_t>() >= 0) {
      out = static_cast<std::uint64_t>(v.get<std::int64_t>());
    } else if (v.is_number_float()) {
      const double d = v.get<double>();
      if (!(d >= 0.0 && d < 1.8e19 && std::floor(d) == d)) throw ConfigError(where(key) + ": expected a whole number");
      out = static_cast<std::uint64_t>(d);
      v = out;  // canonical integer form
    } else {
      throw ConfigError(where(key) + ": expected a non-negative integer");
    }
    if (out < min) throw ConfigError(where(key) + ": must be >= " + std::to_string(min));
    return out;
  }

  std::string text(const std::string& key, const std::string& fallback, const std::vector<std::string>& allowed = {}) {
    json& v = slot(key, fallback);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    std::string s = v.get<std::string>();
    if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
      std::string list;
      for (const auto& a : allowed) list += (list.empty() ? "" : ", ") + a;
      throw ConfigError(where(key) + ": '" + s + "' not one of " + list);
    }
    return s;
  }

  std::vector<double> numbers(const std::string& key, const std::vector<double>& fallback) {
    json& v = slot(key, fallback);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of numbers");
    std::vector<double> out;
    for (const auto& e : v) {
      if (!e.is_number()) throw ConfigError(where(key) + ": expected an array of numbers");
      out.push_back(e.get<double>());
    }
    return out;
  }

  Vec vector(const std::string& key, const Vec& fallback) {
    const auto xs = numbers(key, std::vector<double>(fallback.data(), fallback.data() + fallback.size()));
    if (static_cast<Eigen::Index>(xs.size()) != fallback.size())
      throw ConfigError(where(key) + ": expected " + std::to_string(fallback.size()) + " components");
    Vec out(fallback.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out(i) = xs[i];
    if (!out.allFinite()) throw ConfigError(where(key) + ": components must be finite");
    return out;
  }

  std::vector<Vec> vectors(const std::string& key, int d) {
    seen_.insert(key);
    if (!obj_->contains(key)) (*obj_)[key] = json::array();
    const json& v = (*obj_)[key];
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of points");
    std::vector<Vec> out;
    for (const auto& p : v) {
      if (!p.is_array() || static_cast<int>(p.size()) != d) throw ConfigError(where(key) + ": points need d components");
      Vec x(d);
      for (int i = 0; i < d; ++i) {
        if (!p[i].is_number()) throw ConfigError(where(key) + ": expected numbers");
        x(i) = p[i].get<double>();
      }
      out.push_back(x);
    }
    return out;
  }

  json& raw(const std::string& key) {
    seen_.insert(key);
    return (*obj_)[key];
  }
  bool has(const std::string& key) const { return obj_->contains(key); }

  void finish() const {
    for (const auto& [k, _] : obj_->items())
      if (!seen_.count(k)) throw ConfigError("unknown key '" + where(k) + "'");
  }

 private:
  template <class T>
  json& slot(const std::string& key, const T& fallback) {
    seen_.insert(key);
    if (!obj_->contains(key)) (*obj_)[key] = fallback;
    return (*obj_)[key];
  }
  std::string where(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  json* obj_ = nullptr;
  std::string path_;
  std::set<std::string> seen_;
};

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace detail

struct CheckSettings {
  AssumptionCheckSpec spec;
  double theta_lambda = 1.0;
  ThetaOptions theta;
  std::vector<double> kp_orders;
  std::vector<Vec> kp_points;
};

struct SimulateSettings {
  Vec x0, v0;
  std::uint64_t path_index = 0;
};

struct GradientSettings {
  Vec x, v;
  double t = 1.0;
  std::string payoff = "identity";
  double payoff_constant = 1.0;
  std::string method = "bel";
  double delta = 1e-3;
};

struct ConvergeSettings {
  std::vector<double> eps;
  Vec x, v;
  double T = 0.1;
  std::optional<double> eps_ceiling;
  BallQuadratureSpec quadrature;
};

struct IbpSettings {
  double t = 0.1;
  IbpOptions options;
};

struct KrylovSettings {
  Vec x;
  double T = 1.0;
  KrylovOptions options;
};

struct MomentsSettings {
  Vec x, v;
  double p = 2.0;
  double t = 0.1;
  double lambda = 1.0;
  double T = 0.5;
  int checkpoints = 10;
  ThetaOptions theta;
};

struct ExperimentConfig {
  std::string command;
  nlohmann::json resolved;
  std::string system_name;
  ParamMap params;
  CoefficientSystem system;
  SimulationOptions sim;
  std::optional<std::string> out_dir;
  std::size_t stride = 1;
  std::string hash;  // 16 hex digits over the canonical config minus output and worker count

  CheckSettings check;
  SimulateSettings simulate;
  GradientSettings gradient;
  ConvergeSettings converge;
  IbpSettings ibp;
  KrylovSettings krylov;
  MomentsSettings moments;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> out_dir;
};

/// Parses JSON text, rejecting duplicate keys, with line/column in errors.
inline nlohmann::json parse_json_text(const std::string& text) {
  using json = nlohmann::json;
  std::vector<std::set<std::string>> keys;
  std::string duplicate;
  json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
    if (event == json::parse_event_t::object_start) {
      keys.emplace_back();
    } else if (event == json::parse_event_t::object_end) {
      if (!keys.empty()) keys.pop_back();
    } else if (event == json::parse_event_t::key && !keys.empty()) {
      const auto k = parsed.get<std::string>();
      if (!keys.back().insert(k).second && duplicate.empty()) duplicate = k;
    }
    return true;
  };
  json doc;
  try {
    doc = json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("parse error: ") + e.what());
  }
  if (!duplicate.empty()) throw ConfigError("parse error: duplicate key '" + duplicate + "'");
  if (!doc.is_object()) throw ConfigError("parse error: top level must be an object");
  return doc;
}

namespace detail {

inline void read_theta(BlockReader& b, ThetaOptions& theta, const std::string& prefix) {
  theta.lo = b.number(prefix + "lo", -50.0);
  theta.hi = b.number(prefix + "hi", 50.0);
  theta.points_per_axis = static_cast<int>(b.count(prefix + "points", 0));
  if (!(theta.hi > theta.lo)) throw ConfigError(prefix + "hi must exceed " + prefix + "lo");
}

inline void read_command(ExperimentConfig& cfg, json& doc, const std::string& name) {
  const int d = cfg.system.dim();
  BlockReader b(doc, name, name);
  const Vec zero = Vec::Zero(d);
  const Vec e1 = unit_vec(d, 0);
  const double horizon = cfg.sim.integrator.T;
  if (name == "check") {
    auto& s = cfg.check;
    s.spec.r_lo = b.positive("r_lo", s.spec.r_lo);
    s.spec.r_hi = b.positive("r_hi", s.spec.r_hi);
    s.spec.shells = static_cast<int>(b.count("shells", s.spec.shells, 1));
    s.spec.directions = static_cast<int>(b.count("directions", s.spec.directions, 1));
    s.spec.p_list = b.numbers("p_list", s.spec.p_list);
    s.spec.c3_radius = b.positive("c3_radius", s.spec.c3_radius);
    s.spec.c3_inner = b.positive("c3_inner", s.spec.c3_inner);
    s.spec.c3_budget_log10 = b.number("c3_budget_log10", s.spec.c3_budget_log10);
    s.theta_lambda = b.positive("theta_lambda", s.theta_lambda);
    read_theta(b, s.theta, "theta_");
    s.kp_orders = b.numbers("kp_orders", {1.0, 2.0, 4.0});
    s.kp_points = b.vectors("kp_points", d);
    if (!(s.spec.r_hi > s.spec.r_lo)) throw ConfigError("check.r_hi must exceed check.r_lo");
    for (double p : s.spec.p_list)
      if (!(p > 1.0)) throw ConfigError("check.p_list: orders must exceed 1");
  } else if (name == "simulate") {
    auto& s = cfg.simulate;
    s.x0 = b.vector("x0", zero);
    s.v0 = b.vector("v0", e1);
    s.path_index = b.count("path_index", 0);
  } else if (name == "gradient") {
    auto& s = cfg.gradient;
    s.x = b.vector("x", zero);
    s.v = b.vector("v", e1);
    s.t = b.positive("t", horizon);
    s.payoff = b.text("payoff", s.payoff, {"identity", "sine", "gaussian", "constant"});
    s.payoff_constant = b.number("payoff_constant", s.payoff_constant);
    s.method = b.text("method", s.method, {"bel", "fd", "both"});
    s.delta = b.positive("delta", s.delta);
  } else if (name == "converge") {
    auto& s = cfg.converge;
    s.eps = b.numbers("eps", {0.2, 0.1, 0.05, 0.025});
    s.x = b.vector("x", zero);
    s.v = b.vector("v", e1);
    s.T = b.positive("T", 0.1);
    s.eps_ceiling = b.optional_number("eps_ceiling");
    s.quadrature.radial = static_cast<int>(b.count("radial_nodes", 0));
    s.quadrature.angular = static_cast<int>(b.count("angular_nodes", 0));
    if (s.eps.size() < 2) throw ConfigError("converge.eps: at least two values");
    for (std::size_t i = 0; i < s.eps.size(); ++i)
      if (!(s.eps[i] > 0.0) || (i > 0 && !(s.eps[i] < s.eps[i - 1])))
        throw ConfigError("converge.eps: values must be positive and strictly decreasing");
    if (d > 3) throw ConfigError("converge: mollification supports d <= 3");
    const double ceiling = s.eps_ceiling.value_or(select_lambda0(cfg.system.constants(), d).eps0);
    if (!(s.eps.front() < ceiling))
      throw ConfigError("converge.eps: values must lie below " + std::to_string(ceiling) +
                        " (the family's eps0 unless converge.eps_ceiling is set)");
  } else if (name == "ibp") {
    auto& s = cfg.ibp;
    s.t = b.positive("t", 0.1);
    s.options.lo = b.number("lo", s.options.lo);
    s.options.hi = b.number("hi", s.options.hi);
    s.options.points_per_axis = static_cast<int>(b.count("points_per_axis", s.options.points_per_axis, 3));
    s.options.coordinate = static_cast<int>(b.count("coordinate", 0));
    s.options.n_omega = b.count("n_omega", s.options.n_omega, 1);
    s.options.substeps = b.count("substeps", s.options.substeps, 1);
    s.options.radius_fraction = b.positive("radius_fraction", s.options.radius_fraction);
    if (s.options.coordinate >= d) throw ConfigError("ibp.coordinate: must be < d");
    if (!(s.options.hi > s.options.lo)) throw ConfigError("ibp.hi must exceed ibp.lo");
    if (s.options.radius_fraction > 1.0) throw ConfigError("ibp.radius_fraction: must be <= 1");
  } else if (name == "krylov") {
    auto& s = cfg.krylov;
    s.x = b.vector("x", zero);
    s.T = b.positive("T", horizon);
    s.options.R = b.positive("R", s.options.R);
    s.options.f_value = b.number("f_value", s.options.f_value);
    s.options.q = b.number("q", 2.0 * (d + 1));
    s.options.C_d = b.positive("C_d", s.options.C_d);
    if (s.options.f_value < 0.0) throw ConfigError("krylov.f_value: must be non-negative");
    if (!(s.options.q > d + 1.0)) throw ConfigError("krylov.q: must exceed d+1");
  } else if (name == "moments") {
    auto& s = cfg.moments;
    s.x = b.vector("x", zero);
    s.v = b.vector("v", e1);
    s.p = b.positive("p", s.p);
    s.t = b.positive("t", s.t);
    s.lambda = b.positive("lambda", s.lambda);
    s.T = b.positive("T", s.T);
    s.checkpoints = static_cast<int>(b.count("checkpoints", s.checkpoints, 1));
    read_theta(b, s.theta, "theta_");
  }
  b.finish();
}

}  // namespace detail

/// Validates a parsed document, fills every default and computes the hash.
inline ExperimentConfig resolve_config(const std::string& command, nlohmann::json doc, const Overrides& ov = {}) {
  using detail::BlockReader;
  const auto& cmds = command_names();
  if (std::find(cmds.begin(), cmds.end(), command) == cmds.end())
    throw ConfigError("unknown command '" + command + "'");
  ExperimentConfig cfg;
  cfg.command = command;

  if (!doc.contains("schema")) doc["schema"] = kConfigSchema;
  if (!doc["schema"].is_string() || doc["schema"].get<std::string>() != kConfigSchema)
    throw ConfigError(std::string("schema: expected \"") + kConfigSchema + "\"");

  {
    BlockReader b(doc, "system", "system");
    cfg.system_name = b.text("name", "");
    if (cfg.system_name.empty()) throw ConfigError("system.name: required");
    auto& params = b.raw("params");
    if (params.is_null()) params = nlohmann::json::object();
    if (!params.is_object()) throw ConfigError("system.params: expected an object");
    for (const auto& [k, v] : params.items()) {
      if (!v.is_number()) throw ConfigError("system.params." + k + ": expected a number");
      cfg.params[k] = v.get<double>();
    }
    b.finish();
    try {
      cfg.system = builtin(cfg.system_name, cfg.params);
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    } catch (const RangeError& e) {
      throw ConfigError(e.what());
    }
  }
  {
    BlockReader b(doc, "integrator", "integrator");
    auto& ic = cfg.sim.integrator;
    ic.h = b.positive("h", 1e-3);
    ic.T = b.positive("T", 1.0);
    ic.guard_radius = b.positive("guard_radius", 1e6);
    ic.r_min = b.positive("r_min", 1e-6);
    b.text("scheme", "euler_maruyama", {"euler_maruyama"});
    b.finish();
    try {
      ic.validate();
    } catch (const ParameterError& e) {
      throw ConfigError(e.what());
    }
  }
  {
    BlockReader b(doc, "mc", "mc");
    if (ov.seed) doc["mc"]["master_seed"] = *ov.seed;
    if (ov.workers) doc["mc"]["workers"] = *ov.workers;
    cfg.sim.n_paths = b.count("n_paths", 100000, 1);
    cfg.sim.seed = b.count("master_seed", 0);
    cfg.sim.workers = static_cast<int>(b.count("workers", 1, 1));
    cfg.sim.failure_tolerance = b.number("failure_tolerance", 1e-3);
    b.finish();
  }
  {
    BlockReader b(doc, "output", "output");
    if (ov.out_dir) doc["output"]["directory"] = *ov.out_dir;
    auto& dir = b.raw("directory");
    if (dir.is_string()) {
      cfg.out_dir = dir.get<std::string>();
    } else if (!dir.is_null()) {
      throw ConfigError("output.directory: expected a string");
    } else {
      dir = nullptr;
    }
    cfg.stride = b.count("stride", 1, 1);
    b.finish();
  }
  for (const auto& [key, _] : doc.items()) {
    if (key == "schema" || key == "system" || key == "integrator" || key == "mc" || key == "output") continue;
    if (std::find(cmds.begin(), cmds.end(), key) == cmds.end()) throw ConfigError("unknown key '" + key + "'");
  }
  try {
    for (const auto& name : cmds)
      if (name == command || doc.contains(name)) detail::read_command(cfg, doc, name);
  } catch (const ParameterError& e) {
    throw ConfigError(e.what());
  }

  nlohmann::json canonical = doc;
  canonical.erase("output");
  canonical["mc"].erase("workers");
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(detail::fnv1a(canonical.dump())));
  cfg.hash = buf;
  cfg.resolved = std::move(doc);
  return cfg;
}

inline ExperimentConfig parse_config(const std::string& command, const std::string& path, const Overrides& ov = {}) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return resolve_config(command, parse_json_text(ss.str()), ov);
}

}  // namespace flowlab
