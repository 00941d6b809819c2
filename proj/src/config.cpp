#include "gpgrad/config.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "gpgrad/errors.hpp"
#include "gpgrad/statefile.hpp"

namespace gpgrad {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double to_double(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

long to_long(const std::string& key, const std::string& v) {
  try {
    size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw ConfigError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "on" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "off" || v == "no") return false;
  throw ConfigError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

}  // namespace

void RunConfig::validate() const {
  if (mesh.n < 2) throw ConfigError("config: mesh.n must be >= 2");
  if (!(mesh.Lx > 0.0) || !(mesh.Ly > 0.0))
    throw ConfigError("config: mesh half-widths must be positive");
  if (model.beta < 0.0) throw ConfigError("config: model.beta must be >= 0");
  if (!(model.K > 0.0)) throw ConfigError("config: model.K must be positive");
  if (!(stop.energy_tol > 0.0) || !(stop.residual_tol > 0.0) || !(stop.ref_energy_tol > 0.0))
    throw ConfigError("config: stopping tolerances must be positive");
  if (stop.max_iters < 1) throw ConfigError("config: stop.max_iters must be >= 1");
  if (!(lin.tol > 0.0) || lin.tol > 1e-6)
    throw ConfigError("config: linsolve.tol must lie in (0, 1e-6]");
  if (threads < 1) throw ConfigError("config: threads must be >= 1");
  if (policy.mode != "adaptive" && policy.mode != "fixed")
    throw ConfigError("config: policy.mode must be 'adaptive' or 'fixed'");
  if (lin.precond != "auto" && lin.precond != "jacobi" && lin.precond != "ic0" &&
      lin.precond != "direct")
    throw ConfigError("config: linsolve.precond must be auto|jacobi|ic0|direct");
  make_potential(model.potential);  // resolvable
}

void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "mesh.Lx") cfg.mesh.Lx = to_double(key, value);
  else if (key == "mesh.Ly") cfg.mesh.Ly = to_double(key, value);
  else if (key == "mesh.n") cfg.mesh.n = static_cast<int>(to_long(key, value));
  else if (key == "model.beta") cfg.model.beta = to_double(key, value);
  else if (key == "model.omega") cfg.model.omega = to_double(key, value);
  else if (key == "model.potential") cfg.model.potential = value;
  else if (key == "model.K") cfg.model.K = to_double(key, value);
  else if (key == "initial.profile") cfg.initial.profile = value;
  else if (key == "initial.state_file") cfg.initial.state_file = value;
  else if (key == "policy.mode") cfg.policy.mode = value;
  else if (key == "policy.tau") cfg.policy.tau = to_double(key, value);
  else if (key == "policy.tau_lo") cfg.policy.tau_lo = to_double(key, value);
  else if (key == "policy.tau_hi") cfg.policy.tau_hi = to_double(key, value);
  else if (key == "policy.tau_tol") cfg.policy.tau_tol = to_double(key, value);
  else if (key == "stop.energy_tol") cfg.stop.energy_tol = to_double(key, value);
  else if (key == "stop.residual_tol") cfg.stop.residual_tol = to_double(key, value);
  else if (key == "stop.ref_energy_tol") cfg.stop.ref_energy_tol = to_double(key, value);
  else if (key == "stop.max_iters") cfg.stop.max_iters = static_cast<int>(to_long(key, value));
  else if (key == "output.dir") cfg.output.dir = value;
  else if (key == "output.retain_states") cfg.output.retain_states = to_bool(key, value);
  else if (key == "output.emit_rates") cfg.output.emit_rates = to_bool(key, value);
  else if (key == "output.emit_spectral") cfg.output.emit_spectral = to_bool(key, value);
  else if (key == "output.svg") cfg.output.svg = to_bool(key, value);
  else if (key == "linsolve.tol") cfg.lin.tol = to_double(key, value);
  else if (key == "linsolve.max_iters") cfg.lin.max_iters = static_cast<int>(to_long(key, value));
  else if (key == "linsolve.precond") cfg.lin.precond = value;
  else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_long(key, value));
  else if (key == "threads") cfg.threads = static_cast<int>(to_long(key, value));
  else if (key == "strict_admissibility") cfg.strict_admissibility = to_bool(key, value);
  else throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open '" + path + "'");
  RunConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: '" + path + "' line " + std::to_string(lineno) +
                        ": expected 'section.key = value'");
    apply_config_entry(cfg, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

PotentialFunction make_potential(const std::string& spec) {
  const std::string s = trim(spec);
  if (s == "zero") return [](double, double) { return 0.0; };
  if (s.rfind("harmonic(", 0) == 0 && s.back() == ')') {
    const std::string args = s.substr(9, s.size() - 10);
    const auto comma = args.find(',');
    if (comma != std::string::npos) {
      try {
        const double ax = std::stod(trim(args.substr(0, comma)));
        const double ay = std::stod(trim(args.substr(comma + 1)));
        return [ax, ay](double x, double y) {
          return 0.5 * ((ax * x) * (ax * x) + (ay * y) * (ay * y));
        };
      } catch (const std::exception&) {
      }
    }
    throw ConfigError("config: malformed potential '" + spec + "', expected harmonic(ax,ay)");
  }
  if (s.rfind("expr:", 0) == 0)
    throw ConfigError("config: 'expr' potentials are not implemented; use harmonic(ax,ay) or zero");
  throw ConfigError("config: unknown potential '" + spec + "'");
}

ModelParams make_model(const RunConfig::ModelCfg& cfg) {
  ModelParams p;
  p.beta = cfg.beta;
  p.omega = cfg.omega;
  p.potential = make_potential(cfg.potential);
  p.trap_margin_K = cfg.K;
  return p;
}

StepPolicy make_policy(const RunConfig::PolicyCfg& cfg) {
  StepPolicy p;
  p.mode = (cfg.mode == "fixed") ? StepPolicy::Mode::fixed : StepPolicy::Mode::adaptive;
  p.tau = cfg.tau;
  p.bracket_lo = cfg.tau_lo;
  p.bracket_hi = cfg.tau_hi;
  p.tau_tol = cfg.tau_tol;
  p.validate();
  return p;
}

State make_initial(const RunConfig& cfg, const std::shared_ptr<const Mesh>& mesh) {
  if (!cfg.initial.state_file.empty()) return load_state(cfg.initial.state_file, mesh);
  const std::string& id = cfg.initial.profile;
  const double inv_sqrt_pi = 1.0 / std::sqrt(3.14159265358979323846);
  if (id == "vortex_gauss") {
    return interpolate(mesh, [inv_sqrt_pi](double x, double y) {
      const double envelope = inv_sqrt_pi * std::exp(-0.5 * (x * x + y * y));
      return std::complex<double>(x * envelope, y * envelope);
    });
  }
  if (id == "gauss") {
    return interpolate(mesh, [inv_sqrt_pi](double x, double y) {
      return std::complex<double>(inv_sqrt_pi * std::exp(-0.5 * (x * x + y * y)), 0.0);
    });
  }
  if (id == "one") {
    return interpolate(mesh, [](double, double) { return std::complex<double>(1.0, 0.0); });
  }
  throw ConfigError("config: unknown initial profile '" + id +
                    "' (builtins: vortex_gauss, gauss, one)");
}

SolverOptions make_solver_options(const RunConfig& cfg) {
  SolverOptions opts;
  opts.lin.opts.tol = cfg.lin.tol;
  opts.lin.opts.max_iters = cfg.lin.max_iters;
  opts.retain_states = cfg.output.retain_states;
  const std::string& p = cfg.lin.precond;
  if (p == "jacobi") opts.precond = SolverOptions::Precond::jacobi;
  else if (p == "ic0") opts.precond = SolverOptions::Precond::ic0;
  else if (p == "direct") opts.precond = SolverOptions::Precond::direct;
  else {
    // auto: Jacobi is fine at desk scale, a factorized reference operator
    // pays off on large meshes.
    const long dofs = 2l * (cfg.mesh.n - 1) * (cfg.mesh.n - 1);
    opts.precond = (dofs > 20000) ? SolverOptions::Precond::direct
                                  : SolverOptions::Precond::jacobi;
  }
  return opts;
}

}  // namespace gpgrad
