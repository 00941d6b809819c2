#pragma once

#include <cstdint>
#include <string>

#include "gpgrad/forms.hpp"
#include "gpgrad/solver.hpp"

namespace gpgrad {

/// Flat experiment configuration; every field maps to a `section.key` in the
/// config file and can be overridden from the command line.
struct RunConfig {
  struct MeshCfg {
    double Lx = 6.0;
    double Ly = 6.0;
    int n = 128;
  } mesh;

  struct ModelCfg {
    double beta = 100.0;
    double omega = 1.2;
    std::string potential = "harmonic(0.9,1.2)";
    double K = 0.01;
  } model;

  struct InitialCfg {
    std::string profile = "vortex_gauss";  // builtin id
    std::string state_file;                // overrides profile when set
  } initial;

  struct PolicyCfg {
    std::string mode = "adaptive";  // adaptive | fixed
    double tau = 1.0;
    double tau_lo = 1e-3;
    double tau_hi = 2.0 - 1e-3;
    double tau_tol = 1e-10;
  } policy;

  struct StopCfg {
    double energy_tol = 1e-13;
    double residual_tol = 1e-9;
    double ref_energy_tol = 1e-9;
    int max_iters = 50000;
  } stop;

  struct OutputCfg {
    std::string dir = "out";
    bool retain_states = false;
    bool emit_rates = false;
    bool emit_spectral = false;
    bool svg = false;
  } output;

  struct LinCfg {
    double tol = 1e-12;
    int max_iters = 25000;
    std::string precond = "auto";  // auto | jacobi | ic0 | direct
  } lin;

  std::uint64_t seed = 1234;
  int threads = 1;
  bool strict_admissibility = false;

  void validate() const;  // throws ConfigError
};

RunConfig parse_config_file(const std::string& path);
/// Applies one `section.key = value` assignment; unknown keys throw ConfigError.
void apply_config_entry(RunConfig& cfg, const std::string& key, const std::string& value);

PotentialFunction make_potential(const std::string& spec);
ModelParams make_model(const RunConfig::ModelCfg& cfg);
StepPolicy make_policy(const RunConfig::PolicyCfg& cfg);
State make_initial(const RunConfig& cfg, const std::shared_ptr<const Mesh>& mesh);
SolverOptions make_solver_options(const RunConfig& cfg);

}  // namespace gpgrad
