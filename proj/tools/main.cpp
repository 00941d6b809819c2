#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>

#include "gpgrad/config.hpp"
#include "gpgrad/report.hpp"
#include "gpgrad/spectral.hpp"
#include "gpgrad/statefile.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace fs = std::filesystem;
using namespace gpgrad;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitConvergence = 3;
constexpr int kExitInvariant = 4;

struct CommonArgs {
  std::string config_path;
  std::string out_dir;
  std::string policy_mode;
  double tau = std::numeric_limits<double>::quiet_NaN();
  int mesh_n = -1;
  int max_iters = -1;
  long seed = -1;
  int threads = -1;
  bool retain_states = false;
  bool strict_admissibility = false;
  bool svg = false;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
  cmd->add_option("--config", args.config_path, "configuration file (section.key = value)");
  cmd->add_option("--out", args.out_dir, "output directory");
  cmd->add_option("--tau", args.tau, "fixed step size (implies policy fixed)");
  cmd->add_option("--policy", args.policy_mode, "step policy: adaptive | fixed");
  cmd->add_option("--mesh-n", args.mesh_n, "cells per axis");
  cmd->add_option("--max-iters", args.max_iters, "iteration cap");
  cmd->add_option("--seed", args.seed, "seed for randomized checks");
  cmd->add_option("--threads", args.threads, "assembly/mat-vec thread cap");
  cmd->add_flag("--retain-states", args.retain_states, "keep every iterate in memory");
  cmd->add_flag("--strict-admissibility", args.strict_admissibility,
                "fail instead of warn when the trap condition is violated");
  cmd->add_flag("--svg", args.svg, "emit a line-plot SVG next to the CSV output");
}

RunConfig build_config(const CommonArgs& args) {
  RunConfig cfg;
  if (!args.config_path.empty()) cfg = parse_config_file(args.config_path);
  if (!args.out_dir.empty()) cfg.output.dir = args.out_dir;
  if (!std::isnan(args.tau)) {
    cfg.policy.tau = args.tau;
    cfg.policy.mode = "fixed";
  }
  if (!args.policy_mode.empty()) cfg.policy.mode = args.policy_mode;
  if (args.mesh_n > 0) cfg.mesh.n = args.mesh_n;
  if (args.max_iters > 0) cfg.stop.max_iters = args.max_iters;
  if (args.seed >= 0) cfg.seed = static_cast<std::uint64_t>(args.seed);
  if (args.threads > 0) cfg.threads = args.threads;
  if (args.retain_states) cfg.output.retain_states = true;
  if (args.strict_admissibility) cfg.strict_admissibility = true;
  if (args.svg) cfg.output.svg = true;
  cfg.validate();
  if (cfg.mesh.n >= 256)
    std::cerr << "note: mesh.n = " << cfg.mesh.n
              << " is a paper-scale run; expect minutes of runtime\n";
#ifdef _OPENMP
  omp_set_num_threads(cfg.threads);
#endif
  Eigen::setNbThreads(cfg.threads);
  return cfg;
}

struct Problem {
  std::shared_ptr<const Mesh> mesh;
  FormSet forms;
  State u0;
  StepPolicy policy;
  StopRule stop;
  SolverOptions opts;
};

Problem setup(const RunConfig& cfg) {
  Problem p;
  p.mesh = build_mesh(cfg.mesh.Lx, cfg.mesh.Ly, cfg.mesh.n);
  p.forms = assemble_base(p.mesh, make_model(cfg.model), cfg.strict_admissibility);
  if (!p.forms.admissibility_ok)
    std::cerr << "warning: trap condition violated (margin "
              << p.forms.admissibility_margin << "); minimizers may not exist\n";
  p.u0 = normalized(p.forms, make_initial(cfg, p.mesh));
  p.policy = make_policy(cfg.policy);
  p.stop.energy_tol = cfg.stop.energy_tol;
  p.stop.residual_tol = cfg.stop.residual_tol;
  p.stop.ref_energy_tol = cfg.stop.ref_energy_tol;
  p.stop.max_iters = cfg.stop.max_iters;
  p.opts = make_solver_options(cfg);
  return p;
}

std::string stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::tol_reached: return "tol_reached";
    case StopReason::max_iters: return "max_iters";
    case StopReason::diverged: return "diverged";
  }
  return "unknown";
}

std::vector<std::pair<std::string, std::string>> base_summary(const RunConfig& cfg,
                                                              const Trace& trace) {
  return {
      {"energy", format_g17(trace.records.empty() ? 0.0 : trace.records.back().energy)},
      {"lambda", format_g17(trace.final_lambda)},
      {"iterations", std::to_string(trace.records.size())},
      {"stop_reason", stop_reason_name(trace.stop_reason)},
      {"residual", format_g17(trace.records.empty() ? 0.0 : trace.records.back().residual)},
      {"mesh_n", std::to_string(cfg.mesh.n)},
      {"mesh_split", "lower-left-to-upper-right"},
      {"reference_solver", "self-hosted tight run of this solver (not an external method)"},
  };
}

int cmd_solve(const CommonArgs& args, const std::string& reference_path) {
  const RunConfig cfg = build_config(args);
  Problem p = setup(cfg);
  fs::create_directories(cfg.output.dir);

  std::optional<Reference> ref;
  if (!reference_path.empty()) {
    State uref = load_state(reference_path, p.mesh);
    ref = Reference{energy(p.forms, uref), uref};
  }
  Trace trace = run(p.forms, p.u0, p.policy, p.stop, ref, p.opts);

  const fs::path dir = cfg.output.dir;
  write_trace_csv((dir / "trace.csv").string(), trace);
  save_state((dir / "state.gpst").string(), trace.final_state);
  write_density_csv((dir / "density.csv").string(), trace.final_state);
  write_summary((dir / "summary.txt").string(), base_summary(cfg, trace));
  if (cfg.output.svg && ref) {
    PlotSeries s;
    s.label = "|E(u^n) - E_ref|";
    for (const auto& r : trace.records) s.y.push_back(std::abs(r.energy_error));
    write_svg_logplot((dir / "energy_error.svg").string(), "energy error", {s});
  }
  std::cout << "energy " << format_g17(trace.records.back().energy) << ", lambda "
            << format_g17(trace.final_lambda) << ", " << trace.records.size() << " iterations ("
            << stop_reason_name(trace.stop_reason) << ")\n";
  return trace.stop_reason == StopReason::diverged ? kExitConvergence : kExitOk;
}

int cmd_compare(const CommonArgs& args, const std::string& reference_path) {
  const RunConfig cfg = build_config(args);
  Problem p = setup(cfg);
  fs::create_directories(cfg.output.dir);
  const fs::path dir = cfg.output.dir;

  State uref = [&] {
    if (!reference_path.empty()) return load_state(reference_path, p.mesh);
    std::cerr << "no reference supplied; computing one with a tight certified run first\n";
    StopRule tight = p.stop;
    tight.energy_tol = std::numeric_limits<double>::infinity();
    tight.residual_tol = 1e-11;
    tight.max_iters = std::max(p.stop.max_iters, 40000);
    CertifiedSolve cs = solve_ground_state(p.forms, p.u0, StepPolicy::adaptive(), tight, p.opts);
    if (!cs.certified)
      std::cerr << "warning: reference state failed the second-order check\n";
    save_state((dir / "reference.gpst").string(), cs.trace.final_state);
    return cs.trace.final_state;
  }();
  const Reference ref{energy(p.forms, uref), uref};

  SolverOptions adaptive_opts = p.opts;
  Trace adaptive = run(p.forms, p.u0, StepPolicy::adaptive(), p.stop, ref, adaptive_opts);
  SolverOptions h1_opts = p.opts;
  h1_opts.metric = SolverOptions::Metric::h1;
  Trace h1 = run(p.forms, p.u0, StepPolicy::adaptive(), p.stop, ref, h1_opts);

  write_trace_csv((dir / "adaptive_trace.csv").string(), adaptive);
  write_trace_csv((dir / "h1_trace.csv").string(), h1);
  write_comparison_csv((dir / "comparison.csv").string(), adaptive, h1);
  auto summary = base_summary(cfg, adaptive);
  summary.emplace_back("adaptive_iterations", std::to_string(adaptive.records.size()));
  summary.emplace_back("h1_iterations", std::to_string(h1.records.size()));
  write_summary((dir / "summary.txt").string(), summary);
  if (cfg.output.svg) {
    PlotSeries sa{"adaptive metric", {}, "#1f6fb2"};
    for (const auto& r : adaptive.records) sa.y.push_back(std::abs(r.energy_error));
    PlotSeries sh{"H1 metric", {}, "#c23b22"};
    for (const auto& r : h1.records) sh.y.push_back(std::abs(r.energy_error));
    write_svg_logplot((dir / "comparison.svg").string(), "energy error", {sa, sh});
  }
  std::cout << "adaptive: " << adaptive.records.size() << " iterations, H1: "
            << h1.records.size() << " iterations\n";
  const bool ok = adaptive.stop_reason != StopReason::diverged &&
                  h1.stop_reason != StopReason::diverged;
  return ok ? kExitOk : kExitConvergence;
}

int cmd_spectrum(const CommonArgs& args, const std::string& state_path) {
  const RunConfig cfg = build_config(args);
  Problem p = setup(cfg);
  fs::create_directories(cfg.output.dir);
  const fs::path dir = cfg.output.dir;

  const State u = load_state(state_path, p.mesh);
  SpectralOptions sopts;
  sopts.lin = p.opts.lin;
  const GpResidual gr = gp_residual(p.forms, u, sopts.lin);
  if (gr.res_l2 > 1e-6) {
    std::cerr << "state is not converged: residual " << format_g17(gr.res_l2)
              << " exceeds the 1e-6 gate\n";
    return kExitConvergence;
  }
  const SpectralReport rep = compute_spectral_report(p.forms, u, sopts);
  write_spectral_report_text((dir / "spectral_report.txt").string(), rep);
  write_spectral_report_csv((dir / "spectral_report.csv").string(), rep);
  std::cout << "lambda " << format_g17(rep.lambda) << " at position " << rep.lambda_index_in_a_u
            << " of the linearized spectrum; lambda1/lambda2 "
            << format_g17(rep.lambda1 / rep.lambda2) << ", |mu1| "
            << format_g17(rep.mu_list.empty() ? 0.0 : std::abs(rep.mu_list.front())) << '\n';
  const bool ok = rep.mu_upper_ok && rep.mu_lower_ok && rep.hess_lambda1_matches &&
                  rep.first_vector_aligned && rep.coercivity_ok;
  return ok ? kExitOk : kExitInvariant;
}

int cmd_rates(const CommonArgs& args, const std::string& state_path) {
  const RunConfig cfg = build_config(args);
  Problem p = setup(cfg);
  fs::create_directories(cfg.output.dir);
  const fs::path dir = cfg.output.dir;

  const State uref = load_state(state_path, p.mesh);
  const Reference ref{energy(p.forms, uref), uref};
  StepPolicy policy = p.policy;
  if (policy.mode == StepPolicy::Mode::adaptive) policy = StepPolicy::fixed(1.0);

  StopRule stop = p.stop;
  stop.ref_energy_tol = std::min(stop.ref_energy_tol, 1e-9);
  Trace trace = run(p.forms, p.u0, policy, stop, ref, p.opts);

  RatesData data;
  std::vector<double> errors;
  for (const auto& r : trace.records) errors.push_back(r.h1_error);
  const std::vector<double> rates = rates_from_errors(errors);
  for (size_t i = 0; i < rates.size(); ++i) {
    data.n.push_back(static_cast<int>(i));
    data.r.push_back(rates[i]);
    data.h1_err.push_back(errors[i]);
    data.omega.push_back(trace.records[i].h1_omega);
  }
  SpectralOptions sopts;
  sopts.lin = p.opts.lin;
  const EigenList hess = hessian_spectrum(p.forms, uref, 2, sopts);
  const WeightedEvp wevp = weighted_evp(p.forms, uref, 1, sopts);
  data.mu1_abs = wevp.mu.empty() ? 0.0 : std::abs(wevp.mu.front());
  data.lambda1_over_lambda2 = hess.values[0] / hess.values[1];
  write_rates_csv((dir / "rates.csv").string(), data);
  std::cout << "wrote " << data.r.size() << " rates; |mu1| " << format_g17(data.mu1_abs)
            << ", lambda1/lambda2 " << format_g17(data.lambda1_over_lambda2) << '\n';
  return kExitOk;
}

int cmd_check(const CommonArgs& args) {
  CommonArgs local = args;
  RunConfig cfg = build_config(local);
  Problem p = setup(cfg);
  const CheckReport report =
      run_invariant_battery(p.forms, p.u0, p.policy, cfg.seed, p.opts);
  for (const auto& item : report.items) {
    std::printf("%-32s defect %-12.3e tol %-9.1e %s\n", item.name.c_str(), item.defect, item.tol,
                item.pass ? "pass" : "FAIL");
  }
  return report.all_pass ? kExitOk : kExitInvariant;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ground states of rotating Bose-Einstein condensates via an "
               "energy-adaptive Riemannian gradient method"};
  app.require_subcommand(1);

  CommonArgs solve_args, compare_args, spectrum_args, rates_args, check_args;
  std::string solve_ref, compare_ref, spectrum_state, rates_state;

  CLI::App* solve = app.add_subcommand("solve", "minimize the energy and write the trace");
  add_common(solve, solve_args);
  solve->add_option("--reference", solve_ref, "reference state file for energy-error columns");

  CLI::App* compare = app.add_subcommand("compare", "adaptive-metric vs H1-metric comparison");
  add_common(compare, compare_args);
  compare->add_option("--reference", compare_ref, "reference state file");

  CLI::App* spectrum = app.add_subcommand("spectrum", "spectral diagnostics of a converged state");
  add_common(spectrum, spectrum_args);
  spectrum->add_option("state", spectrum_state, "converged state file")->required();

  CLI::App* rates = app.add_subcommand("rates", "contraction rates against a reference state");
  add_common(rates, rates_args);
  rates->add_option("state", rates_state, "reference (converged) state file")->required();

  CLI::App* check = app.add_subcommand("check", "run the invariant battery on a short run");
  add_common(check, check_args);
  // Desk-scale default so the battery stays fast.
  if (check_args.mesh_n <= 0) check_args.mesh_n = 16;

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) ? kExitConfig : kExitOk;
  }

  try {
    if (solve->parsed()) return cmd_solve(solve_args, solve_ref);
    if (compare->parsed()) return cmd_compare(compare_args, compare_ref);
    if (spectrum->parsed()) return cmd_spectrum(spectrum_args, spectrum_state);
    if (rates->parsed()) return cmd_rates(rates_args, rates_state);
    if (check->parsed()) return cmd_check(check_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const PolicyError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const AdmissibilityError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const SolveError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConvergence;
  } catch (const EigenError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConvergence;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitInvariant;
  }
  return kExitConfig;
}
