// Command-line front end. Exit codes: 0 success, 2 invalid input or
// parameters, 3 numerical failure.

#include <globules/globules.hpp>

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace globules;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

struct ModelFlags {
  double sigma = 1.0;
  double r_minus = 0.5;
  double r_plus = 1.0;
  int ell = 3;
  std::string external;

  void add(CLI::App* app, bool with_defaults = true) {
    auto* s = app->add_option("--sigma", sigma, "radius oscillation scale");
    auto* a = app->add_option("--rminus", r_minus, "minimal radius");
    auto* b = app->add_option("--rplus", r_plus, "maximal radius");
    app->add_option("--ell", ell, "penalization level")->required();
    app->add_option("--external", external, "external configuration file");
    if (with_defaults) {
      s->capture_default_str();
      a->capture_default_str();
      b->capture_default_str();
    }
  }

  ModelParams params() const {
    ModelParams p;
    p.sigma = sigma;
    p.r_minus = r_minus;
    p.r_plus = r_plus;
    p.ell = ell;
    if (!external.empty()) p.external = load_configuration(external).configuration;
    p.validate();
    return p;
  }
};

std::string under(const std::string& out_dir, const std::string& path) {
  if (out_dir.empty() || fs::path(path).is_absolute()) return path;
  fs::create_directories(out_dir);
  return (fs::path(out_dir) / path).string();
}

void write_report_files(const DiagnosticsReport& rep, const std::string& out, const std::string& csv) {
  if (out.empty()) {
    write_report(std::cout, rep);
  } else {
    auto os = detail::open_out(out);
    write_report(os, rep);
  }
  if (!csv.empty()) {
    auto os = detail::open_out(csv);
    write_csv(os, rep.table);
  }
}

void put_fit(DiagnosticsReport& rep, const std::string& prefix, const LinearFit& fit) {
  rep.set(prefix + ".slope", format_real(fit.slope));
  rep.set(prefix + ".intercept", format_real(fit.intercept));
  rep.set(prefix + ".r2", format_real(fit.r2));
  rep.set(prefix + ".points", std::to_string(fit.points));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Reflected Brownian globules: simulation, sampling and diagnostics"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  app.fallthrough();
  std::string out_dir;
  app.add_option("--out-dir", out_dir, "artifact root for relative output paths");

  // simulate
  auto* sim = app.add_subcommand("simulate", "integrate the reflected system from a configuration");
  ModelFlags sim_model;
  std::string sim_init;
  std::string sim_out;
  double sim_T = 1.0;
  double sim_dt = 1e-3;
  std::uint64_t sim_seed = 0;
  std::size_t sim_stride = 1;
  std::size_t sim_ledger_stride = 1;
  std::optional<double> sim_sigma, sim_rminus, sim_rplus;
  sim->add_option("--init", sim_init, "initial configuration file")->required()->check(CLI::ExistingFile);
  sim->add_option("--T", sim_T, "time horizon")->required();
  sim->add_option("--dt", sim_dt, "time step")->required();
  sim->add_option("--seed", sim_seed, "random seed")->required();
  sim->add_option("--ell", sim_model.ell, "penalization level")->required();
  sim->add_option("--sigma", sim_sigma, "radius oscillation scale (default: from --init)");
  sim->add_option("--rminus", sim_rminus, "minimal radius (default: from --init)");
  sim->add_option("--rplus", sim_rplus, "maximal radius (default: from --init)");
  sim->add_option("--external", sim_model.external, "external configuration file");
  sim->add_option("--stride", sim_stride, "record every k-th step")->capture_default_str();
  sim->add_option("--ledger-stride", sim_ledger_stride, "ledger checkpoint every k-th record")->capture_default_str();
  sim->add_option("--out", sim_out, "trajectory output file")->required();

  // sample-stationary
  auto* samp = app.add_subcommand("sample-stationary", "draw an initial configuration from the stationary measure");
  ModelFlags samp_model;
  samp_model.add(samp);
  std::uint64_t samp_seed = 0;
  std::size_t samp_sweeps = 10000;
  std::optional<double> samp_window;
  std::optional<std::size_t> samp_n;
  std::string samp_out;
  samp->add_option("--seed", samp_seed, "random seed")->required();
  samp->add_option("--sweeps", samp_sweeps, "sweeps before the draw")->capture_default_str();
  samp->add_option("--window", samp_window, "hard Poisson process in B(0, R) instead of the penalized measure");
  samp->add_option("--n", samp_n, "fixed globule count (penalized measure restricted to n globules)");
  samp->add_option("--out", samp_out, "configuration output file")->required();

  // diagnose
  auto* diag = app.add_subcommand("diagnose", "path diagnostics of a trajectory file");
  std::string diag_traj, diag_out, diag_csv;
  PathRegularityParams diag_p;
  std::optional<double> diag_chain_eps;
  std::optional<double> diag_rho;
  diag->add_option("--trajectory", diag_traj, "trajectory file")->required()->check(CLI::ExistingFile);
  diag->add_option("--delta", diag_p.delta, "modulus window")->required();
  diag->add_option("--epsilon", diag_p.epsilon, "modulus threshold")->required();
  diag->add_option("--chain-epsilon", diag_chain_eps, "chain threshold (default: --epsilon)");
  diag->add_option("--M", diag_p.M, "chain length")->capture_default_str();
  diag->add_option("--m", diag_p.m, "scale index for localization sets")->capture_default_str();
  diag->add_option("--rho", diag_rho, "compute localization sets with this core radius");
  diag->add_option("--out", diag_out, "report file (default: stdout)");

  // scaling-chain
  auto* sc = app.add_subcommand("scaling-chain", "chain probability against epsilon");
  ModelFlags sc_model;
  sc_model.add(sc);
  std::vector<double> sc_eps;
  int sc_M = 2;
  std::size_t sc_samples = 2000;
  std::uint64_t sc_seed = 0;
  std::size_t sc_burn = 2000, sc_thin = 20;
  std::string sc_out, sc_csv;
  sc->add_option("--eps", sc_eps, "epsilon values")->required()->delimiter(',');
  sc->add_option("--M", sc_M, "chain length")->capture_default_str();
  sc->add_option("--samples", sc_samples, "stationary samples")->capture_default_str();
  sc->add_option("--burn-in", sc_burn, "burn-in sweeps")->capture_default_str();
  sc->add_option("--thinning", sc_thin, "sweeps between samples")->capture_default_str();
  sc->add_option("--seed", sc_seed, "random seed")->required();
  sc->add_option("--out", sc_out, "report file (default: stdout)");
  sc->add_option("--csv", sc_csv, "CSV table of (epsilon, P, stderr)");

  // scaling-modulus
  auto* sm = app.add_subcommand("scaling-modulus", "modulus-of-continuity tail against epsilon^2/delta");
  ModelFlags sm_model;
  sm_model.add(sm);
  std::vector<double> sm_eps;
  double sm_delta = 1.0 / 16.0, sm_T = 1.0, sm_dt = 1.0 / 1024.0;
  std::size_t sm_n = 3, sm_traj = 200;
  std::uint64_t sm_seed = 0;
  std::string sm_out, sm_csv;
  sm->add_option("--eps", sm_eps, "epsilon values")->required()->delimiter(',');
  sm->add_option("--delta", sm_delta, "modulus window")->capture_default_str();
  sm->add_option("--T", sm_T, "time horizon")->capture_default_str();
  sm->add_option("--dt", sm_dt, "time step")->capture_default_str();
  sm->add_option("--n", sm_n, "globules per trajectory")->capture_default_str();
  sm->add_option("--trajectories", sm_traj, "ensemble size")->capture_default_str();
  sm->add_option("--seed", sm_seed, "random seed")->required();
  sm->add_option("--out", sm_out, "report file (default: stdout)");
  sm->add_option("--csv", sm_csv, "CSV table of (epsilon, P, stderr)");

  // reversibility
  auto* rv = app.add_subcommand("reversibility", "forward against time-reversed functional estimates");
  ModelFlags rv_model;
  rv_model.add(rv);
  std::vector<double> rv_times{0.2, 0.7};
  double rv_dt = 1e-3;
  std::size_t rv_n = 3, rv_traj = 500;
  std::uint64_t rv_seed = 0;
  double rv_ball = 1.0, rv_gap = 0.5, rv_lo = 1.0, rv_hi = 2.0;
  std::string rv_out;
  rv->add_option("--times", rv_times, "functional times in [0, 1]")->delimiter(',')->capture_default_str();
  rv->add_option("--dt", rv_dt, "time step")->capture_default_str();
  rv->add_option("--n", rv_n, "globules per trajectory")->capture_default_str();
  rv->add_option("--trajectories", rv_traj, "ensemble size")->capture_default_str();
  rv->add_option("--ball-radius", rv_ball, "radius for the smoothed ball count")->capture_default_str();
  rv->add_option("--gap-scale", rv_gap, "scale for the smoothed minimum gap")->capture_default_str();
  rv->add_option("--pair-lo", rv_lo, "pair-distance bin lower edge")->capture_default_str();
  rv->add_option("--pair-hi", rv_hi, "pair-distance bin upper edge")->capture_default_str();
  rv->add_option("--seed", rv_seed, "random seed")->required();
  rv->add_option("--out", rv_out, "report file (default: stdout)");

  // run
  auto* run = app.add_subcommand("run", "run an experiment described by an INI file");
  std::string run_config;
  run->add_option("--config", run_config, "experiment configuration")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitValidation;
  }

  try {
    if (*sim) {
      const auto init = load_configuration(sim_init);
      ModelParams p;
      p.sigma = sim_sigma.value_or(init.sigma);
      p.r_minus = sim_rminus.value_or(init.r_minus);
      p.r_plus = sim_rplus.value_or(init.r_plus);
      p.ell = sim_model.ell;
      if (!sim_model.external.empty()) p.external = load_configuration(sim_model.external).configuration;
      const PenalizationSpec spec(p);
      SimulateOptions opt;
      opt.record_stride = sim_stride;
      const auto traj = simulate(init.configuration, sim_T, sim_dt, spec, p, sim_seed, opt);
      TrajectoryWriteOptions w;
      w.ledger_stride = sim_ledger_stride;
      save_trajectory(under(out_dir, sim_out), traj, w);
    } else if (*samp) {
      const auto p = samp_model.params();
      const PenalizationSpec spec(p);
      SamplerOptions opt;
      opt.burn_in = samp_sweeps;
      Configuration c;
      if (samp_window) {
        c = sample_hard_poisson(WindowSpec::ball(*samp_window), p, samp_sweeps, samp_seed, opt);
      } else if (samp_n) {
        opt.thinning = 1;
        c = draw_fixed_n(p, spec, *samp_n, 1, samp_seed, opt).front();
      } else {
        c = sample_penalized(p, spec, samp_seed, opt);
      }
      save_configuration(under(out_dir, samp_out), c, p);
    } else if (*diag) {
      const auto traj = load_trajectory(diag_traj);
      diag_p.chain_epsilon = diag_chain_eps.value_or(diag_p.epsilon);
      DiagnosticsReport rep;
      rep.set("globules", std::to_string(traj.globule_count()));
      rep.set("records", std::to_string(traj.size()));
      rep.set("delta", format_real(diag_p.delta));
      for (std::size_t i = 0; i < traj.globule_count(); ++i) {
        rep.set("modulus." + std::to_string(i), format_real(modulus_of_continuity(traj, i, diag_p.delta)));
      }
      const auto nice = nice_path_membership(traj, diag_p);
      rep.set("nice.modulus_ok", nice.modulus_ok ? "true" : "false");
      rep.set("nice.chain_free", nice.chain_free ? "true" : "false");
      if (diag_rho) {
        const auto loc = localization_sets(traj, diag_p, *diag_rho);
        rep.set("localization.nested", loc.nested ? "true" : "false");
        rep.set("localization.interaction_violations", std::to_string(loc.interactions.size()));
        rep.set("localization.v0", format_real(loc.v0));
        rep.set("localization.ell_m", format_real(loc.ell_m));
        rep.set("localization.containment_ok", loc.containment_ok ? "true" : "false");
        for (std::size_t k = 0; k < loc.J.size(); ++k) {
          rep.set("localization.J." + std::to_string(k), std::to_string(loc.J[k].size()));
        }
      }
      write_report_files(rep, diag_out.empty() ? "" : under(out_dir, diag_out), "");
    } else if (*sc) {
      const auto p = sc_model.params();
      SamplerOptions opt;
      opt.burn_in = sc_burn;
      opt.thinning = sc_thin;
      const auto res = scaling_fit_chain_probability(p, sc_eps, sc_M, sc_samples, sc_seed, opt);
      DiagnosticsReport rep;
      rep.set("M", std::to_string(sc_M));
      rep.set("samples", std::to_string(sc_samples));
      rep.set("fitted", res.fitted ? "true" : "false");
      if (res.fitted) {
        put_fit(rep, "fit", res.fit);
      } else {
        rep.set("upper_bound", format_real(res.upper_bound));
      }
      rep.table = res.points;
      write_report_files(rep, sc_out.empty() ? "" : under(out_dir, sc_out), sc_csv.empty() ? "" : under(out_dir, sc_csv));
    } else if (*sm) {
      const auto p = sm_model.params();
      const PenalizationSpec spec(p);
      SamplerOptions opt;
      opt.burn_in = 2000;
      opt.thinning = 1;
      std::vector<double> w;
      for (std::size_t k = 0; k < sm_traj; ++k) {
        const auto init = draw_fixed_n(p, spec, sm_n, 1, derive_seed(sm_seed, 2 * k + 1), opt).front();
        const auto traj = simulate(init, sm_T, sm_dt, spec, p, derive_seed(sm_seed, 2 * k));
        w.push_back(max_modulus(traj, sm_delta));
      }
      const auto res = scaling_fit_modulus_tail(w, sm_delta, sm_eps);
      DiagnosticsReport rep;
      rep.set("trajectories", std::to_string(sm_traj));
      rep.set("delta", format_real(sm_delta));
      rep.set("fitted", res.fitted ? "true" : "false");
      if (res.fitted) {
        put_fit(rep, "fit", res.fit);
        rep.set("decay_coefficient", format_real(res.decay_coefficient));
      }
      rep.table = res.points;
      write_report_files(rep, sm_out.empty() ? "" : under(out_dir, sm_out), sm_csv.empty() ? "" : under(out_dir, sm_csv));
    } else if (*rv) {
      const auto p = rv_model.params();
      const PenalizationSpec spec(p);
      SamplerOptions opt;
      opt.burn_in = 2000;
      opt.thinning = 1;
      std::vector<TrajectoryRecord> ensemble;
      for (std::size_t k = 0; k < rv_traj; ++k) {
        const auto init = draw_fixed_n(p, spec, rv_n, 1, derive_seed(rv_seed, 2 * k + 1), opt).front();
        SimulateOptions so;
        so.record_stride = 1;
        ensemble.push_back(simulate(init, 1.0, rv_dt, spec, p, derive_seed(rv_seed, 2 * k), so));
      }
      DiagnosticsSettings ds;
      ds.ball_radius = rv_ball;
      ds.gap_scale = rv_gap;
      ds.pair_lo = rv_lo;
      ds.pair_hi = rv_hi;
      DiagnosticsReport rep;
      rep.set("trajectories", std::to_string(rv_traj));
      for (const auto& [name, f] : functional_library(ds)) {
        const std::vector<Functional> fs(rv_times.size(), f);
        const auto est = reversibility_statistic(ensemble, fs, rv_times);
        rep.set(name + ".forward", format_real(est.forward));
        rep.set(name + ".backward", format_real(est.backward));
        rep.set(name + ".stderr", format_real(est.stderr));
        rep.set(name + ".z", format_real(est.z()));
      }
      write_report_files(rep, rv_out.empty() ? "" : under(out_dir, rv_out), "");
    } else if (*run) {
      const auto summary = run_experiment(run_config, out_dir.empty() ? fs::path(".") : fs::path(out_dir));
      std::cout << "wrote " << summary.trajectory_files.size() << " trajectories, " << summary.report_file
                << ", " << summary.manifest_file << '\n';
    }
  } catch (const ValidationError& e) {
    std::cerr << e.what() << '\n';
    return kExitValidation;
  } catch (const ParameterError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const SimulationAbort& e) {
    std::cerr << "numerical failure: " << e.what() << " (last good state at step " << e.step_index() << ")\n";
    return kExitNumerical;
  } catch (const NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ProjectionError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const StepTooLargeError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ChainSearchOverflow& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
