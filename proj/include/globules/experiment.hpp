#pragma once

// Seeded experiment pipelines: INI configuration, validation that reports
// every problem at once, and run_experiment, which wires sampler -> dynamics
// -> diagnostics and writes trajectories, a report and a manifest.
//
// Config sections and keys (all in one flat INI file):
//   [model]       sigma, r_minus, r_plus, ell, external (configuration file)
//   [run]         T, dt, seed, n_trajectories, stride, ledger_stride, threads,
//                 init (fixed-n | stationary | file), n_globules, initial,
//                 burn_in, thinning
//   [diagnostics] delta, epsilon, chain_epsilon, M, functionals
//                 (comma list of ball_count, min_gap, pair_bin), times
//                 (default 0.2 T, 0.7 T),
//                 ball_radius, gap_scale, pair_lo, pair_hi

#include <globules/core.hpp>
#include <globules/diagnostics.hpp>
#include <globules/dynamics.hpp>
#include <globules/error.hpp>
#include <globules/io.hpp>
#include <globules/penalization.hpp>
#include <globules/rng.hpp>
#include <globules/sampler.hpp>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <boost/version.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <type_traits>
#include <vector>

namespace globules {

inline constexpr const char* kVersion = "0.1.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Runs fn(0..count-1) on up to `threads` workers. The first exception is
/// rethrown after all workers stop.
inline void parallel_for(std::size_t count, unsigned threads, const std::function<void(std::size_t)>& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(count, 1))));
  if (threads == 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex mu;
  std::vector<std::thread> pool;
  const std::function<void()> worker = [&] {
    for (;;) {
      const std::size_t k = next.fetch_add(1);
      if (k >= count) return;
      try {
        fn(k);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        next = count;
      }
    }
  };
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
  for (auto& th : pool) th.join();
  if (error) std::rethrow_exception(error);
}

// ---------------------------------------------------------------------------
// Configuration

enum class InitMode { fixed_n, stationary, file };

struct RunSettings {
  double T = 1.0;
  double dt = 1e-3;
  std::uint64_t seed = 0;
  std::size_t n_trajectories = 1;
  std::size_t stride = 1;
  std::size_t ledger_stride = 1;
  unsigned threads = 1;
  InitMode init = InitMode::fixed_n;
  std::size_t n_globules = 3;
  std::string initial;  // configuration file for InitMode::file
  std::size_t burn_in = 2000;
  std::size_t thinning = 100;
};

struct DiagnosticsSettings {
  PathRegularityParams path;
  std::vector<std::string> functionals{"ball_count", "min_gap", "pair_bin"};
  std::vector<double> times;  // empty: 0.2 T and 0.7 T
  double ball_radius = 1.0;
  double gap_scale = 0.5;
  double pair_lo = 1.0;
  double pair_hi = 2.0;
};

struct ExperimentConfig {
  ModelParams model;
  RunSettings run;
  DiagnosticsSettings diagnostics;
  std::string source_text;  // raw bytes of the config file
  std::string external_path;
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

/// Typed reads that record problems instead of throwing.
class FieldReader {
 public:
  FieldReader(const boost::property_tree::ptree& tree, std::vector<std::string>& problems)
      : tree_(tree), problems_(problems) {}

  template <class T>
  std::optional<T> get(const std::string& key, bool required) {
    const auto node = tree_.get_optional<std::string>(key);
    if (!node) {
      if (required) problems_.push_back(key + ": missing");
      return std::nullopt;
    }
    std::istringstream is(*node);
    T v{};
    if constexpr (std::is_same_v<T, std::string>) {
      return *node;
    } else {
      if (!(is >> v) || !(is >> std::ws).eof()) {
        problems_.push_back(key + ": cannot parse '" + *node + "'");
        return std::nullopt;
      }
    }
    return v;
  }

  template <class T>
  void read(const std::string& key, T& into, bool required = false) {
    if (auto v = get<T>(key, required)) into = *v;
  }

 private:
  const boost::property_tree::ptree& tree_;
  std::vector<std::string>& problems_;
};

}  // namespace detail

/// Cross-field checks; returns every problem found.
inline std::vector<std::string> validate_config(const ExperimentConfig& c) {
  std::vector<std::string> p;
  const auto& m = c.model;
  if (!(m.sigma > 0.0)) p.push_back("model.sigma: must be positive");
  if (!(m.r_minus > 0.0)) p.push_back("model.r_minus: must be positive");
  if (!(m.r_plus > m.r_minus)) p.push_back("model.r_plus: must exceed model.r_minus");
  if (m.ell < 1) p.push_back("model.ell: must be at least 1");
  if (m.ell >= 1 && m.r_plus > m.r_minus &&
      !(std::exp(-static_cast<double>(m.ell)) < std::min(1.0, 0.25 * (m.r_plus - m.r_minus)))) {
    p.push_back("model.ell: e^{-ell} must be below min(1, (r_plus - r_minus)/4)");
  }
  const auto& r = c.run;
  if (!(r.T > 0.0)) p.push_back("run.T: must be positive");
  if (!(r.dt > 0.0)) p.push_back("run.dt: must be positive");
  if (r.T > 0.0 && r.dt > 0.0) {
    const double k = r.T / r.dt;
    if (std::abs(k - std::round(k)) > 1e-9 * k || std::round(k) < 1) p.push_back("run.dt: T/dt must be an integer");
  }
  if (r.n_trajectories < 1) p.push_back("run.n_trajectories: must be at least 1");
  if (r.stride < 1) p.push_back("run.stride: must be at least 1");
  if (r.ledger_stride < 1) p.push_back("run.ledger_stride: must be at least 1");
  if (r.threads < 1) p.push_back("run.threads: must be at least 1");
  if (r.thinning < 1) p.push_back("run.thinning: must be at least 1");
  if (r.init == InitMode::file && r.initial.empty()) p.push_back("run.initial: required when run.init = file");
  if (r.init == InitMode::fixed_n && r.n_globules < 1) p.push_back("run.n_globules: must be at least 1");

  const auto& d = c.diagnostics;
  if (!(d.path.delta > 0.0 && d.path.delta <= 1.0)) p.push_back("diagnostics.delta: must lie in (0, 1]");
  if (!(d.path.epsilon > 0.0)) p.push_back("diagnostics.epsilon: must be positive");
  if (!(d.path.chain_epsilon > 0.0)) p.push_back("diagnostics.chain_epsilon: must be positive");
  if (d.path.M < 2) p.push_back("diagnostics.M: must be at least 2");
  if (r.dt > 0.0 && r.stride >= 1 && d.path.delta > 0.0 && r.T > 0.0) {
    const double h = r.dt * static_cast<double>(r.stride);
    const double ref = d.path.delta / h;
    if (std::abs(ref - std::round(ref)) > 1e-6 * ref || std::round(ref) < 16) {
      p.push_back("diagnostics.delta: recorded grid (dt * stride) must refine delta by an integer factor >= 16");
    }
    const double slots = r.T / d.path.delta;
    if (std::abs(slots - std::round(slots)) > 1e-6 * std::max(1.0, slots)) {
      p.push_back("diagnostics.delta: T/delta must be an integer");
    }
    const double steps = r.T / r.dt;
    const double recs = steps / static_cast<double>(r.stride);
    if (std::abs(recs - std::round(recs)) > 1e-6 * std::max(1.0, recs)) {
      p.push_back("run.stride: must divide T/dt");
    }
  }
  for (const auto& f : d.functionals) {
    if (f != "ball_count" && f != "min_gap" && f != "pair_bin") {
      p.push_back("diagnostics.functionals: unknown functional '" + f + "'");
    }
  }
  for (double t : d.times) {
    if (!(t >= 0.0 && t <= r.T)) p.push_back("diagnostics.times: each time must lie in [0, T]");
  }
  if (!(d.ball_radius > 0.0)) p.push_back("diagnostics.ball_radius: must be positive");
  if (!(d.gap_scale > 0.0)) p.push_back("diagnostics.gap_scale: must be positive");
  if (!(d.pair_hi > d.pair_lo)) p.push_back("diagnostics.pair_hi: must exceed diagnostics.pair_lo");
  return p;
}

/// Parses INI text. Relative file paths are resolved against `base_dir`.
inline ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& base_dir = {}) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ValidationError({std::string("config: ") + e.message() + " (line " + std::to_string(e.line()) + ")"});
  }
  std::vector<std::string> problems;
  detail::FieldReader f(tree, problems);
  ExperimentConfig c;
  c.source_text = text;
  f.read("model.sigma", c.model.sigma, true);
  f.read("model.r_minus", c.model.r_minus, true);
  f.read("model.r_plus", c.model.r_plus, true);
  f.read("model.ell", c.model.ell, true);
  std::string external;
  f.read("model.external", external);

  f.read("run.T", c.run.T, true);
  f.read("run.dt", c.run.dt, true);
  f.read("run.seed", c.run.seed, true);
  f.read("run.n_trajectories", c.run.n_trajectories);
  f.read("run.stride", c.run.stride);
  f.read("run.ledger_stride", c.run.ledger_stride);
  f.read("run.threads", c.run.threads);
  f.read("run.n_globules", c.run.n_globules);
  f.read("run.initial", c.run.initial);
  f.read("run.burn_in", c.run.burn_in);
  f.read("run.thinning", c.run.thinning);
  std::string init = "fixed-n";
  f.read("run.init", init);
  if (init == "fixed-n") c.run.init = InitMode::fixed_n;
  else if (init == "stationary") c.run.init = InitMode::stationary;
  else if (init == "file") c.run.init = InitMode::file;
  else problems.push_back("run.init: expected fixed-n, stationary or file, got '" + init + "'");

  auto& d = c.diagnostics;
  f.read("diagnostics.delta", d.path.delta);
  f.read("diagnostics.epsilon", d.path.epsilon);
  d.path.chain_epsilon = d.path.epsilon;
  f.read("diagnostics.chain_epsilon", d.path.chain_epsilon);
  f.read("diagnostics.M", d.path.M);
  if (auto v = f.get<std::string>("diagnostics.functionals", false)) d.functionals = detail::split_list(*v);
  if (auto v = f.get<std::string>("diagnostics.times", false)) {
    d.times.clear();
    for (const auto& s : detail::split_list(*v)) {
      try {
        d.times.push_back(std::stod(s));
      } catch (const std::exception&) {
        problems.push_back("diagnostics.times: cannot parse '" + s + "'");
      }
    }
  } else {
    d.times = {0.2 * c.run.T, 0.7 * c.run.T};
  }
  f.read("diagnostics.ball_radius", d.ball_radius);
  f.read("diagnostics.gap_scale", d.gap_scale);
  f.read("diagnostics.pair_lo", d.pair_lo);
  f.read("diagnostics.pair_hi", d.pair_hi);

  auto resolve = [&](const std::string& path) {
    const std::filesystem::path fp(path);
    return (fp.is_relative() && !base_dir.empty() ? base_dir / fp : fp).string();
  };
  if (!c.run.initial.empty()) c.run.initial = resolve(c.run.initial);
  if (!external.empty()) {
    c.external_path = resolve(external);
    try {
      c.model.external = load_configuration(c.external_path).configuration;
    } catch (const std::exception& e) {
      problems.push_back(std::string("model.external: ") + e.what());
    }
  }
  const auto cross = validate_config(c);
  // Missing fields already reported; skip cross-field noise about defaults.
  for (const auto& msg : cross) {
    const auto field = msg.substr(0, msg.find(':'));
    const bool dup = std::any_of(problems.begin(), problems.end(),
                                 [&](const std::string& q) { return q.rfind(field + ":", 0) == 0; });
    if (!dup) problems.push_back(msg);
  }
  if (!problems.empty()) throw ValidationError(problems);
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError({"config: cannot open " + path});
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::filesystem::path(path).parent_path());
}

/// The fixed functional library selected by the settings.
inline std::vector<std::pair<std::string, Functional>> functional_library(const DiagnosticsSettings& d) {
  std::vector<std::pair<std::string, Functional>> out;
  for (const auto& name : d.functionals) {
    if (name == "ball_count") out.emplace_back(name, SmoothedBallCount{d.ball_radius, 0.1 * d.ball_radius});
    else if (name == "min_gap") out.emplace_back(name, SmoothedMinGap{d.gap_scale});
    else if (name == "pair_bin") out.emplace_back(name, PairDistanceBin{d.pair_lo, d.pair_hi, 0.1 * (d.pair_hi - d.pair_lo)});
    else throw ParameterError("unknown functional '" + name + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Running

struct ExperimentSummary {
  std::vector<std::string> trajectory_files;
  std::string report_file;
  std::string manifest_file;
  DiagnosticsReport report;
};

/// Initial configuration for trajectory k.
inline Configuration initial_configuration(const ExperimentConfig& c, std::size_t k) {
  const PenalizationSpec spec(c.model);
  SamplerOptions opt;
  opt.burn_in = c.run.burn_in;
  opt.thinning = c.run.thinning;
  const std::uint64_t seed = derive_seed(c.run.seed, 2 * k + 1);
  switch (c.run.init) {
    case InitMode::file: {
      auto f = load_configuration(c.run.initial);
      if (!allowed(f.configuration, c.model)) throw ParameterError("run.initial: configuration is not allowed");
      return f.configuration;
    }
    case InitMode::fixed_n:
      return draw_fixed_n(c.model, spec, c.run.n_globules, 1, seed, opt).front();
    case InitMode::stationary:
      return sample_penalized(c.model, spec, seed, opt);
  }
  return {};
}

/// Simulates every trajectory, writes them under out_dir, computes the
/// diagnostics report and writes a manifest.
inline ExperimentSummary run_experiment(const ExperimentConfig& c, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const PenalizationSpec spec(c.model);
  const std::size_t count = c.run.n_trajectories;
  std::vector<TrajectoryRecord> ensemble(count);

  SimulateOptions sim;
  sim.record_stride = c.run.stride;
  parallel_for(count, c.run.threads, [&](std::size_t k) {
    const Configuration init = initial_configuration(c, k);
    ensemble[k] = simulate(init, c.run.T, c.run.dt, spec, c.model, derive_seed(c.run.seed, 2 * k), sim);
  });

  ExperimentSummary out;
  TrajectoryWriteOptions wopt;
  wopt.ledger_stride = c.run.ledger_stride;
  for (std::size_t k = 0; k < count; ++k) {
    char name[48];
    std::snprintf(name, sizeof name, "trajectory_%04zu.txt", k);
    const auto path = out_dir / name;
    save_trajectory(path.string(), ensemble[k], wopt);
    out.trajectory_files.push_back(path.string());
  }

  auto& rep = out.report;
  const auto& d = c.diagnostics;
  rep.set("trajectories", std::to_string(count));
  std::size_t modulus_ok = 0;
  std::size_t chain_free = 0;
  std::size_t refinements = 0;
  double worst = 0.0;
  for (const auto& t : ensemble) {
    const auto nice = nice_path_membership(t, d.path);
    modulus_ok += nice.modulus_ok ? 1 : 0;
    chain_free += nice.chain_free ? 1 : 0;
    worst = std::max(worst, max_modulus(t, d.path.delta));
    refinements += t.refinements.size();
  }
  rep.set("delta", format_real(d.path.delta));
  rep.set("epsilon", format_real(d.path.epsilon));
  rep.set("chain_epsilon", format_real(d.path.chain_epsilon));
  rep.set("M", std::to_string(d.path.M));
  rep.set("max_modulus", format_real(worst));
  rep.set("modulus_ok_fraction", format_real(static_cast<double>(modulus_ok) / count));
  rep.set("chain_free_fraction", format_real(static_cast<double>(chain_free) / count));
  rep.set("refined_steps", std::to_string(refinements));
  if (count >= 30 && d.times.size() >= 1) {
    for (const auto& [name, f] : functional_library(d)) {
      std::vector<Functional> fs(d.times.size(), f);
      const auto est = reversibility_statistic(ensemble, fs, d.times);
      rep.set("reversibility." + name + ".forward", format_real(est.forward));
      rep.set("reversibility." + name + ".backward", format_real(est.backward));
      rep.set("reversibility." + name + ".stderr", format_real(est.stderr));
    }
  } else {
    rep.set("reversibility", "skipped (needs at least 30 trajectories)");
  }
  out.report_file = (out_dir / "report.txt").string();
  {
    auto os = detail::open_out(out.report_file);
    write_report(os, rep);
  }

  out.manifest_file = (out_dir / "manifest.txt").string();
  auto ms = detail::open_out(out.manifest_file);
  ms << "version = " << kVersion << '\n';
  ms << "config_hash = fnv1a64:" << hex64(fnv1a(c.source_text)) << '\n';
  ms << "seed = " << c.run.seed << '\n';
  ms << "trajectories = " << count << '\n';
  ms << "eigen = " << EIGEN_WORLD_VERSION << '.' << EIGEN_MAJOR_VERSION << '.' << EIGEN_MINOR_VERSION << '\n';
  ms << "boost = " << BOOST_VERSION / 100000 << '.' << BOOST_VERSION / 100 % 1000 << '.' << BOOST_VERSION % 100 << '\n';
  for (const auto& f : out.trajectory_files) {
    ms << "file = " << std::filesystem::path(f).filename().string() << '\n';
  }
  ms << "file = report.txt\n";
  return out;
}

inline ExperimentSummary run_experiment(const std::string& config_path, const std::filesystem::path& out_dir) {
  return run_experiment(load_config(config_path), out_dir);
}

}  // namespace globules
