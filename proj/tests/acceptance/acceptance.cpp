// Acceptance gate: one PASS/FAIL line per criterion. Pass criterion numbers
// on the command line to run a subset.

#include <globules/globules.hpp>

#include "oracles/brownian_modulus.hpp"
#include "oracles/projection_oracles.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

using namespace globules;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

ModelParams model(double sigma, double r_minus, double r_plus, int ell) {
  ModelParams p;
  p.sigma = sigma;
  p.r_minus = r_minus;
  p.r_plus = r_plus;
  p.ell = ell;
  return p;
}

std::pair<double, double> batch_mean(const std::vector<double>& x, std::size_t batches = 100) {
  const std::size_t len = x.size() / batches;
  std::vector<double> means;
  for (std::size_t b = 0; b < batches; ++b) {
    double s = 0.0;
    for (std::size_t k = b * len; k < (b + 1) * len; ++k) s += x[k];
    means.push_back(s / static_cast<double>(len));
  }
  double mean = 0.0;
  for (double m : means) mean += m;
  mean /= static_cast<double>(batches);
  double var = 0.0;
  for (double m : means) var += (m - mean) * (m - mean);
  var /= static_cast<double>(batches - 1);
  return {mean, std::sqrt(var / static_cast<double>(batches))};
}

// ---------------------------------------------------------------------------
// 1 and 2 share one ensemble.

struct InvariantRuns {
  std::size_t trajectories = 0;
  std::size_t records = 0;
  std::size_t steps = 0;
  std::size_t state_violations = 0;
  std::size_t radius_violations = 0;
  std::size_t positive_increments = 0;
  std::size_t inactive_increments = 0;
  std::size_t negative_increments = 0;
  std::size_t monotonicity_violations = 0;
  std::size_t symmetry_violations = 0;
  std::size_t diagonal_violations = 0;
  std::size_t recorded_state_violations = 0;
  double worst_active_gap = 0.0;
};

const InvariantRuns& invariant_runs() {
  static const InvariantRuns runs = [] {
    InvariantRuns out;
    const std::vector<double> sigmas{0.5, 1.0, 2.0};
    const std::size_t n = 10;
    for (std::size_t t = 0; t < 100; ++t) {
      const double sigma = sigmas[t % 3];
      const auto p = model(sigma, 0.2, 0.8, 2);
      const PenalizationSpec spec(p);
      SamplerOptions so;
      so.burn_in = 200;
      so.thinning = 1;
      const auto init = draw_fixed_n(p, spec, n, 1, derive_seed(101, t), so).front();
      SimulateOptions opt;
      opt.record_stride = 1;
      opt.observer = [&](std::size_t, const StepResult& r) {
        ++out.steps;
        if (!allowed(r.next, p)) ++out.state_violations;
        for (const auto& g : r.next) {
          if (!(g.radius >= p.r_minus && g.radius <= p.r_plus)) ++out.radius_violations;
        }
        const auto z = sigma_stretch(r.next, sigma);
        auto check = [&](double dL, double gap) {
          if (dL < 0.0) ++out.negative_increments;
          if (dL > 0.0) {
            ++out.positive_increments;
            out.worst_active_gap = std::max(out.worst_active_gap, gap);
            if (gap > 1e-9) ++out.inactive_increments;
          }
        };
        for (const auto& [key, v] : r.dL.pair) check(v, pair_gap(z[key.first], z[key.second], sigma));
        for (std::size_t i = 0; i < n; ++i) {
          check(r.dL.cap_plus[i], (p.r_plus - r.next[i].radius) / sigma);
          check(r.dL.cap_minus[i], (r.next[i].radius - p.r_minus) / sigma);
        }
      };
      const auto rec = simulate(init, 1.0, 1e-4, spec, p, derive_seed(202, t), opt);
      ++out.trajectories;
      out.records += rec.size();
      for (std::size_t k = 0; k < rec.size(); ++k) {
        const auto& c = rec.states[k];
        if (!allowed(c, p)) ++out.recorded_state_violations;
        const auto& L = rec.ledgers[k];
        if (L.min_entry() < 0.0) ++out.negative_increments;
        for (std::size_t i = 0; i < n; ++i) {
          if (L.pair_value(i, i) != 0.0) ++out.diagonal_violations;
          for (std::size_t j = i + 1; j < n; ++j) {
            if (L.pair_value(i, j) != L.pair_value(j, i)) ++out.symmetry_violations;
          }
        }
        if (k > 0) {
          const auto& P = rec.ledgers[k - 1];
          for (std::size_t i = 0; i < n; ++i) {
            if (L.cap_plus[i] < P.cap_plus[i] || L.cap_minus[i] < P.cap_minus[i]) ++out.monotonicity_violations;
            for (std::size_t j = i + 1; j < n; ++j) {
              if (L.pair_value(i, j) < P.pair_value(i, j)) ++out.monotonicity_violations;
            }
          }
        }
      }
    }
    return out;
  }();
  return runs;
}

Outcome criterion_1() {
  const auto& r = invariant_runs();
  const bool pass = r.trajectories == 100 && r.state_violations == 0 && r.radius_violations == 0 &&
                    r.recorded_state_violations == 0;
  return {pass, fmt("%zu trajectories, %zu steps, %zu recorded states; hard-core violations %zu, "
                    "radius violations %zu, recorded-state violations %zu",
                    r.trajectories, r.steps, r.records, r.state_violations, r.radius_violations,
                    r.recorded_state_violations)};
}

Outcome criterion_2() {
  const auto& r = invariant_runs();
  const bool pass = r.positive_increments > 0 && r.inactive_increments == 0 && r.negative_increments == 0 &&
                    r.monotonicity_violations == 0 && r.symmetry_violations == 0 && r.diagonal_violations == 0;
  return {pass, fmt("%zu positive increments, worst stretched gap %.3g; inactive %zu, negative %zu, "
                    "non-monotone %zu, asymmetric %zu, diagonal %zu",
                    r.positive_increments, r.worst_active_gap, r.inactive_increments, r.negative_increments,
                    r.monotonicity_violations, r.symmetry_violations, r.diagonal_violations)};
}

// ---------------------------------------------------------------------------
// 3

Outcome criterion_3() {
  const std::vector<double> sigmas{0.5, 1.0, 2.0};
  const std::size_t n = 10;
  std::size_t steps = 0;
  std::size_t contact_steps = 0;
  std::size_t failures = 0;
  double worst = 0.0;
  double min_coeff = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < 10; ++t) {
    const double sigma = sigmas[t % 3];
    const auto p = model(sigma, 0.2, 0.8, 2);
    const PenalizationSpec spec(p);
    SamplerOptions so;
    so.burn_in = 200;
    const auto init = draw_fixed_n(p, spec, n, 1, derive_seed(303, t), so).front();
    SimulateOptions opt;
    opt.record_stride = 10000;
    opt.step.debug_checks = true;
    opt.observer = [&](std::size_t, const StepResult& r) {
      ++steps;
      const StateVector disp = to_flat(r.next) - to_flat(r.proposal);
      const auto z = sigma_stretch(r.next, sigma);
      std::vector<StateVector> cols;
      for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(4 * i);
        for (std::size_t j = i + 1; j < n; ++j) {
          if (pair_gap(z[i], z[j], sigma) > 1e-9) continue;
          const auto jj = static_cast<Eigen::Index>(4 * j);
          StateVector c = StateVector::Zero(static_cast<Eigen::Index>(4 * n));
          const Vec3 dir = (r.next[i].center - r.next[j].center) / (r.next[i].radius + r.next[j].radius);
          c.segment<3>(ii) = dir;
          c.segment<3>(jj) = -dir;
          c[ii + 3] = -sigma * sigma;
          c[jj + 3] = -sigma * sigma;
          cols.push_back(c);
        }
        if ((p.r_plus - r.next[i].radius) / sigma <= 1e-9) {
          StateVector c = StateVector::Zero(static_cast<Eigen::Index>(4 * n));
          c[ii + 3] = -1.0;
          cols.push_back(c);
        }
        if ((r.next[i].radius - p.r_minus) / sigma <= 1e-9) {
          StateVector c = StateVector::Zero(static_cast<Eigen::Index>(4 * n));
          c[ii + 3] = 1.0;
          cols.push_back(c);
        }
      }
      double residual = disp.cwiseAbs().maxCoeff();
      if (!cols.empty()) {
        ++contact_steps;
        Eigen::MatrixXd A(4 * n, cols.size());
        for (std::size_t c = 0; c < cols.size(); ++c) A.col(static_cast<Eigen::Index>(c)) = cols[c];
        const Eigen::VectorXd coeff = A.colPivHouseholderQr().solve(disp);
        residual = (A * coeff - disp).norm();
        min_coeff = std::min(min_coeff, coeff.minCoeff());
      }
      worst = std::max(worst, residual);
      if (residual > 1e-8) ++failures;
    };
    simulate(init, 1.0, 1e-4, spec, p, derive_seed(404, t), opt);
  }
  return {failures == 0 && contact_steps > 0,
          fmt("%zu steps (%zu with contacts), worst residual %.3g, smallest coefficient %.3g, failures %zu",
              steps, contact_steps, worst, min_coeff, failures)};
}

// ---------------------------------------------------------------------------
// 4

Outcome criterion_4() {
  Random rng(4444);
  std::size_t two = 0;
  std::size_t three = 0;
  std::size_t mismatches = 0;
  double worst = 0.0;
  auto perturb = [&](const Configuration& from, const ModelParams& p, double scale) {
    Configuration raw = from;
    for (auto& g : raw) {
      g.center += scale * Vec3(rng.normal(), rng.normal(), rng.normal());
      g.radius += scale * rng.normal();
    }
    return raw;
  };
  while (two < 200) {
    const auto p = model(rng.uniform(0.5, 2.0), 0.4, 1.0, 2);
    const double lo = p.r_minus / p.sigma;
    const double hi = p.r_plus / p.sigma;
    Configuration from;
    from.push_back({Vec3::Zero(), rng.uniform(lo, hi)});
    const double rho = rng.uniform(lo, hi);
    const Vec3 u = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
    from.push_back({u * (p.sigma * (from[0].radius + rho) + rng.uniform(0.0, 0.05)), rho});
    const double bound = 0.5 * exterior_sphere_constant(p);
    const auto raw = perturb(from, p, 0.15 * bound);
    if (pair_displacement(from, raw) >= bound || allowed(sigma_unstretch(raw, p.sigma), p)) continue;
    const auto lib = project_to_allowed(from, raw, p).projected;
    const auto ref = oracle::two_globule_grid_projection(raw, p.sigma, p.r_minus, p.r_plus, 0.0, 1e-10);
    const double err = (to_flat(lib) - to_flat(ref)).norm();
    worst = std::max(worst, err);
    if (err > 1e-6) ++mismatches;
    ++two;
  }
  while (three < 50) {
    const auto p = model(rng.uniform(0.5, 2.0), 0.4, 1.0, 2);
    const double lo = p.r_minus / p.sigma;
    const double hi = p.r_plus / p.sigma;
    Configuration from;
    from.push_back({Vec3::Zero(), rng.uniform(lo, hi)});
    for (int k = 0; k < 2; ++k) {
      const auto& anchor = from[rng.index(from.size())];
      const double rho = rng.uniform(lo, hi);
      const Vec3 u = Vec3(rng.normal(), rng.normal(), rng.normal()).normalized();
      from.push_back({anchor.center + u * (p.sigma * (anchor.radius + rho) + rng.uniform(0.0, 0.03)), rho});
    }
    if (!allowed(sigma_unstretch(from, p.sigma), p)) continue;
    const double bound = 0.5 * exterior_sphere_constant(p);
    const auto raw = perturb(from, p, 0.15 * bound);
    if (pair_displacement(from, raw) >= bound || allowed(sigma_unstretch(raw, p.sigma), p)) continue;
    const auto lib = project_to_allowed(from, raw, p).projected;
    const oracle::KktProblem kkt{3, p.sigma, p.r_minus, p.r_plus, 0.0};
    const auto best = kkt.solve(oracle::flat(raw), kkt.all_constraints());
    if (!best) {
      ++mismatches;
    } else {
      const double err = (to_flat(lib) - best->z).norm();
      worst = std::max(worst, err);
      if (err > 1e-6) ++mismatches;
    }
    ++three;
  }
  return {mismatches == 0, fmt("%zu two-globule and %zu three-globule proposals, worst distance %.3g, mismatches %zu",
                               two, three, worst, mismatches)};
}

// ---------------------------------------------------------------------------
// 5

Outcome criterion_5() {
  const auto p = model(1.0, 0.4, 1.0, 2);
  const PenalizationSpec spec(p);
  const std::size_t n = 6;
  const double dt = 5e-4;
  SamplerOptions so;
  so.burn_in = 500;
  Configuration c = draw_fixed_n(p, spec, n, 1, 55, so).front();
  const CounterNormal noise(5555);
  const oracle::KktProblem kkt{n, 1.0, p.r_minus, p.r_plus, 1e-12};
  double worst_state = 0.0;
  double worst_lt = 0.0;
  std::size_t contact_steps = 0;
  std::size_t unsolved = 0;
  const std::size_t steps = 10000;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto drive = DriveIncrements::generate(noise, k, n, dt);
    const auto lib = step(c, dt, drive, spec, p);

    // Direct normal reflection in the original coordinates.
    Eigen::VectorXd raw(4 * n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto g = psi_gradient(spec, c[i]);
      const auto ii = static_cast<Eigen::Index>(4 * i);
      raw.segment<3>(ii) = c[i].center - 0.5 * g.center * dt + drive.center[i];
      raw[ii + 3] = c[i].radius - 0.5 * g.radius * dt + drive.radius[i];
    }
    bool feasible = true;
    for (const auto& con : kkt.all_constraints()) feasible = feasible && kkt.value(raw, con) >= 0.0;
    Eigen::VectorXd z = raw;
    std::map<std::pair<std::size_t, std::size_t>, double> pair_lt;
    std::vector<double> plus(n, 0.0);
    std::vector<double> minus(n, 0.0);
    if (!feasible) {
      std::optional<oracle::KktSolution> sol;
      for (double reach : {0.05, 0.2}) {
        sol = kkt.solve(raw, kkt.near(raw, reach));
        if (sol) break;
      }
      if (!sol) {
        ++unsolved;
        c = lib.next;
        continue;
      }
      ++contact_steps;
      z = sol->z;
      for (std::size_t a = 0; a < sol->active.size(); ++a) {
        const auto& con = sol->active[a];
        if (con.kind == oracle::Kind::pair) pair_lt[{con.i, con.j}] += sol->mu[a];
        if (con.kind == oracle::Kind::cap_plus) plus[con.i] += sol->mu[a];
        if (con.kind == oracle::Kind::cap_minus) minus[con.i] += sol->mu[a];
      }
    }
    for (std::size_t i = 0; i < n; ++i) {
      z[static_cast<Eigen::Index>(4 * i + 3)] =
          std::clamp(z[static_cast<Eigen::Index>(4 * i + 3)], p.r_minus, p.r_plus);
    }
    worst_state = std::max(worst_state, (to_flat(lib.next) - z).cwiseAbs().maxCoeff());
    for (std::size_t i = 0; i < n; ++i) {
      worst_lt = std::max(worst_lt, std::abs(lib.dL.cap_plus[i] - plus[i]));
      worst_lt = std::max(worst_lt, std::abs(lib.dL.cap_minus[i] - minus[i]));
      for (std::size_t j = i + 1; j < n; ++j) {
        const auto it = pair_lt.find({i, j});
        const double direct = it == pair_lt.end() ? 0.0 : it->second;
        worst_lt = std::max(worst_lt, std::abs(lib.dL.pair_value(i, j) - direct));
      }
    }
    c = lib.next;
  }
  const bool pass = unsolved == 0 && contact_steps > 0 && worst_state <= 1e-12 && worst_lt <= 1e-12;
  return {pass, fmt("%zu steps, %zu with contacts; worst state difference %.3g, worst local-time difference %.3g, "
                    "unsolved %zu",
                    steps, contact_steps, worst_state, worst_lt, unsolved)};
}

// ---------------------------------------------------------------------------
// 6

Outcome criterion_6() {
  const auto p = model(1.0, 1.0, 2.0, 5);
  const PenalizationSpec spec(p);
  Configuration c;
  c.push_back({Vec3::Zero(), 1.5});
  const double dt = 1e-4;
  const std::size_t per_sample = 10000;  // one time unit
  const std::size_t samples = 10000;
  std::vector<double> radii;
  radii.reserve(samples);
  // Chunks keep the recorded history short.
  std::uint64_t seed = 6060;
  for (std::size_t chunk = 0; chunk < 100; ++chunk) {
    SimulateOptions opt;
    opt.record_stride = per_sample;
    const auto rec = simulate(c, 100.0, dt, spec, p, derive_seed(seed, chunk), opt);
    for (std::size_t k = 1; k < rec.size(); ++k) radii.push_back(rec.states[k][0].radius);
    c = rec.states.back();
  }
  const auto ks = ks_uniform(radii, p.r_minus, p.r_plus);
  return {ks.p_value > 0.01 && radii.size() == samples,
          fmt("%zu samples, KS statistic %.4f, p-value %.3f", radii.size(), ks.statistic, ks.p_value)};
}

// ---------------------------------------------------------------------------
// 7

Outcome criterion_7() {
  auto p = model(1.0, 0.5, 1.0, 2);
  p.external.push_back({Vec3(0.9, 0, 0), 0.3});
  const double R = 0.4;
  const auto w = WindowSpec::ball(R);
  const auto est = partition_function_oracle(w, p, 1);
  SamplerOptions opt;
  BirthDeathMoveChain chain(HardPoissonTarget{w, p}, opt, 7777);
  chain.sweeps(1000);

  std::vector<double> empty;
  empty.reserve(100000);
  for (int s = 0; s < 100000; ++s) {
    chain.sweep();
    if (chain.state().current.size() > 1) return {false, "window admitted two globules"};
    empty.push_back(chain.state().current.empty() ? 1.0 : 0.0);
  }
  const auto [p0, se0] = batch_mean(empty);
  const double z0 = std::abs(p0 - est.probability(0)) / se0;
  const bool count_ok = z0 <= 3.0;

  // Five cells: empty, then inner/outer equal-volume shell by lower/upper radius half.
  const double r_split = R / std::cbrt(2.0);
  const double r_mid = 0.5 * (p.r_minus + p.r_plus);
  auto cell = [&](const Configuration& c) -> int {
    if (c.empty()) return 0;
    const auto& g = c[0];
    return 1 + (g.center.norm() < r_split ? 0 : 2) + (g.radius < r_mid ? 0 : 1);
  };
  // Target masses by midpoint rule on a cube grid; radii integrated exactly per point.
  std::array<double, 5> mass{1.0, 0.0, 0.0, 0.0, 0.0};
  const int m = 160;
  const double h = 2.0 * R / m;
  for (int a = 0; a < m; ++a)
    for (int b = 0; b < m; ++b)
      for (int q = 0; q < m; ++q) {
        const Vec3 x(-R + (a + 0.5) * h, -R + (b + 0.5) * h, -R + (q + 0.5) * h);
        if (x.norm() > R) continue;
        const double cap = std::min(p.r_plus, (x - p.external[0].center).norm() - p.external[0].radius);
        const double low = std::clamp(cap, p.r_minus, r_mid) - p.r_minus;
        const double high = std::clamp(cap, r_mid, p.r_plus) - r_mid;
        const int shell = x.norm() < r_split ? 0 : 2;
        mass[1 + shell] += low * h * h * h;
        mass[2 + shell] += high * h * h * h;
      }
  double total = 0.0;
  for (double v : mass) total += v;
  std::array<double, 5> pi{};
  for (int k = 0; k < 5; ++k) pi[k] = mass[k] / total;

  std::array<std::array<double, 5>, 5> counts{};
  std::array<double, 5> visits{};
  const std::size_t proposals = 2000000;
  int prev = cell(chain.state().current);
  for (std::size_t s = 0; s < proposals; ++s) {
    chain.proposal();
    const int now = cell(chain.state().current);
    counts[prev][now] += 1.0;
    visits[prev] += 1.0;
    prev = now;
  }
  double worst_z = 0.0;
  int pairs = 0;
  bool balance_ok = true;
  for (int a = 0; a < 5; ++a) {
    for (int b = a + 1; b < 5; ++b) {
      const double tab = counts[a][b] / visits[a];
      const double tba = counts[b][a] / visits[b];
      const double diff = std::abs(pi[a] * tab - pi[b] * tba);
      const double se = std::sqrt(pi[a] * pi[a] * tab * (1.0 - tab) / visits[a] +
                                  pi[b] * pi[b] * tba * (1.0 - tba) / visits[b]);
      const double z = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : 1e9);
      worst_z = std::max(worst_z, z);
      balance_ok = balance_ok && z <= 3.0;
      ++pairs;
    }
  }
  return {count_ok && balance_ok,
          fmt("P(N=0): empirical %.5f, oracle %.5f, |z| %.2f; detailed balance over %d cell pairs, worst |z| %.2f",
              p0, est.probability(0), z0, pairs, worst_z)};
}

// ---------------------------------------------------------------------------
// 8

Outcome criterion_8() {
  const auto p = model(1.0, 0.3, 0.6, 3);
  const PenalizationSpec spec(p);
  const std::size_t count = 500;
  SamplerOptions so;
  so.burn_in = 2000;
  so.thinning = 20;
  const auto starts = draw_fixed_n(p, spec, 3, count, 88, so);
  std::vector<TrajectoryRecord> ensemble;
  ensemble.reserve(count);
  SimulateOptions opt;
  opt.record_stride = 1000;
  for (std::size_t k = 0; k < count; ++k) {
    ensemble.push_back(simulate(starts[k], 1.0, 1e-4, spec, p, derive_seed(8888, k), opt));
  }
  DiagnosticsSettings d;
  d.ball_radius = 2.0;
  d.gap_scale = 0.5;
  d.pair_lo = 1.0;
  d.pair_hi = 3.0;
  std::ostringstream detail;
  bool pass = true;
  double worst = 0.0;
  int checks = 0;
  for (const auto& [name, f] : functional_library(d)) {
    for (const auto& ts : std::vector<std::vector<double>>{{0.2, 0.7}, {0.2}}) {
      const std::vector<Functional> fs(ts.size(), f);
      const auto est = reversibility_statistic(ensemble, fs, ts);
      const double z = std::abs(est.z());
      worst = std::max(worst, z);
      pass = pass && z <= 3.0;
      ++checks;
      detail << ' ' << name << '/' << ts.size() << ":z=" << fmt("%.2f", est.z());
    }
  }
  return {pass, fmt("%zu trajectories, %d checks, worst |z| %.2f;", count, checks, worst) + detail.str()};
}

// ---------------------------------------------------------------------------
// 9

Outcome criterion_9() {
  const auto p = model(1.0, 0.05, 0.65, 2);
  SamplerOptions so;
  so.burn_in = 2000;
  so.thinning = 20;
  const PenalizationSpec spec(p);
  const auto samples = draw_penalized(p, spec, 40000, 99, so);
  const std::vector<std::pair<int, std::vector<double>>> plans{
      {2, {1e-4, 2e-4, 4e-4, 7e-4, 1e-3}},
      {3, {3e-3, 6e-3, 1e-2, 2e-2, 3e-2}},
  };
  bool pass = true;
  std::ostringstream detail;
  for (const auto& [M, eps] : plans) {
    const auto r = scaling_fit_chain_probability(samples, eps, M);
    const bool ok = r.fitted && std::abs(r.fit.slope - (M - 1)) <= 0.3 && r.fit.r2 >= 0.95;
    pass = pass && ok;
    std::size_t used = 0;
    for (const auto& pt : r.points) used += pt.used ? 1 : 0;
    detail << fmt(" M=%d: slope %.3f, r2 %.3f, %zu points, P in [%.4f, %.4f];", M, r.fit.slope, r.fit.r2, used,
                  r.points.front().p_hat, r.points.back().p_hat);
  }
  return {pass, fmt("%zu samples;", samples.size()) + detail.str()};
}

// ---------------------------------------------------------------------------
// 10

Outcome criterion_10() {
  const double delta = 1.0 / 16.0;
  const double dt = 1.0 / 1024.0;

  // Interacting stationary ensemble.
  const auto p = model(1.0, 0.3, 0.6, 3);
  const PenalizationSpec spec(p);
  SamplerOptions so;
  so.burn_in = 2000;
  so.thinning = 20;
  const std::size_t count = 4000;
  const auto starts = draw_fixed_n(p, spec, 3, count, 1010, so);
  std::vector<double> moduli;
  for (std::size_t k = 0; k < count; ++k) {
    const auto rec = simulate(starts[k], 1.0, dt, spec, p, derive_seed(1011, k));
    moduli.push_back(max_modulus(rec, delta));
  }
  std::vector<double> eps;
  for (double e = 0.6; e <= 1.6 + 1e-9; e += 0.1) eps.push_back(e);
  const auto tail = scaling_fit_modulus_tail(moduli, delta, eps);
  const bool tail_ok = tail.fitted && tail.fit.slope < 0.0 && tail.fit.r2 >= 0.9 && tail.fit.points >= 3;

  // Single free globule against a Brownian oracle.
  const auto f = model(1.0, 1.0, 100.0, 20);
  const PenalizationSpec fspec(f);
  Configuration one;
  one.push_back({Vec3::Zero(), 50.0});
  const std::size_t runs = 3000;
  std::vector<double> lib;
  for (std::size_t k = 0; k < runs; ++k) {
    const auto rec = simulate(one, 0.25, dt, fspec, f, derive_seed(1012, k));
    lib.push_back(max_modulus(rec, delta));
  }
  std::mt19937_64 gen(1013);
  std::vector<double> ref;
  for (std::size_t k = 0; k < runs; ++k) ref.push_back(oracle::brownian_grid_modulus(256, dt, delta, 1.0, gen));
  bool free_ok = true;
  double worst_z = 0.0;
  std::ostringstream cmp;
  for (double e : {0.7, 0.8, 0.9}) {
    auto frac = [e](const std::vector<double>& v) {
      return static_cast<double>(std::count_if(v.begin(), v.end(), [e](double w) { return w > e; })) /
             static_cast<double>(v.size());
    };
    const double a = frac(lib);
    const double b = frac(ref);
    const double se = std::sqrt(a * (1 - a) / runs + b * (1 - b) / runs);
    const double z = se > 0.0 ? std::abs(a - b) / se : 0.0;
    worst_z = std::max(worst_z, z);
    free_ok = free_ok && z <= 3.0;
    cmp << fmt(" eps %.1f: %.4f vs %.4f;", e, a, b);
  }
  return {tail_ok && free_ok,
          fmt("stationary tail: slope %.3f, r2 %.3f over %zu points; free globule worst |z| %.2f;",
              tail.fit.slope, tail.fit.r2, tail.fit.points, worst_z) +
              cmp.str()};
}

// ---------------------------------------------------------------------------
// 11

Outcome criterion_11() {
  const auto p = model(1.0, 0.25, 0.5, 80);
  const PenalizationSpec spec(p);
  const auto rp = PathRegularityParams::from_scale(1, 2);
  const double rho = 2.0;
  std::size_t clean_runs = 0;
  std::size_t violations = 0;
  bool containment = true;
  TrajectoryRecord sample;
  for (std::uint64_t s = 0; s < 5; ++s) {
    Random rng(derive_seed(1111, s));
    Configuration c;
    const std::size_t near = 3 + s % 4;
    while (c.size() < near) {
      const Globule g{Vec3(rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5), rng.uniform(-2.5, 2.5)),
                      rng.uniform(p.r_minus, p.r_plus)};
      bool ok = true;
      for (const auto& h : c) ok = ok && disjoint(g, h);
      if (ok) c.push_back(g);
    }
    c.push_back({Vec3(47, 0, 0), 0.4});
    c.push_back({Vec3(0, 58.5, 0), 0.3});
    const auto rec = simulate(c, 1.0, 1.0 / 512.0, spec, p, derive_seed(1112, s));
    const auto rep = localization_sets(rec, rp, rho);
    containment = containment && rep.containment_ok;
    violations += rep.nesting_failures.size() + rep.interactions.size();
    if (rep.clean()) ++clean_runs;
    if (s == 0) sample = rec;
  }

  // Injected interaction: the outermost globule, outside J from slot 3 on,
  // visits the core during slot 6.
  auto teleport = sample;
  const std::size_t far = teleport.globule_count() - 1;
  for (std::size_t a = 200; a < 210; ++a) {
    teleport.states[a][far].center = teleport.states[a][0].center + Vec3(1.2, 0, 0);
  }
  const auto tele = localization_sets(teleport, rp, rho);
  const bool tele_found = !tele.interactions.empty();

  // Injected nesting failure: an outsider at slot 0 is inside the ball at slot 1.
  auto enter = sample;
  const std::size_t outsider = enter.globule_count() - 1;
  enter.states[0][outsider].center = Vec3(0, 70, 0);
  enter.states[32][outsider].center = Vec3(0, 40, 0);
  const auto nest = localization_sets(enter, rp, rho);
  const bool nest_found = !nest.nested;

  const bool pass = clean_runs == 5 && violations == 0 && tele_found && nest_found && containment;
  return {pass, fmt("%zu of 5 clean runs, %zu violations; injected interaction detected: %s, injected nesting "
                    "failure detected: %s",
                    clean_runs, violations, tele_found ? "yes" : "no", nest_found ? "yes" : "no")};
}

// ---------------------------------------------------------------------------
// 12

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome criterion_12() {
  const auto root = fs::temp_directory_path() / "globules_acceptance_12";
  fs::remove_all(root);
  const auto config = load_config(GLOBULES_TEST_DATA_DIR "/determinism.ini");
  const auto a = run_experiment(config, root / "a");
  const auto b = run_experiment(config, root / "b");
  std::size_t files = 0;
  std::size_t differ = 0;
  for (const auto& entry : fs::directory_iterator(root / "a")) {
    ++files;
    if (slurp(entry.path()) != slurp(root / "b" / entry.path().filename())) ++differ;
  }

  const auto p = model(2.0, 0.2, 0.8, 2);
  const PenalizationSpec spec(p);
  SamplerOptions so;
  so.burn_in = 200;
  auto once = [&] {
    const auto init = draw_fixed_n(p, spec, 8, 1, 12, so).front();
    SimulateOptions opt;
    opt.record_stride = 5;
    std::ostringstream os;
    write_trajectory(os, simulate(init, 0.5, 1e-3, spec, p, 1212, opt));
    return os.str();
  };
  const bool direct_same = once() == once();
  fs::remove_all(root);
  return {files >= 3 && differ == 0 && direct_same && a.trajectory_files.size() == b.trajectory_files.size(),
          fmt("%zu experiment files compared, %zu differ; direct simulate/write repeat identical: %s", files,
              differ, direct_same ? "yes" : "no")};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Outcome()>> criteria{
      criterion_1, criterion_2, criterion_3, criterion_4,  criterion_5,  criterion_6,
      criterion_7, criterion_8, criterion_9, criterion_10, criterion_11, criterion_12,
  };
  std::set<int> selected;
  for (int a = 1; a < argc; ++a) selected.insert(std::atoi(argv[a]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k + 1);
    if (!selected.empty() && !selected.count(id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome out;
    try {
      out = criteria[k]();
    } catch (const std::exception& e) {
      out = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::cout << "criterion " << id << ": " << (out.pass ? "PASS" : "FAIL") << ": " << out.detail
              << fmt(" (%.1f s)", secs) << std::endl;
    if (!out.pass) ++failed;
  }
  return failed == 0 ? 0 : 1;
}
