#pragma once

// Path functionals and statistics on trajectories and configurations:
// moduli of continuity, epsilon-chains, nice-path membership, localization
// index sets, the reversibility statistic, and scaling-law fits.

#include <globules/core.hpp>
#include <globules/dynamics.hpp>
#include <globules/error.hpp>
#include <globules/penalization.hpp>
#include <globules/sampler.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

namespace globules {

class ChainSearchOverflow : public std::runtime_error {
 public:
  explicit ChainSearchOverflow(std::uint64_t expansions)
      : std::runtime_error("chain search exceeded " + std::to_string(expansions) + " expansions") {}
};

class InsufficientEnsembleError : public ParameterError {
 public:
  InsufficientEnsembleError(std::size_t have, std::size_t need)
      : ParameterError("ensemble of " + std::to_string(have) + " trajectories is too small; use at least " +
                       std::to_string(need) + " (500 or more for 3-standard-error comparisons)") {}
};

// ---------------------------------------------------------------------------
// Parameters

struct PathRegularityParams {
  double delta = 1.0 / 16.0;
  double epsilon = 0.5;        // modulus threshold
  double chain_epsilon = 0.5;  // chain threshold
  int M = 2;
  int m = 1;
  double kappa = 0.25;

  /// delta = 2^{-4m}, modulus threshold 2^3 / 2^m, chain threshold 2^6 / 2^m.
  static PathRegularityParams from_scale(int m, int M) {
    if (m < 1 || M < 2) {
      throw ParameterError("scale needs m >= 1 and M >= 2");
    }
    PathRegularityParams p;
    p.m = m;
    p.M = M;
    p.delta = std::ldexp(1.0, -4 * m);
    p.epsilon = std::ldexp(1.0, 3 - m);
    p.chain_epsilon = std::ldexp(1.0, 6 - m);
    return p;
  }

  void validate() const {
    if (!(delta > 0.0 && delta <= 1.0)) throw ParameterError("delta must lie in (0, 1]");
    if (!(epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (!(chain_epsilon > 0.0)) throw ParameterError("chain_epsilon must be positive");
    if (M < 2) throw ParameterError("M must be at least 2");
  }
};

/// ell(m) = (1 + 3 r_plus) M 2^{4m}.
inline double scale_ell(int m, int M, double r_plus) {
  return (1.0 + 3.0 * r_plus) * M * std::ldexp(1.0, 4 * m);
}

/// v_{k,m} = rho + (1 + 3 r_plus M) 2^{4m} - 3 r_plus M k.
inline double localization_radius(double rho, int k, int m, int M, double r_plus) {
  return rho + (1.0 + 3.0 * r_plus * M) * std::ldexp(1.0, 4 * m) - 3.0 * r_plus * M * k;
}

// ---------------------------------------------------------------------------
// Modulus of continuity

namespace detail {

inline double joint_distance(const Globule& a, const Globule& b) {
  const double dr = a.radius - b.radius;
  return std::sqrt((a.center - b.center).squaredNorm() + dr * dr);
}

inline double grid_spacing(const TrajectoryRecord& traj) {
  if (traj.size() < 2) {
    throw ParameterError("trajectory needs at least two grid points");
  }
  const double h = traj.times[1] - traj.times[0];
  for (std::size_t k = 1; k < traj.size(); ++k) {
    if (std::abs(traj.times[k] - traj.times[k - 1] - h) > 1e-9 * std::max(1.0, h)) {
      throw ParameterError("trajectory grid is not uniform");
    }
  }
  return h;
}

/// Grid index of time t; throws if t is not a grid point.
inline std::size_t grid_index(const TrajectoryRecord& traj, double t) {
  const auto it = std::lower_bound(traj.times.begin(), traj.times.end(), t - 1e-9);
  if (it == traj.times.end() || std::abs(*it - t) > 1e-9) {
    throw ParameterError("time " + std::to_string(t) + " is not on the trajectory grid");
  }
  return static_cast<std::size_t>(it - traj.times.begin());
}

}  // namespace detail

/// sup over grid pairs |t - s| <= delta of the joint (center, radius)
/// displacement of globule i.
inline double modulus_of_continuity(const TrajectoryRecord& traj, std::size_t i, double delta) {
  if (i >= traj.globule_count()) {
    throw ParameterError("unknown globule index " + std::to_string(i));
  }
  if (!(delta > 0.0)) {
    throw ParameterError("delta must be positive");
  }
  double w = 0.0;
  const double slack = 1e-9 * std::max(1.0, delta);
  for (std::size_t a = 0; a < traj.size(); ++a) {
    for (std::size_t b = a + 1; b < traj.size() && traj.times[b] - traj.times[a] <= delta + slack; ++b) {
      w = std::max(w, detail::joint_distance(traj.states[a][i], traj.states[b][i]));
    }
  }
  return w;
}

/// max_i of the modulus over all globules.
inline double max_modulus(const TrajectoryRecord& traj, double delta) {
  double w = 0.0;
  for (std::size_t i = 0; i < traj.globule_count(); ++i) {
    w = std::max(w, modulus_of_continuity(traj, i, delta));
  }
  return w;
}

// ---------------------------------------------------------------------------
// Chains

struct ChainReport {
  bool found = false;
  std::vector<std::size_t> witness;
};

namespace detail {

/// Surface gap between globules a and b.
inline double surface_gap(const Globule& a, const Globule& b) {
  return (a.center - b.center).norm() - a.radius - b.radius;
}

/// DFS for a simple path of M vertices in the graph whose edges satisfy
/// `edge(gap)`.
template <class Edge>
ChainReport chain_search(const Configuration& c, int M, Edge&& edge, std::uint64_t max_expansions) {
  if (M < 2) {
    throw ParameterError("chains need M >= 2");
  }
  ChainReport report;
  const std::size_t n = c.size();
  if (n < static_cast<std::size_t>(M)) {
    return report;
  }
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      if (edge(surface_gap(c[a], c[b]))) {
        adj[a].push_back(b);
        adj[b].push_back(a);
      }
    }
  }
  // Only vertices in a component of at least M vertices can start a chain.
  std::vector<std::size_t> comp(n, n);
  std::vector<std::size_t> comp_size;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != n) continue;
    const std::size_t id = comp_size.size();
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    std::size_t size = 0;
    while (!stack.empty()) {
      const auto v = stack.back();
      stack.pop_back();
      ++size;
      for (auto w : adj[v]) {
        if (comp[w] == n) {
          comp[w] = id;
          stack.push_back(w);
        }
      }
    }
    comp_size.push_back(size);
  }

  std::vector<bool> on_path(n, false);
  std::vector<std::size_t> path;
  std::uint64_t expansions = 0;
  std::function<bool(std::size_t)> dfs = [&](std::size_t v) {
    if (++expansions > max_expansions) {
      throw ChainSearchOverflow(max_expansions);
    }
    path.push_back(v);
    on_path[v] = true;
    if (path.size() == static_cast<std::size_t>(M)) {
      return true;
    }
    for (auto w : adj[v]) {
      if (!on_path[w] && dfs(w)) {
        return true;
      }
    }
    on_path[v] = false;
    path.pop_back();
    return false;
  };
  // Low-degree starts first: an endpoint of a simple path often has degree 1.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return adj[a].size() < adj[b].size(); });
  for (auto s : order) {
    if (comp_size[comp[s]] < static_cast<std::size_t>(M) || adj[s].empty()) continue;
    if (dfs(s)) {
      report.found = true;
      report.witness = path;
      return report;
    }
  }
  return report;
}

}  // namespace detail

/// M distinct globules i_1..i_M with consecutive surface gaps below epsilon.
inline ChainReport detect_chain(const Configuration& c, double epsilon, int M,
                                std::uint64_t max_expansions = 10'000'000) {
  return detail::chain_search(c, M, [epsilon](double gap) { return gap < epsilon; }, max_expansions);
}

/// Smallest e such that detect_chain(c, eps, M) succeeds for every eps > e:
/// the least bottleneck gap over simple M-vertex paths. +inf if n < M.
inline double chain_threshold(const Configuration& c, int M,
                              std::uint64_t max_expansions = 10'000'000) {
  std::vector<double> gaps;
  for (std::size_t a = 0; a < c.size(); ++a) {
    for (std::size_t b = a + 1; b < c.size(); ++b) {
      gaps.push_back(detail::surface_gap(c[a], c[b]));
    }
  }
  std::sort(gaps.begin(), gaps.end());
  gaps.erase(std::unique(gaps.begin(), gaps.end()), gaps.end());
  const double inf = std::numeric_limits<double>::infinity();
  if (c.size() < static_cast<std::size_t>(M) || gaps.empty()) {
    return inf;
  }
  auto ok = [&](std::size_t k) {
    const double g = gaps[k];
    return detail::chain_search(c, M, [g](double gap) { return gap <= g; }, max_expansions).found;
  };
  if (!ok(gaps.size() - 1)) {
    return inf;
  }
  std::size_t lo = 0;
  std::size_t hi = gaps.size() - 1;
  while (lo < hi) {
    const std::size_t mid = lo + (hi - lo) / 2;
    if (ok(mid)) {
      hi = mid;
    } else {
      lo = mid + 1;
    }
  }
  return gaps[lo];
}

// ---------------------------------------------------------------------------
// Nice paths

struct NicePathResult {
  bool modulus_ok = true;  // every globule's delta-modulus <= epsilon
  bool chain_free = true;  // no chain_epsilon-chain of M globules at any time delta k
};

namespace detail {

/// Number of grid steps per delta; the grid must refine delta by at least
/// `min_refinement` and T / delta must be an integer.
inline std::size_t steps_per_delta(const TrajectoryRecord& traj, double delta,
                                   std::size_t min_refinement = 16) {
  const double h = grid_spacing(traj);
  const double r = delta / h;
  const auto k = static_cast<std::size_t>(std::llround(r));
  if (k < min_refinement || std::abs(r - static_cast<double>(k)) > 1e-6 * r) {
    throw ParameterError("trajectory grid must refine delta by an integer factor of at least " +
                         std::to_string(min_refinement));
  }
  const double slots = traj.times.back() / delta;
  if (std::abs(slots - std::round(slots)) > 1e-6 * std::max(1.0, slots)) {
    throw ParameterError("T / delta must be an integer");
  }
  return k;
}

}  // namespace detail

inline NicePathResult nice_path_membership(const TrajectoryRecord& traj,
                                           const PathRegularityParams& p) {
  p.validate();
  const std::size_t per = detail::steps_per_delta(traj, p.delta);
  NicePathResult out;
  out.modulus_ok = max_modulus(traj, p.delta) <= p.epsilon;
  for (std::size_t a = 0; a < traj.size(); a += per) {
    if (detect_chain(traj.states[a], p.chain_epsilon, p.M).found) {
      out.chain_free = false;
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Localization index sets

struct InteractionViolation {
  std::size_t i = 0;  // in J_k
  std::size_t j = 0;  // outside J_k
  std::size_t k = 0;  // slot
  double time = 0.0;
  double gap = 0.0;
};

struct LocalizationReport {
  std::vector<std::vector<std::size_t>> J;  // J[k], sorted
  std::vector<std::size_t> core;            // {i : |X_i(0)| <= rho}
  bool nested = true;
  std::vector<std::size_t> nesting_failures;  // k with J[k+1] not within J[k] (k = K-1: core)
  std::vector<InteractionViolation> interactions;
  double v0 = 0.0;
  double ell_m = 0.0;
  bool containment_ok = true;  // v_{0,m} <= ell(m) - 2 r_plus

  bool clean() const { return nested && interactions.empty(); }
};

namespace detail {

/// {i : |x_i| <= v} together with every globule of an eps-proximity
/// component (at least two globules) containing a sphere that meets B(0, v).
inline std::vector<std::size_t> index_set(const Configuration& c, double v, double eps) {
  const std::size_t n = c.size();
  std::vector<std::size_t> comp(n, n);
  std::vector<std::vector<std::size_t>> members;
  for (std::size_t s = 0; s < n; ++s) {
    if (comp[s] != n) continue;
    const std::size_t id = members.size();
    members.emplace_back();
    std::vector<std::size_t> stack{s};
    comp[s] = id;
    while (!stack.empty()) {
      const auto a = stack.back();
      stack.pop_back();
      members[id].push_back(a);
      for (std::size_t b = 0; b < n; ++b) {
        if (comp[b] == n && surface_gap(c[a], c[b]) < eps) {
          comp[b] = id;
          stack.push_back(b);
        }
      }
    }
  }
  std::vector<bool> in(n, false);
  for (const auto& group : members) {
    bool meets = false;
    for (auto a : group) meets = meets || c[a].center.norm() - c[a].radius <= v;
    for (auto a : group) {
      in[a] = c[a].center.norm() <= v || (meets && group.size() >= 2);
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < n; ++i) {
    if (in[i]) out.push_back(i);
  }
  return out;
}

}  // namespace detail

inline LocalizationReport localization_sets(const TrajectoryRecord& traj,
                                            const PathRegularityParams& p, double rho) {
  p.validate();
  const std::size_t per = detail::steps_per_delta(traj, p.delta, 1);
  const auto slots = static_cast<std::size_t>(std::llround(traj.times.back() / p.delta));
  const double r_plus = traj.params.r_plus;
  const double separation = 32.0 * p.delta;

  LocalizationReport rep;
  rep.v0 = localization_radius(rho, 0, p.m, p.M, r_plus);
  rep.ell_m = scale_ell(p.m, p.M, r_plus);
  rep.containment_ok = rep.v0 <= rep.ell_m - 2.0 * r_plus;

  const Configuration& start = traj.states.front();
  for (std::size_t i = 0; i < start.size(); ++i) {
    if (start[i].center.norm() <= rho) rep.core.push_back(i);
  }
  for (std::size_t k = 0; k < slots; ++k) {
    const double v = localization_radius(rho, static_cast<int>(k), p.m, p.M, r_plus);
    rep.J.push_back(detail::index_set(traj.states[k * per], v, p.chain_epsilon));
  }
  auto subset = [](const std::vector<std::size_t>& a, const std::vector<std::size_t>& b) {
    return std::includes(b.begin(), b.end(), a.begin(), a.end());
  };
  for (std::size_t k = 0; k + 1 < slots; ++k) {
    if (!subset(rep.J[k + 1], rep.J[k])) rep.nesting_failures.push_back(k);
  }
  if (slots > 0 && !subset(rep.core, rep.J.back())) {
    rep.nesting_failures.push_back(slots - 1);
  }
  rep.nested = rep.nesting_failures.empty();

  const std::size_t n = traj.globule_count();
  for (std::size_t k = 0; k < slots; ++k) {
    std::vector<bool> member(n, false);
    for (auto i : rep.J[k]) member[i] = true;
    for (std::size_t a = k * per; a <= (k + 1) * per && a < traj.size(); ++a) {
      const auto& c = traj.states[a];
      for (auto i : rep.J[k]) {
        for (std::size_t j = 0; j < n; ++j) {
          if (member[j]) continue;
          const double gap = detail::surface_gap(c[i], c[j]);
          if (!(gap > separation)) {
            rep.interactions.push_back({i, j, k, traj.times[a], gap});
          }
        }
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// Test functionals

using Functional = std::function<double(const Configuration&)>;

namespace detail {

/// C^1 step: 1 below a - w, 0 above a + w.
inline double smooth_step_down(double s, double a, double w) {
  const double t = std::clamp((s - (a - w)) / (2.0 * w), 0.0, 1.0);
  return 1.0 - t * t * (3.0 - 2.0 * t);
}

}  // namespace detail

/// Smoothed number of centers in B(0, R).
struct SmoothedBallCount {
  double R = 1.0;
  double width = 0.1;
  double operator()(const Configuration& c) const {
    double s = 0.0;
    for (const auto& g : c) s += detail::smooth_step_down(g.center.norm(), R, width);
    return s;
  }
};

/// exp(-min surface gap / scale), 0 for fewer than two globules.
struct SmoothedMinGap {
  double scale = 0.5;
  double operator()(const Configuration& c) const {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = a + 1; b < c.size(); ++b)
        best = std::min(best, detail::surface_gap(c[a], c[b]));
    return std::isfinite(best) ? std::exp(-std::max(best, 0.0) / scale) : 0.0;
  }
};

/// Smoothed count of pairs whose center distance lies in [lo, hi].
struct PairDistanceBin {
  double lo = 1.0;
  double hi = 2.0;
  double width = 0.1;
  double operator()(const Configuration& c) const {
    double s = 0.0;
    for (std::size_t a = 0; a < c.size(); ++a)
      for (std::size_t b = a + 1; b < c.size(); ++b) {
        const double d = (c[a].center - c[b].center).norm();
        s += detail::smooth_step_down(d, hi, width) * (1.0 - detail::smooth_step_down(d, lo, width));
      }
    return s;
  }
};

// ---------------------------------------------------------------------------
// Reversibility

struct ReversibilityEstimate {
  double forward = 0.0;
  double backward = 0.0;
  double stderr_forward = 0.0;
  double stderr_backward = 0.0;
  double stderr = 0.0;  // of forward - backward, paired
  std::size_t trajectories = 0;

  double z() const {
    const double d = forward - backward;
    return stderr > 0.0 ? d / stderr : (d == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
  }
};

namespace detail {

/// Delete-one jackknife standard error of a sample mean.
inline double jackknife_stderr(const std::vector<double>& x) {
  const auto n = static_cast<double>(x.size());
  const double total = std::accumulate(x.begin(), x.end(), 0.0);
  double ss = 0.0;
  const double mean = total / n;
  for (double v : x) {
    const double loo = (total - v) / (n - 1.0);
    ss += (loo - mean) * (loo - mean);
  }
  return std::sqrt((n - 1.0) / n * ss);
}

}  // namespace detail

/// E[prod_i f_i(X(t_i))] against E[prod_i f_i(X(T - t_i))] over an ensemble
/// of stationary-start trajectories.
inline ReversibilityEstimate reversibility_statistic(const std::vector<TrajectoryRecord>& ensemble,
                                                     const std::vector<Functional>& fs,
                                                     const std::vector<double>& ts,
                                                     std::size_t min_size = 30) {
  if (ensemble.size() < min_size) {
    throw InsufficientEnsembleError(ensemble.size(), min_size);
  }
  if (fs.size() != ts.size() || fs.empty()) {
    throw ParameterError("need one time per functional");
  }
  std::vector<double> fwd;
  std::vector<double> bwd;
  std::vector<double> diff;
  for (const auto& traj : ensemble) {
    double a = 1.0;
    double b = 1.0;
    for (std::size_t q = 0; q < fs.size(); ++q) {
      a *= fs[q](traj.states[detail::grid_index(traj, ts[q])]);
      b *= fs[q](traj.states[detail::grid_index(traj, traj.T - ts[q])]);
    }
    fwd.push_back(a);
    bwd.push_back(b);
    diff.push_back(a - b);
  }
  ReversibilityEstimate out;
  out.trajectories = ensemble.size();
  const auto n = static_cast<double>(ensemble.size());
  out.forward = std::accumulate(fwd.begin(), fwd.end(), 0.0) / n;
  out.backward = std::accumulate(bwd.begin(), bwd.end(), 0.0) / n;
  out.stderr_forward = detail::jackknife_stderr(fwd);
  out.stderr_backward = detail::jackknife_stderr(bwd);
  out.stderr = detail::jackknife_stderr(diff);
  return out;
}

// ---------------------------------------------------------------------------
// Fits and tests

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r2 = 0.0;
  std::size_t points = 0;
};

inline LinearFit fit_line(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw NumericalError("a line fit needs at least two points");
  }
  const auto n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxx = 0.0;
  double sxy = 0.0;
  double syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxx += (x[k] - mx) * (x[k] - mx);
    sxy += (x[k] - mx) * (y[k] - my);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0) {
    throw NumericalError("a line fit needs distinct abscissae");
  }
  LinearFit f;
  f.slope = sxy / sxx;
  f.intercept = my - f.slope * mx;
  f.r2 = syy == 0.0 ? 1.0 : sxy * sxy / (sxx * syy);
  f.points = x.size();
  return f;
}

struct ProbabilityPoint {
  double x = 0.0;  // epsilon
  double p_hat = 0.0;
  double stderr = 0.0;
  std::size_t hits = 0;
  std::size_t samples = 0;
  bool used = false;
  std::string flag;  // "saturated", "zero", "out-of-range" or empty
};

struct ChainScalingResult {
  bool fitted = false;
  LinearFit fit;                 // log P against log epsilon
  std::vector<ProbabilityPoint> points;
  double upper_bound = 0.0;      // one-sided 95% bound when every count is zero
};

/// Chain-probability scaling from precomputed samples. Points with P >= 0.5
/// are saturated and points with no hits only give the bound 3 / samples;
/// both are left out of the fit.
inline ChainScalingResult scaling_fit_chain_probability(const std::vector<Configuration>& samples,
                                                        std::vector<double> epsilons, int M) {
  if (epsilons.size() < 4) {
    throw ParameterError("need at least 4 epsilon values");
  }
  std::sort(epsilons.begin(), epsilons.end());
  if (!(epsilons.front() > 0.0) || epsilons.back() / epsilons.front() < 10.0 * (1.0 - 1e-12)) {
    throw ParameterError("epsilon values must be positive and span at least one decade");
  }
  if (samples.empty()) {
    throw ParameterError("no samples");
  }
  std::vector<double> thresholds;
  thresholds.reserve(samples.size());
  for (const auto& c : samples) thresholds.push_back(chain_threshold(c, M));

  ChainScalingResult out;
  const auto n = static_cast<double>(samples.size());
  std::vector<double> lx;
  std::vector<double> ly;
  for (double eps : epsilons) {
    ProbabilityPoint pt;
    pt.x = eps;
    pt.samples = samples.size();
    pt.hits = static_cast<std::size_t>(
        std::count_if(thresholds.begin(), thresholds.end(), [eps](double t) { return t < eps; }));
    pt.p_hat = static_cast<double>(pt.hits) / n;
    pt.stderr = std::sqrt(pt.p_hat * (1.0 - pt.p_hat) / n);
    if (pt.hits == 0) {
      pt.flag = "zero";
    } else if (pt.p_hat >= 0.5) {
      pt.flag = "saturated";
    } else {
      pt.used = true;
      lx.push_back(std::log(eps));
      ly.push_back(std::log(pt.p_hat));
    }
    out.points.push_back(pt);
  }
  if (lx.size() >= 2) {
    out.fit = fit_line(lx, ly);
    out.fitted = true;
  } else {
    out.upper_bound = 3.0 / n;
  }
  return out;
}

/// Draws `count` mu^{ell,y} samples and fits.
inline ChainScalingResult scaling_fit_chain_probability(const ModelParams& params,
                                                        const std::vector<double>& epsilons, int M,
                                                        std::size_t count, std::uint64_t seed,
                                                        const SamplerOptions& opt = {}) {
  const PenalizationSpec spec(params);
  return scaling_fit_chain_probability(draw_penalized(params, spec, count, seed, opt), epsilons, M);
}

struct ModulusTailResult {
  bool fitted = false;
  LinearFit fit;             // log P against epsilon^2 / delta
  double decay_coefficient = 0.0;  // -slope
  std::vector<ProbabilityPoint> points;
};

/// Tail of max_i w(X_i, delta) over an ensemble, fitted where the tail
/// probability lies in [1e-3, 0.5].
inline ModulusTailResult scaling_fit_modulus_tail(const std::vector<double>& max_moduli, double delta,
                                                  std::vector<double> epsilons) {
  if (max_moduli.empty()) {
    throw ParameterError("empty ensemble");
  }
  std::sort(epsilons.begin(), epsilons.end());
  const auto n = static_cast<double>(max_moduli.size());
  ModulusTailResult out;
  std::vector<double> x;
  std::vector<double> y;
  for (double eps : epsilons) {
    ProbabilityPoint pt;
    pt.x = eps;
    pt.samples = max_moduli.size();
    pt.hits = static_cast<std::size_t>(
        std::count_if(max_moduli.begin(), max_moduli.end(), [eps](double w) { return w > eps; }));
    pt.p_hat = static_cast<double>(pt.hits) / n;
    pt.stderr = std::sqrt(pt.p_hat * (1.0 - pt.p_hat) / n);
    if (pt.p_hat >= 1e-3 && pt.p_hat <= 0.5) {
      pt.used = true;
      x.push_back(eps * eps / delta);
      y.push_back(std::log(pt.p_hat));
    } else {
      pt.flag = "out-of-range";
    }
    out.points.push_back(pt);
  }
  if (x.size() >= 2) {
    out.fit = fit_line(x, y);
    out.decay_coefficient = -out.fit.slope;
    out.fitted = true;
  }
  return out;
}

inline ModulusTailResult scaling_fit_modulus_tail(const std::vector<TrajectoryRecord>& ensemble,
                                                  double delta, const std::vector<double>& epsilons) {
  std::vector<double> w;
  w.reserve(ensemble.size());
  for (const auto& t : ensemble) w.push_back(max_modulus(t, delta));
  return scaling_fit_modulus_tail(w, delta, epsilons);
}

struct KsResult {
  double statistic = 0.0;
  double p_value = 1.0;
};

/// Asymptotic Kolmogorov tail Q(lambda) = 2 sum (-1)^{k-1} exp(-2 k^2 lambda^2).
inline double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    sum += (k % 2 == 1 ? term : -term);
    if (term < 1e-16) break;
  }
  return std::clamp(2.0 * sum, 0.0, 1.0);
}

/// One-sample KS test against a continuous CDF.
inline KsResult ks_test(std::vector<double> x, const std::function<double(double)>& cdf) {
  if (x.empty()) throw ParameterError("KS test needs data");
  std::sort(x.begin(), x.end());
  const auto n = static_cast<double>(x.size());
  double d = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double f = cdf(x[k]);
    d = std::max({d, f - static_cast<double>(k) / n, static_cast<double>(k + 1) / n - f});
  }
  const double sn = std::sqrt(n);
  return {d, kolmogorov_tail((sn + 0.12 + 0.11 / sn) * d)};
}

inline KsResult ks_uniform(std::vector<double> x, double a, double b) {
  return ks_test(std::move(x), [a, b](double v) { return std::clamp((v - a) / (b - a), 0.0, 1.0); });
}

/// Two-sample KS test.
inline KsResult ks_two_sample(std::vector<double> x, std::vector<double> y) {
  if (x.empty() || y.empty()) throw ParameterError("KS test needs data");
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t a = 0;
  std::size_t b = 0;
  double d = 0.0;
  const auto nx = static_cast<double>(x.size());
  const auto ny = static_cast<double>(y.size());
  while (a < x.size() && b < y.size()) {
    const double v = std::min(x[a], y[b]);
    while (a < x.size() && x[a] <= v) ++a;
    while (b < y.size() && y[b] <= v) ++b;
    d = std::max(d, std::abs(static_cast<double>(a) / nx - static_cast<double>(b) / ny));
  }
  const double ne = std::sqrt(nx * ny / (nx + ny));
  return {d, kolmogorov_tail((ne + 0.12 + 0.11 / ne) * d)};
}

// ---------------------------------------------------------------------------
// Report

/// Flat key/value report with an optional table of probability points.
struct DiagnosticsReport {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<ProbabilityPoint> table;

  void set(const std::string& key, const std::string& value) {
    for (auto& [k, v] : entries) {
      if (k == key) {
        v = value;
        return;
      }
    }
    entries.emplace_back(key, value);
  }
  const std::string* get(const std::string& key) const {
    for (const auto& [k, v] : entries) {
      if (k == key) return &v;
    }
    return nullptr;
  }
};

}  // namespace globules
