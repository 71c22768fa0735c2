#pragma once

// Birth-death-move Metropolis samplers for the hard globule Poisson process
// in a bounded window and for the penalized measures nu_n and mu, plus a
// tensor-grid quadrature oracle for the partition function of tiny windows.
//
// Densities are taken with respect to the unit-rate Poisson process on
// (domain) x [r_minus, r_plus]. A birth proposes a new globule with density
// h; its Metropolis-Hastings ratio is
//   w(g) p_death / (h(g) (n + 1) p_birth),
// and a death of globule g from n globules uses the reciprocal with n.

#include <globules/core.hpp>
#include <globules/error.hpp>
#include <globules/penalization.hpp>
#include <globules/rng.hpp>

#include <boost/math/special_functions/legendre.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace globules {

// ---------------------------------------------------------------------------
// Windows

struct WindowSpec {
  enum class Shape { ball, box };

  Shape shape = Shape::ball;
  Vec3 center = Vec3::Zero();  // ball
  double radius = 1.0;         // ball
  Vec3 lower = Vec3::Zero();   // box
  Vec3 upper = Vec3::Ones();   // box

  static WindowSpec ball(double R, const Vec3& c = Vec3::Zero()) {
    WindowSpec w;
    w.shape = Shape::ball;
    w.radius = R;
    w.center = c;
    w.validate();
    return w;
  }

  static WindowSpec box(const Vec3& lo, const Vec3& hi) {
    WindowSpec w;
    w.shape = Shape::box;
    w.lower = lo;
    w.upper = hi;
    w.validate();
    return w;
  }

  void validate() const {
    if (shape == Shape::ball) {
      if (!(radius > 0.0) || !std::isfinite(radius)) {
        throw ParameterError("ball window needs a positive finite radius");
      }
    } else if (!((upper - lower).minCoeff() > 0.0) || !upper.allFinite() || !lower.allFinite()) {
      throw ParameterError("box window needs upper > lower in every coordinate");
    }
  }

  double volume() const {
    if (shape == Shape::ball) {
      return 4.0 / 3.0 * std::numbers::pi * radius * radius * radius;
    }
    return (upper - lower).prod();
  }

  bool contains(const Vec3& x) const {
    if (shape == Shape::ball) {
      return (x - center).norm() <= radius;
    }
    return (x.array() >= lower.array()).all() && (x.array() <= upper.array()).all();
  }

  Vec3 sample(Random& rng) const {
    if (shape == Shape::box) {
      return Vec3(rng.uniform(lower.x(), upper.x()), rng.uniform(lower.y(), upper.y()),
                  rng.uniform(lower.z(), upper.z()));
    }
    for (;;) {
      const Vec3 u(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
      if (u.squaredNorm() <= 1.0) {
        return center + radius * u;
      }
    }
  }
};

// ---------------------------------------------------------------------------
// Chain

struct SamplerOptions {
  std::size_t burn_in = 10000;  // sweeps
  std::size_t thinning = 100;   // sweeps between retained draws
  double p_birth = 0.35;
  double p_death = 0.35;        // the remainder proposes moves
  double move_center_scale = 0.3;
  double move_radius_scale = 0.1;
  bool debug_checks = false;

  void validate() const {
    if (!(p_birth > 0.0) || !(p_death > 0.0) || !(p_birth + p_death <= 1.0)) {
      throw ParameterError("proposal mix needs p_birth, p_death > 0 and p_birth + p_death <= 1");
    }
    if (!(move_center_scale >= 0.0) || !(move_radius_scale >= 0.0)) {
      throw ParameterError("move scales must be nonnegative");
    }
    if (thinning == 0) {
      throw ParameterError("thinning must be positive");
    }
  }
};

struct AcceptanceStats {
  std::uint64_t birth_proposed = 0;
  std::uint64_t birth_accepted = 0;
  std::uint64_t death_proposed = 0;
  std::uint64_t death_accepted = 0;
  std::uint64_t move_proposed = 0;
  std::uint64_t move_accepted = 0;
};

struct SamplerState {
  Configuration current;
  std::uint64_t step_count = 0;  // proposals made
  AcceptanceStats acceptance_stats;
};

/// Whether `g` can be inserted into `c` (ignoring index `skip`) without
/// breaking the hard core, internal and external.
inline bool fits(const Configuration& c, const Globule& g, const ModelParams& params,
                 std::size_t skip = static_cast<std::size_t>(-1)) {
  if (!radius_in_range(g.radius, params)) {
    return false;
  }
  for (std::size_t k = 0; k < c.size(); ++k) {
    if (k != skip && !disjoint(c[k], g)) {
      return false;
    }
  }
  for (const auto& y : params.external) {
    if (!disjoint(g, y)) {
      return false;
    }
  }
  return true;
}

/// Uniform in the window, uniform radius: the target is the unit-rate
/// Poisson process conditioned on the hard core.
struct HardPoissonTarget {
  WindowSpec window;
  ModelParams params;

  bool in_domain(const Globule& g) const {
    return window.contains(g.center) && radius_in_range(g.radius, params);
  }
  double weight(const Globule&) const { return 1.0; }
  Globule propose(Random& rng) const {
    const Vec3 x = window.sample(rng);
    return {x, rng.uniform(params.r_minus, params.r_plus)};
  }
  double proposal_density(const Globule&) const {
    return 1.0 / (window.volume() * params.mark_measure());
  }
};

/// Radius R of the center domain B(0, R) used for the penalized measures:
/// the mass of exp(-psi) outside it is below `tail`. Beyond ell + e^{-ell}
/// the weight is exp(-2|x|), whose tail over |x| > b is
/// 4 pi e^{-2b} (b^2/2 + b/2 + 1/4) per unit of radius interval.
inline double penalized_domain_radius(const PenalizationSpec& spec, double tail = 1e-9) {
  const double span = spec.r_plus() - spec.r_minus();
  auto mass = [&](double b) {
    return 4.0 * std::numbers::pi * std::exp(-2.0 * b) * (0.5 * b * b + 0.5 * b + 0.25) * span;
  };
  double b = spec.ell() + spec.transition_width();
  while (mass(b) > tail) {
    b += 0.125;
  }
  return b;
}

/// exp(-psi) on B(0, R) x [r_minus, r_plus]. Births come from a mixture of
/// uniform on B(0, ell) (weight q) and uniform on B(0, R).
struct PenalizedTarget {
  PenalizationSpec spec;
  ModelParams params;
  double domain_radius;
  double q = 0.9;

  PenalizedTarget(const ModelParams& p, const PenalizationSpec& s)
      : spec(s), params(p), domain_radius(penalized_domain_radius(s)) {}

  bool in_domain(const Globule& g) const {
    return g.center.norm() <= domain_radius && radius_in_range(g.radius, params);
  }
  double weight(const Globule& g) const { return std::exp(-psi(spec, g)); }

  Globule propose(Random& rng) const {
    const double reach = rng.uniform() < q ? static_cast<double>(spec.ell()) : domain_radius;
    const Vec3 x = WindowSpec::ball(reach).sample(rng);
    return {x, rng.uniform(params.r_minus, params.r_plus)};
  }
  double proposal_density(const Globule& g) const {
    auto vol = [](double R) { return 4.0 / 3.0 * std::numbers::pi * R * R * R; };
    const double inner = g.center.norm() <= spec.ell() ? q / vol(spec.ell()) : 0.0;
    return (inner + (1.0 - q) / vol(domain_radius)) / params.mark_measure();
  }
};

template <class Target>
class BirthDeathMoveChain {
 public:
  BirthDeathMoveChain(Target target, const SamplerOptions& opt, std::uint64_t seed,
                      Configuration initial = {})
      : target_(std::move(target)), opt_(opt), rng_(seed) {
    opt_.validate();
    target_.params.validate(true);
    for (const auto& g : initial) {
      if (!target_.in_domain(g) || !fits(state_.current, g, target_.params)) {
        throw ParameterError("initial sampler configuration is not allowed");
      }
      state_.current.push_back(g);
    }
  }

  /// One Metropolis-Hastings proposal.
  void proposal() {
    ++state_.step_count;
    auto& c = state_.current;
    auto& st = state_.acceptance_stats;
    const double u = rng_.uniform();
    const double n = static_cast<double>(c.size());
    if (u < opt_.p_birth) {
      ++st.birth_proposed;
      const Globule g = target_.propose(rng_);
      if (!target_.in_domain(g) || !fits(c, g, target_.params)) {
        return;
      }
      const double ratio = target_.weight(g) * opt_.p_death /
                           (target_.proposal_density(g) * (n + 1.0) * opt_.p_birth);
      if (rng_.uniform() < ratio) {
        c.push_back(g);
        ++st.birth_accepted;
      }
    } else if (u < opt_.p_birth + opt_.p_death) {
      ++st.death_proposed;
      if (c.empty()) {
        return;
      }
      const std::size_t k = rng_.index(c.size());
      const Globule& g = c[k];
      const double ratio =
          n * target_.proposal_density(g) * opt_.p_birth / (target_.weight(g) * opt_.p_death);
      if (rng_.uniform() < ratio) {
        c.globules.erase(c.globules.begin() + static_cast<std::ptrdiff_t>(k));
        ++st.death_accepted;
      }
    } else {
      move();
    }
    if (opt_.debug_checks && !allowed(c, target_.params)) {
      throw std::logic_error("sampler left the allowed set");
    }
  }

  /// max(1, n) proposals.
  void sweep() {
    const std::size_t k = std::max<std::size_t>(1, state_.current.size());
    for (std::size_t a = 0; a < k; ++a) {
      proposal();
    }
  }

  void sweeps(std::size_t count) {
    for (std::size_t a = 0; a < count; ++a) {
      sweep();
    }
  }

  /// Moves only; used when the globule count is fixed.
  void move_sweep() {
    const std::size_t k = std::max<std::size_t>(1, state_.current.size());
    for (std::size_t a = 0; a < k; ++a) {
      ++state_.step_count;
      move();
    }
  }

  const SamplerState& state() const noexcept { return state_; }
  const Target& target() const noexcept { return target_; }
  Random& rng() noexcept { return rng_; }

 private:
  void move() {
    auto& c = state_.current;
    auto& st = state_.acceptance_stats;
    ++st.move_proposed;
    if (c.empty()) {
      return;
    }
    const std::size_t k = rng_.index(c.size());
    Globule g = c[k];
    g.center += opt_.move_center_scale * Vec3(rng_.normal(), rng_.normal(), rng_.normal());
    const double dr = opt_.move_radius_scale * rng_.normal();
    if (!target_.params.fixed_radius()) {
      g.radius += dr;
    }
    if (!target_.in_domain(g) || !fits(c, g, target_.params, k)) {
      return;
    }
    const double ratio = target_.weight(g) / target_.weight(c[k]);
    if (rng_.uniform() < ratio) {
      c[k] = g;
      ++st.move_accepted;
    }
  }

  Target target_;
  SamplerOptions opt_;
  Random rng_;
  SamplerState state_;
};

// ---------------------------------------------------------------------------
// Entry points

/// One draw from the hard globule Poisson process in `window`, conditioned on
/// params.external, after `sweeps` sweeps from the empty configuration.
inline Configuration sample_hard_poisson(const WindowSpec& window, const ModelParams& params,
                                         std::size_t sweeps, std::uint64_t seed,
                                         const SamplerOptions& opt = {}) {
  window.validate();
  if (sweeps < opt.burn_in) {
    throw ParameterError("sweeps (" + std::to_string(sweeps) + ") below the burn-in threshold (" +
                         std::to_string(opt.burn_in) + ")");
  }
  BirthDeathMoveChain chain(HardPoissonTarget{window, params}, opt, seed);
  chain.sweeps(sweeps);
  return chain.state().current;
}

/// `count` thinned draws after burn-in.
inline std::vector<Configuration> draw_hard_poisson(const WindowSpec& window,
                                                    const ModelParams& params, std::size_t count,
                                                    std::uint64_t seed,
                                                    const SamplerOptions& opt = {}) {
  window.validate();
  BirthDeathMoveChain chain(HardPoissonTarget{window, params}, opt, seed);
  chain.sweeps(opt.burn_in);
  std::vector<Configuration> out;
  out.reserve(count);
  for (std::size_t a = 0; a < count; ++a) {
    chain.sweeps(opt.thinning);
    out.push_back(chain.state().current);
  }
  return out;
}

/// One draw from mu^{ell,y} after burn-in.
inline Configuration sample_penalized(const ModelParams& params, const PenalizationSpec& spec,
                                      std::uint64_t seed, const SamplerOptions& opt = {}) {
  BirthDeathMoveChain chain(PenalizedTarget(params, spec), opt, seed);
  chain.sweeps(opt.burn_in);
  return chain.state().current;
}

inline std::vector<Configuration> draw_penalized(const ModelParams& params,
                                                 const PenalizationSpec& spec, std::size_t count,
                                                 std::uint64_t seed,
                                                 const SamplerOptions& opt = {}) {
  BirthDeathMoveChain chain(PenalizedTarget(params, spec), opt, seed);
  chain.sweeps(opt.burn_in);
  std::vector<Configuration> out;
  out.reserve(count);
  for (std::size_t a = 0; a < count; ++a) {
    chain.sweeps(opt.thinning);
    out.push_back(chain.state().current);
  }
  return out;
}

/// Draws from the normalized nu_n (exactly n globules). The chain starts
/// from random sequential addition inside B(0, ell) and only moves.
inline std::vector<Configuration> draw_fixed_n(const ModelParams& params,
                                               const PenalizationSpec& spec, std::size_t n,
                                               std::size_t count, std::uint64_t seed,
                                               const SamplerOptions& opt = {}) {
  PenalizedTarget target(params, spec);
  Random init_rng(derive_seed(seed, 0x5EED));
  Configuration start;
  const auto inner = WindowSpec::ball(static_cast<double>(spec.ell()));
  std::size_t attempts = 0;
  while (start.size() < n) {
    if (++attempts > 1000000) {
      throw ParameterError("could not place " + std::to_string(n) + " globules in B(0, ell)");
    }
    const Globule g{inner.sample(init_rng), init_rng.uniform(params.r_minus, params.r_plus)};
    if (fits(start, g, params)) {
      start.push_back(g);
    }
  }
  BirthDeathMoveChain chain(std::move(target), opt, seed, start);
  for (std::size_t a = 0; a < opt.burn_in; ++a) {
    chain.move_sweep();
  }
  std::vector<Configuration> out;
  out.reserve(count);
  for (std::size_t a = 0; a < count; ++a) {
    for (std::size_t b = 0; b < opt.thinning; ++b) {
      chain.move_sweep();
    }
    out.push_back(chain.state().current);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Partition-function oracle

struct OracleOptions {
  int nodes_one = 48;   // Gauss-Legendre nodes per dimension, one-globule term
  int nodes_two = 12;   // per dimension, two-globule term
  double rel_tol = 1e-3;
};

struct PartitionFunctionEstimate {
  double value = 0.0;              // Z
  double terms[3] = {1.0, 0.0, 0.0};  // 1, T1, T2 (with the 1/n! included)
  double relative_change = 0.0;    // coarse vs fine bracket 1 + T1 + T2
  double log_prefactor = 0.0;      // -|window| times the mark measure

  double bracket() const { return terms[0] + terms[1] + terms[2]; }
  /// P(N = k) = terms[k] / bracket.
  double probability(int k) const { return terms[k] / bracket(); }
};

/// Largest radius a globule at x may take: min(r_plus, distance to each
/// external sphere).
inline double admissible_radius_cap(const Vec3& x, const ModelParams& params) {
  double cap = params.r_plus;
  for (const auto& y : params.external) {
    cap = std::min(cap, (x - y.center).norm() - y.radius);
  }
  return cap;
}

/// Mark measure of the admissible radii for a globule centered at x, given
/// the external hard core.
inline double admissible_radius_length(const Vec3& x, const ModelParams& params) {
  const double cap = admissible_radius_cap(x, params);
  if (params.fixed_radius()) {
    return cap >= params.r_minus ? 1.0 : 0.0;
  }
  return std::max(0.0, cap - params.r_minus);
}

namespace detail {

struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Gauss-Legendre rule on [a, b].
inline QuadratureRule gauss_legendre(int n, double a, double b) {
  const auto zeros = boost::math::legendre_p_zeros<double>(n);
  std::vector<double> x;
  for (double z : zeros) {
    x.push_back(z);
    if (z != 0.0) x.push_back(-z);
  }
  std::sort(x.begin(), x.end());
  QuadratureRule r;
  for (double z : x) {
    const double dp = boost::math::legendre_p_prime(n, z);
    const double w = 2.0 / ((1.0 - z * z) * dp * dp);
    r.nodes.push_back(0.5 * (a + b) + 0.5 * (b - a) * z);
    r.weights.push_back(0.5 * (b - a) * w);
  }
  return r;
}

/// Tensor quadrature points and weights covering the window.
inline std::vector<std::pair<Vec3, double>> window_points(const WindowSpec& w, int n) {
  std::vector<std::pair<Vec3, double>> pts;
  if (w.shape == WindowSpec::Shape::box) {
    const auto gx = gauss_legendre(n, w.lower.x(), w.upper.x());
    const auto gy = gauss_legendre(n, w.lower.y(), w.upper.y());
    const auto gz = gauss_legendre(n, w.lower.z(), w.upper.z());
    for (int a = 0; a < n; ++a)
      for (int b = 0; b < n; ++b)
        for (int c = 0; c < n; ++c)
          pts.emplace_back(Vec3(gx.nodes[a], gy.nodes[b], gz.nodes[c]),
                           gx.weights[a] * gy.weights[b] * gz.weights[c]);
    return pts;
  }
  const auto gr = gauss_legendre(n, 0.0, w.radius);
  const auto gu = gauss_legendre(n, -1.0, 1.0);
  const auto gp = gauss_legendre(n, 0.0, 2.0 * std::numbers::pi);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b)
      for (int c = 0; c < n; ++c) {
        const double rho = gr.nodes[a];
        const double u = gu.nodes[b];
        const double s = std::sqrt(std::max(0.0, 1.0 - u * u));
        const Vec3 x = w.center + rho * Vec3(s * std::cos(gp.nodes[c]), s * std::sin(gp.nodes[c]), u);
        pts.emplace_back(x, rho * rho * gr.weights[a] * gu.weights[b] * gp.weights[c]);
      }
  return pts;
}

inline double half_square(double t) { return t > 0.0 ? 0.5 * t * t : 0.0; }

struct OracleTerms {
  double t1 = 0.0;
  double t2 = 0.0;
};

inline OracleTerms oracle_terms(const WindowSpec& w, const ModelParams& params, int n_max,
                                int nodes_one, int nodes_two) {
  OracleTerms out;
  if (n_max >= 1) {
    for (const auto& [x, wt] : window_points(w, nodes_one)) {
      out.t1 += wt * admissible_radius_length(x, params);
    }
  }
  if (n_max >= 2) {
    const auto pts = window_points(w, nodes_two);
    std::vector<double> slack(pts.size());
    for (std::size_t a = 0; a < pts.size(); ++a) {
      slack[a] = admissible_radius_cap(pts[a].first, params) - params.r_minus;
    }
    const double rm = params.r_minus;
    const bool fixed = params.fixed_radius();
    double sum = 0.0;
    for (std::size_t a = 0; a < pts.size(); ++a) {
      if (fixed ? slack[a] < 0.0 : slack[a] <= 0.0) continue;
      for (std::size_t b = 0; b < pts.size(); ++b) {
        if (fixed ? slack[b] < 0.0 : slack[b] <= 0.0) continue;
        if (fixed) {
          const bool apart = (pts[a].first - pts[b].first).norm() >= 2.0 * rm;
          sum += apart ? pts[a].second * pts[b].second : 0.0;
          continue;
        }
        // Area of {s in [0,U1]x[0,U2] : s1 + s2 <= c} by inclusion-exclusion.
        const double c = (pts[a].first - pts[b].first).norm() - 2.0 * rm;
        const double area = half_square(c) - half_square(c - slack[a]) - half_square(c - slack[b]) +
                            half_square(c - slack[a] - slack[b]);
        sum += pts[a].second * pts[b].second * area;
      }
    }
    out.t2 = 0.5 * sum;
  }
  return out;
}

}  // namespace detail

/// Z = e^{-|window x [r_minus, r_plus]|} (1 + sum_{n <= n_max} (1/n!) int 1_allowed)
/// by tensor Gauss-Legendre quadrature, conditioned on params.external.
/// Throws NumericalError when a coarser grid disagrees by more than rel_tol.
inline PartitionFunctionEstimate partition_function_oracle(const WindowSpec& window,
                                                           const ModelParams& params, int n_max,
                                                           const OracleOptions& opt = {}) {
  window.validate();
  params.validate(true);
  if (n_max < 0 || n_max > 2) {
    throw ParameterError("partition_function_oracle supports n_max in {0, 1, 2}");
  }
  const auto fine = detail::oracle_terms(window, params, n_max, opt.nodes_one, opt.nodes_two);
  const auto coarse = detail::oracle_terms(window, params, n_max, (2 * opt.nodes_one) / 3,
                                           (2 * opt.nodes_two) / 3);
  PartitionFunctionEstimate est;
  est.terms[1] = fine.t1;
  est.terms[2] = fine.t2;
  est.log_prefactor = -window.volume() * params.mark_measure();
  const double coarse_bracket = 1.0 + coarse.t1 + coarse.t2;
  est.relative_change = std::abs(est.bracket() - coarse_bracket) / est.bracket();
  if (est.relative_change > opt.rel_tol) {
    throw NumericalError("partition-function quadrature not converged: relative change " +
                         std::to_string(est.relative_change));
  }
  est.value = std::exp(est.log_prefactor) * est.bracket();
  return est;
}

}  // namespace globules
