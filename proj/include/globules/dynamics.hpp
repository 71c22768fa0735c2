#pragma once

// Projected Euler-Maruyama for the obliquely reflected globule system.
//
// A step stretches radii by 1/sigma, where the reflection becomes normal,
// adds drift and noise, projects the proposal onto the stretched allowed set
// and reads the local-time increments off the projection multipliers:
//   dL_ij = lambda_ij / sqrt(2 + 2 sigma^2),  dL_i+- = sigma lambda_i+-.
// Undoing the stretch then reproduces the oblique reflection terms
//   x_i += sum_j (x_i - x_j)/(r_i + r_j) dL_ij,
//   r_i += -sigma^2 sum_j dL_ij - dL_i+ + dL_i-.

#include <globules/core.hpp>
#include <globules/error.hpp>
#include <globules/penalization.hpp>
#include <globules/rng.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace globules {

// ---------------------------------------------------------------------------
// Errors

class ProjectionError : public std::runtime_error {
 public:
  ProjectionError(const std::string& what, Configuration state)
      : std::runtime_error(what), state_(std::move(state)) {}
  const Configuration& state() const noexcept { return state_; }

 private:
  Configuration state_;
};

class StepTooLargeError : public std::runtime_error {
 public:
  StepTooLargeError(double displacement, double bound)
      : std::runtime_error("proposal displacement " + std::to_string(displacement) +
                           " exceeds the exterior-sphere bound " + std::to_string(bound)),
        displacement_(displacement),
        bound_(bound) {}
  double displacement() const noexcept { return displacement_; }
  double bound() const noexcept { return bound_; }

 private:
  double displacement_;
  double bound_;
};

class SimulationAbort : public std::runtime_error {
 public:
  SimulationAbort(const std::string& what, Configuration last_good, std::size_t step_index)
      : std::runtime_error(what), last_good_(std::move(last_good)), step_index_(step_index) {}
  const Configuration& last_good() const noexcept { return last_good_; }
  std::size_t step_index() const noexcept { return step_index_; }

 private:
  Configuration last_good_;
  std::size_t step_index_;
};

// ---------------------------------------------------------------------------
// Driving noise

struct DriveIncrements {
  std::vector<Vec3> center;    // dW_i, variance dt per component
  std::vector<double> radius;  // dW-breve_i, variance dt
  double dt = 0.0;

  std::size_t size() const noexcept { return center.size(); }

  static DriveIncrements zero(std::size_t n, double dt) {
    DriveIncrements d;
    d.center.assign(n, Vec3::Zero());
    d.radius.assign(n, 0.0);
    d.dt = dt;
    return d;
  }

  /// Increments for one step; a pure function of (seed, step, globule).
  static DriveIncrements generate(const CounterNormal& rng, std::uint64_t step, std::size_t n,
                                  double dt) {
    DriveIncrements d = zero(n, dt);
    const double s = std::sqrt(dt);
    for (std::size_t i = 0; i < n; ++i) {
      const auto [a, b] = rng.pair(step, i, 0);
      const auto [c, e] = rng.pair(step, i, 1);
      d.center[i] = Vec3(a, b, c) * s;
      d.radius[i] = e * s;
    }
    return d;
  }

  /// Brownian-bridge split into two half steps whose sum is this increment.
  /// `node` must be unique among the refinements of one step.
  std::pair<DriveIncrements, DriveIncrements> split(const CounterNormal& rng, std::uint64_t step,
                                                    std::uint64_t node) const {
    DriveIncrements first = zero(size(), 0.5 * dt);
    DriveIncrements second = first;
    const double s = 0.5 * std::sqrt(dt);
    for (std::size_t i = 0; i < size(); ++i) {
      const auto [a, b] = rng.pair(step, i, 16 + 2 * node);
      const auto [c, e] = rng.pair(step, i, 17 + 2 * node);
      first.center[i] = 0.5 * center[i] + Vec3(a, b, c) * s;
      first.radius[i] = 0.5 * radius[i] + e * s;
      second.center[i] = center[i] - first.center[i];
      second.radius[i] = radius[i] - first.radius[i];
    }
    return {first, second};
  }
};

// ---------------------------------------------------------------------------
// Local times

using IndexPair = std::pair<std::size_t, std::size_t>;

struct LocalTimeLedger {
  std::map<IndexPair, double> pair;      // key (i, j) with i < j
  std::map<IndexPair, double> external;  // key (internal i, external j)
  std::vector<double> cap_plus;
  std::vector<double> cap_minus;

  LocalTimeLedger() = default;
  explicit LocalTimeLedger(std::size_t n) : cap_plus(n, 0.0), cap_minus(n, 0.0) {}

  std::size_t size() const noexcept { return cap_plus.size(); }

  /// L_ij, symmetric, with L_ii = 0.
  double pair_value(std::size_t i, std::size_t j) const {
    if (i == j) {
      return 0.0;
    }
    const auto it = pair.find({std::min(i, j), std::max(i, j)});
    return it == pair.end() ? 0.0 : it->second;
  }

  double external_value(std::size_t i, std::size_t j) const {
    const auto it = external.find({i, j});
    return it == external.end() ? 0.0 : it->second;
  }

  void add_pair(std::size_t i, std::size_t j, double v) {
    if (i == j) {
      throw ParameterError("a globule has no local time with itself");
    }
    pair[{std::min(i, j), std::max(i, j)}] += v;
  }

  LocalTimeLedger& operator+=(const LocalTimeLedger& other) {
    for (const auto& [k, v] : other.pair) {
      pair[k] += v;
    }
    for (const auto& [k, v] : other.external) {
      external[k] += v;
    }
    if (cap_plus.size() < other.size()) {
      cap_plus.resize(other.size(), 0.0);
      cap_minus.resize(other.size(), 0.0);
    }
    for (std::size_t i = 0; i < other.size(); ++i) {
      cap_plus[i] += other.cap_plus[i];
      cap_minus[i] += other.cap_minus[i];
    }
    return *this;
  }

  /// Componentwise difference; keys missing on either side count as 0.
  friend LocalTimeLedger operator-(const LocalTimeLedger& a, const LocalTimeLedger& b) {
    LocalTimeLedger out(std::max(a.size(), b.size()));
    for (const auto& [k, v] : a.pair) {
      out.pair[k] += v;
    }
    for (const auto& [k, v] : b.pair) {
      out.pair[k] -= v;
    }
    for (const auto& [k, v] : a.external) {
      out.external[k] += v;
    }
    for (const auto& [k, v] : b.external) {
      out.external[k] -= v;
    }
    for (std::size_t i = 0; i < out.size(); ++i) {
      out.cap_plus[i] = (i < a.size() ? a.cap_plus[i] : 0.0) - (i < b.size() ? b.cap_plus[i] : 0.0);
      out.cap_minus[i] =
          (i < a.size() ? a.cap_minus[i] : 0.0) - (i < b.size() ? b.cap_minus[i] : 0.0);
    }
    return out;
  }

  /// Smallest entry (0 for an empty ledger).
  double min_entry() const {
    double m = 0.0;
    for (const auto& [k, v] : pair) m = std::min(m, v);
    for (const auto& [k, v] : external) m = std::min(m, v);
    for (double v : cap_plus) m = std::min(m, v);
    for (double v : cap_minus) m = std::min(m, v);
    return m;
  }

  /// Largest |a - b| over all entries.
  friend double max_abs_difference(const LocalTimeLedger& a, const LocalTimeLedger& b) {
    const auto d = a - b;
    double m = 0.0;
    for (const auto& [k, v] : d.pair) m = std::max(m, std::abs(v));
    for (const auto& [k, v] : d.external) m = std::max(m, std::abs(v));
    for (double v : d.cap_plus) m = std::max(m, std::abs(v));
    for (double v : d.cap_minus) m = std::max(m, std::abs(v));
    return m;
  }
};

// ---------------------------------------------------------------------------
// Drift

/// Original-coordinate drift, flat layout: -1/2 grad_x psi for centers and
/// -sigma^2/2 d_r psi for radii.
inline StateVector drift(const Configuration& c, const PenalizationSpec& spec,
                         const ModelParams& params) {
  StateVector out(static_cast<Eigen::Index>(kCoordsPerGlobule * c.size()));
  const double s2 = params.sigma * params.sigma;
  for (std::size_t i = 0; i < c.size(); ++i) {
    const auto g = psi_gradient(spec, c[i]);
    out.segment<3>(static_cast<Eigen::Index>(center_offset(i))) = -0.5 * g.center;
    out[static_cast<Eigen::Index>(radius_offset(i))] = -0.5 * s2 * g.radius;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Projection onto the stretched allowed set

struct ProjectionOptions {
  double tol_active = 1e-9;   // near-active constraints join the candidate set
  double pair_margin = 1e-12; // pair constraints are solved to gap = margin
  int max_iters = 50;
};

struct Multiplier {
  Constraint constraint;
  double lambda = 0.0;
};

struct ProjectionResult {
  Configuration projected;
  std::vector<Multiplier> multipliers;
  int iterations = 0;
};

namespace detail {

struct SparseNormal {
  std::array<Eigen::Index, 8> index{};
  std::array<double, 8> value{};
  int nnz = 0;
  double gap = 0.0;
  double grad_norm = 1.0;

  double dot(const StateVector& v) const {
    double s = 0.0;
    for (int k = 0; k < nnz; ++k) s += value[k] * v[index[k]];
    return s;
  }
  double dot(const SparseNormal& o) const {
    double s = 0.0;
    for (int a = 0; a < nnz; ++a) {
      for (int b = 0; b < o.nnz; ++b) {
        if (index[a] == o.index[b]) s += value[a] * o.value[b];
      }
    }
    return s;
  }
  void axpy(double alpha, StateVector& v) const {
    for (int k = 0; k < nnz; ++k) v[index[k]] += alpha * value[k];
  }
};

inline Vec3 center_of(const StateVector& z, std::size_t i) {
  return z.segment<3>(static_cast<Eigen::Index>(center_offset(i)));
}
inline double radius_of(const StateVector& z, std::size_t i) {
  return z[static_cast<Eigen::Index>(radius_offset(i))];
}

inline double gap_at(const StateVector& z, const Constraint& k, const ModelParams& params) {
  const double sigma = params.sigma;
  switch (k.kind) {
    case ContactKind::pair:
      return (center_of(z, k.i) - center_of(z, k.j)).norm() -
             sigma * (radius_of(z, k.i) + radius_of(z, k.j));
    case ContactKind::external_pair: {
      const auto& y = params.external[k.j];
      return (center_of(z, k.i) - y.center).norm() - sigma * radius_of(z, k.i) - y.radius;
    }
    case ContactKind::cap_plus:
      return params.r_plus / sigma - radius_of(z, k.i);
    case ContactKind::cap_minus:
      return radius_of(z, k.i) - params.r_minus / sigma;
  }
  return 0.0;
}

inline SparseNormal linearize(const StateVector& z, const Constraint& k, const ModelParams& params,
                              std::size_t n) {
  SparseNormal out;
  const double sigma = params.sigma;
  const auto ci = static_cast<Eigen::Index>(center_offset(k.i));
  const auto ri = static_cast<Eigen::Index>(radius_offset(k.i));
  out.gap = gap_at(z, k, params);
  switch (k.kind) {
    case ContactKind::pair:
    case ContactKind::external_pair: {
      const bool internal = k.kind == ContactKind::pair;
      const Vec3 other = internal ? center_of(z, k.j) : params.external[k.j].center;
      const Vec3 d = center_of(z, k.i) - other;
      const double dist = d.norm();
      if (dist == 0.0) {
        throw DegenerateContactError(k.i, internal ? k.j : n + k.j);
      }
      const Vec3 u = d / dist;
      out.grad_norm = std::sqrt((internal ? 2.0 : 1.0) * (1.0 + sigma * sigma));
      const double s = 1.0 / out.grad_norm;
      for (int a = 0; a < 3; ++a) {
        out.index[out.nnz] = ci + a;
        out.value[out.nnz++] = u[a] * s;
      }
      out.index[out.nnz] = ri;
      out.value[out.nnz++] = -sigma * s;
      if (internal) {
        const auto cj = static_cast<Eigen::Index>(center_offset(k.j));
        for (int a = 0; a < 3; ++a) {
          out.index[out.nnz] = cj + a;
          out.value[out.nnz++] = -u[a] * s;
        }
        out.index[out.nnz] = static_cast<Eigen::Index>(radius_offset(k.j));
        out.value[out.nnz++] = -sigma * s;
      }
      break;
    }
    case ContactKind::cap_plus:
      out.index[0] = ri;
      out.value[0] = -1.0;
      out.nnz = 1;
      break;
    case ContactKind::cap_minus:
      out.index[0] = ri;
      out.value[0] = 1.0;
      out.nnz = 1;
      break;
  }
  return out;
}

template <class Visit>
void for_each_constraint(std::size_t n, const ModelParams& params, Visit&& visit) {
  for (std::size_t i = 0; i < n; ++i) {
    visit(Constraint{ContactKind::cap_plus, i, 0});
    visit(Constraint{ContactKind::cap_minus, i, 0});
    for (std::size_t j = i + 1; j < n; ++j) {
      visit(Constraint{ContactKind::pair, i, j});
    }
    for (std::size_t j = 0; j < params.external.size(); ++j) {
      visit(Constraint{ContactKind::external_pair, i, j});
    }
  }
}

inline double target_gap(const Constraint& k, const ProjectionOptions& opt) {
  return (k.kind == ContactKind::pair || k.kind == ContactKind::external_pair) ? opt.pair_margin
                                                                              : 0.0;
}

}  // namespace detail

/// Nearest point of the stretched allowed set to `raw` (stretched
/// coordinates), with multipliers lambda_c >= 0 such that
/// projected = raw + sum_c lambda_c n_c(projected).
///
/// Active-set fixed point: linearize the candidate constraints, solve the
/// equality-constrained least-distance problem, drop the most negative
/// multiplier if any, add newly violated constraints, repeat until the
/// linearization point stops moving.
inline ProjectionResult project_to_allowed(const Configuration& raw, const ModelParams& params,
                                           const ProjectionOptions& opt = {}) {
  const std::size_t n = raw.size();
  const StateVector raw_z = to_flat(raw);
  StateVector z = raw_z;

  std::vector<Constraint> active;
  detail::for_each_constraint(n, params, [&](const Constraint& k) {
    if (detail::gap_at(z, k, params) <= opt.tol_active) {
      active.push_back(k);
    }
  });
  ProjectionResult result;
  if (active.empty()) {
    result.projected = raw;
    return result;
  }

  const double scale = 1.0 + raw_z.cwiseAbs().maxCoeff();
  const double residual_tol = 1e-13 + 8.0 * 2.220446049250313e-16 * scale;
  std::vector<double> lambda;
  for (int iter = 1; iter <= opt.max_iters; ++iter) {
    result.iterations = iter;
    const std::size_t m = active.size();
    std::vector<detail::SparseNormal> normals;
    normals.reserve(m);
    for (const auto& k : active) {
      normals.push_back(detail::linearize(z, k, params, n));
    }
    Eigen::MatrixXd gram(m, m);
    Eigen::VectorXd rhs(m);
    const StateVector offset = raw_z - z;
    for (std::size_t a = 0; a < m; ++a) {
      for (std::size_t b = a; b < m; ++b) {
        gram(a, b) = gram(b, a) = normals[a].dot(normals[b]);
      }
      rhs[a] = (detail::target_gap(active[a], opt) - normals[a].gap) / normals[a].grad_norm -
               normals[a].dot(offset);
    }
    const Eigen::VectorXd sol = m > 0 ? Eigen::VectorXd(gram.completeOrthogonalDecomposition().solve(rhs))
                                      : Eigen::VectorXd();
    if (m > 0) {
      Eigen::Index worst = 0;
      const double most_negative = sol.minCoeff(&worst);
      if (most_negative < -1e-13) {
        active.erase(active.begin() + worst);
        continue;
      }
    }
    StateVector next = raw_z;
    for (std::size_t a = 0; a < m; ++a) {
      normals[a].axpy(sol[static_cast<Eigen::Index>(a)], next);
    }
    const double moved = (next - z).norm();
    z = std::move(next);
    lambda.assign(sol.data(), sol.data() + m);

    bool added = false;
    detail::for_each_constraint(n, params, [&](const Constraint& k) {
      if (std::find(active.begin(), active.end(), k) == active.end() &&
          detail::gap_at(z, k, params) < 0.0) {
        active.push_back(k);
        added = true;
      }
    });
    if (added) {
      continue;
    }
    double residual = 0.0;
    for (const auto& k : active) {
      residual = std::max(residual, std::abs(detail::gap_at(z, k, params) - detail::target_gap(k, opt)));
    }
    if (residual <= residual_tol && moved <= 1e-12 * scale) {
      result.projected = from_flat(z);
      for (auto& g : result.projected) {
        g.radius = std::clamp(g.radius, params.r_minus / params.sigma, params.r_plus / params.sigma);
      }
      for (std::size_t a = 0; a < active.size(); ++a) {
        result.multipliers.push_back({active[a], std::max(0.0, lambda[a])});
      }
      return result;
    }
  }
  throw ProjectionError("active-set projection did not converge in " +
                            std::to_string(opt.max_iters) + " iterations",
                        raw);
}

/// Largest displacement of any pair of globules between two stretched
/// states, i.e. sqrt(2) times the largest per-globule displacement.
inline double pair_displacement(const Configuration& from, const Configuration& to) {
  double worst = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i) {
    const double dx = (to[i].center - from[i].center).squaredNorm();
    const double dr = to[i].radius - from[i].radius;
    worst = std::max(worst, dx + dr * dr);
  }
  return std::sqrt(2.0 * worst);
}

/// Projection with the exterior-sphere safety precondition checked against
/// the last feasible (stretched) state.
inline ProjectionResult project_to_allowed(const Configuration& from, const Configuration& raw,
                                           const ModelParams& params,
                                           const ProjectionOptions& opt = {}) {
  const double bound = 0.5 * exterior_sphere_constant(params);
  const double moved = pair_displacement(from, raw);
  if (!(moved < bound)) {
    throw StepTooLargeError(moved, bound);
  }
  return project_to_allowed(raw, params, opt);
}

// ---------------------------------------------------------------------------
// One step

struct StepOptions {
  ProjectionOptions projection;
  bool debug_checks = false;
};

struct StepResult {
  Configuration next;
  LocalTimeLedger dL;
  std::vector<BoundaryContact> active_set;  // stretched coordinates, at the projected point
  int projection_iters = 0;
  Configuration proposal;                   // unconstrained update, original coordinates
};

/// Converts stretched-space multipliers into original-coordinate local-time
/// increments.
inline LocalTimeLedger local_time_increments(const std::vector<Multiplier>& multipliers,
                                             std::size_t n, const ModelParams& params) {
  LocalTimeLedger dL(n);
  const double s2 = params.sigma * params.sigma;
  for (const auto& [k, lam] : multipliers) {
    switch (k.kind) {
      case ContactKind::pair:
        dL.add_pair(k.i, k.j, lam / std::sqrt(2.0 + 2.0 * s2));
        break;
      case ContactKind::external_pair:
        dL.external[{k.i, k.j}] += lam / std::sqrt(1.0 + s2);
        break;
      case ContactKind::cap_plus:
        dL.cap_plus[k.i] += params.sigma * lam;
        break;
      case ContactKind::cap_minus:
        dL.cap_minus[k.i] += params.sigma * lam;
        break;
    }
  }
  return dL;
}

/// Original-coordinate reflection displacement implied by local-time
/// increments, evaluated at configuration `at`.
inline StateVector oblique_reflection(const Configuration& at, const LocalTimeLedger& dL,
                                      const ModelParams& params) {
  StateVector out = StateVector::Zero(static_cast<Eigen::Index>(kCoordsPerGlobule * at.size()));
  const double s2 = params.sigma * params.sigma;
  for (const auto& [key, v] : dL.pair) {
    const auto [i, j] = key;
    const Vec3 dir = (at[i].center - at[j].center) / (at[i].radius + at[j].radius);
    out.segment<3>(static_cast<Eigen::Index>(center_offset(i))) += dir * v;
    out.segment<3>(static_cast<Eigen::Index>(center_offset(j))) -= dir * v;
    out[static_cast<Eigen::Index>(radius_offset(i))] -= s2 * v;
    out[static_cast<Eigen::Index>(radius_offset(j))] -= s2 * v;
  }
  for (const auto& [key, v] : dL.external) {
    const auto [i, j] = key;
    const auto& y = params.external[j];
    const Vec3 dir = (at[i].center - y.center) / (at[i].radius + y.radius);
    out.segment<3>(static_cast<Eigen::Index>(center_offset(i))) += dir * v;
    out[static_cast<Eigen::Index>(radius_offset(i))] -= s2 * v;
  }
  for (std::size_t i = 0; i < dL.size(); ++i) {
    out[static_cast<Eigen::Index>(radius_offset(i))] += dL.cap_minus[i] - dL.cap_plus[i];
  }
  return out;
}

/// Max-norm mismatch between the realized constrained displacement and the
/// one reconstructed from the local-time increments.
inline double reflection_identity_residual(const StepResult& r, const ModelParams& params) {
  const StateVector realized = to_flat(r.next) - to_flat(r.proposal);
  const StateVector predicted = oblique_reflection(r.next, r.dL, params);
  return realized.size() == 0 ? 0.0 : (realized - predicted).cwiseAbs().maxCoeff();
}

inline StepResult step(const Configuration& c, double dt, const DriveIncrements& drive,
                       const PenalizationSpec& spec, const ModelParams& params,
                       const StepOptions& opt = {}) {
  if (drive.size() != c.size()) {
    throw ParameterError("drive increments do not match the configuration size");
  }
  const double sigma = params.sigma;
  const Configuration stretched = sigma_stretch(c, sigma);
  const StateVector b = drift(c, spec, params);
  Configuration raw = stretched;
  for (std::size_t i = 0; i < c.size(); ++i) {
    raw[i].center += b.segment<3>(static_cast<Eigen::Index>(center_offset(i))) * dt + drive.center[i];
    raw[i].radius += b[static_cast<Eigen::Index>(radius_offset(i))] / sigma * dt + drive.radius[i];
  }
  const ProjectionResult proj = project_to_allowed(stretched, raw, params, opt.projection);

  StepResult out;
  out.projection_iters = proj.iterations;
  out.dL = local_time_increments(proj.multipliers, c.size(), params);
  out.next = sigma_unstretch(proj.projected, sigma);
  for (auto& g : out.next) {
    g.radius = std::clamp(g.radius, params.r_minus, params.r_plus);
  }
  out.proposal = sigma_unstretch(raw, sigma);
  for (const auto& m : proj.multipliers) {
    out.active_set.push_back(contact_for(proj.projected, m.constraint, params));
  }
  if (opt.debug_checks) {
    if (!allowed(out.next, params)) {
      throw std::logic_error("step produced a configuration outside the allowed set");
    }
    if (reflection_identity_residual(out, params) > 1e-10) {
      throw std::logic_error("local-time dictionary does not reproduce the reflection terms");
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Trajectories

struct Refinement {
  std::size_t step = 0;
  int depth = 0;  // dt was divided by 2^depth
};

struct TrajectoryRecord {
  std::vector<double> times;
  std::vector<Configuration> states;
  std::vector<LocalTimeLedger> ledgers;  // cumulative, one per recorded time
  std::vector<DriveIncrements> drive;    // per step, only when requested
  std::vector<Refinement> refinements;
  ModelParams params;
  std::uint64_t seed = 0;
  double dt = 0.0;
  double T = 0.0;

  std::size_t size() const noexcept { return times.size(); }
  std::size_t globule_count() const noexcept { return states.empty() ? 0 : states.front().size(); }
};

struct SimulateOptions {
  std::size_t record_stride = 1;
  bool store_drive = false;
  int max_halvings = 4;
  StepOptions step;
  std::function<void(std::size_t, const StepResult&)> observer;
};

namespace detail {

struct Advance {
  Configuration next;
  LocalTimeLedger dL;
  int depth = 0;
};

inline Advance advance(const Configuration& c, const DriveIncrements& drive,
                       const PenalizationSpec& spec, const ModelParams& params,
                       const CounterNormal& rng, std::uint64_t step_index, std::uint64_t node,
                       int depth, const SimulateOptions& opt) {
  try {
    StepResult r = step(c, drive.dt, drive, spec, params, opt.step);
    if (opt.observer) {
      opt.observer(step_index, r);
    }
    return {std::move(r.next), std::move(r.dL), depth};
  } catch (const ProjectionError&) {
    if (depth >= opt.max_halvings) throw;
  } catch (const StepTooLargeError&) {
    if (depth >= opt.max_halvings) throw;
  }
  const auto [first, second] = drive.split(rng, step_index, node);
  Advance a = advance(c, first, spec, params, rng, step_index, 2 * node, depth + 1, opt);
  Advance b = advance(a.next, second, spec, params, rng, step_index, 2 * node + 1, depth + 1, opt);
  b.dL += a.dL;
  b.depth = std::max(a.depth, b.depth);
  return b;
}

}  // namespace detail

inline std::size_t step_count(double T, double dt) {
  if (!(dt > 0.0) || !(T > 0.0)) {
    throw ParameterError("T and dt must be positive");
  }
  const double ratio = T / dt;
  const auto k = static_cast<std::size_t>(std::llround(ratio));
  if (k == 0 || std::abs(ratio - static_cast<double>(k)) > 1e-9 * ratio) {
    throw ParameterError("T/dt must be an integer");
  }
  return k;
}

/// Integrates the reflected system on [0, T]. On a projection failure the
/// step is re-done as a Brownian-bridge refinement, halving dt up to
/// `max_halvings` times; beyond that the run aborts with the last good state.
inline TrajectoryRecord simulate(const Configuration& initial, double T, double dt,
                                 const PenalizationSpec& spec, const ModelParams& params,
                                 std::uint64_t seed, const SimulateOptions& opt = {}) {
  params.validate();
  if (!allowed(initial, params)) {
    throw ParameterError("initial configuration is not allowed");
  }
  if (opt.record_stride == 0) {
    throw ParameterError("record_stride must be positive");
  }
  const std::size_t steps = step_count(T, dt);
  const CounterNormal rng(seed);

  TrajectoryRecord rec;
  rec.params = params;
  rec.seed = seed;
  rec.dt = dt;
  rec.T = T;
  rec.times.push_back(0.0);
  rec.states.push_back(initial);
  LocalTimeLedger ledger(initial.size());
  rec.ledgers.push_back(ledger);

  Configuration current = initial;
  for (std::size_t k = 0; k < steps; ++k) {
    const auto drive = DriveIncrements::generate(rng, k, current.size(), dt);
    detail::Advance a;
    try {
      a = detail::advance(current, drive, spec, params, rng, k, 1, 0, opt);
    } catch (const std::exception& e) {
      throw SimulationAbort(std::string("step ") + std::to_string(k) + " failed: " + e.what(),
                            current, k);
    }
    if (a.depth > 0) {
      rec.refinements.push_back({k, a.depth});
    }
    current = std::move(a.next);
    ledger += a.dL;
    if (opt.store_drive) {
      rec.drive.push_back(drive);
    }
    if ((k + 1) % opt.record_stride == 0 || k + 1 == steps) {
      rec.times.push_back(static_cast<double>(k + 1) * dt);
      rec.states.push_back(current);
      rec.ledgers.push_back(ledger);
    }
  }
  return rec;
}

/// Time reversal: states in reverse order on the grid t -> T - t, ledgers
/// re-based so that the reversed ledger at time s is L(T) - L(T - s).
inline TrajectoryRecord time_reverse(const TrajectoryRecord& traj) {
  TrajectoryRecord out;
  out.params = traj.params;
  out.seed = traj.seed;
  out.dt = traj.dt;
  out.T = traj.T;
  const std::size_t k = traj.size();
  if (k == 0) {
    return out;
  }
  const LocalTimeLedger& last = traj.ledgers.back();
  for (std::size_t a = 0; a < k; ++a) {
    const std::size_t src = k - 1 - a;
    out.times.push_back(traj.T - traj.times[src]);
    out.states.push_back(traj.states[src]);
    out.ledgers.push_back(last - traj.ledgers[src]);
  }
  out.times.front() = 0.0;
  return out;
}

}  // namespace globules
