#pragma once

// Globules: spheres in R^3 whose radius is itself a coordinate, confined to
// [r_minus, r_plus]. Configuration-space vectors use the flat layout
// (x_1, r_1, ..., x_n, r_n), four doubles per globule.

#include <globules/error.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

namespace globules {

using Vec3 = Eigen::Vector3d;
using StateVector = Eigen::VectorXd;

struct Globule {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;

  bool operator==(const Globule& other) const { return center == other.center && radius == other.radius; }
};

struct Configuration {
  std::vector<Globule> globules;

  std::size_t size() const noexcept { return globules.size(); }
  bool empty() const noexcept { return globules.empty(); }
  Globule& operator[](std::size_t i) { return globules[i]; }
  const Globule& operator[](std::size_t i) const { return globules[i]; }
  auto begin() const noexcept { return globules.begin(); }
  auto end() const noexcept { return globules.end(); }
  auto begin() noexcept { return globules.begin(); }
  auto end() noexcept { return globules.end(); }
  void push_back(const Globule& g) { globules.push_back(g); }

  bool operator==(const Configuration& other) const {
    if (size() != other.size()) {
      return false;
    }
    for (std::size_t i = 0; i < size(); ++i) {
      if (globules[i].center != other.globules[i].center ||
          globules[i].radius != other.globules[i].radius) {
        return false;
      }
    }
    return true;
  }
};

struct ModelParams {
  double sigma = 1.0;
  double r_minus = 0.5;
  double r_plus = 1.0;
  int ell = 1;
  Configuration external;

  double sigma_or_one() const noexcept { return std::max(sigma, 1.0); }

  /// r_minus == r_plus: every globule has the same radius.
  bool fixed_radius() const noexcept { return r_plus == r_minus; }

  /// Total mass of the mark reference measure: Lebesgue length of
  /// [r_minus, r_plus], or a unit point mass when the interval is degenerate.
  double mark_measure() const noexcept { return fixed_radius() ? 1.0 : r_plus - r_minus; }

  /// The samplers accept r_plus == r_minus; the dynamics do not.
  void validate(bool allow_fixed_radius = false) const {
    if (!(sigma > 0.0) || !std::isfinite(sigma)) {
      throw ParameterError("sigma must be positive");
    }
    if (!(r_minus > 0.0)) {
      throw ParameterError("r_minus must be positive");
    }
    if (!std::isfinite(r_plus) || !(r_plus > r_minus || (allow_fixed_radius && r_plus == r_minus))) {
      throw ParameterError("r_plus must exceed r_minus");
    }
    if (ell < 1) {
      throw ParameterError("ell must be at least 1");
    }
  }
};

// ---------------------------------------------------------------------------
// Flat layout

constexpr std::size_t kCoordsPerGlobule = 4;

constexpr std::size_t center_offset(std::size_t i) noexcept { return kCoordsPerGlobule * i; }
constexpr std::size_t radius_offset(std::size_t i) noexcept { return kCoordsPerGlobule * i + 3; }

inline StateVector to_flat(const Configuration& c) {
  StateVector z(static_cast<Eigen::Index>(kCoordsPerGlobule * c.size()));
  for (std::size_t i = 0; i < c.size(); ++i) {
    z.segment<3>(static_cast<Eigen::Index>(center_offset(i))) = c[i].center;
    z[static_cast<Eigen::Index>(radius_offset(i))] = c[i].radius;
  }
  return z;
}

inline Configuration from_flat(const StateVector& z) {
  if (z.size() % static_cast<Eigen::Index>(kCoordsPerGlobule) != 0) {
    throw ParameterError("flat state length must be a multiple of 4");
  }
  Configuration c;
  const auto n = static_cast<std::size_t>(z.size()) / kCoordsPerGlobule;
  c.globules.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    c[i].center = z.segment<3>(static_cast<Eigen::Index>(center_offset(i)));
    c[i].radius = z[static_cast<Eigen::Index>(radius_offset(i))];
  }
  return c;
}

// ---------------------------------------------------------------------------
// Hard-core predicate

inline bool radius_in_range(double r, const ModelParams& params) noexcept {
  return r >= params.r_minus && r <= params.r_plus;
}

inline bool disjoint(const Globule& a, const Globule& b) noexcept {
  return (a.center - b.center).norm() >= a.radius + b.radius;
}

/// True iff every radius lies in [r_minus, r_plus] and no two globules
/// overlap, internal pairs and internal/external pairs alike.
inline bool allowed(const Configuration& c, const ModelParams& params) {
  for (std::size_t i = 0; i < c.size(); ++i) {
    if (!radius_in_range(c[i].radius, params)) {
      return false;
    }
    for (std::size_t j = i + 1; j < c.size(); ++j) {
      if (!disjoint(c[i], c[j])) {
        return false;
      }
    }
    for (const auto& y : params.external) {
      if (!disjoint(c[i], y)) {
        return false;
      }
    }
  }
  return true;
}

// ---------------------------------------------------------------------------
// Sigma stretch: radii divided by sigma, centers unchanged.

inline Configuration sigma_stretch(Configuration c, double sigma) {
  if (!(sigma > 0.0)) {
    throw ParameterError("sigma must be positive");
  }
  for (auto& g : c) {
    g.radius /= sigma;
  }
  return c;
}

inline Configuration sigma_unstretch(Configuration c, double sigma) {
  if (!(sigma > 0.0)) {
    throw ParameterError("sigma must be positive");
  }
  for (auto& g : c) {
    g.radius *= sigma;
  }
  return c;
}

// ---------------------------------------------------------------------------
// Boundary geometry, all in stretched coordinates.

enum class ContactKind { pair, external_pair, cap_plus, cap_minus };

/// One smooth piece of the boundary of the stretched allowed set. For
/// `pair`, j is an internal index; for `external_pair`, j indexes
/// params.external; for caps, j is unused.
struct Constraint {
  ContactKind kind = ContactKind::pair;
  std::size_t i = 0;
  std::size_t j = 0;

  bool operator==(const Constraint&) const = default;
  auto operator<=>(const Constraint&) const = default;
};

struct BoundaryContact {
  Constraint constraint;
  StateVector normal;  // unit inward normal, length 4n
  double gap = 0.0;    // negative when violated
};

inline double pair_gap(const Globule& a, const Globule& b, double sigma) {
  return (a.center - b.center).norm() - sigma * (a.radius + b.radius);
}

/// Gap of an internal globule (stretched) against an external one given in
/// original coordinates.
inline double external_gap(const Globule& a, const Globule& y, double sigma) {
  return (a.center - y.center).norm() - sigma * a.radius - y.radius;
}

inline double constraint_gap(const Configuration& stretched, const Constraint& k,
                             const ModelParams& params) {
  const double sigma = params.sigma;
  switch (k.kind) {
    case ContactKind::pair:
      return pair_gap(stretched[k.i], stretched[k.j], sigma);
    case ContactKind::external_pair:
      return external_gap(stretched[k.i], params.external[k.j], sigma);
    case ContactKind::cap_plus:
      return params.r_plus / sigma - stretched[k.i].radius;
    case ContactKind::cap_minus:
      return stretched[k.i].radius - params.r_minus / sigma;
  }
  return 0.0;
}

/// Unit inward normal of D_ij. The center part uses the unit separation
/// direction, which coincides with (x_i - x_j) / (sigma (r_i + r_j)) on the
/// boundary and keeps the vector unit length off it.
inline BoundaryContact pair_normal(const Configuration& stretched, std::size_t i, std::size_t j,
                                   double sigma) {
  if (i == j || i >= stretched.size() || j >= stretched.size()) {
    throw ParameterError("pair_normal needs two distinct valid indices");
  }
  const Vec3 d = stretched[i].center - stretched[j].center;
  const double dist = d.norm();
  if (dist == 0.0) {
    throw DegenerateContactError(i, j);
  }
  const double scale = 1.0 / std::sqrt(2.0 + 2.0 * sigma * sigma);
  BoundaryContact out;
  out.constraint = {ContactKind::pair, i, j};
  out.normal = StateVector::Zero(static_cast<Eigen::Index>(kCoordsPerGlobule * stretched.size()));
  const Vec3 u = d / dist;
  out.normal.segment<3>(static_cast<Eigen::Index>(center_offset(i))) = u * scale;
  out.normal.segment<3>(static_cast<Eigen::Index>(center_offset(j))) = -u * scale;
  out.normal[static_cast<Eigen::Index>(radius_offset(i))] = -sigma * scale;
  out.normal[static_cast<Eigen::Index>(radius_offset(j))] = -sigma * scale;
  out.gap = dist - sigma * (stretched[i].radius + stretched[j].radius);
  return out;
}

inline BoundaryContact external_normal(const Configuration& stretched, std::size_t i,
                                       std::size_t j, const ModelParams& params) {
  const Vec3 d = stretched[i].center - params.external[j].center;
  const double dist = d.norm();
  if (dist == 0.0) {
    throw DegenerateContactError(i, stretched.size() + j);
  }
  const double sigma = params.sigma;
  const double scale = 1.0 / std::sqrt(1.0 + sigma * sigma);
  BoundaryContact out;
  out.constraint = {ContactKind::external_pair, i, j};
  out.normal = StateVector::Zero(static_cast<Eigen::Index>(kCoordsPerGlobule * stretched.size()));
  out.normal.segment<3>(static_cast<Eigen::Index>(center_offset(i))) = d / dist * scale;
  out.normal[static_cast<Eigen::Index>(radius_offset(i))] = -sigma * scale;
  out.gap = external_gap(stretched[i], params.external[j], sigma);
  return out;
}

/// n_{i+} = -e_{r_i}, n_{i-} = +e_{r_i}.
inline BoundaryContact cap_normal(const Configuration& stretched, std::size_t i, bool plus,
                                  const ModelParams& params) {
  BoundaryContact out;
  out.constraint = {plus ? ContactKind::cap_plus : ContactKind::cap_minus, i, 0};
  out.normal = StateVector::Zero(static_cast<Eigen::Index>(kCoordsPerGlobule * stretched.size()));
  out.normal[static_cast<Eigen::Index>(radius_offset(i))] = plus ? -1.0 : 1.0;
  out.gap = constraint_gap(stretched, out.constraint, params);
  return out;
}

inline BoundaryContact contact_for(const Configuration& stretched, const Constraint& k,
                                   const ModelParams& params) {
  switch (k.kind) {
    case ContactKind::pair:
      return pair_normal(stretched, k.i, k.j, params.sigma);
    case ContactKind::external_pair:
      return external_normal(stretched, k.i, k.j, params);
    case ContactKind::cap_plus:
      return cap_normal(stretched, k.i, true, params);
    case ContactKind::cap_minus:
      return cap_normal(stretched, k.i, false, params);
  }
  return {};
}

/// Every constraint whose gap is at most `tol` (stretched units).
inline std::vector<BoundaryContact> active_contacts(const Configuration& stretched,
                                                    const ModelParams& params, double tol) {
  std::vector<BoundaryContact> out;
  const std::size_t n = stretched.size();
  for (std::size_t i = 0; i < n; ++i) {
    for (bool plus : {true, false}) {
      Constraint k{plus ? ContactKind::cap_plus : ContactKind::cap_minus, i, 0};
      if (constraint_gap(stretched, k, params) <= tol) {
        out.push_back(cap_normal(stretched, i, plus, params));
      }
    }
    for (std::size_t j = i + 1; j < n; ++j) {
      if (pair_gap(stretched[i], stretched[j], params.sigma) <= tol) {
        out.push_back(pair_normal(stretched, i, j, params.sigma));
      }
    }
    for (std::size_t j = 0; j < params.external.size(); ++j) {
      if (external_gap(stretched[i], params.external[j], params.sigma) <= tol) {
        out.push_back(external_normal(stretched, i, j, params));
      }
    }
  }
  return out;
}

/// C_i(x): transitive closure of the contact relation
/// |x_k - x_l| <= sigma (r_k + r_l) + contact_tol, starting from i.
inline std::vector<std::size_t> cluster(const Configuration& stretched, std::size_t i,
                                        double sigma, double contact_tol) {
  if (i >= stretched.size()) {
    throw ParameterError("cluster: index out of range");
  }
  std::vector<bool> seen(stretched.size(), false);
  std::deque<std::size_t> queue{i};
  seen[i] = true;
  while (!queue.empty()) {
    const std::size_t k = queue.front();
    queue.pop_front();
    for (std::size_t l = 0; l < stretched.size(); ++l) {
      if (!seen[l] && pair_gap(stretched[k], stretched[l], sigma) <= contact_tol) {
        seen[l] = true;
        queue.push_back(l);
      }
    }
  }
  std::vector<std::size_t> out;
  for (std::size_t k = 0; k < seen.size(); ++k) {
    if (seen[k]) {
      out.push_back(k);
    }
  }
  return out;
}

/// Compatibility vector v(x): centers pulled away from their cluster mean,
/// radii pushed toward the middle of the admissible interval.
inline StateVector pushback_vector(const Configuration& stretched, const ModelParams& params,
                                   double contact_tol) {
  const std::size_t n = stretched.size();
  StateVector v = StateVector::Zero(static_cast<Eigen::Index>(kCoordsPerGlobule * n));
  const double mid = 0.5 * (params.r_plus + params.r_minus);
  const double denom = (params.r_plus - params.r_minus) * params.sigma_or_one();
  for (std::size_t i = 0; i < n; ++i) {
    const auto members = cluster(stretched, i, params.sigma, contact_tol);
    Vec3 mean = Vec3::Zero();
    for (auto k : members) {
      mean += stretched[k].center;
    }
    mean /= static_cast<double>(members.size());
    v.segment<3>(static_cast<Eigen::Index>(center_offset(i))) = stretched[i].center - mean;
    v[static_cast<Eigen::Index>(radius_offset(i))] =
        params.r_minus * (mid - params.sigma * stretched[i].radius) / denom;
  }
  return v;
}

/// beta_0 = r_minus / (4 r_plus (sigma v 1) n^{3/2}).
inline double compatibility_constant(const ModelParams& params, std::size_t n) {
  return params.r_minus /
         (4.0 * params.r_plus * params.sigma_or_one() * std::pow(static_cast<double>(n), 1.5));
}

/// alpha_ij = r_minus sqrt(2 + 2 sigma^2), the uniform exterior sphere radius.
inline double exterior_sphere_constant(const ModelParams& params) {
  params.validate();
  return params.r_minus * std::sqrt(2.0 + 2.0 * params.sigma * params.sigma);
}

}  // namespace globules
