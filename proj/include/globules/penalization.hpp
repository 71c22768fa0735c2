#pragma once

// Confinement potential psi^{ell,y}(x, r) = psi1(|x|) + psi2(r)
//   + sum_{j : |y_j| > ell} psi3(|x - y_j| / (r + r_j)).
// Each scalar profile is linear (or constant) outside a transition band of
// width e^{-ell}; inside the band it is the quintic Hermite bridge matching
// value, slope and curvature at both ends.

#include <globules/core.hpp>
#include <globules/error.hpp>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>
#include <utility>
#include <vector>

namespace globules {

struct ProfileValue {
  double value = 0.0;
  double slope = 0.0;
};

class QuinticBridge {
 public:
  QuinticBridge() = default;

  /// Interpolates (value, slope, curvature) from `left` at a to `right` at b.
  QuinticBridge(double a, double b, double v0, double d0, double c0, double v1, double d1,
                double c1)
      : a_(a), h_(b - a) {
    if (!(h_ > 0.0)) {
      throw ParameterError("bridge interval must have positive width");
    }
    const double a1 = d0 * h_;
    const double a2 = 0.5 * c0 * h_ * h_;
    const double big_a = v1 - (v0 + a1 + a2);
    const double big_b = d1 * h_ - (a1 + 2.0 * a2);
    const double big_c = c1 * h_ * h_ - 2.0 * a2;
    coef_ = {v0,
             a1,
             a2,
             10.0 * big_a - 4.0 * big_b + 0.5 * big_c,
             -15.0 * big_a + 7.0 * big_b - big_c,
             6.0 * big_a - 3.0 * big_b + 0.5 * big_c};
  }

  ProfileValue operator()(double s) const noexcept {
    const double t = (s - a_) / h_;
    double v = coef_[5];
    double dv = 5.0 * coef_[5];
    for (int k = 4; k >= 1; --k) {
      v = v * t + coef_[k];
      dv = dv * t + k * coef_[k];
    }
    v = v * t + coef_[0];
    return {v, dv / h_};
  }

  double second_derivative(double s) const noexcept {
    const double t = (s - a_) / h_;
    const double d2 =
        2.0 * coef_[2] + t * (6.0 * coef_[3] + t * (12.0 * coef_[4] + t * 20.0 * coef_[5]));
    return d2 / (h_ * h_);
  }

  double left() const noexcept { return a_; }
  double right() const noexcept { return a_ + h_; }

 private:
  double a_ = 0.0;
  double h_ = 1.0;
  std::array<double, 6> coef_{};
};

class PenalizationSpec {
 public:
  explicit PenalizationSpec(const ModelParams& params)
      : ell_(params.ell),
        r_minus_(params.r_minus),
        r_plus_(params.r_plus),
        width_(std::exp(-static_cast<double>(params.ell))) {
    params.validate();
    if (!(width_ < std::min(1.0, 0.25 * (r_plus_ - r_minus_)))) {
      throw ParameterError("transition width e^{-ell} must be below min(1, (r_plus - r_minus)/4)");
    }
    const double l = ell_;
    const double w = width_;
    // For large ell a band can fall below double resolution; the linear
    // branches then cover every representable argument and the bridge is
    // never evaluated.
    if (l + w > l) {
      psi1_ = QuinticBridge(l, l + w, 0.0, 0.0, 0.0, 2.0 * (l + w), 2.0, 0.0);
    }
    if (r_minus_ - w < r_minus_) {
      psi2_low_ = QuinticBridge(r_minus_ - w, r_minus_, l * (r_plus_ + w), -l, 0.0, 0.0, 0.0, 0.0);
    }
    if (r_plus_ + w > r_plus_) {
      psi2_high_ = QuinticBridge(r_plus_, r_plus_ + w, 0.0, 0.0, 0.0, l * (r_plus_ + w), l, 0.0);
    }
    if (1.0 - w < 1.0) {
      psi3_ = QuinticBridge(1.0 - w, 1.0, l, 0.0, 0.0, 0.0, 0.0, 0.0);
    }
    for (const auto& y : params.external) {
      if (y.center.norm() > l) {
        far_external_.push_back(y);
      }
    }
  }

  int ell() const noexcept { return ell_; }
  double transition_width() const noexcept { return width_; }
  double r_minus() const noexcept { return r_minus_; }
  double r_plus() const noexcept { return r_plus_; }
  /// External globules beyond B(0, ell); only these enter psi3.
  const std::vector<Globule>& far_external() const noexcept { return far_external_; }

  ProfileValue psi1(double s) const noexcept {
    const double l = ell_;
    if (s <= l) {
      return {};
    }
    if (s >= l + width_) {
      return {2.0 * s, 2.0};
    }
    return psi1_(s);
  }

  ProfileValue psi2(double s) const noexcept {
    const double l = ell_;
    if (s >= r_minus_ && s <= r_plus_) {
      return {};
    }
    if (s >= r_plus_ + width_) {
      return {l * s, l};
    }
    if (s > r_plus_) {
      return psi2_high_(s);
    }
    if (s <= r_minus_ - width_) {
      return {l * (r_plus_ + r_minus_ - s), -l};
    }
    return psi2_low_(s);
  }

  ProfileValue psi3(double s) const noexcept {
    if (s >= 1.0) {
      return {};
    }
    if (s <= 1.0 - width_) {
      return {static_cast<double>(ell_), 0.0};
    }
    return psi3_(s);
  }

  const QuinticBridge& psi1_bridge() const noexcept { return psi1_; }
  const QuinticBridge& psi2_low_bridge() const noexcept { return psi2_low_; }
  const QuinticBridge& psi2_high_bridge() const noexcept { return psi2_high_; }
  const QuinticBridge& psi3_bridge() const noexcept { return psi3_; }

 private:
  int ell_;
  double r_minus_;
  double r_plus_;
  double width_;
  QuinticBridge psi1_;
  QuinticBridge psi2_low_;
  QuinticBridge psi2_high_;
  QuinticBridge psi3_;
  std::vector<Globule> far_external_;
};

inline double psi(const PenalizationSpec& spec, const Globule& g) {
  double value = spec.psi1(g.center.norm()).value + spec.psi2(g.radius).value;
  for (const auto& y : spec.far_external()) {
    value += spec.psi3((g.center - y.center).norm() / (g.radius + y.radius)).value;
  }
  return value;
}

struct PsiGradient {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
};

inline PsiGradient psi_gradient(const PenalizationSpec& spec, const Globule& g) {
  PsiGradient grad;
  const double dist = g.center.norm();
  const auto p1 = spec.psi1(dist);
  if (p1.slope != 0.0 && dist > 0.0) {
    grad.center += p1.slope * g.center / dist;
  }
  grad.radius += spec.psi2(g.radius).slope;
  for (const auto& y : spec.far_external()) {
    const Vec3 d = g.center - y.center;
    const double sep = d.norm();
    const double sum = g.radius + y.radius;
    const auto p3 = spec.psi3(sep / sum);
    if (p3.slope == 0.0 || sep == 0.0) {
      continue;
    }
    grad.center += p3.slope * d / (sep * sum);
    grad.radius -= p3.slope * sep / (sum * sum);
  }
  return grad;
}

/// Sum of psi over all globules (the potential Phi of the n-globule system).
inline double total_psi(const PenalizationSpec& spec, const Configuration& c) {
  double total = 0.0;
  for (const auto& g : c) {
    total += psi(spec, g);
  }
  return total;
}

// ---------------------------------------------------------------------------
// Integrability diagnostic.

struct IntegrabilityReport {
  int ell_min = 1;                  // first ell admitted by the band-width condition
  std::vector<double> increments;   // one per ell in [ell_min, ell_max]
  double partial_sum = 0.0;
  double error_estimate = 0.0;
};

namespace detail {

template <class F>
double adaptive_integral(F&& f, double a, double b, double& error_sum) {
  double error = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      f, a, b, 20, 1e-11, &error, &l1);
  if (!std::isfinite(value) || error > 1e-7 * std::max(1.0, std::abs(l1))) {
    throw NumericalError("adaptive quadrature did not converge");
  }
  error_sum += error;
  return value;
}

}  // namespace detail

/// Partial sums over ell of the integral of 1{psi > 0} exp(-psi) over
/// R^3 x R, for an empty external configuration. The integrand separates,
/// so the increment is V T2 + T1 R + T1 T2 with V = |B(0, ell)|,
/// R = r_plus - r_minus, and T1, T2 the radial and radius tail integrals.
inline IntegrabilityReport integrability_check(const ModelParams& params, int ell_max) {
  params.validate();
  if (!params.external.empty()) {
    throw ParameterError("integrability_check supports an empty external configuration only");
  }
  if (ell_max < 1) {
    throw ParameterError("ell_max must be at least 1");
  }
  IntegrabilityReport report;
  const double span = params.r_plus - params.r_minus;
  int ell = 1;
  while (std::exp(-static_cast<double>(ell)) >= std::min(1.0, 0.25 * span)) {
    ++ell;
  }
  report.ell_min = ell;
  const double inf = std::numeric_limits<double>::infinity();
  for (; ell <= ell_max; ++ell) {
    ModelParams p = params;
    p.ell = ell;
    const PenalizationSpec spec(p);
    const double l = ell;
    const double w = spec.transition_width();
    double err = 0.0;
    auto radial = [&](double s) { return 4.0 * std::numbers::pi * s * s * std::exp(-spec.psi1(s).value); };
    auto radius = [&](double s) { return std::exp(-spec.psi2(s).value); };
    const double t1 = detail::adaptive_integral(radial, l, l + w, err) +
                      detail::adaptive_integral(radial, l + w, inf, err);
    const double t2 = detail::adaptive_integral(radius, params.r_plus, params.r_plus + w, err) +
                      detail::adaptive_integral(radius, params.r_plus + w, inf, err) +
                      detail::adaptive_integral(radius, params.r_minus - w, params.r_minus, err) +
                      detail::adaptive_integral(radius, -inf, params.r_minus - w, err);
    const double volume = 4.0 / 3.0 * std::numbers::pi * l * l * l;
    const double inc = volume * t2 + t1 * span + t1 * t2;
    report.increments.push_back(inc);
    report.partial_sum += inc;
    report.error_estimate += err * (volume + span + t1 + t2);
  }
  return report;
}

}  // namespace globules
