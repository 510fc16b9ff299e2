#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "rfq/quadrature.hpp"

// Distribution of z = cos(g X + tau) with X standard normal and tau uniform
// on (0, 2pi), and of the pair (z_x, z_y) built from jointly normal (X, Y)
// with correlation rho sharing one tau.
//
// The marginal is the arcsine law on [-1,1] for every g > 0: the phase
// g X + tau is uniform modulo 2pi. All pair structure lives in the angle
// variables a = arccos(z) in [0, pi], where the joint density is a wrapped
// sum of two Gaussian ridges of width sigma = sqrt(2 (1 - rho)) g.

namespace rfq {

inline constexpr double kPi = std::numbers::pi;

// sigma below this is treated as the exact rho -> 1 limit, where the pair
// law degenerates to the diagonal z_x = z_y.
inline constexpr double kDegenerateSigma = 1e-6;

inline double marginal_pdf(double z) {
    if (z <= -1.0 || z >= 1.0) return 0.0;
    return 1.0 / (kPi * std::sqrt(1.0 - z * z));
}

inline double marginal_cdf(double z) {
    if (z <= -1.0) return 0.0;
    if (z >= 1.0) return 1.0;
    return 0.5 + std::asin(z) / kPi;
}

inline double marginal_quantile(double p) {
    if (p < 0.0 || p > 1.0) throw std::invalid_argument("marginal_quantile: p outside [0,1]");
    return std::sin(kPi * (p - 0.5));
}

// E[z^s ; z in [a,b]] under the arcsine law, via the angle substitution
// z = cos(t): (1/pi) * integral of cos^s over [arccos b, arccos a].
inline double marginal_moment(int s, double a, double b) {
    if (a > b) throw std::invalid_argument("marginal_moment: a > b");
    const double ta = std::acos(std::clamp(b, -1.0, 1.0));
    const double tb = std::acos(std::clamp(a, -1.0, 1.0));
    return cos_power_integral(s, ta, tb) / kPi;
}

// Density of z^2 on [0,1]: 1 / (pi sqrt(s - s^2)).
inline double z2_pdf(double s) {
    if (s <= 0.0 || s >= 1.0) return 0.0;
    return 1.0 / (kPi * std::sqrt(s - s * s));
}

inline double z2_cdf(double s) {
    if (s <= 0.0) return 0.0;
    if (s >= 1.0) return 1.0;
    return 2.0 * std::asin(std::sqrt(s)) / kPi;
}

// E[(z^2)^k ; z^2 in [a,b]]: substitute s = sin^2(t), giving
// (2/pi) * integral of sin^{2k} = (2/pi) * integral of cos^{2k} shifted.
inline double z2_moment(int k, double a, double b) {
    if (a > b) throw std::invalid_argument("z2_moment: a > b");
    const double ta = std::asin(std::sqrt(std::clamp(a, 0.0, 1.0)));
    const double tb = std::asin(std::sqrt(std::clamp(b, 0.0, 1.0)));
    // sin^{2k}(t) on [ta,tb] equals cos^{2k} on the reflected interval.
    return 2.0 / kPi * cos_power_integral(2 * k, kPi / 2.0 - tb, kPi / 2.0 - ta);
}

// Shared-phase pair law parameters.
struct PairLaw {
    double rho;
    double gamma;
    double sigma; // sqrt(2 (1 - rho)) * gamma
    int kmax;     // wrapped-Gaussian truncation: |arg + 2 k pi| <= 8 sigma, floor 3

    PairLaw(double rho_, double gamma_) : rho(rho_), gamma(gamma_) {
        if (gamma_ <= 0.0) throw std::invalid_argument("PairLaw: gamma must be positive");
        if (rho_ < -1.0 || rho_ > 1.0) throw std::invalid_argument("PairLaw: rho outside [-1,1]");
        sigma = std::sqrt(std::max(0.0, 2.0 * (1.0 - rho_))) * gamma_;
        kmax = std::max(3, static_cast<int>(std::ceil((8.0 * sigma + 2.0 * kPi) / (2.0 * kPi))));
    }

    bool degenerate() const { return sigma < kDegenerateSigma; }
};

// Joint density of the angle pair (a_x, a_y) on [0, pi]^2:
//   g(a_x, a_y) = (1/pi) sum_k [ phi_sigma(a_x - a_y + 2 k pi)
//                              + phi_sigma(a_x + a_y + 2 k pi) ].
inline double angle_pdf(double ax, double ay, const PairLaw& law) {
    if (law.degenerate()) throw std::domain_error("angle_pdf: degenerate law (rho = 1)");
    const double inv = 1.0 / law.sigma;
    double s = 0.0;
    for (int k = -law.kmax; k <= law.kmax; ++k) {
        const double shift = 2.0 * kPi * k;
        const double d = (ax - ay + shift) * inv;
        const double a = (ax + ay + shift) * inv;
        s += std::exp(-0.5 * d * d) + std::exp(-0.5 * a * a);
    }
    return s * inv / std::sqrt(2.0 * kPi) / kPi;
}

// Joint density of (z_x, z_y) on (-1,1)^2.
inline double joint_pdf(double zx, double zy, const PairLaw& law) {
    if (std::abs(zx) >= 1.0 || std::abs(zy) >= 1.0) return 0.0;
    if (law.degenerate()) return 0.0; // mass lives on the diagonal line
    const double wx = 1.0 / std::sqrt(1.0 - zx * zx);
    const double wy = 1.0 / std::sqrt(1.0 - zy * zy);
    return angle_pdf(std::acos(zx), std::acos(zy), law) * wx * wy * kPi;
}

namespace detail {

// Mass of the a_y interval [c, d] under the ridge pair centered by a_x,
// summed over wrap-arounds; the inner integral is exact in terms of Phi.
inline double ridge_mass(double ax, double c, double d, const PairLaw& law) {
    const double inv = 1.0 / law.sigma;
    double s = 0.0;
    for (int k = -law.kmax; k <= law.kmax; ++k) {
        const double t = ax + 2.0 * kPi * k;
        s += normal_cdf((t - c) * inv) - normal_cdf((t - d) * inv);
        s += normal_cdf((t + d) * inv) - normal_cdf((t + c) * inv);
    }
    return s;
}

} // namespace detail

// P[a_x in [ax_lo, ax_hi], a_y in [ay_lo, ay_hi]] under the angle law.
// The a_y integral is analytic; only the a_x direction is quadrature.
inline double cell_mass(double ax_lo, double ax_hi, double ay_lo, double ay_hi,
                        const PairLaw& law, double tol = 1e-11) {
    if (law.degenerate()) {
        const double lo = std::max(ax_lo, ay_lo), hi = std::min(ax_hi, ay_hi);
        return std::max(0.0, hi - lo) / kPi;
    }
    return integrate([&](double ax) { return detail::ridge_mass(ax, ay_lo, ay_hi, law); },
                     ax_lo, ax_hi, tol) / kPi;
}

// E[cos^su(a_x) cos^sv(a_y) ; cell]. Needed with su, sv <= 2 by the variance
// formulas; the inner integral has no elementary form once sv > 0, so both
// directions are quadrature (the integrand is a smooth narrow Gaussian).
inline double cell_moment(int su, int sv, double ax_lo, double ax_hi,
                          double ay_lo, double ay_hi, const PairLaw& law,
                          double tol = 1e-10) {
    if (law.degenerate()) {
        const double lo = std::max(ax_lo, ay_lo), hi = std::min(ax_hi, ay_hi);
        if (lo >= hi) return 0.0;
        return cos_power_integral(su + sv, lo, hi) / kPi;
    }
    if (sv == 0 && su == 0) return cell_mass(ax_lo, ax_hi, ay_lo, ay_hi, law, tol);
    if (sv == 0) {
        return integrate(
                   [&](double ax) {
                       return std::pow(std::cos(ax), su) *
                              detail::ridge_mass(ax, ay_lo, ay_hi, law);
                   },
                   ax_lo, ax_hi, tol) / kPi;
    }
    const auto inner = [&](double ax) {
        return integrate(
            [&](double ay) {
                return std::pow(std::cos(ay), sv) * angle_pdf(ax, ay, law);
            },
            ay_lo, ay_hi, tol);
    };
    return integrate([&](double ax) { return std::pow(std::cos(ax), su) * inner(ax); },
                     ax_lo, ax_hi, tol);
}

} // namespace rfq
