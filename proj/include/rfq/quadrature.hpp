#pragma once

#include <array>
#include <cmath>
#include <concepts>
#include <numbers>
#include <stdexcept>

namespace rfq {

// Standard normal density and CDF.
inline double normal_pdf(double x) noexcept {
    return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
}

inline double normal_cdf(double x) noexcept {
    return 0.5 * std::erfc(-x / std::numbers::sqrt2);
}

// Antiderivative of cos^s on [0, pi], by the power-reduction recurrence
//   F_s(t) = cos^{s-1}(t) sin(t)/s + (s-1)/s F_{s-2}(t),  F_0 = t, F_1 = sin.
// Exact up to rounding; no quadrature inside.
inline double cos_power_antiderivative(int s, double t) {
    if (s < 0) throw std::invalid_argument("cos_power_antiderivative: negative power");
    const double c = std::cos(t), sn = std::sin(t);
    double f0 = t, f1 = sn; // F_0, F_1
    if (s == 0) return f0;
    if (s == 1) return f1;
    double cp = 1.0; // cos^{k-1} running power, k starts at 2
    double even = f0, odd = f1;
    for (int k = 2; k <= s; ++k) {
        cp *= c;
        double& prev = (k % 2 == 0) ? even : odd;
        prev = cp * sn / k + (k - 1.0) / k * prev;
    }
    return (s % 2 == 0) ? even : odd;
}

inline double cos_power_integral(int s, double lo, double hi) {
    return cos_power_antiderivative(s, hi) - cos_power_antiderivative(s, lo);
}

namespace detail {

// Gauss-Kronrod 15-point pair on [-1,1]: 7-point Gauss embedded in 15-point
// Kronrod; the difference powers the error estimate.
inline constexpr std::array<double, 8> kKronrodNodes = {
    0.991455371120812639206854697526329,
    0.949107912342758524526189684047851,
    0.864864423359769072789712788640926,
    0.741531185599394439863864773280788,
    0.586087235467691130294144838258730,
    0.405845151377397166906606412076961,
    0.207784955007898467600689403773245,
    0.000000000000000000000000000000000};

inline constexpr std::array<double, 8> kKronrodWeights = {
    0.022935322010529224963732008058970,
    0.063092092629978553290700663189204,
    0.104790010322250183839876322541518,
    0.140653259715525918745189590510238,
    0.169004726639267902826583426598550,
    0.190350578064785409913256402421014,
    0.204432940075298892414161999234649,
    0.209482141084727828012999174891714};

inline constexpr std::array<double, 4> kGaussWeights = {
    0.129484966168869693270611432679082,
    0.279705391489276667901467771423780,
    0.381830050505118944950369775488975,
    0.417959183673469387755102040816327};

struct GkResult {
    double value;
    double error;
};

// Gauss nodes are the odd-indexed Kronrod nodes plus the midpoint.
template <typename F>
GkResult gk15(F&& f, double a, double b) {
    const double h = 0.5 * (b - a);
    const double c = 0.5 * (a + b);
    const double fc = f(c);
    double kron = kKronrodWeights[7] * fc;
    double gauss = kGaussWeights[3] * fc;
    for (int i = 0; i < 7; ++i) {
        const double x = h * kKronrodNodes[i];
        const double fv = f(c - x) + f(c + x);
        kron += kKronrodWeights[i] * fv;
        if (i % 2 == 1) gauss += kGaussWeights[i / 2] * fv;
    }
    return {kron * h, std::abs(kron - gauss) * std::abs(h)};
}

} // namespace detail

// Adaptive Gauss-Kronrod integration with interval bisection.
// Stops when the per-interval error estimate is below the pro-rated budget.
template <typename F>
double integrate(F&& f, double a, double b, double abs_tol = 1e-12, int max_depth = 48) {
    struct Frame {
        double a, b, tol;
        int depth;
    };
    // Explicit stack: deep singular tails must not overflow the call stack.
    std::array<Frame, 2048> stack;
    int top = 0;
    stack[top++] = {a, b, abs_tol, 0};
    double total = 0.0;
    while (top > 0) {
        const Frame fr = stack[--top];
        const auto r = detail::gk15(f, fr.a, fr.b);
        if (r.error <= fr.tol || fr.depth >= max_depth) {
            total += r.value;
            continue;
        }
        if (top + 2 > static_cast<int>(stack.size()))
            throw std::runtime_error("integrate: subdivision stack exhausted");
        const double mid = 0.5 * (fr.a + fr.b);
        stack[top++] = {fr.a, mid, 0.5 * fr.tol, fr.depth + 1};
        stack[top++] = {mid, fr.b, 0.5 * fr.tol, fr.depth + 1};
    }
    return total;
}

} // namespace rfq
