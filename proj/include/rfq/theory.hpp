#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfq/densities.hpp"
#include "rfq/errors.hpp"
#include "rfq/quadrature.hpp"
#include "rfq/quantizer.hpp"
#include "rfq/rng.hpp"

// Closed-form and semi-analytic moments of quantized feature pairs: the
// theta/zeta/alpha/psi tables, estimator means and variances, debiased
// variance comparisons, and Monte-Carlo harnesses that re-derive the same
// numbers from raw samples.

namespace rfq {

inline constexpr int kAlphaTruncation = 99;

inline double kernel_value(double rho, double gamma) {
    return std::exp(-gamma * gamma * (1.0 - rho));
}

namespace detail {

inline double ipow(double x, int n) {
    double r = 1.0;
    for (int k = 0; k < n; ++k) r *= x;
    return r;
}

inline double binom(int n, int k) {
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

inline void require_decoded_law(const Quantizer& q, const char* who) {
    if (q.kind == QuantKind::STOCQ_GRID)
        throw std::invalid_argument(std::string(who) +
                                    ": stochastic rounding has no fixed decoded-value law");
}

// E[z_x^s z_y^t] for the unquantized pair: expand the cosine powers into
// cosines of multiple angles; only matched frequencies survive the shared
// uniform phase, each contributing exp(-freq^2 gamma^2 (1-rho))/2.
inline double identity_zeta(int s, int t, double rho, double gamma) {
    const double g2 = gamma * gamma * (1.0 - rho);
    double acc = 0.0;
    for (int k = 0; k <= s; ++k) {
        const int fx = std::abs(s - 2 * k);
        const double cx = binom(s, k) / ipow(2.0, s);
        for (int l = 0; l <= t; ++l) {
            if (std::abs(t - 2 * l) != fx) continue;
            const double cy = binom(t, l) / ipow(2.0, t);
            acc += cx * cy * (fx == 0 ? 1.0 : 0.5 * std::exp(-double(fx) * fx * g2));
        }
    }
    return acc;
}

// Grid rounding with an externally supplied uniform variate; same cell and
// probability conventions as encode_stocq.
inline double stocq_round(const Quantizer& q, double z, double u) {
    const std::size_t i = q.cell_index(z);
    const double lo = q.borders[i], hi = q.borders[i + 1];
    return u < (z - lo) / (hi - lo) ? hi : lo;
}

} // namespace detail

// theta_{s,t} = E[z^s Q(z)^t] under the arcsine marginal.
inline double theta(int s, int t, const Quantizer& q) {
    if (s < 0 || t < 0) throw std::invalid_argument("theta: negative exponent");
    if (q.kind == QuantKind::IDENTITY || t == 0) return marginal_moment(s + t, -1.0, 1.0);
    detail::require_decoded_law(q, "theta");
    double acc = 0.0;
    for (std::size_t i = 0; i < q.cells(); ++i)
        acc += detail::ipow(q.levels[i], t) * marginal_moment(s, q.borders[i], q.borders[i + 1]);
    return acc;
}

// Chebyshev coefficient of the decoded-value map: Q = alpha_0 T_0 + sum_{i>=1}
// alpha_i T_i with alpha_i = (2/pi) int Q(x) T_i(x) / sqrt(1-x^2) dx. Piecewise
// constant Q makes this a finite sine sum at the border angles.
inline double chebyshev_alpha(int i, const Quantizer& q) {
    if (i < 0) throw std::invalid_argument("chebyshev_alpha: negative index");
    if (q.kind == QuantKind::IDENTITY) return i == 1 ? 1.0 : 0.0;
    detail::require_decoded_law(q, "chebyshev_alpha");
    if (i == 0) return theta(0, 1, q);
    double acc = 0.0;
    for (std::size_t j = 0; j < q.cells(); ++j) {
        const double a_lo = std::acos(q.borders[j]);     // larger angle
        const double a_hi = std::acos(q.borders[j + 1]); // smaller angle
        acc += q.levels[j] * (std::sin(i * a_lo) - std::sin(i * a_hi));
    }
    return 2.0 * acc / (kPi * i);
}

// psi_{i,j} = E[T_i(z_x) T_j(z_y)]. With z = cos(phase), T_i(z) = cos(i phase);
// the difference phase is Gaussian and the sum phase carries (i+j) tau, so the
// off-diagonal terms vanish and the diagonal is a Gaussian characteristic value.
inline double psi(int i, int j, const PairLaw& law) {
    if (i < 1 || j < 1) throw std::invalid_argument("psi: indices start at 1");
    if (i != j) return 0.0;
    return 0.5 * std::exp(-double(i) * i * law.gamma * law.gamma * (1.0 - law.rho));
}

// Cell-level moment tables for one (quantizer, rho, gamma) context. p holds
// the joint cell masses. Grid kinds also get the stochastic-variance
// ingredients kappa (E[z_x z_y; cells]) and m1 (E[z_x; cells]).
struct MomentTable {
    Quantizer q;
    double rho = 0.0;
    double gamma = 1.0;
    Eigen::MatrixXd p;
    Eigen::MatrixXd kappa; // grid kinds only
    Eigen::MatrixXd m1;    // grid kinds only
    std::vector<double> alpha;

    double theta(int s, int t) const { return rfq::theta(s, t, q); }
    double psi(int i, int j) const { return rfq::psi(i, j, PairLaw(rho, gamma)); }

    // zeta_{s,t} = E[Q(z_x)^s Q(z_y)^t] assembled from the cell masses.
    double zeta(int s, int t) const {
        if (s < 0 || t < 0) throw std::invalid_argument("zeta: negative exponent");
        if (q.kind == QuantKind::IDENTITY) return detail::identity_zeta(s, t, rho, gamma);
        detail::require_decoded_law(q, "zeta");
        const auto n = static_cast<Eigen::Index>(q.cells());
        Eigen::VectorXd us(n), vt(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            us(i) = detail::ipow(q.levels[i], s);
            vt(i) = detail::ipow(q.levels[i], t);
        }
        return us.dot(p * vt);
    }
};

inline MomentTable build_moment_table(const Quantizer& q, double rho, double gamma,
                                      double mass_tol = 1e-11) {
    validate(q);
    const PairLaw law(rho, gamma);
    MomentTable t;
    t.q = q;
    t.rho = rho;
    t.gamma = gamma;

    if (q.kind == QuantKind::IDENTITY) {
        t.p = Eigen::MatrixXd::Ones(1, 1);
    } else {
        // cell i covers angles [a[i+1], a[i]] (acos reverses order)
        const std::size_t n = q.borders.size() - 1;
        std::vector<double> a(q.borders.size());
        for (std::size_t k = 0; k < q.borders.size(); ++k) a[k] = std::acos(q.borders[k]);
        t.p.resize(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = i; j < n; ++j) {
                const double v = cell_mass(a[i + 1], a[i], a[j + 1], a[j], law, mass_tol);
                t.p(i, j) = v;
                t.p(j, i) = v;
            }
        if (q.kind == QuantKind::STOCQ_GRID) {
            t.kappa.resize(n, n);
            t.m1.resize(n, n);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    if (j >= i) {
                        const double v =
                            cell_moment(1, 1, a[i + 1], a[i], a[j + 1], a[j], law, 1e-10);
                        t.kappa(i, j) = v;
                        t.kappa(j, i) = v;
                    }
                    t.m1(i, j) = cell_moment(1, 0, a[i + 1], a[i], a[j + 1], a[j], law, 1e-11);
                }
        }
    }

    if (q.kind != QuantKind::STOCQ_GRID) {
        t.alpha.resize(kAlphaTruncation + 1);
        for (int i = 0; i <= kAlphaTruncation; ++i) t.alpha[i] = chebyshev_alpha(i, q);
    }
    return t;
}

// Variance of the stochastically rounded estimator (m-free scale), paired
// with the full-precision variance from the identity quantizer run through
// the same zeta machinery. Rounding within a cell has E[Q | z] = z and
// E[Q^2 | z] = z S_i - P_i, so the second moment of the product picks up
// S_i S_j, P_i P_j and mixed S_i P_j cell terms; the 1-bit grid has S = 0,
// which is why its variance 4 - K^2 shows no trace of the mixed ones.
struct StocqVariance {
    double stocq;
    double full;
};

inline double lm_variance(const MomentTable& t, std::uint64_t m);

inline StocqVariance stocq_variance(const MomentTable& t) {
    if (t.q.kind != QuantKind::STOCQ_GRID)
        throw std::invalid_argument("stocq_variance: needs a grid quantizer");
    const auto& g = t.q.borders;
    const std::size_t n = g.size() - 1;
    double e2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double si = g[i] + g[i + 1], pi = g[i] * g[i + 1];
        for (std::size_t j = 0; j < n; ++j) {
            const double sj = g[j] + g[j + 1], pj = g[j] * g[j + 1];
            e2 += si * sj * t.kappa(i, j) + pi * pj * t.p(i, j) -
                  2.0 * si * pj * t.m1(i, j);
        }
    }
    const double k = kernel_value(t.rho, t.gamma);
    const MomentTable id = build_moment_table(identity_quantizer(), t.rho, t.gamma);
    return {4.0 * e2 - k * k, lm_variance(id, 1)};
}

inline StocqVariance stocq_variance(const Quantizer& q, double rho, double gamma) {
    return stocq_variance(build_moment_table(q, rho, gamma));
}

// Mean of the simple quantized estimator as the Chebyshev series
// sum_{i odd} alpha_i^2 exp(-i^2 gamma^2 (1-rho)), truncated at an odd index;
// the remainder bound uses Parseval (sum of all alpha_i^2 = 2 E[Q^2]) and
// |psi| <= 1/2. Extracting the leading term as alpha_1^2 K = 4 theta_11^2 K
// and starting the sum at 3 is the same series, since off-diagonal psi
// vanish; at rho = 0 the tail terms are alpha_i^2 K^{i^2}, tiny but nonzero.
struct SeriesValue {
    double value;
    double remainder_bound;
};

inline SeriesValue lm_mean(const Quantizer& q, double rho, double gamma,
                           int truncation = kAlphaTruncation) {
    if (truncation < 3 || truncation % 2 == 0)
        throw std::invalid_argument("lm_mean: truncation must be odd and >= 3");
    detail::require_decoded_law(q, "lm_mean");
    const double theta02 = theta(0, 2, q);
    if (PairLaw(rho, gamma).degenerate()) return {2.0 * theta02, 0.0};
    const double g2 = gamma * gamma * (1.0 - rho);
    double acc = 0.0, used = 0.0;
    for (int i = 1; i <= truncation; i += 2) {
        const double ai = chebyshev_alpha(i, q);
        acc += ai * ai * std::exp(-double(i) * i * g2);
        used += ai * ai;
    }
    return {acc, 0.5 * std::max(0.0, 2.0 * theta02 - used)};
}

inline SeriesValue lm_mean(const MomentTable& t, int truncation = kAlphaTruncation) {
    return lm_mean(t.q, t.rho, t.gamma, truncation);
}

// Var[K_hat_Q] = (4/m)(zeta_22 - zeta_11^2); with the identity quantizer this
// is the full-precision feature variance.
inline double lm_variance(const MomentTable& t, std::uint64_t m) {
    if (m < 1) throw std::invalid_argument("lm_variance: m must be >= 1");
    const double z11 = t.zeta(1, 1);
    return 4.0 * (t.zeta(2, 2) - z11 * z11) / static_cast<double>(m);
}

// Leading-order mean and variance of the normalized estimator. The variance
// is the delta-method assembly of the ratio A/sqrt(BC); expanded it equals
// zeta22/zeta20^2 - 2 zeta11 zeta31 / zeta20^3 + zeta11^2 (zeta40 + zeta22)
// / (2 zeta20^4).
struct MeanVariance {
    double mean;
    double variance;
};

inline double normalized_variance_leading(const MomentTable& t) {
    const double z11 = t.zeta(1, 1), z20 = t.zeta(2, 0), z22 = t.zeta(2, 2);
    const double z31 = t.zeta(3, 1), z40 = t.zeta(4, 0);
    const double s2 = z20 * z20;
    return z22 / s2 - 2.0 * z11 * z31 / (s2 * z20) +
           z11 * z11 * (z40 + z22) / (2.0 * s2 * s2);
}

inline MeanVariance normalized_mean_variance(const MomentTable& t, std::uint64_t m) {
    if (m < 1) throw std::invalid_argument("normalized_mean_variance: m must be >= 1");
    detail::require_decoded_law(t.q, "normalized_mean_variance");
    if (PairLaw(t.rho, t.gamma).degenerate()) return {1.0, 0.0};
    return {t.zeta(1, 1) / t.zeta(2, 0),
            normalized_variance_leading(t) / static_cast<double>(m)};
}

// Debiased variance: variance after rescaling the estimator to be unbiased
// at this point, V K^2 / E^2. Undefined when the mean is not positive.
inline std::optional<double> db_variance(double mean, double variance, double k) {
    if (!(mean > 0.0)) return std::nullopt;
    return variance * k * k / (mean * mean);
}

// Normalized-vs-simple debiased variance ratio over a rho grid (leading order
// in m; the K^2 factors cancel). Applicable only for gamma <= pi / sqrt(2).
struct DbPoint {
    double rho;
    double ratio;
};

struct DbReport {
    bool applicable = false;
    std::vector<DbPoint> points;
    double max_ratio = 0.0;
    bool dominated = false;
};

inline DbReport db_variance_dominance_check(const Quantizer& q, double gamma,
                                            std::span<const double> rho_grid) {
    DbReport r;
    r.applicable = gamma <= kPi / std::sqrt(2.0);
    if (!r.applicable) return r;
    detail::require_decoded_law(q, "db_variance_dominance_check");
    for (const double rho : rho_grid) {
        if (rho < 0.0 || rho > 1.0)
            throw std::invalid_argument("db_variance_dominance_check: rho grid outside [0,1]");
        const MomentTable t = build_moment_table(q, rho, gamma);
        const double z11 = t.zeta(1, 1);
        const double var_q = t.zeta(2, 2) - z11 * z11;
        const double ratio =
            normalized_variance_leading(t) * t.zeta(2, 0) * t.zeta(2, 0) / var_q;
        r.points.push_back({rho, ratio});
        r.max_ratio = std::max(r.max_ratio, ratio);
    }
    r.dominated = !r.points.empty() && r.max_ratio <= 1.0 + 1e-9;
    return r;
}

// Monte-Carlo estimate of the rho-derivative d/drho E[g1(z_x) g2(z_y)] =
// gamma^2 E[g1'(z_x) sin(s_x) g2'(z_y) sin(s_y)] (s the raw phases).
struct McValue {
    double value;
    double se;
};

inline McValue monotonicity_derivative(const std::function<double(double)>& g1_deriv,
                                       const std::function<double(double)>& g2_deriv,
                                       double rho, double gamma, std::size_t samples,
                                       std::uint64_t seed) {
    if (samples < 2) throw std::invalid_argument("monotonicity_derivative: need samples >= 2");
    Stream s(derive(seed, stream_tag::kMc));
    const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t n = 0; n < samples; ++n) {
        const double g1 = s.next_normal(), g2 = s.next_normal(), tau = s.next_angle();
        const double sx = gamma * g1 + tau;
        const double sy = gamma * (rho * g1 + c * g2) + tau;
        const double v = g1_deriv(std::cos(sx)) * std::sin(sx) * g2_deriv(std::cos(sy)) *
                         std::sin(sy);
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / samples;
    const double var = std::max(0.0, acc2 / samples - mean * mean) * samples / (samples - 1.0);
    const double g2m = gamma * gamma;
    return {g2m * mean, g2m * std::sqrt(var / samples)};
}

// zeta_11 along a rho grid must increase strictly. The sufficient condition
// covers sqrt(2 (1-rho)) gamma <= pi; the report carries that bound and a
// flag for grid points below it (the behavior can extend a little past it,
// so out-of-region points are reported rather than rejected).
struct MonotonicityReport {
    double rho_floor = -1.0; // monotone-region lower bound for this gamma
    bool in_region = false;  // whole grid at or above rho_floor (1e-3 slack)
    std::vector<double> rhos;
    std::vector<double> zeta11;
    bool increasing = false;
};

inline MonotonicityReport quantized_mean_monotonicity(const Quantizer& q, double gamma,
                                                      std::span<const double> rho_grid) {
    detail::require_decoded_law(q, "quantized_mean_monotonicity");
    MonotonicityReport r;
    r.rho_floor = std::max(-1.0, 1.0 - kPi * kPi / (2.0 * gamma * gamma));
    r.in_region = true;
    for (const double rho : rho_grid) {
        if (rho < r.rho_floor - 1e-3) r.in_region = false;
        r.rhos.push_back(rho);
        r.zeta11.push_back(build_moment_table(q, rho, gamma).zeta(1, 1));
    }
    r.increasing = !r.zeta11.empty();
    for (std::size_t i = 1; i < r.zeta11.size(); ++i)
        if (r.zeta11[i] <= r.zeta11[i - 1]) r.increasing = false;
    return r;
}

// ---- Monte-Carlo harness over replicated feature pairs ----

struct McStats {
    double mean = 0.0;
    double var = 0.0;
    double se_mean = 0.0;
};

struct PairMcResult {
    QuantKind kind;
    int bits = 0;
    double gamma = 0.0;
    double rho = 0.0;
    McStats simple;     // 2/m sum Q Q
    McStats normalized; // sum Q Q / norms
    McStats full;       // 2/m sum z z
};

namespace detail {

struct Welford {
    std::size_t n = 0;
    double mean = 0.0, m2 = 0.0;
    void add(double x) {
        ++n;
        const double d = x - mean;
        mean += d / n;
        m2 += d * (x - mean);
    }
    McStats stats() const {
        const double v = n > 1 ? m2 / (n - 1.0) : 0.0;
        return {mean, v, std::sqrt(v / std::max<std::size_t>(n, 1))};
    }
};

} // namespace detail

// Replicated estimates for every (quantizer, gamma, rho) combination, sharing
// the projection and phase draws across combinations (they do not depend on
// the quantizer or the pair geometry). Results are indexed
// (qi * |gammas| + gi) * |rhos| + ri.
inline std::vector<PairMcResult> mc_pair_sweep(std::span<const Quantizer> qs,
                                               std::span<const double> gammas,
                                               std::span<const double> rhos,
                                               std::uint32_t m, std::uint32_t reps,
                                               std::uint64_t seed) {
    if (m < 1 || reps < 1) throw std::invalid_argument("mc_pair_sweep: m and reps >= 1");
    const std::size_t nq = qs.size(), ng = gammas.size(), nr = rhos.size();
    bool need_u = false;
    for (const Quantizer& q : qs) {
        validate(q);
        if (q.kind == QuantKind::STOCQ_GRID) need_u = true;
    }

    std::vector<detail::Welford> wsimple(nq * ng * nr), wnorm(nq * ng * nr);
    std::vector<detail::Welford> wfull(ng * nr);
    std::vector<double> g1(m), g2(m), tau(m), ux, uy, zy(m), qx(m), qy(m);
    Eigen::MatrixXd zx(ng, m);
    if (need_u) {
        ux.resize(m);
        uy.resize(m);
    }

    Stream s(derive(seed, stream_tag::kMc));
    for (std::uint32_t rep = 0; rep < reps; ++rep) {
        for (std::uint32_t i = 0; i < m; ++i) {
            g1[i] = s.next_normal();
            g2[i] = s.next_normal();
            tau[i] = s.next_angle();
        }
        if (need_u)
            for (std::uint32_t i = 0; i < m; ++i) {
                ux[i] = s.next_unit();
                uy[i] = s.next_unit();
            }
        for (std::size_t gi = 0; gi < ng; ++gi)
            for (std::uint32_t i = 0; i < m; ++i)
                zx(gi, i) = std::cos(gammas[gi] * g1[i] + tau[i]);

        for (std::size_t gi = 0; gi < ng; ++gi) {
            const double gamma = gammas[gi];
            for (std::size_t ri = 0; ri < nr; ++ri) {
                const double rho = rhos[ri];
                const double c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
                double szz = 0.0;
                for (std::uint32_t i = 0; i < m; ++i) {
                    zy[i] = std::cos(gamma * (rho * g1[i] + c * g2[i]) + tau[i]);
                    szz += zx(gi, i) * zy[i];
                }
                wfull[gi * nr + ri].add(2.0 * szz / m);

                for (std::size_t qi = 0; qi < nq; ++qi) {
                    const Quantizer& q = qs[qi];
                    switch (q.kind) {
                        case QuantKind::IDENTITY:
                            for (std::uint32_t i = 0; i < m; ++i) {
                                qx[i] = zx(gi, i);
                                qy[i] = zy[i];
                            }
                            break;
                        case QuantKind::STOCQ_GRID:
                            for (std::uint32_t i = 0; i < m; ++i) {
                                qx[i] = detail::stocq_round(q, zx(gi, i), ux[i]);
                                qy[i] = detail::stocq_round(q, zy[i], uy[i]);
                            }
                            break;
                        default:
                            for (std::uint32_t i = 0; i < m; ++i) {
                                qx[i] = q.levels[q.cell_index(zx(gi, i))];
                                qy[i] = q.levels[q.cell_index(zy[i])];
                            }
                    }
                    double sqq = 0.0, sx2 = 0.0, sy2 = 0.0;
                    bool same = true;
                    for (std::uint32_t i = 0; i < m; ++i) {
                        sqq += qx[i] * qy[i];
                        sx2 += qx[i] * qx[i];
                        sy2 += qy[i] * qy[i];
                        same = same && qx[i] == qy[i];
                    }
                    const std::size_t idx = (qi * ng + gi) * nr + ri;
                    wsimple[idx].add(2.0 * sqq / m);
                    if (sx2 == 0.0 || sy2 == 0.0)
                        throw input_error("mc_pair_sweep: zero quantized row norm");
                    wnorm[idx].add(same ? 1.0 : sqq / (std::sqrt(sx2) * std::sqrt(sy2)));
                }
            }
        }
    }

    std::vector<PairMcResult> out(nq * ng * nr);
    for (std::size_t qi = 0; qi < nq; ++qi)
        for (std::size_t gi = 0; gi < ng; ++gi)
            for (std::size_t ri = 0; ri < nr; ++ri) {
                const std::size_t idx = (qi * ng + gi) * nr + ri;
                PairMcResult& r = out[idx];
                r.kind = qs[qi].kind;
                r.bits = qs[qi].bits;
                r.gamma = gammas[gi];
                r.rho = rhos[ri];
                r.simple = wsimple[idx].stats();
                r.normalized = wnorm[idx].stats();
                r.full = wfull[gi * nr + ri].stats();
            }
    return out;
}

inline PairMcResult mc_pair_estimates(const Quantizer& q, double rho, double gamma,
                                      std::uint32_t m, std::uint32_t reps,
                                      std::uint64_t seed) {
    const Quantizer qs[] = {q};
    const double gs[] = {gamma}, rs[] = {rho};
    return mc_pair_sweep(qs, gs, rs, m, reps, seed)[0];
}

} // namespace rfq
