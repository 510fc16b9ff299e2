#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <stdexcept>
#include <string>
#include <vector>

#include "rfq/densities.hpp"

// Scalar quantizers for the arcsine-distributed feature value: Lloyd-Max
// codebooks minimizing D1 = E[(z - Q z)^2] or D2 = E[(z^2 - (Q z)^2)^2],
// plus the uniform grid used for stochastic rounding.

namespace rfq {

enum class QuantKind : std::uint8_t { LM_RFF = 0, LM2_RFF = 1, STOCQ_GRID = 2, IDENTITY = 3 };

inline const char* kind_name(QuantKind k) {
    switch (k) {
        case QuantKind::LM_RFF: return "lm";
        case QuantKind::LM2_RFF: return "lm2";
        case QuantKind::STOCQ_GRID: return "stocq";
        case QuantKind::IDENTITY: return "id";
    }
    throw std::logic_error("kind_name: bad enum");
}

inline QuantKind kind_from_name(const std::string& s) {
    if (s == "lm") return QuantKind::LM_RFF;
    if (s == "lm2") return QuantKind::LM2_RFF;
    if (s == "stocq") return QuantKind::STOCQ_GRID;
    if (s == "id") return QuantKind::IDENTITY;
    throw std::invalid_argument("unknown quantizer kind: " + s);
}

// Borders t_0 < ... < t_M bracket the cells; cell i is (t_{i-1}, t_i] and
// reproduces levels[i-1]. LM kinds: M = 2^bits, t_0 = -1, t_M = 1, symmetric
// about 0, levels strictly interleave. STOCQ_GRID: borders == levels ==
// 2^bits uniform grid points on [-1, 1].
struct Quantizer {
    QuantKind kind;
    int bits;
    std::vector<double> borders;
    std::vector<double> levels;

    std::size_t cells() const { return levels.size(); }

    // 0-based cell index of z in [-1, 1]; boundary values belong to the
    // lower cell, matching Q(x) = mu_i on t_{i-1} < x <= t_i.
    std::size_t cell_index(double z) const {
        auto it = std::lower_bound(borders.begin() + 1, borders.end() - 1, z);
        return static_cast<std::size_t>(it - (borders.begin() + 1));
    }

    double reproduce(double z) const {
        if (kind == QuantKind::IDENTITY) return z;
        return levels[cell_index(z)];
    }
};

inline void validate(const Quantizer& q) {
    const std::size_t m = q.levels.size();
    if (q.kind == QuantKind::IDENTITY) {
        // bitless passthrough: one cell spanning the domain, nothing to decode
        if (q.bits != 0 || m != 0 || q.borders != std::vector<double>{-1.0, 1.0})
            throw std::invalid_argument("identity quantizer must be bitless with borders {-1,1}");
        return;
    }
    if (q.bits < 1 || q.bits > 8) throw std::invalid_argument("quantizer bits outside 1..8");
    if (!std::is_sorted(q.borders.begin(), q.borders.end()) ||
        std::adjacent_find(q.borders.begin(), q.borders.end()) != q.borders.end())
        throw std::invalid_argument("quantizer borders not strictly increasing");
    if (q.borders.front() != -1.0 || q.borders.back() != 1.0)
        throw std::invalid_argument("quantizer borders must span [-1, 1]");
    if (q.kind == QuantKind::STOCQ_GRID) {
        if (q.borders != q.levels || m != (std::size_t{1} << q.bits))
            throw std::invalid_argument("stocq grid must have 2^bits points doubling as levels");
        return;
    }
    if (m != (std::size_t{1} << q.bits) || q.borders.size() != m + 1)
        throw std::invalid_argument("LM quantizer must have 2^bits levels");
    for (std::size_t i = 0; i < m; ++i) {
        if (!(q.borders[i] < q.levels[i] && q.levels[i] < q.borders[i + 1]))
            throw std::invalid_argument("levels must interleave borders");
        if (q.levels[i] != -q.levels[m - 1 - i] || q.borders[i] != -q.borders[m - i])
            throw std::invalid_argument("LM quantizer must be symmetric about 0");
    }
}

// Mirror a nonnegative-half codebook to the full symmetric one.
// ({0, 0.5, 1}, {0.2, 0.7}) -> ({-1, -0.5, 0, 0.5, 1}, {-0.7, -0.2, 0.2, 0.7}).
inline std::pair<std::vector<double>, std::vector<double>>
symmetric_expand(const std::vector<double>& positive_borders,
                 const std::vector<double>& positive_levels) {
    const auto strictly_sorted = [](const std::vector<double>& v) {
        return std::is_sorted(v.begin(), v.end()) &&
               std::adjacent_find(v.begin(), v.end()) == v.end();
    };
    if (!strictly_sorted(positive_borders) || !strictly_sorted(positive_levels))
        throw std::invalid_argument("symmetric_expand: input not sorted");
    if (positive_borders.empty() || positive_borders.front() != 0.0 ||
        positive_borders.back() != 1.0)
        throw std::invalid_argument("symmetric_expand: borders must run from 0 to 1");

    std::vector<double> borders, levels;
    borders.reserve(2 * positive_borders.size() - 1);
    levels.reserve(2 * positive_levels.size());
    for (auto it = positive_borders.rbegin(); it != positive_borders.rend() - 1; ++it)
        borders.push_back(-*it);
    borders.insert(borders.end(), positive_borders.begin(), positive_borders.end());
    for (auto it = positive_levels.rbegin(); it != positive_levels.rend(); ++it)
        levels.push_back(-*it);
    levels.insert(levels.end(), positive_levels.begin(), positive_levels.end());
    return {std::move(borders), std::move(levels)};
}

namespace detail {

// Lloyd's alternating updates on [0, 1] given the cumulative mass F and
// cumulative first moment G of the target density. Uniform initial borders;
// each round recenters levels then re-midpoints borders.
//
// The loop drives the iterate to the fixed point at full precision when it
// can (total movement < 1e-11), and otherwise stops once the contract is
// met: movement < tol with centroid residual <= 1e-6, after progress has
// stalled. Every exit follows a plain sweep, so the midpoint condition
// holds exactly at return.
//
// Plain alternation contracts too slowly past ~64 cells (the dominant mode
// decays at 1 - O(1/cells^2)), so every few sweeps the iterate is Aitken-
// extrapolated along its last step; the extrapolation is discarded unless
// it preserves the border/level interleave. The fixed point is unchanged.
template <class F0, class F1>
std::pair<std::vector<double>, std::vector<double>>
lloyd_half(int cells, F0&& mass, F1&& first_moment, double tol = 1e-5,
           int max_iter = 10000) {
    std::vector<double> t(cells + 1), mu(cells, 0.0);
    for (int i = 0; i <= cells; ++i) t[i] = static_cast<double>(i) / cells;

    const auto centroid = [&](double lo, double hi) {
        return (first_moment(hi) - first_moment(lo)) / (mass(hi) - mass(lo));
    };

    std::vector<double> t0, mu0, te, me;
    double prev_change = 0.0, best_change = 1e300;
    int last_halving = 0;
    for (int iter = 1; iter <= max_iter; ++iter) {
        t0 = t;
        mu0 = mu;
        double change = 0.0;
        for (int i = 0; i < cells; ++i) {
            const double m = centroid(t[i], t[i + 1]);
            change += std::abs(m - mu[i]);
            mu[i] = m;
        }
        for (int i = 1; i < cells; ++i) {
            const double b = 0.5 * (mu[i - 1] + mu[i]);
            change += std::abs(b - t[i]);
            t[i] = b;
        }
        double resid = 0.0;
        for (int i = 0; i < cells; ++i)
            resid = std::max(resid, std::abs(mu[i] - centroid(t[i], t[i + 1])));
        if (change < 0.5 * best_change) {
            best_change = change;
            last_halving = iter;
        }
        if (change < 1e-11 && resid <= 1e-9) return {std::move(t), std::move(mu)};
        if (change < tol && resid <= 1e-6 && iter - last_halving > 200)
            return {std::move(t), std::move(mu)};

        if (prev_change > 0.0 && change < prev_change && iter % 8 == 0) {
            const double r = change / prev_change;
            if (r > 0.5 && r < 0.9999) {
                const double gain = r / (1.0 - r);
                te = t;
                me = mu;
                for (int i = 1; i < cells; ++i) te[i] += gain * (t[i] - t0[i]);
                for (int i = 0; i < cells; ++i) me[i] += gain * (mu[i] - mu0[i]);
                bool ordered = true;
                for (int i = 0; i < cells && ordered; ++i)
                    ordered = te[i] < me[i] && me[i] < te[i + 1];
                if (ordered) {
                    t.swap(te);
                    mu.swap(me);
                    prev_change = 0.0; // rate unknown after a jump
                    continue;
                }
            }
        }
        prev_change = change;
    }
    throw std::runtime_error("lloyd_half: no convergence within iteration cap");
}

} // namespace detail

// Minimum-D1 codebook: Lloyd against the arcsine density, run on the
// nonnegative half and mirrored.
inline Quantizer build_lm_rff(int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("build_lm_rff: bits outside 1..8");
    auto [pt, pmu] = detail::lloyd_half(
        1 << (bits - 1), [](double z) { return std::asin(z) / kPi; },
        [](double z) { return -std::sqrt(1.0 - z * z) / kPi; });
    auto [t, mu] = symmetric_expand(pt, pmu);
    return Quantizer{QuantKind::LM_RFF, bits, std::move(t), std::move(mu)};
}

// Minimum-D2 codebook: Lloyd against the density of z^2 on [0, 1], then the
// square roots of the result are mirrored. Squaring is monotone on [0, 1],
// so the root codebook partitions |z| exactly as the squared one does z^2.
inline Quantizer build_lm2_rff(int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("build_lm2_rff: bits outside 1..8");
    auto [pt, pmu] = detail::lloyd_half(
        1 << (bits - 1), [](double s) { return 2.0 / kPi * std::asin(std::sqrt(s)); },
        [](double s) {
            return (std::asin(std::sqrt(s)) - std::sqrt(s - s * s)) / kPi;
        });
    for (double& v : pt) v = std::sqrt(v);
    for (double& v : pmu) v = std::sqrt(v);
    pt.front() = 0.0;
    pt.back() = 1.0;
    auto [t, mu] = symmetric_expand(pt, pmu);
    return Quantizer{QuantKind::LM2_RFF, bits, std::move(t), std::move(mu)};
}

// 2^bits equispaced points on [-1, 1]; stochastic rounding snaps a value to
// one of its two enclosing points, unbiasedly.
inline Quantizer stocq_grid(int bits) {
    if (bits < 1 || bits > 8) throw std::invalid_argument("stocq_grid: bits outside 1..8");
    const int n = 1 << bits;
    std::vector<double> grid(n);
    for (int i = 0; i < n; ++i) grid[i] = -1.0 + 2.0 * i / (n - 1);
    grid.front() = -1.0;
    grid.back() = 1.0;
    return Quantizer{QuantKind::STOCQ_GRID, bits, grid, grid};
}

// D1 = E[(z - Q z)^2]. LM kinds reproduce cell centroids; the grid kind is
// scored as stochastic rounding, whose conditional mean is z itself, so the
// integrand is the rounding variance (t_hi - z)(z - t_lo).
inline double distortion_d1(const Quantizer& q) {
    if (q.kind == QuantKind::IDENTITY) return 0.0;
    double d = 0.0;
    if (q.kind == QuantKind::STOCQ_GRID) {
        for (std::size_t i = 0; i + 1 < q.borders.size(); ++i) {
            const double lo = q.borders[i], hi = q.borders[i + 1];
            d += -lo * hi * marginal_moment(0, lo, hi) +
                 (lo + hi) * marginal_moment(1, lo, hi) - marginal_moment(2, lo, hi);
        }
        return d;
    }
    for (std::size_t i = 0; i < q.cells(); ++i) {
        const double lo = q.borders[i], hi = q.borders[i + 1], mu = q.levels[i];
        d += marginal_moment(2, lo, hi) - 2.0 * mu * marginal_moment(1, lo, hi) +
             mu * mu * marginal_moment(0, lo, hi);
    }
    return d;
}

// D2 = E[(z^2 - (Q z)^2)^2], same conventions as distortion_d1; for the grid
// kind the conditional moments of Q^2 and Q^4 are linear in z.
inline double distortion_d2(const Quantizer& q) {
    if (q.kind == QuantKind::IDENTITY) return 0.0;
    double d = 0.0;
    if (q.kind == QuantKind::STOCQ_GRID) {
        for (std::size_t i = 0; i + 1 < q.borders.size(); ++i) {
            const double lo = q.borders[i], hi = q.borders[i + 1];
            const double w = hi - lo, s = lo + hi, p = lo * hi;
            const double a = (std::pow(lo, 4) * hi - lo * std::pow(hi, 4)) / w;
            const double b = (std::pow(hi, 4) - std::pow(lo, 4)) / w;
            d += a * marginal_moment(0, lo, hi) + b * marginal_moment(1, lo, hi) +
                 2.0 * p * marginal_moment(2, lo, hi) -
                 2.0 * s * marginal_moment(3, lo, hi) + marginal_moment(4, lo, hi);
        }
        return d;
    }
    for (std::size_t i = 0; i < q.cells(); ++i) {
        const double lo = q.borders[i], hi = q.borders[i + 1];
        const double m2 = q.levels[i] * q.levels[i];
        d += marginal_moment(4, lo, hi) - 2.0 * m2 * marginal_moment(2, lo, hi) +
             m2 * m2 * marginal_moment(0, lo, hi);
    }
    return d;
}

// Content hash naming the codebook inside sketch headers: FNV-1a over the
// kind byte, the bits byte, then every border and level as raw little-endian
// binary64. Any change to the codebook changes the id.
inline std::uint64_t quantizer_id(const Quantizer& q) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    const auto eat = [&h](const unsigned char* p, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            h ^= p[i];
            h *= 0x100000001b3ULL;
        }
    };
    const unsigned char kb = static_cast<unsigned char>(q.kind);
    const unsigned char bb = static_cast<unsigned char>(q.bits);
    eat(&kb, 1);
    eat(&bb, 1);
    const auto eat_doubles = [&](const std::vector<double>& v) {
        for (double x : v) {
            std::uint64_t u;
            std::memcpy(&u, &x, 8);
            unsigned char le[8];
            for (int i = 0; i < 8; ++i) le[i] = static_cast<unsigned char>(u >> (8 * i));
            eat(le, 8);
        }
    };
    eat_doubles(q.borders);
    eat_doubles(q.levels);
    return h;
}

inline Quantizer identity_quantizer() {
    Quantizer q;
    q.kind = QuantKind::IDENTITY;
    q.bits = 0;
    q.borders = {-1.0, 1.0};
    validate(q);
    return q;
}

inline Quantizer build_quantizer(QuantKind kind, int bits) {
    switch (kind) {
        case QuantKind::LM_RFF: return build_lm_rff(bits);
        case QuantKind::LM2_RFF: return build_lm2_rff(bits);
        case QuantKind::STOCQ_GRID: return stocq_grid(bits);
        case QuantKind::IDENTITY:
            if (bits != 0) throw std::invalid_argument("identity quantizer is bitless");
            return identity_quantizer();
    }
    throw std::logic_error("build_quantizer: bad enum");
}

} // namespace rfq
