#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "rfq/theory.hpp"
#include "rfq/theory_json.hpp"

using namespace rfq;
using Catch::Approx;

namespace {

// Draws (z_x, z_y) pairs from the shared-phase law, independent of the
// library's density machinery.
struct PairSampler {
    Stream s;
    double rho, gamma, c;
    PairSampler(double rho_, double gamma_, std::uint64_t seed)
        : s(derive(seed, stream_tag::kMc)),
          rho(rho_),
          gamma(gamma_),
          c(std::sqrt(std::max(0.0, 1.0 - rho_ * rho_))) {}
    std::pair<double, double> next() {
        const double g1 = s.next_normal(), g2 = s.next_normal(), tau = s.next_angle();
        return {std::cos(gamma * g1 + tau), std::cos(gamma * (rho * g1 + c * g2) + tau)};
    }
};

struct McMoment {
    double mean, se;
};

template <typename F>
McMoment mc_pair_moment(double rho, double gamma, std::size_t n, std::uint64_t seed, F f) {
    PairSampler ps(rho, gamma, seed);
    double acc = 0.0, acc2 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto [zx, zy] = ps.next();
        const double v = f(zx, zy);
        acc += v;
        acc2 += v * v;
    }
    const double mean = acc / n;
    const double var = std::max(0.0, acc2 / n - mean * mean);
    return {mean, std::sqrt(var / n)};
}

// Exact sum over odd i of alpha_i^2 for a piecewise-constant odd Q: summation
// by parts turns alpha_i into (2/(pi i)) sum_k dmu_k sin(i a_k) over interior
// border angles, and sum_{i odd} sin(ia)sin(ib)/i^2 = (f(|a-b|) - f(a+b))/2
// with f(x) = pi^2/8 - pi min(x, 2pi-x)/4.
double parseval_jump_sum(const Quantizer& q) {
    std::vector<double> a(q.borders.size());
    for (std::size_t i = 0; i < a.size(); ++i) a[i] = std::acos(q.borders[i]);
    const auto f = [](double x) {
        const double y = x <= kPi ? x : 2.0 * kPi - x;
        return kPi * kPi / 8.0 - kPi * y / 4.0;
    };
    double s = 0.0;
    for (std::size_t k = 1; k + 1 < q.borders.size(); ++k)
        for (std::size_t l = 1; l + 1 < q.borders.size(); ++l) {
            const double dk = q.levels[k] - q.levels[k - 1];
            const double dl = q.levels[l] - q.levels[l - 1];
            s += dk * dl * 0.5 * (f(std::fabs(a[k] - a[l])) - f(a[k] + a[l]));
        }
    return s * 4.0 / (kPi * kPi);
}

double cheb(int i, double z) { return std::cos(i * std::acos(std::min(1.0, std::max(-1.0, z)))); }

} // namespace

TEST_CASE("theta closed forms", "[theory]") {
    const Quantizer lm1 = build_quantizer(QuantKind::LM_RFF, 1);
    const Quantizer lm3 = build_quantizer(QuantKind::LM_RFF, 3);
    const Quantizer lm23 = build_quantizer(QuantKind::LM2_RFF, 3);

    CHECK(theta(1, 1, lm1) == Approx(4.0 / (kPi * kPi)).margin(1e-12));
    CHECK(theta(0, 1, lm3) == Approx(0.0).margin(1e-12));
    CHECK(theta(0, 1, lm23) == Approx(0.0).margin(1e-12));
    CHECK(theta(2, 0, lm3) == Approx(0.5).margin(1e-12));
    CHECK(theta(2, 0, stocq_grid(2)) == Approx(0.5).margin(1e-12)); // t = 0 needs no decode

    // identity: Q = z, so theta(s, t) is just a raw moment
    const Quantizer id = identity_quantizer();
    CHECK(theta(1, 1, id) == Approx(0.5).margin(1e-14));
    CHECK(theta(0, 4, id) == Approx(3.0 / 8.0).margin(1e-14));

    CHECK_THROWS_AS(theta(0, 1, stocq_grid(2)), std::invalid_argument);
    CHECK_THROWS_AS(theta(-1, 0, lm1), std::invalid_argument);
}

TEST_CASE("chebyshev coefficients of the decoded map", "[theory]") {
    const Quantizer lm1 = build_quantizer(QuantKind::LM_RFF, 1);

    // even coefficients vanish for odd Q
    for (const Quantizer& q : {build_quantizer(QuantKind::LM_RFF, 2),
                               build_quantizer(QuantKind::LM_RFF, 3),
                               build_quantizer(QuantKind::LM2_RFF, 2)}) {
        CHECK(chebyshev_alpha(0, q) == Approx(0.0).margin(1e-12));
        CHECK(chebyshev_alpha(2, q) == Approx(0.0).margin(1e-12));
        CHECK(chebyshev_alpha(4, q) == Approx(0.0).margin(1e-12));
    }

    // alpha_1 = 1 - 2 D1 is the centroid identity: it requires theta11 =
    // theta02, so it holds for the minimum-D1 family and not the squared one
    for (int b = 1; b <= 4; ++b) {
        const Quantizer q = build_quantizer(QuantKind::LM_RFF, b);
        CHECK(chebyshev_alpha(1, q) == Approx(1.0 - 2.0 * distortion_d1(q)).margin(1e-10));
    }
    const Quantizer lm22 = build_quantizer(QuantKind::LM2_RFF, 2);
    CHECK(std::fabs(chebyshev_alpha(1, lm22) - (1.0 - 2.0 * distortion_d1(lm22))) > 1e-3);

    // 1-bit: square wave of height 2/pi, alpha_i = (8/pi^2)(-1)^((i-1)/2)/i
    for (int i = 1; i <= 99; i += 2) {
        const double sign = ((i - 1) / 2) % 2 == 0 ? 1.0 : -1.0;
        CHECK(chebyshev_alpha(i, lm1) ==
              Approx(8.0 / (kPi * kPi) * sign / i).margin(1e-12));
    }
    CHECK(chebyshev_alpha(1, lm1) == Approx(8.0 / (kPi * kPi)).margin(1e-12));

    const Quantizer id = identity_quantizer();
    CHECK(chebyshev_alpha(1, id) == 1.0);
    CHECK(chebyshev_alpha(3, id) == 0.0);

    CHECK_THROWS_AS(chebyshev_alpha(1, stocq_grid(2)), std::invalid_argument);
    CHECK_THROWS_AS(chebyshev_alpha(-1, lm1), std::invalid_argument);
}

TEST_CASE("psi diagonal and vanishing off-diagonal", "[theory]") {
    const PairLaw law(0.5, 1.0);
    CHECK(psi(1, 1, law) == Approx(0.5 * kernel_value(0.5, 1.0)).margin(1e-14));
    CHECK(psi(1, 3, law) == 0.0);
    CHECK(psi(4, 2, law) == 0.0);
    CHECK(psi(2, 2, law) == Approx(0.5 * std::exp(-4.0 * 0.5)).margin(1e-14));
    CHECK(psi(1, 1, PairLaw(1.0, 2.0)) == 0.5); // degenerate pair, T_i(z)^2 averages to 1/2

    for (double rho : {-0.5, 0.0, 0.9})
        for (double gamma : {0.5, 2.0})
            for (int i = 1; i <= 9; ++i) {
                const double v = psi(i, i, PairLaw(rho, gamma));
                CHECK(v > 0.0);
                CHECK(v <= 0.5);
            }
    CHECK_THROWS_AS(psi(0, 1, law), std::invalid_argument);

    // Monte-Carlo agreement on and off the diagonal
    const std::size_t n = 2'000'000;
    const auto m13 = mc_pair_moment(0.5, 1.0, n, 11,
                                    [](double x, double y) { return cheb(1, x) * cheb(3, y); });
    CHECK(std::fabs(m13.mean - 0.0) < 4.0 * m13.se);
    const auto m35 = mc_pair_moment(0.5, 1.0, n, 12,
                                    [](double x, double y) { return cheb(3, x) * cheb(5, y); });
    CHECK(std::fabs(m35.mean - 0.0) < 4.0 * m35.se);
    const auto m22 = mc_pair_moment(0.5, 1.0, n, 13,
                                    [](double x, double y) { return cheb(2, x) * cheb(2, y); });
    CHECK(std::fabs(m22.mean - psi(2, 2, law)) < 4.0 * m22.se);
}

TEST_CASE("moment table invariants", "[theory]") {
    for (const Quantizer& q : {build_quantizer(QuantKind::LM_RFF, 2),
                               build_quantizer(QuantKind::LM2_RFF, 3)}) {
        for (double rho : {-0.5, 0.0, 0.9, 1.0}) {
            const MomentTable t = build_moment_table(q, rho, 1.0);
            CHECK(t.p.sum() == Approx(1.0).margin(1e-8));
            CHECK((t.p - t.p.transpose()).cwiseAbs().maxCoeff() == 0.0); // exchangeable pair
            CHECK(t.zeta(1, 2) == Approx(t.zeta(2, 1)).margin(1e-12));
            CHECK(t.zeta(2, 0) == Approx(theta(0, 2, q)).margin(1e-10)); // marginal, rho-free
        }
        // degenerate pair collapses onto the diagonal
        const MomentTable t1 = build_moment_table(q, 1.0, 1.0);
        CHECK(t1.zeta(1, 1) == Approx(theta(0, 2, q)).margin(1e-12));
    }

    // Parseval: sum over odd i of alpha_i^2 equals 2 E[Q^2]; the jump-sum
    // closed form gives the full sum, the truncated series approaches it
    // from below
    for (const Quantizer& q : {build_quantizer(QuantKind::LM_RFF, 1),
                               build_quantizer(QuantKind::LM_RFF, 2),
                               build_quantizer(QuantKind::LM_RFF, 4),
                               build_quantizer(QuantKind::LM2_RFF, 2),
                               build_quantizer(QuantKind::LM2_RFF, 3)}) {
        const double target = 2.0 * theta(0, 2, q);
        CHECK(parseval_jump_sum(q) == Approx(target).margin(1e-10));
        double partial = 0.0;
        for (int i = 1; i <= kAlphaTruncation; i += 2) {
            const double a = chebyshev_alpha(i, q);
            partial += a * a;
        }
        CHECK(partial <= target + 1e-12);
        CHECK(partial > 0.9 * target); // the head carries nearly all the mass
    }

    // stored alpha vector matches the function
    const Quantizer lm2 = build_quantizer(QuantKind::LM_RFF, 2);
    const MomentTable t = build_moment_table(lm2, 0.5, 1.0);
    REQUIRE(t.alpha.size() == std::size_t(kAlphaTruncation) + 1);
    for (int i = 0; i <= kAlphaTruncation; i += 7)
        CHECK(t.alpha[i] == chebyshev_alpha(i, lm2));
}

TEST_CASE("identity quantizer zeta closed forms", "[theory]") {
    const Quantizer id = identity_quantizer();
    for (double rho : {-0.5, 0.0, 0.5, 0.9})
        for (double gamma : {0.5, 1.0, 2.0}) {
            const MomentTable t = build_moment_table(id, rho, gamma);
            const double k = kernel_value(rho, gamma);
            CHECK(t.zeta(1, 1) == Approx(k / 2.0).margin(1e-13));
            CHECK(t.zeta(2, 2) == Approx(0.25 + k * k * k * k / 8.0).margin(1e-13));
            CHECK(t.zeta(2, 0) == Approx(0.5).margin(1e-13));
            CHECK(t.zeta(1, 0) == Approx(0.0).margin(1e-15));
        }
}

TEST_CASE("zeta matches Monte-Carlo", "[theory]") {
    const Quantizer q = build_quantizer(QuantKind::LM_RFF, 2);
    const MomentTable t = build_moment_table(q, 0.5, 1.0);
    const auto mc = mc_pair_moment(0.5, 1.0, 10'000'000, 21, [&](double x, double y) {
        return q.levels[q.cell_index(x)] * q.levels[q.cell_index(y)];
    });
    CHECK(std::fabs(mc.mean - t.zeta(1, 1)) < 3.5 * mc.se);
}

TEST_CASE("quantized estimator mean series", "[theory]") {
    const Quantizer lm2 = build_quantizer(QuantKind::LM_RFF, 2);

    // series evaluation equals 2 zeta_11 from the independent 2-D cell-mass
    // path, and reproduces pinned values
    const struct {
        double rho, gamma, want;
    } spots[] = {{0.0, 0.5, 0.7154693616},
                 {0.5, 1.0, 0.5569177626},
                 {0.9, 1.0, 0.8327423085}};
    for (const auto& s : spots) {
        const MomentTable t = build_moment_table(lm2, s.rho, s.gamma);
        const SeriesValue v = lm_mean(t);
        CHECK(v.value == Approx(s.want).margin(1e-9));
        CHECK(v.value == Approx(2.0 * t.zeta(1, 1)).margin(1e-9));
        CHECK(v.remainder_bound >= 0.0);
    }
    const Quantizer lm23 = build_quantizer(QuantKind::LM2_RFF, 3);
    const MomentTable t23 = build_moment_table(lm23, 0.5, 1.0);
    CHECK(lm_mean(t23).value == Approx(2.0 * t23.zeta(1, 1)).margin(1e-9));

    // degenerate endpoint: exactly 2 E[Q^2]; the centroid identity folds that
    // into 2 theta_11 for the minimum-D1 family
    const SeriesValue end = lm_mean(lm2, 1.0, 1.0);
    CHECK(end.value == 2.0 * theta(0, 2, lm2));
    CHECK(end.remainder_bound == 0.0);
    CHECK(end.value == Approx(2.0 * theta(1, 1, lm2)).margin(5e-9));
    const SeriesValue end2 = lm_mean(lm23, 1.0, 0.5);
    CHECK(end2.value == 2.0 * theta(0, 2, lm23));

    // rho = 0 is close to, but not exactly, the leading term: the shared
    // phase keeps the higher harmonics alive at order K^9
    const double k = kernel_value(0.0, 1.0);
    const double lead = 4.0 * theta(1, 1, lm2) * theta(1, 1, lm2) * k;
    const double full = lm_mean(lm2, 0.0, 1.0).value;
    CHECK(full > lead);
    CHECK(full - lead < 1e-4);

    CHECK_THROWS_AS(lm_mean(lm2, 0.5, 1.0, 4), std::invalid_argument);
    CHECK_THROWS_AS(lm_mean(lm2, 0.5, 1.0, 1), std::invalid_argument);
    CHECK_THROWS_AS(lm_mean(stocq_grid(2), 0.5, 1.0), std::invalid_argument);
}

TEST_CASE("quantized estimator variance", "[theory]") {
    const Quantizer lm2 = build_quantizer(QuantKind::LM_RFF, 2);
    const MomentTable t = build_moment_table(lm2, 0.5, 1.0);
    CHECK(lm_variance(t, 1) == Approx(0.647944).margin(1e-5));
    CHECK(lm_variance(t, 977) == lm_variance(t, 1) / 977.0);
    CHECK_THROWS_AS(lm_variance(t, 0), std::invalid_argument);

    // variance converges to full precision as the codebook refines
    const MomentTable id = build_moment_table(identity_quantizer(), 0.5, 1.0);
    const MomentTable t6 = build_moment_table(build_quantizer(QuantKind::LM_RFF, 6), 0.5, 1.0);
    CHECK(lm_variance(t6, 1) == Approx(lm_variance(id, 1)).epsilon(0.02));

    // the identity table reproduces the raw-feature variance closed form
    const double k = kernel_value(0.5, 1.0);
    CHECK(lm_variance(id, 1) == Approx(1.0 + k * k * k * k / 2.0 - k * k).margin(1e-12));
}

TEST_CASE("stochastic rounding variance", "[theory]") {
    // 1-bit: S = 0 in every cell, so the closed form collapses to 4 - K^2
    for (double rho : {0.0, 0.5, 0.9})
        for (double gamma : {0.5, 1.0, 2.0}) {
            const double k = kernel_value(rho, gamma);
            const StocqVariance v = stocq_variance(stocq_grid(1), rho, gamma);
            CHECK(v.stocq == Approx(4.0 - k * k).margin(1e-12));
        }

    // dominance over full precision at every bit width
    for (int b = 1; b <= 4; ++b)
        for (const auto& [rho, gamma] : std::vector<std::pair<double, double>>{
                 {0.0, 0.5}, {0.5, 1.0}, {0.9, 2.0}}) {
            const StocqVariance v = stocq_variance(stocq_grid(b), rho, gamma);
            CHECK(v.stocq > v.full);
        }

    // closed form against replicated estimates
    const Quantizer g2 = stocq_grid(2);
    const StocqVariance v = stocq_variance(g2, 0.5, 1.0);
    const PairMcResult mc = mc_pair_estimates(g2, 0.5, 1.0, 256, 10'000, 31);
    CHECK(mc.simple.var * 256.0 == Approx(v.stocq).epsilon(0.10));
    CHECK(std::fabs(mc.simple.mean - kernel_value(0.5, 1.0)) < 3.5 * mc.simple.se_mean);

    CHECK_THROWS_AS(stocq_variance(build_quantizer(QuantKind::LM_RFF, 2), 0.5, 1.0),
                    std::invalid_argument);
}

TEST_CASE("normalized estimator mean and variance", "[theory]") {
    const Quantizer lm2 = build_quantizer(QuantKind::LM_RFF, 2);
    const MomentTable t = build_moment_table(lm2, 0.5, 1.0);
    const MeanVariance nv = normalized_mean_variance(t, 1);
    CHECK(nv.mean == Approx(0.581218).margin(1e-5));
    CHECK(nv.variance == Approx(0.497279).margin(1e-5));
    CHECK(normalized_mean_variance(t, 64).variance == Approx(nv.variance / 64.0).margin(1e-15));

    // the delta-method covariance assembly reproduces the closed form
    for (const MomentTable& tt :
         {t, build_moment_table(build_quantizer(QuantKind::LM2_RFF, 3), 0.9, 0.5)}) {
        const double z11 = tt.zeta(1, 1), z20 = tt.zeta(2, 0), z22 = tt.zeta(2, 2);
        const double z31 = tt.zeta(3, 1), z40 = tt.zeta(4, 0);
        const double ga = 1.0 / z20, gb = -z11 / (2.0 * z20 * z20);
        const double assembled = ga * ga * (z22 - z11 * z11) +
                                 2.0 * gb * gb * (z40 - z20 * z20) +
                                 4.0 * ga * gb * (z31 - z11 * z20) +
                                 2.0 * gb * gb * (z22 - z20 * z20);
        CHECK(normalized_variance_leading(tt) == Approx(assembled).epsilon(1e-12));
    }

    // degenerate endpoint is exact
    const MeanVariance end = normalized_mean_variance(build_moment_table(lm2, 1.0, 1.0), 2048);
    CHECK(end.mean == 1.0);
    CHECK(end.variance == 0.0);

    CHECK_THROWS_AS(normalized_mean_variance(build_moment_table(stocq_grid(2), 0.5, 1.0), 8),
                    std::invalid_argument);
    CHECK_THROWS_AS(normalized_mean_variance(t, 0), std::invalid_argument);
}

TEST_CASE("debiased variance", "[theory]") {
    CHECK(db_variance(0.5, 0.3, 0.5).value() == 0.3); // unbiased: db = V
    // rescaling the estimator by c > 0 leaves it unchanged
    const double c = 7.0;
    CHECK(db_variance(c * 0.4, c * c * 0.2, 0.6).value() ==
          Approx(db_variance(0.4, 0.2, 0.6).value()).epsilon(1e-12));
    CHECK(!db_variance(0.0, 0.1, 0.5).has_value());
    CHECK(!db_variance(-0.2, 0.1, 0.5).has_value());

    // every 1-bit fixed quantizer shares one db curve: the estimator scales
    // by the squared level between them
    const Quantizer a = build_quantizer(QuantKind::LM_RFF, 1);
    const Quantizer b = build_quantizer(QuantKind::LM2_RFF, 1);
    for (const auto& [rho, gamma] :
         std::vector<std::pair<double, double>>{{0.5, 1.0}, {0.9, 2.0}}) {
        const MomentTable ta = build_moment_table(a, rho, gamma);
        const MomentTable tb = build_moment_table(b, rho, gamma);
        const double k = kernel_value(rho, gamma);
        const double da = db_variance(lm_mean(ta).value, lm_variance(ta, 1), k).value();
        const double db = db_variance(lm_mean(tb).value, lm_variance(tb, 1), k).value();
        CHECK(da == Approx(db).epsilon(1e-10));
    }

    // simple-estimator db crossover between the two families near rho = 1
    const Quantizer lm = build_quantizer(QuantKind::LM_RFF, 2);
    const Quantizer lm2 = build_quantizer(QuantKind::LM2_RFF, 2);
    const auto simple_db = [](const Quantizer& q, double rho) {
        const MomentTable t = build_moment_table(q, rho, 1.0);
        return db_variance(lm_mean(t).value, lm_variance(t, 1), kernel_value(rho, 1.0))
            .value();
    };
    CHECK(simple_db(lm2, 0.5) / simple_db(lm, 0.5) == Approx(1.0351).margin(1e-3));
    CHECK(simple_db(lm2, 0.5) > simple_db(lm, 0.5));
    CHECK(simple_db(lm2, 0.999) < simple_db(lm, 0.999));
    CHECK(simple_db(lm, 1.0) == Approx(0.426217).margin(1e-5));
    CHECK(simple_db(lm2, 1.0) == Approx(0.405285).margin(1e-5));
}

TEST_CASE("debiased variance dominance of the normalized estimator", "[theory]") {
    const std::vector<double> grid = {0.0, 0.1, 0.25, 0.4, 0.5, 0.65, 0.8, 0.9, 0.99, 1.0};

    const DbReport r = db_variance_dominance_check(build_quantizer(QuantKind::LM_RFF, 2),
                                                   1.0, grid);
    REQUIRE(r.applicable);
    CHECK(r.dominated);
    CHECK(r.max_ratio <= 1.0 + 1e-9);
    // dominance is strict even at rho = 0: the shared phase keeps zeta_31
    // well away from zero there
    CHECK(r.points.front().rho == 0.0);
    CHECK(r.points.front().ratio == Approx(0.910311).margin(1e-4));
    CHECK(r.points.front().ratio < 1.0);
    CHECK(std::fabs(r.points.back().ratio) < 1e-9); // exact cancellation at rho = 1

    const DbReport r2 = db_variance_dominance_check(build_quantizer(QuantKind::LM2_RFF, 3),
                                                    2.0, grid);
    REQUIRE(r2.applicable);
    CHECK(r2.dominated);

    const DbReport na = db_variance_dominance_check(build_quantizer(QuantKind::LM_RFF, 2),
                                                    3.0, grid);
    CHECK(!na.applicable);
    CHECK(na.points.empty());

    const std::vector<double> bad = {-0.5, 0.5};
    CHECK_THROWS_AS(
        db_variance_dominance_check(build_quantizer(QuantKind::LM_RFF, 2), 1.0, bad),
        std::invalid_argument);
}

TEST_CASE("monotonicity derivative estimates", "[theory]") {
    // increasing odd pair: d/drho E[g1 g2] > 0
    const auto cube_d = [](double x) { return 3.0 * x * x; };
    const auto exp_d = [](double x) { return 5.0 * std::exp(5.0 * x); };
    for (double rho : {-0.5, 0.0, 0.5, 0.9}) {
        const McValue v = monotonicity_derivative(cube_d, exp_d, rho, 1.0, 200'000, 41);
        CHECK(v.value - 3.0 * v.se > 0.0);
    }

    // even pair: the derivative has the closed form gamma^2 K^4 / 2 (only
    // the doubled difference phase survives), positive but tiny at low rho
    const auto sq_d = [](double x) { return 2.0 * x; };
    for (double rho : {-0.9, 0.0, 0.7}) {
        const McValue v = monotonicity_derivative(sq_d, sq_d, rho, 1.0, 200'000, 42);
        const double k = kernel_value(rho, 1.0);
        CHECK(std::fabs(v.value - k * k * k * k / 2.0) < 3.5 * v.se);
    }
    const McValue vp = monotonicity_derivative(sq_d, sq_d, 0.7, 1.0, 200'000, 42);
    CHECK(vp.value - 3.0 * vp.se > 0.0);

    // smooth stand-in for the 1-bit decoded map
    const double mu = 2.0 / kPi;
    const auto sgn_d = [mu](double x) { return mu * 50.0 * std::exp(-50.0 * std::fabs(x)); };
    const McValue v = monotonicity_derivative(sgn_d, sgn_d, 0.5, 1.0, 400'000, 43);
    CHECK(v.value - 3.0 * v.se > 0.0);

    CHECK_THROWS_AS(monotonicity_derivative(sq_d, sq_d, 0.5, 1.0, 1, 44),
                    std::invalid_argument);
}

TEST_CASE("quantized mean is monotone in correlation", "[theory]") {
    const Quantizer q = build_quantizer(QuantKind::LM_RFF, 2);

    const std::vector<double> full = {-1.0, -0.75, -0.5, -0.25, 0.0,
                                      0.25, 0.5,   0.75, 0.9,   1.0};
    const MonotonicityReport r1 = quantized_mean_monotonicity(q, 1.0, full);
    CHECK(r1.rho_floor == -1.0);
    CHECK(r1.in_region);
    CHECK(r1.increasing);
    REQUIRE(r1.zeta11.size() == full.size());

    // gamma = 5: the sufficient-condition floor sits just above 0.8, yet the
    // increase extends down to the conventional 0.8 start
    const std::vector<double> high = {0.8, 0.85, 0.9, 0.95, 1.0};
    const MonotonicityReport r5 = quantized_mean_monotonicity(q, 5.0, high);
    CHECK(r5.rho_floor == Approx(1.0 - kPi * kPi / 50.0).margin(1e-12));
    CHECK(!r5.in_region);
    CHECK(r5.increasing);

    // one grid value against Monte-Carlo
    const auto mc = mc_pair_moment(0.9, 1.0, 2'000'000, 51, [&](double x, double y) {
        return q.levels[q.cell_index(x)] * q.levels[q.cell_index(y)];
    });
    const MomentTable t = build_moment_table(q, 0.9, 1.0);
    CHECK(std::fabs(mc.mean - t.zeta(1, 1)) < 3.5 * mc.se);

    CHECK_THROWS_AS(quantized_mean_monotonicity(stocq_grid(2), 1.0, full),
                    std::invalid_argument);
}

TEST_CASE("replicated pair estimates match the closed forms", "[theory]") {
    const Quantizer lm2 = build_quantizer(QuantKind::LM_RFF, 2);
    const std::uint32_t m = 2048, reps = 2000;

    const Quantizer qs[] = {lm2};
    const double gammas[] = {1.0};
    const double rhos[] = {0.5, 1.0};
    const auto out = mc_pair_sweep(qs, gammas, rhos, m, reps, 61);
    REQUIRE(out.size() == 2);

    const MomentTable t = build_moment_table(lm2, 0.5, 1.0);
    const PairMcResult& r = out[0];
    CHECK(r.kind == QuantKind::LM_RFF);
    CHECK(r.rho == 0.5);
    CHECK(std::fabs(r.simple.mean - lm_mean(t).value) < 3.0 * r.simple.se_mean);
    CHECK(r.simple.var == Approx(lm_variance(t, m)).epsilon(0.15));
    const MeanVariance nv = normalized_mean_variance(t, m);
    CHECK(std::fabs(r.normalized.mean - nv.mean) < 3.0 * r.normalized.se_mean);
    CHECK(r.normalized.var == Approx(nv.variance).epsilon(0.15));

    // the shared full-precision stats in the same sweep
    const MomentTable id = build_moment_table(identity_quantizer(), 0.5, 1.0);
    CHECK(std::fabs(r.full.mean - kernel_value(0.5, 1.0)) < 3.0 * r.full.se_mean);
    CHECK(r.full.var == Approx(lm_variance(id, m)).epsilon(0.15));

    // exact degenerate endpoints: identical features quantize identically
    const PairMcResult& r1 = out[1];
    CHECK(r1.rho == 1.0);
    CHECK(r1.normalized.mean == 1.0);
    CHECK(r1.normalized.var == 0.0);
    CHECK(std::fabs(r1.simple.mean - 2.0 * theta(0, 2, lm2)) < 3.0 * r1.simple.se_mean);
}

TEST_CASE("pair sweep layout and determinism", "[theory]") {
    const Quantizer qs[] = {build_quantizer(QuantKind::LM_RFF, 1), stocq_grid(2),
                            identity_quantizer()};
    const double gammas[] = {0.5, 1.0};
    const double rhos[] = {0.0, 0.9};
    const auto a = mc_pair_sweep(qs, gammas, rhos, 64, 50, 71);
    const auto b = mc_pair_sweep(qs, gammas, rhos, 64, 50, 71);
    REQUIRE(a.size() == 12);
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].simple.mean == b[i].simple.mean);
        CHECK(a[i].normalized.var == b[i].normalized.var);
        CHECK(a[i].full.se_mean == b[i].full.se_mean);
    }

    for (std::size_t qi = 0; qi < 3; ++qi)
        for (std::size_t gi = 0; gi < 2; ++gi)
            for (std::size_t ri = 0; ri < 2; ++ri) {
                const PairMcResult& r = a[(qi * 2 + gi) * 2 + ri];
                CHECK(r.kind == qs[qi].kind);
                CHECK(r.bits == qs[qi].bits);
                CHECK(r.gamma == gammas[gi]);
                CHECK(r.rho == rhos[ri]);
            }

    // full-precision stats do not depend on the quantizer slot, and the
    // identity slot's simple estimator IS the full one
    for (std::size_t gi = 0; gi < 2; ++gi)
        for (std::size_t ri = 0; ri < 2; ++ri) {
            const std::size_t i0 = (0 * 2 + gi) * 2 + ri;
            const std::size_t i2 = (2 * 2 + gi) * 2 + ri;
            CHECK(a[i0].full.mean == a[i2].full.mean);
            CHECK(a[i2].simple.mean == a[i2].full.mean);
        }

    CHECK_THROWS_AS(mc_pair_sweep(qs, gammas, rhos, 0, 5, 71), std::invalid_argument);
}

TEST_CASE("moment table serialization", "[theory]") {
    const MomentTable t = build_moment_table(build_quantizer(QuantKind::LM_RFF, 2), 0.5, 1.0);
    const nlohmann::json j = moment_table_json(t);
    CHECK(j["context"]["quantizer_id"].get<std::uint64_t>() == quantizer_id(t.q));
    CHECK(j["context"]["kind"] == "lm");
    CHECK(j["context"]["rho"].get<double>() == 0.5);
    CHECK(j["zeta"][2][0].get<double>() == t.zeta(2, 0));
    CHECK(j["theta"][0][2].get<double>() == t.theta(0, 2));
    CHECK(j["alpha"].size() == t.alpha.size());
    CHECK(j["psi_diag"][0].get<double>() == t.psi(1, 1));
    CHECK(j["p"].size() == 4); // one row per decode cell
    CHECK(!j.contains("kappa"));

    const MomentTable g = build_moment_table(stocq_grid(2), 0.5, 1.0);
    const nlohmann::json jg = moment_table_json(g);
    CHECK(jg["context"]["kind"] == "stocq");
    CHECK(jg.contains("kappa"));
    CHECK(jg.contains("m1"));
    CHECK(!jg.contains("alpha"));
    CHECK(jg["p"].size() == 3);

    // a stochastic table refuses fixed-decode queries
    CHECK_THROWS_AS(g.zeta(1, 1), std::invalid_argument);
    CHECK_THROWS_AS(g.theta(0, 1), std::invalid_argument);
}
