#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "rfq/densities.hpp"

using namespace rfq;
using Catch::Approx;

TEST_CASE("marginal law is the arcsine law", "[densities]") {
    CHECK(marginal_pdf(0.0) == Approx(1.0 / kPi).margin(1e-15));
    CHECK(marginal_pdf(0.5) == marginal_pdf(-0.5));
    CHECK(marginal_pdf(1.0) == 0.0);
    CHECK(marginal_cdf(-1.0) == 0.0);
    CHECK(marginal_cdf(0.0) == Approx(0.5).margin(1e-15));
    CHECK(marginal_cdf(1.0) == 1.0);
    CHECK(marginal_cdf(0.5) - marginal_cdf(-0.5) == Approx(1.0 / 3.0).margin(1e-14));

    // pdf integrates to the cdf increment away from the endpoints
    const double got = integrate([](double z) { return marginal_pdf(z); }, -0.9, 0.7, 1e-12);
    CHECK(got == Approx(marginal_cdf(0.7) - marginal_cdf(-0.9)).margin(1e-10));
}

TEST_CASE("quantile inverts the cdf", "[densities]") {
    for (double p : {0.001, 0.1, 0.25, 0.5, 0.77, 0.999}) {
        CHECK(marginal_cdf(marginal_quantile(p)) == Approx(p).margin(1e-13));
    }
    CHECK(marginal_quantile(0.0) == -1.0);
    CHECK(marginal_quantile(1.0) == 1.0);
    CHECK_THROWS_AS(marginal_quantile(-0.1), std::invalid_argument);
    CHECK_THROWS_AS(marginal_quantile(1.1), std::invalid_argument);
}

TEST_CASE("marginal moments agree with closed values", "[densities]") {
    CHECK(marginal_moment(0, -1, 1) == Approx(1.0).margin(1e-14));
    CHECK(marginal_moment(1, -1, 1) == Approx(0.0).margin(1e-15));
    CHECK(marginal_moment(2, -1, 1) == Approx(0.5).margin(1e-14));
    CHECK(marginal_moment(4, -1, 1) == Approx(3.0 / 8.0).margin(1e-14));
    CHECK(marginal_moment(6, -1, 1) == Approx(5.0 / 16.0).margin(1e-14));
    // half-range first moment: E[z; z>0] = 1/pi
    CHECK(marginal_moment(1, 0, 1) == Approx(1.0 / kPi).margin(1e-14));
    CHECK_THROWS_AS(marginal_moment(0, 0.5, 0.2), std::invalid_argument);
}

TEST_CASE("squared-feature law", "[densities]") {
    CHECK(z2_cdf(0.0) == 0.0);
    CHECK(z2_cdf(1.0) == 1.0);
    CHECK(z2_cdf(0.5) == Approx(0.5).margin(1e-15));
    CHECK(z2_pdf(0.3) == Approx(1.0 / (kPi * std::sqrt(0.3 - 0.09))).margin(1e-14));
    CHECK(z2_moment(0, 0, 1) == Approx(1.0).margin(1e-14));
    CHECK(z2_moment(1, 0, 1) == Approx(0.5).margin(1e-14));   // E[z^2]
    CHECK(z2_moment(2, 0, 1) == Approx(3.0 / 8.0).margin(1e-14)); // E[z^4]
    for (double c : {0.1, 0.35, 0.8}) {
        CHECK(z2_moment(0, 0, c) == Approx(z2_cdf(c)).margin(1e-13));
    }
}

TEST_CASE("pair law parameters", "[densities]") {
    const PairLaw law(0.5, 1.0);
    CHECK(law.sigma == Approx(1.0).margin(1e-15));
    CHECK(law.kmax >= 3);
    CHECK(PairLaw(1.0, 2.0).degenerate());
    CHECK_FALSE(PairLaw(0.999, 1.0).degenerate());
    CHECK_THROWS_AS(PairLaw(0.5, 0.0), std::invalid_argument);
    CHECK_THROWS_AS(PairLaw(1.5, 1.0), std::invalid_argument);
    // wide ridge needs more wraps
    CHECK(PairLaw(-0.5, 5.0).kmax > 3);
}

TEST_CASE("angle density has unit mass at every probed parameter pair", "[densities]") {
    for (double rho : {-0.5, 0.0, 0.5, 0.9}) {
        for (double gamma : {0.5, 1.0, 2.0}) {
            const PairLaw law(rho, gamma);
            // partition [0,pi]^2 into strips; analytic inner, quadrature outer
            double mass = 0.0;
            const int strips = 4;
            for (int i = 0; i < strips; ++i) {
                mass += cell_mass(kPi * i / strips, kPi * (i + 1) / strips, 0.0, kPi, law);
            }
            CHECK(mass == Approx(1.0).margin(1e-9));
        }
    }
}

TEST_CASE("pair density is exchangeable and point symmetric", "[densities]") {
    const PairLaw law(0.5, 1.0);
    for (double zx : {-0.9, -0.3, 0.2, 0.7}) {
        for (double zy : {-0.8, 0.1, 0.55}) {
            const double f = joint_pdf(zx, zy, law);
            CHECK(f > 0.0);
            CHECK(joint_pdf(zy, zx, law) == Approx(f).epsilon(1e-10));
            CHECK(joint_pdf(-zx, -zy, law) == Approx(f).epsilon(1e-10));
        }
    }
    CHECK(joint_pdf(1.0, 0.5, law) == 0.0);
    CHECK(joint_pdf(0.5, -1.0, law) == 0.0);
}

TEST_CASE("same-sign quadrants dominate when the ridge is narrow", "[densities]") {
    // sqrt(2(1-rho)) gamma <= pi covers these pairs
    for (double rho : {0.0, 0.5}) {
        for (double gamma : {0.5, 1.0, 2.0}) {
            const PairLaw law(rho, gamma);
            if (law.sigma > kPi) continue;
            for (double zx : {0.05, 0.3, 0.6, 0.9, 1.0 - 1e-9}) {
                for (double zy : {0.1, 0.45, 0.8, 1.0 - 1e-9}) {
                    CHECK(joint_pdf(zx, zy, law) > joint_pdf(zx, -zy, law));
                }
            }
        }
    }
}

TEST_CASE("angle marginal is uniform", "[densities]") {
    const PairLaw law(0.3, 1.2);
    // integrate a_x out completely: P[a_y in [c,d]] = (d - c)/pi
    CHECK(cell_mass(0.0, kPi, 0.7, 1.9, law) == Approx((1.9 - 0.7) / kPi).margin(1e-9));
    CHECK(cell_mass(0.0, kPi, 0.0, kPi, law) == Approx(1.0).margin(1e-9));
}

TEST_CASE("pair product moment reproduces the kernel", "[densities]") {
    // E[z_x z_y] = K/2 with K = exp(-gamma^2 (1 - rho)): the whole reason the
    // feature products estimate the kernel
    for (double rho : {-0.5, 0.0, 0.5, 0.9}) {
        for (double gamma : {0.5, 1.0}) {
            const PairLaw law(rho, gamma);
            const double kernel = std::exp(-gamma * gamma * (1.0 - rho));
            const double got = cell_moment(1, 1, 0.0, kPi, 0.0, kPi, law, 1e-11);
            CHECK(got == Approx(0.5 * kernel).margin(5e-9));
        }
    }
}

TEST_CASE("degenerate pair law concentrates on the diagonal", "[densities]") {
    const PairLaw law(1.0, 1.0);
    CHECK(cell_mass(0.0, 1.0, 0.5, 2.0, law) == Approx(0.5 / kPi).margin(1e-15));
    CHECK(cell_mass(0.0, 1.0, 1.5, 2.0, law) == 0.0);
    // E[cos^2] over the diagonal = 1/2
    CHECK(cell_moment(1, 1, 0.0, kPi, 0.0, kPi, law) == Approx(0.5).margin(1e-13));
    CHECK_THROWS_AS(angle_pdf(1.0, 1.0, law), std::domain_error);
}

TEST_CASE("second cell moments match the marginal where they should", "[densities]") {
    const PairLaw law(0.4, 0.8);
    // integrating the partner out reduces to a marginal moment
    const double got = cell_moment(2, 0, 0.0, kPi, 0.0, kPi, law);
    CHECK(got == Approx(0.5).margin(1e-9));
    const double got11 = cell_moment(0, 2, 0.3, 2.0, 0.0, kPi, law);
    // a_x restricted, partner squared integrated out: not uniform, but bounded
    CHECK(got11 > 0.0);
    CHECK(got11 < 1.0);
    // full double-quadrature route agrees with the analytic-inner route
    const double m_a = cell_moment(2, 2, 0.2, 1.3, 0.5, 2.5, law, 1e-10);
    const double m_b = integrate(
        [&](double ax) {
            return std::cos(ax) * std::cos(ax) *
                   integrate(
                       [&](double ay) {
                           return std::cos(ay) * std::cos(ay) * angle_pdf(ax, ay, law);
                       },
                       0.5, 2.5, 1e-11);
        },
        0.2, 1.3, 1e-11);
    CHECK(m_a == Approx(m_b).margin(1e-8));
}
