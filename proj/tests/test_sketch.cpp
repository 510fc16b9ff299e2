#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rfq/sketch.hpp"

using namespace rfq;
using Catch::Approx;

TEST_CASE("deterministic encoding picks the half-open cell", "[sketch]") {
    const Quantizer q1 = build_lm_rff(1);
    const auto c = encode_lm(q1, std::vector<double>{0.3, -0.3, 0.0, 1.0, -1.0});
    CHECK(c == std::vector<std::uint8_t>{1, 0, 0, 1, 0}); // 0.0 belongs below
    CHECK(decode(q1, c)[0] == Approx(2.0 / kPi).margin(1e-9));

    const Quantizer q2 = build_lm_rff(2);
    const double border = q2.borders[2]; // 0
    CHECK(encode_lm(q2, std::vector<double>{border})[0] == 1);
    CHECK(encode_lm(q2, std::vector<double>{std::nextafter(border, 1.0)})[0] == 2);
}

TEST_CASE("values a hair outside the range clamp, farther is an error", "[sketch]") {
    const Quantizer q = build_lm_rff(2);
    CHECK(encode_lm(q, std::vector<double>{1.0 + 5e-13})[0] == 3);
    CHECK(encode_lm(q, std::vector<double>{-1.0 - 5e-13})[0] == 0);
    CHECK_THROWS_AS(encode_lm(q, std::vector<double>{1.0 + 1e-11}), input_error);
    CHECK_THROWS_AS(encode_lm(q, std::vector<double>{-1.5}), input_error);
    const Quantizer g = stocq_grid(2);
    CHECK_THROWS_AS(encode_stocq(g, std::vector<double>{2.0}, 1, 0), input_error);
    // kind misuse is a contract violation, not an input error
    CHECK_THROWS_AS(encode_lm(g, std::vector<double>{0.0}), std::invalid_argument);
    CHECK_THROWS_AS(encode_stocq(q, std::vector<double>{0.0}, 1, 0), std::invalid_argument);
}

TEST_CASE("encoding never skips past an adjacent level", "[sketch]") {
    for (const Quantizer& q : {build_lm_rff(3), build_lm2_rff(3)}) {
        std::vector<double> grid(10000);
        for (std::size_t i = 0; i < grid.size(); ++i)
            grid[i] = -1.0 + 2.0 * static_cast<double>(i) / (grid.size() - 1);
        const auto codes = encode_lm(q, grid);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            std::size_t nearest = 0;
            for (std::size_t k = 1; k < q.levels.size(); ++k)
                if (std::abs(q.levels[k] - grid[i]) < std::abs(q.levels[nearest] - grid[i]))
                    nearest = k;
            CHECK(std::abs(static_cast<int>(codes[i]) - static_cast<int>(nearest)) <= 1);
        }
    }
}

TEST_CASE("stochastic rounding is unbiased and addressed by position", "[sketch]") {
    const Quantizer g = stocq_grid(2);
    const std::uint64_t seed = 99;

    // a grid point maps to itself surely
    std::vector<double> pts(g.levels.begin(), g.levels.end());
    for (int row = 0; row < 50; ++row) {
        const auto c = encode_stocq(g, pts, seed, row);
        CHECK(decode(g, c) == pts);
    }

    // cell midpoint: each endpoint half the time
    const double lo = g.borders[1], hi = g.borders[2];
    const double mid = 0.5 * (lo + hi);
    const int reps = 100000;
    int ups = 0;
    for (int r = 0; r < reps; ++r)
        ups += encode_stocq(g, std::vector<double>{mid}, seed, r)[0] == 2;
    const double phat = static_cast<double>(ups) / reps;
    CHECK(phat == Approx(0.5).margin(3.0 * 0.5 / std::sqrt(double(reps))));

    // conditional mean z and variance (hi - z)(z - lo) at an off-center z
    const double z = lo + 0.3 * (hi - lo);
    double s1 = 0, s2 = 0;
    for (int r = 0; r < reps; ++r) {
        const double v = decode(g, encode_stocq(g, std::vector<double>{z}, seed, r))[0];
        s1 += v;
        s2 += v * v;
    }
    const double mean = s1 / reps;
    const double var = s2 / reps - mean * mean;
    const double true_var = (hi - z) * (z - lo);
    CHECK(mean == Approx(z).margin(3.0 * std::sqrt(true_var / reps)));
    CHECK(var == Approx(true_var).epsilon(0.05));

    // same (row, column) address, same draw; different address, independent
    const auto a = encode_stocq(g, std::vector<double>{mid, mid, mid}, seed, 7);
    const auto b = encode_stocq(g, std::vector<double>{mid, mid, mid}, seed, 7);
    CHECK(a == b);
}

TEST_CASE("decode rejects out-of-range codes", "[sketch]") {
    const Quantizer q = build_lm_rff(2);
    CHECK_THROWS_AS(decode(q, std::vector<std::uint8_t>{4}), corrupt_error);
    CHECK_THROWS_AS(row_norm(q, std::vector<std::uint8_t>{1, 200}), corrupt_error);
    CHECK(decode(q, std::vector<std::uint8_t>{0, 3}) ==
          std::vector<double>{q.levels[0], q.levels[3]});
    // 1-bit decode lands on two values only
    const Quantizer q1 = build_lm_rff(1);
    const auto v = decode(q1, std::vector<std::uint8_t>{0, 1, 1, 0});
    for (double x : v) CHECK(std::abs(x) == Approx(2.0 / kPi).margin(1e-9));
}

TEST_CASE("row norms are positive for LM codebooks", "[sketch]") {
    const Quantizer q = build_lm_rff(1);
    // worst case: all codes equal still gives a positive norm
    const double nrm = row_norm(q, std::vector<std::uint8_t>{0, 0, 0, 0});
    CHECK(nrm == Approx(2.0 * 2.0 / kPi).margin(1e-9));
    CHECK(nrm > 0.0);
}

namespace {

Sketch sample_sketch(bool norms) {
    Sketch s;
    s.n = 3;
    s.m = 5;
    s.bits = 3;
    s.gamma = 1.25;
    s.seed = 77;
    s.quantizer_id = 0xABCDEF0123456789ULL;
    s.codes = {0, 7, 3, 5, 1, 2, 2, 6, 4, 0, 7, 7, 7, 0, 1};
    if (norms) s.row_norms = {1.5, 2.5, 0.75};
    return s;
}

} // namespace

TEST_CASE("packed sketches round-trip bit-exactly", "[sketch]") {
    for (bool norms : {false, true}) {
        const Sketch s = sample_sketch(norms);
        const auto bytes = pack(s);
        CHECK(bytes.size() == packed_size(s.n, s.m, s.bits, norms));
        CHECK(bytes.size() == 44 + 3 * 2 + (norms ? 24u : 0u) + 4);
        const Sketch r = unpack(bytes);
        CHECK(r.n == s.n);
        CHECK(r.m == s.m);
        CHECK(r.bits == s.bits);
        CHECK(r.gamma == s.gamma);
        CHECK(r.seed == s.seed);
        CHECK(r.quantizer_id == s.quantizer_id);
        CHECK(r.codes == s.codes);
        CHECK(r.row_norms == s.row_norms);
        // byte-stable: packing the reloaded sketch reproduces the file
        CHECK(pack(r) == bytes);
    }
}

TEST_CASE("empty sketch round-trips", "[sketch]") {
    Sketch s;
    s.n = 0;
    s.m = 16;
    s.bits = 2;
    s.gamma = 0.5;
    const auto bytes = pack(s);
    CHECK(bytes.size() == 48);
    const Sketch r = unpack(bytes);
    CHECK(r.n == 0);
    CHECK(r.m == 16);
    CHECK(r.codes.empty());
}

TEST_CASE("every packing defect is detected", "[sketch]") {
    const Sketch s = sample_sketch(true);
    const auto good = pack(s);

    auto bad = good;
    bad[0] = 'X';
    CHECK_THROWS_AS(unpack(bad), corrupt_error);

    bad = good;
    bad[4] = 2; // unknown version
    CHECK_THROWS_AS(unpack(bad), corrupt_error);

    bad = good;
    bad.resize(bad.size() - 5); // truncated
    CHECK_THROWS_AS(unpack(bad), corrupt_error);

    bad = good;
    bad[44] ^= 0x10; // payload bit flip -> checksum failure
    CHECK_THROWS_AS(unpack(bad), corrupt_error);

    bad = good;
    bad.push_back(0); // trailing junk
    CHECK_THROWS_AS(unpack(bad), corrupt_error);

    CHECK_THROWS_AS(unpack(std::vector<std::uint8_t>{'R', 'F'}), corrupt_error);

    // header that asks for more rows than the file could hold
    bad = good;
    bad[12] = 0xFF; // n low byte
    bad[13] = 0xFF;
    CHECK_THROWS_AS(unpack(bad), corrupt_error);
}

TEST_CASE("bit packing is dense for every width", "[sketch]") {
    for (int bits = 1; bits <= 8; ++bits) {
        Sketch s;
        s.n = 2;
        s.m = 13;
        s.bits = bits;
        Stream rng(bits);
        s.codes.resize(s.n * s.m);
        for (auto& c : s.codes)
            c = static_cast<std::uint8_t>(rng.next_u64() & ((1u << bits) - 1));
        const auto bytes = pack(s);
        CHECK(bytes.size() == 44 + 2 * ((13 * bits + 7) / 8) + 4);
        CHECK(unpack(bytes).codes == s.codes);
    }
}
