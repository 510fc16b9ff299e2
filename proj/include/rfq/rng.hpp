#pragma once

#include <cstdint>
#include <cmath>
#include <numbers>

// Counter-based pseudo-random streams.
//
// Every random quantity in the library is addressed, not sequenced: a value
// is a pure function of (master seed, purpose tag, indices). Regenerating a
// block of features, encoding rows in parallel, or re-running a sweep with
// the same seed therefore reproduces identical bytes with no shared state.

namespace rfq {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// SplitMix64 step: golden-ratio increment then the full-avalanche finalizer.
// The increment keeps 0 from being a fixed point.
constexpr std::uint64_t avalanche(std::uint64_t z) noexcept {
    z += kGolden;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// One-way substream key derivation. Chain to address nested streams:
// derive(derive(seed, tag), index).
constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t word) noexcept {
    return avalanche((key ^ avalanche(word + kGolden)) * 0xd6e8feb86659fd93ULL + kGolden);
}

// Purpose tags. Frozen: changing any value changes every sketch byte.
namespace stream_tag {
inline constexpr std::uint64_t kFeature = 0x7266665F66656174ULL; // projection dirs + phases
inline constexpr std::uint64_t kStocq   = 0x7266665F7374636FULL; // stochastic rounding draws
inline constexpr std::uint64_t kTrain   = 0x7266665F7472626CULL; // synthetic train rows
inline constexpr std::uint64_t kTest    = 0x7266665F74657374ULL; // synthetic test rows
inline constexpr std::uint64_t kCoeff   = 0x7266665F62657461ULL; // synthetic cubic coefficients
inline constexpr std::uint64_t kSplit   = 0x7266665F73706C74ULL; // dataset shuffling
inline constexpr std::uint64_t kMc      = 0x7266665F6D630000ULL; // verification Monte-Carlo
} // namespace stream_tag

// Uniform in the open interval (0,1): (k + 1/2) / 2^52 over the top 52 bits.
// The half offset is exactly representable at every k, so 0 and 1 are
// unreachable (log and quantile transforms stay finite).
constexpr double unit_from(std::uint64_t bits) noexcept {
    return (static_cast<double>(bits >> 12) + 0.5) * 0x1.0p-52;
}

// Sequential view over one keyed substream.
class Stream {
public:
    explicit constexpr Stream(std::uint64_t key) noexcept : key_(key) {}

    constexpr std::uint64_t next_u64() noexcept { return avalanche(key_ + (++n_) * kGolden); }

    double next_unit() noexcept { return unit_from(next_u64()); }

    double next_angle() noexcept { return 2.0 * std::numbers::pi * next_unit(); }

    // Box-Muller, pairwise; the second variate is cached.
    double next_normal() noexcept {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_unit();
        const double u2 = next_unit();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        have_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::uint64_t key_;
    std::uint64_t n_ = 0;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Stochastic-rounding variate for sketch entry (row, col): addressed directly
// so rows can be encoded in any order or in parallel.
inline double stocq_unit(std::uint64_t seed, std::uint64_t row, std::uint64_t col) noexcept {
    return unit_from(avalanche(derive(derive(seed, stream_tag::kStocq), row) + col * kGolden));
}

} // namespace rfq
