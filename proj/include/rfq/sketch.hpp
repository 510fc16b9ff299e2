#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <span>
#include <string>
#include <vector>

#include "rfq/errors.hpp"
#include "rfq/quantizer.hpp"
#include "rfq/rng.hpp"

// Quantized feature codes and their persistent bit-packed form. Codes are
// level indices, never level values: the codebook travels by content hash,
// so a sketch costs exactly bits-per-feature.

namespace rfq {

struct Sketch {
    std::uint64_t n = 0;           // rows (data points)
    std::uint32_t m = 0;           // features per row
    int bits = 0;
    double gamma = 0.0;
    std::uint64_t seed = 0;        // feature stream the values came from
    std::uint64_t quantizer_id = 0;
    std::vector<std::uint8_t> codes;   // n*m entries, one code per byte
    std::vector<double> row_norms;     // empty or n entries

    bool has_norms() const { return !row_norms.empty(); }
};

namespace detail {

inline double clamp_unit(double v) {
    if (v > 1.0) {
        if (v > 1.0 + 1e-12) throw input_error("feature value outside [-1, 1]");
        return 1.0;
    }
    if (v < -1.0) {
        if (v < -1.0 - 1e-12) throw input_error("feature value outside [-1, 1]");
        return -1.0;
    }
    return v;
}

} // namespace detail

// Deterministic encoding: each value goes to the level of its half-open
// cell (t_{i-1}, t_i].
inline std::vector<std::uint8_t> encode_lm(const Quantizer& q,
                                           std::span<const double> values) {
    if (q.kind == QuantKind::STOCQ_GRID)
        throw std::invalid_argument("encode_lm: grid quantizer needs encode_stocq");
    if (q.kind == QuantKind::IDENTITY)
        throw std::invalid_argument("encode_lm: identity quantizer has no codes");
    std::vector<std::uint8_t> codes(values.size());
    for (std::size_t j = 0; j < values.size(); ++j)
        codes[j] = static_cast<std::uint8_t>(q.cell_index(detail::clamp_unit(values[j])));
    return codes;
}

// Stochastic rounding: z in [t_i, t_{i+1}] goes up with probability
// (z - t_i)/(t_{i+1} - t_i), so E[decoded | z] = z and a grid point maps to
// itself surely. One uniform variate per entry, addressed by
// (master seed, row, column); encoding order never matters.
inline std::vector<std::uint8_t> encode_stocq(const Quantizer& q,
                                              std::span<const double> values,
                                              std::uint64_t seed, std::uint64_t row) {
    if (q.kind != QuantKind::STOCQ_GRID)
        throw std::invalid_argument("encode_stocq: needs a grid quantizer");
    std::vector<std::uint8_t> codes(values.size());
    for (std::size_t j = 0; j < values.size(); ++j) {
        const double z = detail::clamp_unit(values[j]);
        const std::size_t i = q.cell_index(z);
        const double lo = q.borders[i], hi = q.borders[i + 1];
        const double p_up = (z - lo) / (hi - lo);
        const bool up = stocq_unit(seed, row, j) < p_up;
        codes[j] = static_cast<std::uint8_t>(i + (up ? 1 : 0));
    }
    return codes;
}

inline std::vector<double> decode(const Quantizer& q, std::span<const std::uint8_t> codes) {
    std::vector<double> values(codes.size());
    for (std::size_t j = 0; j < codes.size(); ++j) {
        if (codes[j] >= q.levels.size()) throw corrupt_error("sketch code out of range");
        values[j] = q.levels[codes[j]];
    }
    return values;
}

// sqrt(sum of squared reconstruction levels) for one row of codes; the
// normalized estimator divides by these.
inline double row_norm(const Quantizer& q, std::span<const std::uint8_t> codes) {
    double s = 0.0;
    for (const std::uint8_t c : codes) {
        if (c >= q.levels.size()) throw corrupt_error("sketch code out of range");
        s += q.levels[c] * q.levels[c];
    }
    return std::sqrt(s);
}

namespace detail {

inline const std::array<std::uint32_t, 256>& crc32_table() {
    static const std::array<std::uint32_t, 256> table = [] {
        std::array<std::uint32_t, 256> t{};
        for (std::uint32_t i = 0; i < 256; ++i) {
            std::uint32_t c = i;
            for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
            t[i] = c;
        }
        return t;
    }();
    return table;
}

inline std::uint32_t crc32(std::span<const std::uint8_t> data,
                           std::uint32_t crc = 0) {
    const auto& table = crc32_table();
    crc ^= 0xFFFFFFFFu;
    for (const std::uint8_t b : data) crc = table[(crc ^ b) & 0xFF] ^ (crc >> 8);
    return crc ^ 0xFFFFFFFFu;
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

inline void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    put_u64(out, u);
}

struct Cursor {
    std::span<const std::uint8_t> data;
    std::size_t pos = 0;

    void need(std::size_t k) const {
        if (pos + k > data.size()) throw corrupt_error("sketch file truncated");
    }
    std::uint8_t u8() {
        need(1);
        return data[pos++];
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= std::uint32_t{data[pos + i]} << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= std::uint64_t{data[pos + i]} << (8 * i);
        pos += 8;
        return v;
    }
    double f64() {
        const std::uint64_t u = u64();
        double v;
        std::memcpy(&v, &u, 8);
        return v;
    }
};

} // namespace detail

inline std::size_t packed_row_bytes(std::uint32_t m, int bits) {
    return (std::size_t{m} * bits + 7) / 8;
}

// Bytes on disk: 44-byte header, n rows of LSB-first packed codes, optional
// norms, CRC32 of everything after the header.
inline std::size_t packed_size(std::uint64_t n, std::uint32_t m, int bits, bool norms) {
    return 44 + n * packed_row_bytes(m, bits) + (norms ? 8 * n : 0) + 4;
}

inline std::vector<std::uint8_t> pack(const Sketch& s) {
    if (s.codes.size() != s.n * s.m)
        throw std::invalid_argument("pack: codes size disagrees with n*m");
    if (!s.row_norms.empty() && s.row_norms.size() != s.n)
        throw std::invalid_argument("pack: row_norms size disagrees with n");
    if (s.bits < 1 || s.bits > 8) throw std::invalid_argument("pack: bits outside 1..8");

    std::vector<std::uint8_t> out;
    out.reserve(packed_size(s.n, s.m, s.bits, s.has_norms()));
    out.insert(out.end(), {'R', 'F', 'Q', 'S'});
    out.push_back(1); // version
    out.push_back(static_cast<std::uint8_t>(s.bits));
    out.push_back(s.has_norms() ? 1 : 0);
    out.push_back(0); // reserved
    detail::put_u32(out, s.m);
    detail::put_u64(out, s.n);
    detail::put_f64(out, s.gamma);
    detail::put_u64(out, s.seed);
    detail::put_u64(out, s.quantizer_id);

    const std::size_t row_bytes = packed_row_bytes(s.m, s.bits);
    const std::size_t payload_start = out.size();
    for (std::uint64_t r = 0; r < s.n; ++r) {
        const std::size_t base = out.size();
        out.resize(base + row_bytes, 0);
        for (std::uint32_t c = 0; c < s.m; ++c) {
            const std::uint32_t code = s.codes[r * s.m + c];
            const std::size_t bit = std::size_t{c} * s.bits;
            const std::size_t byte = bit / 8, off = bit % 8;
            out[base + byte] |= static_cast<std::uint8_t>(code << off);
            if (off + s.bits > 8)
                out[base + byte + 1] |= static_cast<std::uint8_t>(code >> (8 - off));
        }
    }
    for (const double v : s.row_norms) detail::put_f64(out, v);
    const std::uint32_t crc = detail::crc32(
        std::span<const std::uint8_t>(out).subspan(payload_start));
    detail::put_u32(out, crc);
    return out;
}

inline Sketch unpack(std::span<const std::uint8_t> bytes) {
    detail::Cursor cur{bytes};
    cur.need(4);
    if (std::memcmp(bytes.data(), "RFQS", 4) != 0)
        throw corrupt_error("sketch magic mismatch");
    cur.pos = 4;
    const std::uint8_t version = cur.u8();
    if (version != 1) throw corrupt_error("unsupported sketch version");
    Sketch s;
    s.bits = cur.u8();
    const std::uint8_t flags = cur.u8();
    if (flags > 1) throw corrupt_error("unknown sketch flags");
    cur.u8(); // reserved
    s.m = cur.u32();
    s.n = cur.u64();
    s.gamma = cur.f64();
    s.seed = cur.u64();
    s.quantizer_id = cur.u64();
    if (s.bits < 1 || s.bits > 8) throw corrupt_error("sketch bits out of range");

    const std::size_t row_bytes = packed_row_bytes(s.m, s.bits);
    const std::size_t per_row = row_bytes + ((flags & 1) ? 8 : 0);
    // header n is attacker-controlled; reject before the multiply can wrap
    if (per_row > 0 && s.n > bytes.size() / per_row)
        throw corrupt_error("sketch file truncated");
    const std::size_t payload = s.n * row_bytes + (flags & 1 ? 8 * s.n : 0);
    cur.need(payload + 4);
    if (bytes.size() != 44 + payload + 4) throw corrupt_error("sketch has trailing bytes");
    const std::uint32_t want = detail::crc32(bytes.subspan(44, payload));

    const std::uint32_t mask = (s.bits == 8) ? 0xFF : ((1u << s.bits) - 1);
    s.codes.resize(std::size_t{s.n} * s.m);
    for (std::uint64_t r = 0; r < s.n; ++r) {
        const std::size_t base = cur.pos;
        for (std::uint32_t c = 0; c < s.m; ++c) {
            const std::size_t bit = std::size_t{c} * s.bits;
            const std::size_t byte = bit / 8, off = bit % 8;
            std::uint32_t v = bytes[base + byte] >> off;
            if (off + s.bits > 8) v |= std::uint32_t{bytes[base + byte + 1]} << (8 - off);
            s.codes[r * s.m + c] = static_cast<std::uint8_t>(v & mask);
        }
        cur.pos += row_bytes;
    }
    if (flags & 1) {
        s.row_norms.resize(s.n);
        for (std::uint64_t r = 0; r < s.n; ++r) s.row_norms[r] = cur.f64();
    }
    if (cur.u32() != want) throw corrupt_error("sketch checksum failure");
    return s;
}

} // namespace rfq
