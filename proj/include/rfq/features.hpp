#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rfq/errors.hpp"
#include "rfq/quantizer.hpp"
#include "rfq/rng.hpp"
#include "rfq/sketch.hpp"

// Random Fourier features for the Gaussian kernel, and the pairwise kernel
// estimators (exact, full precision, quantized, normalized quantized).
//
// Raw features are z = cos(gamma w'u + tau), kept unscaled in [-1, 1]; the
// sqrt(2) of the classical map enters estimators as the leading factor 2.

namespace rfq {

struct RffConfig {
    double gamma = 1.0;
    std::uint32_t m = 1024; // feature count
    std::uint32_t d = 1;    // input dimension
    std::uint64_t seed = 0;
};

inline void validate(const RffConfig& cfg) {
    if (!(cfg.gamma > 0.0)) throw std::invalid_argument("rff config: gamma must be positive");
    if (cfg.m < 1 || cfg.d < 1) throw std::invalid_argument("rff config: m and d must be >= 1");
}

struct FeatureMatrix {
    Eigen::MatrixXd z;   // n x m
    bool scaled = false; // false: raw cosines; true: sqrt(2)-scaled
};

inline Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x) {
    Eigen::MatrixXd out(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const double norm = x.row(i).norm();
        if (norm == 0.0)
            throw input_error("normalize_rows: row " + std::to_string(i) + " is all zero");
        out.row(i) = x.row(i) / norm;
    }
    return out;
}

// Projection directions and phases for feature columns [j0, j1). Column j
// is its own substream: d normal components of w_j, then the phase. Any
// block partition regenerates the identical column.
inline void feature_directions(const RffConfig& cfg, std::uint32_t j0, std::uint32_t j1,
                               Eigen::MatrixXd& w, Eigen::VectorXd& tau) {
    const std::uint64_t column_root = derive(cfg.seed, stream_tag::kFeature);
    w.resize(cfg.d, j1 - j0);
    tau.resize(j1 - j0);
    for (std::uint32_t j = j0; j < j1; ++j) {
        Stream s(derive(column_root, j));
        for (std::uint32_t k = 0; k < cfg.d; ++k) w(k, j - j0) = s.next_normal();
        tau(j - j0) = s.next_angle();
    }
}

// Raw feature columns [j0, j1) for every data row. The projection uses one
// fixed-order accumulation loop so any block partition reproduces columns
// bit for bit (a GEMM would round differently depending on block width).
inline Eigen::MatrixXd rff_block(const Eigen::MatrixXd& data, const RffConfig& cfg,
                                 std::uint32_t j0, std::uint32_t j1) {
    if (data.cols() != static_cast<Eigen::Index>(cfg.d))
        throw std::invalid_argument("rff_block: data dimension disagrees with config");
    Eigen::MatrixXd w;
    Eigen::VectorXd tau;
    feature_directions(cfg, j0, j1, w, tau);
    const Eigen::MatrixXd xt = data.transpose(); // rows contiguous as columns
    const Eigen::Index n = data.rows(), d = data.cols(), b = w.cols();
    Eigen::MatrixXd z(n, b);
    for (Eigen::Index j = 0; j < b; ++j) {
        const double* wj = w.col(j).data();
        for (Eigen::Index i = 0; i < n; ++i) {
            const double* xi = xt.col(i).data();
            double acc = 0.0;
            for (Eigen::Index k = 0; k < d; ++k) acc += xi[k] * wj[k];
            z(i, j) = std::cos(cfg.gamma * acc + tau(j));
        }
    }
    return z;
}

inline FeatureMatrix generate_rff(const Eigen::MatrixXd& data, const RffConfig& cfg,
                                  std::uint32_t block = 1024) {
    validate(cfg);
    FeatureMatrix f;
    f.z.resize(data.rows(), cfg.m);
    for (std::uint32_t j0 = 0; j0 < cfg.m; j0 += block) {
        const std::uint32_t j1 = std::min(cfg.m, j0 + block);
        f.z.middleCols(j0, j1 - j0) = rff_block(data, cfg, j0, j1);
    }
    return f;
}

inline double exact_kernel(const Eigen::VectorXd& u, const Eigen::VectorXd& v,
                           double gamma) {
    const double rho = u.dot(v);
    return std::exp(-gamma * gamma * (1.0 - rho));
}

inline double estimate_full(const Eigen::Ref<const Eigen::RowVectorXd>& feat_u,
                            const Eigen::Ref<const Eigen::RowVectorXd>& feat_v) {
    if (feat_u.size() != feat_v.size())
        throw std::invalid_argument("estimate_full: feature length mismatch");
    return 2.0 * feat_u.dot(feat_v) / static_cast<double>(feat_u.size());
}

inline double estimate_quantized(const Quantizer& q, std::span<const std::uint8_t> codes_u,
                                 std::span<const std::uint8_t> codes_v) {
    if (codes_u.size() != codes_v.size())
        throw std::invalid_argument("estimate_quantized: code length mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < codes_u.size(); ++i) {
        if (codes_u[i] >= q.levels.size() || codes_v[i] >= q.levels.size())
            throw corrupt_error("sketch code out of range");
        s += q.levels[codes_u[i]] * q.levels[codes_v[i]];
    }
    return 2.0 * s / static_cast<double>(codes_u.size());
}

// norm_u/norm_v < 0 mean "compute from the codes" (callers holding stored
// row norms pass them through).
inline double estimate_normalized(const Quantizer& q, std::span<const std::uint8_t> codes_u,
                                  std::span<const std::uint8_t> codes_v,
                                  double norm_u = -1.0, double norm_v = -1.0) {
    if (codes_u.size() != codes_v.size())
        throw std::invalid_argument("estimate_normalized: code length mismatch");
    if (norm_u < 0.0) norm_u = row_norm(q, codes_u);
    if (norm_v < 0.0) norm_v = row_norm(q, codes_v);
    if (norm_u == 0.0 || norm_v == 0.0)
        throw input_error("normalized estimate undefined: zero quantized row norm");
    double s = 0.0;
    bool same = true;
    for (std::size_t i = 0; i < codes_u.size(); ++i) {
        if (codes_u[i] >= q.levels.size() || codes_v[i] >= q.levels.size())
            throw corrupt_error("sketch code out of range");
        s += q.levels[codes_u[i]] * q.levels[codes_v[i]];
        same = same && codes_u[i] == codes_v[i];
    }
    if (same) return 1.0; // cosine of a row with itself, kept exact
    return s / (norm_u * norm_v);
}

// Estimates only make sense between sketches of the same feature stream.
inline void check_same_stream(const Sketch& a, const Sketch& b, const Quantizer& q) {
    const std::uint64_t qid = quantizer_id(q);
    if (a.quantizer_id != qid || b.quantizer_id != qid)
        throw input_error("sketch/quantizer mismatch: codebook hash differs");
    if (a.seed != b.seed || a.gamma != b.gamma || a.m != b.m)
        throw input_error("sketch pair from different feature streams");
}

inline double estimate_quantized(const Sketch& a, std::size_t i, const Sketch& b,
                                 std::size_t j, const Quantizer& q) {
    check_same_stream(a, b, q);
    if (i >= a.n || j >= b.n) throw input_error("sketch row index out of range");
    return estimate_quantized(
        q, std::span<const std::uint8_t>(a.codes).subspan(i * a.m, a.m),
        std::span<const std::uint8_t>(b.codes).subspan(j * b.m, b.m));
}

inline double estimate_normalized(const Sketch& a, std::size_t i, const Sketch& b,
                                  std::size_t j, const Quantizer& q) {
    check_same_stream(a, b, q);
    if (i >= a.n || j >= b.n) throw input_error("sketch row index out of range");
    return estimate_normalized(
        q, std::span<const std::uint8_t>(a.codes).subspan(i * a.m, a.m),
        std::span<const std::uint8_t>(b.codes).subspan(j * b.m, b.m),
        a.has_norms() ? a.row_norms[i] : -1.0, b.has_norms() ? b.row_norms[j] : -1.0);
}

// Quantize the feature stream of every data row. Stochastic rounding draws
// are addressed by (seed, row_offset + row, column) so disjoint row ranges
// can be sketched independently and reassembled. Features are materialized
// one row block at a time; directions are regenerated per block.
inline Sketch sketch_features(const Eigen::MatrixXd& data, const RffConfig& cfg,
                              const Quantizer& q, bool with_norms,
                              std::uint64_t row_offset = 0, std::uint32_t row_block = 1024) {
    validate(cfg);
    Sketch s;
    s.n = static_cast<std::uint64_t>(data.rows());
    s.m = cfg.m;
    s.bits = q.bits;
    s.gamma = cfg.gamma;
    s.seed = cfg.seed;
    s.quantizer_id = quantizer_id(q);
    s.codes.resize(std::size_t{s.n} * s.m);

    std::vector<double> row(cfg.m);
    std::vector<std::uint8_t> codes;
    for (std::uint64_t r0 = 0; r0 < s.n; r0 += row_block) {
        const std::uint64_t r1 = std::min<std::uint64_t>(s.n, r0 + row_block);
        const FeatureMatrix fb = generate_rff(
            data.middleRows(static_cast<Eigen::Index>(r0), static_cast<Eigen::Index>(r1 - r0)),
            cfg);
        for (std::uint64_t r = r0; r < r1; ++r) {
            for (std::uint32_t j = 0; j < cfg.m; ++j)
                row[j] = fb.z(static_cast<Eigen::Index>(r - r0), j);
            const std::span<const double> vals(row.data(), cfg.m);
            codes = (q.kind == QuantKind::STOCQ_GRID)
                        ? encode_stocq(q, vals, cfg.seed, row_offset + r)
                        : encode_lm(q, vals);
            std::copy(codes.begin(), codes.end(), s.codes.begin() + r * s.m);
        }
    }
    if (with_norms) {
        s.row_norms.resize(s.n);
        for (std::uint64_t r = 0; r < s.n; ++r)
            s.row_norms[r] =
                row_norm(q, std::span<const std::uint8_t>(s.codes).subspan(r * s.m, s.m));
    }
    return s;
}

namespace detail {

template <class PairFn>
Eigen::MatrixXd symmetric_gram(Eigen::Index n, PairFn&& entry) {
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = i; j < n; ++j) {
            const double v = entry(i, j);
            g(i, j) = v;
            g(j, i) = v;
        }
    }
    return g;
}

} // namespace detail

inline Eigen::MatrixXd gram_exact(const Eigen::MatrixXd& data, double gamma) {
    return detail::symmetric_gram(data.rows(), [&](Eigen::Index i, Eigen::Index j) {
        return exact_kernel(data.row(i).transpose(), data.row(j).transpose(), gamma);
    });
}

inline Eigen::MatrixXd gram_full(const FeatureMatrix& f) {
    if (f.scaled) throw std::invalid_argument("gram_full: expects raw features");
    return detail::symmetric_gram(f.z.rows(), [&](Eigen::Index i, Eigen::Index j) {
        return estimate_full(f.z.row(i), f.z.row(j));
    });
}

inline Eigen::MatrixXd gram_quantized(const Sketch& s, const Quantizer& q) {
    check_same_stream(s, s, q);
    const std::span<const std::uint8_t> codes(s.codes);
    return detail::symmetric_gram(
        static_cast<Eigen::Index>(s.n), [&](Eigen::Index i, Eigen::Index j) {
            return estimate_quantized(q, codes.subspan(i * s.m, s.m),
                                      codes.subspan(j * s.m, s.m));
        });
}

// Diagonal pinned to 1 exactly: a row has cosine 1 with itself.
inline Eigen::MatrixXd gram_normalized(const Sketch& s, const Quantizer& q) {
    check_same_stream(s, s, q);
    std::vector<double> norms(s.n);
    const std::span<const std::uint8_t> codes(s.codes);
    for (std::uint64_t r = 0; r < s.n; ++r)
        norms[r] = s.has_norms() ? s.row_norms[r]
                                 : row_norm(q, codes.subspan(r * s.m, s.m));
    return detail::symmetric_gram(
        static_cast<Eigen::Index>(s.n), [&](Eigen::Index i, Eigen::Index j) {
            if (i == j) return 1.0;
            return estimate_normalized(q, codes.subspan(i * s.m, s.m),
                                       codes.subspan(j * s.m, s.m), norms[i], norms[j]);
        });
}

} // namespace rfq
