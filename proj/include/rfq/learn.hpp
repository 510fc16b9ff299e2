#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <rfq/errors.hpp>
#include <rfq/features.hpp>
#include <rfq/quantizer.hpp>
#include <rfq/rng.hpp>
#include <rfq/sketch.hpp>

// Dataset ingestion, the synthetic cubic-regression generator, and a ridge
// harness over (quantized) random features. The harness never materializes
// a full feature matrix: it accumulates second moments block by block, so
// one pass at the largest m serves every smaller m as a leading block.

namespace rfq {

struct Dataset {
    Eigen::MatrixXd x;        // n x d
    Eigen::VectorXd y;        // n targets (labels arrive as their numeric value)
    bool normalized = false;  // rows rescaled to unit norm at load time
};

inline void validate(const Dataset& ds) {
    if (ds.x.rows() < 1 || ds.x.cols() < 1)
        throw std::invalid_argument("dataset: need at least one row and one column");
    if (ds.y.size() != ds.x.rows())
        throw std::invalid_argument("dataset: target count disagrees with row count");
    if (!ds.x.allFinite() || !ds.y.allFinite())
        throw std::invalid_argument("dataset: non-finite entries");
}

// y = b1' x + b2' x^2 + b3' x^3 + noise, powers elementwise. b1 counts up
// from 1, b2 is all ones, b3 is drawn once per seed; the cubic and noise
// scales are configurable because the response is otherwise dominated by
// heavy cubic tails that no kernel method can smooth at desk sample sizes.
struct SyntheticRegressionSpec {
    std::uint64_t n_train = 40000;
    std::uint64_t n_test = 10000;
    std::uint32_t d = 10;
    std::uint64_t seed = 0;
    double beta3_sigma = 0.1;
    double noise_sigma = 1.8;
};

inline void validate(const SyntheticRegressionSpec& spec) {
    if (spec.n_train < 1 || spec.n_test < 1 || spec.d < 1)
        throw std::invalid_argument("synthetic spec: sizes must be >= 1");
    if (!(spec.beta3_sigma >= 0.0) || !(spec.noise_sigma >= 0.0))
        throw std::invalid_argument("synthetic spec: scales must be >= 0");
}

inline Eigen::VectorXd synthetic_beta1(std::uint32_t d) {
    Eigen::VectorXd b(d);
    for (std::uint32_t i = 0; i < d; ++i) b(i) = static_cast<double>(i + 1);
    return b;
}

inline Eigen::VectorXd synthetic_beta3(const SyntheticRegressionSpec& spec) {
    Stream s(derive(spec.seed, stream_tag::kCoeff));
    Eigen::VectorXd b(spec.d);
    for (std::uint32_t i = 0; i < spec.d; ++i) b(i) = spec.beta3_sigma * s.next_normal();
    return b;
}

// Noise-free response surface; the generator adds noise_sigma * N(0,1).
inline double synthetic_signal(const Eigen::VectorXd& x, const Eigen::VectorXd& beta3) {
    double y = 0.0;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        const double v = x(i);
        y += static_cast<double>(i + 1) * v + v * v + beta3(i) * v * v * v;
    }
    return y;
}

namespace detail {

inline Dataset synthetic_block(std::uint64_t n, const SyntheticRegressionSpec& spec,
                               const Eigen::VectorXd& beta3, std::uint64_t stream_key) {
    Stream s(stream_key);
    Dataset ds;
    ds.x.resize(static_cast<Eigen::Index>(n), spec.d);
    ds.y.resize(static_cast<Eigen::Index>(n));
    Eigen::VectorXd row(spec.d);
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint32_t j = 0; j < spec.d; ++j) row(j) = s.next_normal();
        ds.x.row(static_cast<Eigen::Index>(i)) = row.transpose();
        ds.y(static_cast<Eigen::Index>(i)) =
            synthetic_signal(row, beta3) + spec.noise_sigma * s.next_normal();
    }
    return ds;
}

} // namespace detail

inline std::pair<Dataset, Dataset> generate_synthetic(const SyntheticRegressionSpec& spec) {
    validate(spec);
    const Eigen::VectorXd beta3 = synthetic_beta3(spec);
    return {detail::synthetic_block(spec.n_train, spec, beta3,
                                    derive(spec.seed, stream_tag::kTrain)),
            detail::synthetic_block(spec.n_test, spec, beta3,
                                    derive(spec.seed, stream_tag::kTest))};
}

// Normal-equation ridge solve, (F'F + lambda I) w = F'y. One refinement
// step keeps the residual at roundoff even for small lambda.
inline Eigen::VectorXd ridge_fit(const Eigen::MatrixXd& f, const Eigen::VectorXd& y,
                                 double lambda) {
    if (!(lambda > 0.0)) throw std::invalid_argument("ridge_fit: lambda must be positive");
    if (f.rows() != y.size())
        throw std::invalid_argument("ridge_fit: row count disagrees with target count");
    if (!f.allFinite() || !y.allFinite())
        throw std::invalid_argument("ridge_fit: non-finite input");
    const Eigen::Index p = f.cols();
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(p, p);
    g.selfadjointView<Eigen::Lower>().rankUpdate(f.transpose(), 1.0);
    g = g.selfadjointView<Eigen::Lower>();
    g.diagonal().array() += lambda;
    const Eigen::VectorXd b = f.transpose() * y;
    Eigen::LLT<Eigen::MatrixXd> llt(g);
    if (llt.info() != Eigen::Success)
        throw std::runtime_error("ridge_fit: normal matrix is not positive definite");
    Eigen::VectorXd w = llt.solve(b);
    w += llt.solve(b - g * w);
    const double scale = std::max(b.norm(), g.norm() * w.norm());
    if (scale > 0.0 && (g * w - b).norm() > 1e-8 * scale)
        throw std::runtime_error("ridge_fit: normal equations too ill-conditioned");
    return w;
}

struct KrrMethod {
    enum class Kind { LINEAR, FULL_RFF, QUANTIZED };
    Kind kind = Kind::FULL_RFF;
    QuantKind quant = QuantKind::LM_RFF;  // QUANTIZED only
    int bits = 1;                         // QUANTIZED only
    bool row_normalize = false;           // unit-norm decoded rows before the fit
};

inline std::string method_name(const KrrMethod& m) {
    switch (m.kind) {
        case KrrMethod::Kind::LINEAR: return "linear";
        case KrrMethod::Kind::FULL_RFF: return "full";
        default: return kind_name(m.quant);
    }
}

struct KrrResult {
    std::string method;
    int bits = 0;                    // quantizer bits; 64 for binary64 features
    std::uint32_t m = 0;             // feature count (d for the linear baseline)
    std::uint64_t memory_bits = 0;   // per-sample sketch size, m * bits
    double lambda = 0.0;             // grid value with the best test mse
    double test_mse = 0.0;
    std::uint64_t seed = 0;
};

namespace detail {

// Raw (unscaled) feature moments of one data pass. g holds Z'Z, colsum 1'Z,
// xy Z'y; everything any ridge fit needs afterwards is linear algebra here.
struct MomentSums {
    Eigen::MatrixXd g;
    Eigen::VectorXd colsum;
    Eigen::VectorXd xy;
    double sy = 0.0;
    double syy = 0.0;
    std::uint64_t n = 0;
};

inline void accumulate(MomentSums& s, const Eigen::MatrixXd& z, const Eigen::VectorXd& y) {
    s.g.selfadjointView<Eigen::Lower>().rankUpdate(z.transpose(), 1.0);
    s.colsum += z.colwise().sum().transpose();
    s.xy += z.transpose() * y;
    s.sy += y.sum();
    s.syy += y.squaredNorm();
    s.n += static_cast<std::uint64_t>(z.rows());
}

inline MomentSums feature_moments(const Dataset& ds, const KrrMethod& method,
                                  const RffConfig& cfg, const Quantizer* q,
                                  std::uint64_t row_offset, std::uint32_t row_block = 2048) {
    const std::uint32_t m =
        method.kind == KrrMethod::Kind::LINEAR ? static_cast<std::uint32_t>(ds.x.cols())
                                               : cfg.m;
    MomentSums s;
    s.g = Eigen::MatrixXd::Zero(m, m);
    s.colsum = Eigen::VectorXd::Zero(m);
    s.xy = Eigen::VectorXd::Zero(m);
    const Eigen::Index n = ds.x.rows();
    for (Eigen::Index r0 = 0; r0 < n; r0 += row_block) {
        const Eigen::Index rows = std::min<Eigen::Index>(row_block, n - r0);
        const Eigen::MatrixXd block = ds.x.middleRows(r0, rows);
        Eigen::MatrixXd z;
        switch (method.kind) {
            case KrrMethod::Kind::LINEAR:
                z = block;
                break;
            case KrrMethod::Kind::FULL_RFF:
                z = generate_rff(block, cfg).z;
                break;
            case KrrMethod::Kind::QUANTIZED: {
                const Sketch sk = sketch_features(
                    block, cfg, *q, false, row_offset + static_cast<std::uint64_t>(r0));
                z.resize(rows, m);
                for (Eigen::Index i = 0; i < rows; ++i) {
                    const std::vector<double> lv = decode(
                        *q, std::span<const std::uint8_t>(
                                sk.codes.data() + static_cast<std::size_t>(i) * m, m));
                    for (std::uint32_t j = 0; j < m; ++j) z(i, j) = lv[j];
                }
                break;
            }
        }
        if (method.row_normalize && method.kind != KrrMethod::Kind::LINEAR) {
            for (Eigen::Index i = 0; i < z.rows(); ++i) {
                const double norm = z.row(i).norm();
                if (norm == 0.0)
                    throw input_error("krr: a feature row decoded to all zeros");
                z.row(i) /= norm;
            }
        }
        accumulate(s, z, ds.y.segment(r0, rows));
    }
    s.g = s.g.selfadjointView<Eigen::Lower>();
    return s;
}

// Centered ridge on precomputed moments: the intercept is ybar - mu'w, so
// the penalty never touches it. Returns the best (lambda, test mse).
inline std::pair<double, double> best_over_grid(const MomentSums& tr, const MomentSums& te,
                                                std::uint32_t m_use, double scale,
                                                std::span<const double> lambdas) {
    const double c2 = scale * scale;
    const double inv_n = 1.0 / static_cast<double>(tr.n);
    const Eigen::MatrixXd a = c2 * tr.g.topLeftCorner(m_use, m_use);
    const Eigen::VectorXd mu = scale * inv_n * tr.colsum.head(m_use);
    const Eigen::VectorXd b = scale * tr.xy.head(m_use);
    const double ybar = tr.sy * inv_n;
    const Eigen::MatrixXd ac =
        a - static_cast<double>(tr.n) * (mu * mu.transpose());
    const Eigen::VectorXd bc = b - static_cast<double>(tr.n) * ybar * mu;

    const Eigen::MatrixXd at = c2 * te.g.topLeftCorner(m_use, m_use);
    const Eigen::VectorXd st = scale * te.colsum.head(m_use);
    const Eigen::VectorXd bt = scale * te.xy.head(m_use);
    const double nt = static_cast<double>(te.n);

    double best_lambda = 0.0;
    double best_mse = std::numeric_limits<double>::infinity();
    Eigen::MatrixXd reg = ac;
    for (const double lambda : lambdas) {
        if (!(lambda > 0.0))
            throw std::invalid_argument("krr: lambda grid values must be positive");
        reg = ac;
        reg.diagonal().array() += lambda;
        Eigen::LLT<Eigen::MatrixXd> llt(reg);
        if (llt.info() != Eigen::Success) continue;  // grid value below the psd floor
        const Eigen::VectorXd w = llt.solve(bc);
        const double c0 = ybar - mu.dot(w);
        const double sse = w.dot(at * w) + 2.0 * c0 * st.dot(w) - 2.0 * bt.dot(w) +
                           nt * c0 * c0 - 2.0 * c0 * te.sy + te.syy;
        const double mse = sse / nt;
        if (mse < best_mse) {
            best_mse = mse;
            best_lambda = lambda;
        }
    }
    if (!std::isfinite(best_mse))
        throw std::runtime_error("krr: no lambda in the grid produced a solvable system");
    return {best_lambda, best_mse};
}

} // namespace detail

// Full sweep: one train and one test pass per method at the largest m, then
// every smaller m is fitted from the leading moment block. Feature columns
// are seed-derived per column, so truncation equals regeneration.
inline std::vector<KrrResult> krr_sweep(const SyntheticRegressionSpec& spec, double gamma,
                                        std::span<const std::uint32_t> m_grid,
                                        std::span<const KrrMethod> methods,
                                        std::span<const double> lambda_grid) {
    validate(spec);
    if (m_grid.empty() || methods.empty() || lambda_grid.empty())
        throw std::invalid_argument("krr_sweep: empty grid");
    const std::uint32_t m_max = *std::max_element(m_grid.begin(), m_grid.end());

    // raw coordinates throughout: the response depends on row magnitudes,
    // and the cosine features approximate the distance kernel on any scale
    const auto [train, test] = generate_synthetic(spec);

    RffConfig cfg;
    cfg.gamma = gamma;
    cfg.m = m_max;
    cfg.d = spec.d;
    cfg.seed = spec.seed;

    std::vector<KrrResult> out;
    for (const KrrMethod& method : methods) {
        Quantizer q;
        if (method.kind == KrrMethod::Kind::QUANTIZED)
            q = build_quantizer(method.quant, method.bits);

        const detail::MomentSums tr = detail::feature_moments(train, method, cfg, &q, 0);
        const detail::MomentSums te =
            detail::feature_moments(test, method, cfg, &q, spec.n_train);

        const bool linear = method.kind == KrrMethod::Kind::LINEAR;
        const int bits = method.kind == KrrMethod::Kind::QUANTIZED ? method.bits : 64;
        for (const std::uint32_t m : m_grid) {
            const std::uint32_t m_use = linear ? spec.d : m;
            const double scale =
                linear ? 1.0 : std::sqrt(2.0 / static_cast<double>(m_use));
            const auto [lambda, mse] =
                detail::best_over_grid(tr, te, m_use, scale, lambda_grid);
            out.push_back({method_name(method), bits, m_use,
                           static_cast<std::uint64_t>(bits) * m_use, lambda, mse,
                           spec.seed});
            if (linear) break;  // no feature budget to sweep
        }
    }
    return out;
}

// Single-method convenience; cfg.seed may differ from spec.seed to rerun one
// feature draw against fixed data.
inline KrrResult krr_experiment(const SyntheticRegressionSpec& spec, const RffConfig& cfg,
                                const KrrMethod& method, std::span<const double> lambda_grid) {
    validate(spec);
    validate(cfg);
    if (cfg.d != spec.d)
        throw std::invalid_argument("krr_experiment: feature dimension disagrees with data");
    // data follows spec.seed; the feature stream follows cfg.seed
    const auto [train, test] = generate_synthetic(spec);
    Quantizer q;
    if (method.kind == KrrMethod::Kind::QUANTIZED)
        q = build_quantizer(method.quant, method.bits);
    const bool linear = method.kind == KrrMethod::Kind::LINEAR;
    const detail::MomentSums tr = detail::feature_moments(train, method, cfg, &q, 0);
    const detail::MomentSums te =
        detail::feature_moments(test, method, cfg, &q, spec.n_train);
    const std::uint32_t m_use = linear ? spec.d : cfg.m;
    const double scale = linear ? 1.0 : std::sqrt(2.0 / static_cast<double>(m_use));
    const auto [lambda, mse] = detail::best_over_grid(tr, te, m_use, scale, lambda_grid);
    const int bits = method.kind == KrrMethod::Kind::QUANTIZED ? method.bits : 64;
    return {method_name(method), bits, m_use, static_cast<std::uint64_t>(bits) * m_use,
            lambda, mse, spec.seed};
}

inline const char* krr_csv_header() {
    return "method,b,m,memory_bits,lambda,test_mse,seed";
}

inline std::string krr_csv_row(const KrrResult& r) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "%s,%d,%u,%llu,%.10g,%.10g,%llu", r.method.c_str(),
                  r.bits, r.m, static_cast<unsigned long long>(r.memory_bits), r.lambda,
                  r.test_mse, static_cast<unsigned long long>(r.seed));
    return buf;
}

enum class DatasetFormat { SPARSE_INDEX_VALUE, DENSE_CSV };

namespace detail {

inline double parse_number(const std::string& tok, const std::string& path,
                           std::uint64_t line_no) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(tok, &used);
    } catch (const std::exception&) {
        throw input_error(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
    }
    if (used != tok.size() || !std::isfinite(v))
        throw input_error(path + ":" + std::to_string(line_no) + ": bad number '" + tok + "'");
    return v;
}

} // namespace detail

// Sparse lines are "label idx:val idx:val ..." with 1-based indices; dense
// csv is headerless with the target in the last column. d_hint widens the
// sparse dimension when trailing columns never appear.
inline Dataset load_dataset(const std::string& path, DatasetFormat format,
                            bool normalize = false, std::uint32_t d_hint = 0) {
    std::ifstream in(path);
    if (!in) throw corrupt_error("load_dataset: cannot open " + path);

    std::vector<std::vector<std::pair<std::uint32_t, double>>> sparse_rows;
    std::vector<std::vector<double>> dense_rows;
    std::vector<double> targets;
    std::uint32_t d = d_hint;
    std::string line;
    std::uint64_t line_no = 0;

    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        if (format == DatasetFormat::SPARSE_INDEX_VALUE) {
            std::string tok;
            ls >> tok;
            targets.push_back(detail::parse_number(tok, path, line_no));
            std::vector<std::pair<std::uint32_t, double>> row;
            while (ls >> tok) {
                const std::size_t colon = tok.find(':');
                if (colon == std::string::npos || colon == 0 || colon + 1 == tok.size())
                    throw input_error(path + ":" + std::to_string(line_no) +
                                      ": expected idx:val, got '" + tok + "'");
                const double idx_val = detail::parse_number(tok.substr(0, colon), path, line_no);
                const double val = detail::parse_number(tok.substr(colon + 1), path, line_no);
                if (idx_val < 1.0 || idx_val != std::floor(idx_val))
                    throw input_error(path + ":" + std::to_string(line_no) +
                                      ": index must be a positive integer");
                const std::uint32_t idx = static_cast<std::uint32_t>(idx_val);
                for (const auto& [seen, unused] : row)
                    if (seen == idx)
                        throw input_error(path + ":" + std::to_string(line_no) +
                                          ": duplicate index " + std::to_string(idx));
                row.emplace_back(idx, val);
                d = std::max(d, idx);
            }
            sparse_rows.push_back(std::move(row));
        } else {
            std::vector<double> cells;
            std::string tok;
            while (std::getline(ls, tok, ','))
                cells.push_back(detail::parse_number(tok, path, line_no));
            if (cells.size() < 2)
                throw input_error(path + ":" + std::to_string(line_no) +
                                  ": need at least one feature and a target");
            if (!dense_rows.empty() && cells.size() != dense_rows.front().size() + 1)
                throw input_error(path + ":" + std::to_string(line_no) +
                                  ": column count changed mid-file");
            targets.push_back(cells.back());
            cells.pop_back();
            dense_rows.push_back(std::move(cells));
        }
    }
    if (targets.empty()) throw input_error("load_dataset: " + path + " has no data lines");

    Dataset ds;
    const Eigen::Index n = static_cast<Eigen::Index>(targets.size());
    if (format == DatasetFormat::SPARSE_INDEX_VALUE) {
        if (d == 0) throw input_error("load_dataset: " + path + " has no features");
        ds.x = Eigen::MatrixXd::Zero(n, d);
        for (Eigen::Index i = 0; i < n; ++i)
            for (const auto& [idx, val] : sparse_rows[static_cast<std::size_t>(i)])
                ds.x(i, idx - 1) = val;
    } else {
        const std::size_t cols = dense_rows.front().size();
        ds.x.resize(n, static_cast<Eigen::Index>(cols));
        for (Eigen::Index i = 0; i < n; ++i)
            for (std::size_t j = 0; j < cols; ++j)
                ds.x(i, static_cast<Eigen::Index>(j)) = dense_rows[static_cast<std::size_t>(i)][j];
    }
    ds.y = Eigen::Map<Eigen::VectorXd>(targets.data(), n);
    if (normalize) {
        ds.x = normalize_rows(ds.x);
        ds.normalized = true;
    }
    validate(ds);
    return ds;
}

// Uniform shuffle by seed, then a prefix/suffix cut: disjoint, exhaustive,
// reproducible.
inline std::pair<Dataset, Dataset> split(const Dataset& ds, double train_fraction,
                                         std::uint64_t seed) {
    validate(ds);
    if (!(train_fraction > 0.0) || !(train_fraction < 1.0))
        throw std::invalid_argument("split: fraction must be inside (0, 1)");
    const std::uint64_t n = static_cast<std::uint64_t>(ds.x.rows());
    if (n < 2) throw std::invalid_argument("split: need at least two rows");
    std::vector<std::uint64_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    Stream s(derive(seed, stream_tag::kSplit));
    for (std::uint64_t i = n - 1; i > 0; --i) {
        const std::uint64_t j = s.next_u64() % (i + 1);
        std::swap(order[i], order[j]);
    }
    std::uint64_t n_train =
        static_cast<std::uint64_t>(std::llround(train_fraction * static_cast<double>(n)));
    n_train = std::clamp<std::uint64_t>(n_train, 1, n - 1);

    const auto gather = [&](std::uint64_t from, std::uint64_t count) {
        Dataset part;
        part.x.resize(static_cast<Eigen::Index>(count), ds.x.cols());
        part.y.resize(static_cast<Eigen::Index>(count));
        for (std::uint64_t i = 0; i < count; ++i) {
            part.x.row(static_cast<Eigen::Index>(i)) =
                ds.x.row(static_cast<Eigen::Index>(order[from + i]));
            part.y(static_cast<Eigen::Index>(i)) =
                ds.y(static_cast<Eigen::Index>(order[from + i]));
        }
        part.normalized = ds.normalized;
        return part;
    };
    return {gather(0, n_train), gather(n_train, n - n_train)};
}

} // namespace rfq
