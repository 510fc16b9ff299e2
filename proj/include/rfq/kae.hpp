#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <rfq/errors.hpp>

// Scale-invariant kernel approximation error. A kernel estimate that is a
// clean multiple of the truth is as good as the truth for ridge or SVM
// style learners, so every metric here first optimizes a scalar beta and
// only then measures the residual:
//
//   err_F = min_{beta>0} ||beta*Kh - K||_F     (closed form)
//   err_2 = min_{beta>0} ||beta*Kh - K||_2     (1-d convex search)
//   delta sandwich: (1-d1) K <= beta*Kh <= (1+d2) K in the psd order,
//   with beta restricted to the two minimizers above.
//
// Everything is dense and symmetric; n up to a few thousand.

namespace rfq {

struct SymEig {
    Eigen::VectorXd values;   // ascending
    Eigen::MatrixXd vectors;  // orthonormal columns, same order
};

namespace detail {

inline void require_square(const Eigen::MatrixXd& a, const char* who) {
    if (a.rows() != a.cols() || a.rows() < 1)
        throw std::invalid_argument(std::string(who) + ": matrix must be square and nonempty");
}

// Relative asymmetry guard. Zero matrices pass (they are symmetric).
inline void require_symmetric(const Eigen::MatrixXd& a, const char* who) {
    require_square(a, who);
    const double scale = a.cwiseAbs().maxCoeff();
    if (scale == 0.0) return;
    const double skew = (a - a.transpose()).cwiseAbs().maxCoeff();
    if (skew > 1e-9 * scale)
        throw std::invalid_argument(std::string(who) + ": matrix is not symmetric");
}

inline void require_same_shape(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b,
                               const char* who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument(std::string(who) + ": matrix sizes disagree");
}

} // namespace detail

inline SymEig sym_eig(const Eigen::MatrixXd& a) {
    detail::require_symmetric(a, "sym_eig");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("sym_eig: eigensolver did not converge");
    return {es.eigenvalues(), es.eigenvectors()};
}

// Largest |eigenvalue| of a symmetric matrix.
inline double spectral_norm(const Eigen::MatrixXd& a) {
    detail::require_symmetric(a, "spectral_norm");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success)
        throw std::runtime_error("spectral_norm: eigensolver did not converge");
    return std::max(std::abs(es.eigenvalues()(0)),
                    std::abs(es.eigenvalues()(a.rows() - 1)));
}

// Frobenius minimizer of ||beta*k_hat - k||. The objective is a parabola in
// beta, so the minimizer is <Kh,K>/<Kh,Kh>. A nonpositive inner product
// pins the constrained optimum at the beta -> 0+ boundary; 0 is returned as
// that limit and callers flag the report as degenerate.
inline double beta_f_star(const Eigen::MatrixXd& k_hat, const Eigen::MatrixXd& k) {
    detail::require_same_shape(k_hat, k, "beta_f_star");
    detail::require_square(k_hat, "beta_f_star");
    const double hh = k_hat.squaredNorm();
    if (hh == 0.0) throw std::invalid_argument("beta_f_star: estimate matrix is zero");
    const double hk = k_hat.cwiseProduct(k).sum();
    if (hk <= 0.0) return 0.0;
    return hk / hh;
}

// Spectral-norm minimizer over beta in [0, 10*beta_F]. ||beta*Kh - K||_2 is
// a maximum of convex functions of beta, hence convex; golden-section
// narrows the bracket to a relative width of tol.
inline double beta_2_star(const Eigen::MatrixXd& k_hat, const Eigen::MatrixXd& k,
                          double tol = 1e-6) {
    if (!(tol > 0.0)) throw std::invalid_argument("beta_2_star: tol must be positive");
    const double bf = beta_f_star(k_hat, k);
    if (bf == 0.0) return 0.0;
    detail::require_symmetric(k_hat, "beta_2_star");
    detail::require_symmetric(k, "beta_2_star");

    const auto objective = [&](double beta) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(beta * k_hat - k,
                                                          Eigen::EigenvaluesOnly);
        return std::max(std::abs(es.eigenvalues()(0)),
                        std::abs(es.eigenvalues()(k.rows() - 1)));
    };

    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double lo = 0.0, hi = 10.0 * bf;
    double x1 = hi - inv_phi * (hi - lo);
    double x2 = lo + inv_phi * (hi - lo);
    double f1 = objective(x1);
    double f2 = objective(x2);
    while (hi - lo > tol * std::max(hi, 1e-300)) {
        if (f1 <= f2) {
            hi = x2; x2 = x1; f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1; x1 = x2; f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = objective(x2);
        }
    }
    return 0.5 * (lo + hi);
}

// Default ridge added to K before the generalized eigenproblem. The gram of
// distinct points is positive definite on paper but its tail eigenvalues sit
// at roundoff, so the pencil needs a floor that scales with the matrix.
inline double pencil_epsilon(const Eigen::MatrixXd& k) {
    detail::require_square(k, "pencil_epsilon");
    return 1e-8 * k.trace() / static_cast<double>(k.rows());
}

// Tightest sandwich (1-d1)(K+eps I) <= beta*Kh <= (1+d2)(K+eps I) for one
// fixed beta, read off the extreme generalized eigenvalues of the pencil.
struct SandwichSlack {
    double beta = 0.0;
    double delta1 = 0.0;
    double delta2 = 0.0;
};

inline SandwichSlack pencil_slack(const Eigen::MatrixXd& k_hat, const Eigen::MatrixXd& k,
                                  double beta, double epsilon) {
    detail::require_same_shape(k_hat, k, "pencil_slack");
    detail::require_symmetric(k_hat, "pencil_slack");
    detail::require_symmetric(k, "pencil_slack");
    if (beta < 0.0) throw std::invalid_argument("pencil_slack: beta must be nonnegative");
    const Eigen::Index n = k.rows();
    Eigen::MatrixXd base = k + epsilon * Eigen::MatrixXd::Identity(n, n);
    if (Eigen::LLT<Eigen::MatrixXd>(base).info() != Eigen::Success)
        throw std::invalid_argument("pencil_slack: regularized kernel is not positive definite");
    Eigen::MatrixXd lhs = beta * k_hat;
    Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(
        lhs, base, Eigen::EigenvaluesOnly | Eigen::Ax_lBx);
    if (ges.info() != Eigen::Success)
        throw std::runtime_error("pencil_slack: generalized eigensolver did not converge");
    const double lam_min = ges.eigenvalues()(0);
    const double lam_max = ges.eigenvalues()(n - 1);
    return {beta, std::max(0.0, 1.0 - lam_min), std::max(0.0, lam_max - 1.0)};
}

// Componentwise infimum of the slacks over the two admissible scalings.
inline std::pair<double, double> delta_star(const Eigen::MatrixXd& k_hat,
                                            const Eigen::MatrixXd& k,
                                            double beta2, double betaf, double epsilon) {
    const SandwichSlack s2 = pencil_slack(k_hat, k, beta2, epsilon);
    const SandwichSlack sf = (betaf == beta2)
        ? s2 : pencil_slack(k_hat, k, betaf, epsilon);
    return {std::min(s2.delta1, sf.delta1), std::min(s2.delta2, sf.delta2)};
}

struct KaeReport {
    double beta_f_star = 0.0;
    double beta_2_star = 0.0;
    double err_f_star = 0.0;
    double err_2_star = 0.0;
    double delta1_star = 0.0;
    double delta2_star = 0.0;
    double epsilon = 0.0;
    std::size_t n = 0;
    bool degenerate = false;  // <Kh,K>_F <= 0, scaling pinned at the beta -> 0+ boundary
};

inline KaeReport kae_report(const Eigen::MatrixXd& k_hat, const Eigen::MatrixXd& k,
                            double tol = 1e-6,
                            std::optional<double> epsilon = std::nullopt) {
    detail::require_same_shape(k_hat, k, "kae_report");
    detail::require_symmetric(k_hat, "kae_report");
    detail::require_symmetric(k, "kae_report");
    KaeReport r;
    r.n = static_cast<std::size_t>(k.rows());
    r.epsilon = epsilon ? *epsilon : pencil_epsilon(k);
    r.beta_f_star = beta_f_star(k_hat, k);
    if (r.beta_f_star == 0.0) {
        r.degenerate = true;
        r.err_f_star = k.norm();
        r.err_2_star = spectral_norm(k);
        const SandwichSlack s = pencil_slack(k_hat, k, 0.0, r.epsilon);
        r.delta1_star = s.delta1;  // the zero matrix gives lambda == 0, so d1 = 1
        r.delta2_star = s.delta2;
        return r;
    }
    r.err_f_star = (r.beta_f_star * k_hat - k).norm();
    r.beta_2_star = beta_2_star(k_hat, k, tol);
    r.err_2_star = spectral_norm(r.beta_2_star * k_hat - k);
    const auto [d1, d2] = delta_star(k_hat, k, r.beta_2_star, r.beta_f_star, r.epsilon);
    r.delta1_star = d1;
    r.delta2_star = d2;
    return r;
}

// Gram file format: u64 little-endian n, then n*n binary64 row-major.
// Matrices usually come straight from the gram builders in features.hpp;
// the file form exists so precomputed kernels can be scored offline.
inline void save_gram(const std::string& path, const Eigen::MatrixXd& k) {
    detail::require_square(k, "save_gram");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw corrupt_error("save_gram: cannot open " + path);
    const std::uint64_t n = static_cast<std::uint64_t>(k.rows());
    out.write(reinterpret_cast<const char*>(&n), 8);
    std::vector<double> row(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        for (std::uint64_t j = 0; j < n; ++j)
            row[j] = k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(8 * n));
    }
    if (!out) throw corrupt_error("save_gram: write failed for " + path);
}

inline Eigen::MatrixXd load_gram(const std::string& path) {
    std::ifstream in(path, std::ios::binary | std::ios::ate);
    if (!in) throw corrupt_error("load_gram: cannot open " + path);
    const std::uint64_t bytes = static_cast<std::uint64_t>(in.tellg());
    in.seekg(0);
    std::uint64_t n = 0;
    if (bytes < 8 || !in.read(reinterpret_cast<char*>(&n), 8))
        throw corrupt_error("load_gram: truncated header in " + path);
    if (n == 0 || bytes != 8 + 8 * n * n)
        throw corrupt_error("load_gram: size does not match header in " + path);
    Eigen::MatrixXd k(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
    std::vector<double> row(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        if (!in.read(reinterpret_cast<char*>(row.data()),
                     static_cast<std::streamsize>(8 * n)))
            throw corrupt_error("load_gram: truncated payload in " + path);
        for (std::uint64_t j = 0; j < n; ++j)
            k(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = row[j];
    }
    return k;
}

} // namespace rfq
