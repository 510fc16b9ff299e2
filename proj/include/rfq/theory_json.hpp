#pragma once

#include <vector>

#include <json.hpp>

#include "rfq/quantizer.hpp"
#include "rfq/theory.hpp"

// JSON form of a MomentTable: context plus the tabulated moments. Orders s, t
// run 0..4, which covers every mean/variance formula in theory.hpp.

namespace rfq {

inline nlohmann::json moment_table_json(const MomentTable& t) {
    nlohmann::json j{{"context",
                      {{"quantizer_id", quantizer_id(t.q)},
                       {"kind", kind_name(t.q.kind)},
                       {"bits", t.q.bits},
                       {"rho", t.rho},
                       {"gamma", t.gamma}}}};

    const auto matrix_rows = [](const Eigen::MatrixXd& m) {
        std::vector<std::vector<double>> rows(m.rows());
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            rows[i].resize(m.cols());
            for (Eigen::Index k = 0; k < m.cols(); ++k) rows[i][k] = m(i, k);
        }
        return rows;
    };
    j["p"] = matrix_rows(t.p);

    if (t.q.kind == QuantKind::STOCQ_GRID) {
        j["kappa"] = matrix_rows(t.kappa);
        j["m1"] = matrix_rows(t.m1);
        return j;
    }

    std::vector<std::vector<double>> theta(5), zeta(5);
    for (int s = 0; s <= 4; ++s) {
        theta[s].resize(5);
        zeta[s].resize(5);
        for (int u = 0; u <= 4; ++u) {
            theta[s][u] = t.theta(s, u);
            zeta[s][u] = t.zeta(s, u);
        }
    }
    j["theta"] = theta;
    j["zeta"] = zeta;
    j["alpha"] = t.alpha;
    std::vector<double> psi_diag;
    for (int i = 1; i <= 9; ++i) psi_diag.push_back(t.psi(i, i));
    j["psi_diag"] = psi_diag;
    return j;
}

} // namespace rfq
