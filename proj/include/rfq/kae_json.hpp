#pragma once

#include <json.hpp>

#include "rfq/kae.hpp"

namespace rfq {

inline nlohmann::json kae_report_json(const KaeReport& r) {
    return nlohmann::json{{"beta_f_star", r.beta_f_star},
                          {"beta_2_star", r.beta_2_star},
                          {"err_f_star", r.err_f_star},
                          {"err_2_star", r.err_2_star},
                          {"delta1_star", r.delta1_star},
                          {"delta2_star", r.delta2_star},
                          {"epsilon", r.epsilon},
                          {"n", r.n},
                          {"degenerate", r.degenerate}};
}

} // namespace rfq
