#pragma once

#include <string>

#include <json.hpp>

#include "rfq/quantizer.hpp"

// JSON form of a codebook: {"kind", "bits", "borders", "levels"}.
// Doubles are rendered shortest-round-trip, so load(dump(q)) is bit-exact.

namespace rfq {

inline nlohmann::json quantizer_to_json(const Quantizer& q) {
    return nlohmann::json{{"kind", kind_name(q.kind)},
                          {"bits", q.bits},
                          {"borders", q.borders},
                          {"levels", q.levels}};
}

inline Quantizer quantizer_from_json(const nlohmann::json& j) {
    Quantizer q;
    try {
        q.kind = kind_from_name(j.at("kind").get<std::string>());
        q.bits = j.at("bits").get<int>();
        q.borders = j.at("borders").get<std::vector<double>>();
        q.levels = j.at("levels").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("quantizer json malformed: ") + e.what());
    }
    validate(q);
    return q;
}

inline std::string quantizer_dump(const Quantizer& q) {
    return quantizer_to_json(q).dump(2) + "\n";
}

inline Quantizer quantizer_parse(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw std::invalid_argument(std::string("quantizer json malformed: ") + e.what());
    }
    return quantizer_from_json(j);
}

} // namespace rfq
