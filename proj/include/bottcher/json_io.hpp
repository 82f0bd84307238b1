#pragma once

#include <string>

#include <json.hpp>

#include "bottcher/algebra.hpp"
#include "bottcher/green.hpp"
#include "bottcher/quasihom.hpp"

namespace bottcher {

/// Map-description schema ingested by the CLI:
/// {"m": int, "blocks": [int], "degrees": [int], "coords":
///   [[{"exp": [int,...], "re": float, "im": float}, ...], ...]}
PolyMap polymap_from_json(const nlohmann::json& j);
nlohmann::json polymap_to_json(const PolyMap& map);

PolyMap load_polymap(const std::string& path);

/// Stable-name serialization of adaptedness verdicts and certificates.
nlohmann::json germ_report_to_json(const AdaptedGerm& germ);

nlohmann::json euler_report_to_json(const std::vector<double>& per_block);

nlohmann::json green_value_to_json(const GreenValue& value);

/// CSV emission: one row per sample with coordinates, per-block G, n_used and
/// functional residuals.
std::string green_csv_header(int dimension, int blocks);
std::string green_csv_row(const BlockVector& v, const GreenValue& value);

}  // namespace bottcher
