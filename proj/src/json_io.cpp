#include "bottcher/json_io.hpp"

#include <fstream>
#include <sstream>

namespace bottcher {

using nlohmann::json;

PolyMap polymap_from_json(const json& j) {
    if (!j.contains("m") || !j.contains("coords"))
        throw StructuralError("map description needs 'm' and 'coords'");
    const int m = j.at("m").get<int>();
    std::vector<int> dims;
    if (j.contains("blocks"))
        dims = j.at("blocks").get<std::vector<int>>();
    else
        dims = {m};
    std::vector<int> degrees;
    if (j.contains("degrees")) degrees = j.at("degrees").get<std::vector<int>>();
    BlockStructure blocks(dims, degrees);
    if (blocks.dimension() != m) throw StructuralError("blocks do not sum to m");

    std::vector<PolyMap::Terms> coords;
    for (const auto& coord : j.at("coords")) {
        PolyMap::Terms terms;
        for (const auto& term : coord) {
            Exponent e = term.at("exp").get<Exponent>();
            Complex c(term.value("re", 0.0), term.value("im", 0.0));
            if (c != Complex(0.0)) terms[std::move(e)] += c;
        }
        coords.push_back(std::move(terms));
    }
    return PolyMap(blocks, blocks, std::move(coords));
}

json polymap_to_json(const PolyMap& map) {
    json j;
    j["m"] = map.input_dimension();
    j["blocks"] = map.input_blocks().dims;
    if (map.input_blocks().has_degrees()) j["degrees"] = map.input_blocks().degrees;
    json coords = json::array();
    for (const auto& terms : map.coords()) {
        json coord = json::array();
        for (const auto& [e, c] : terms)
            coord.push_back({{"exp", e}, {"re", c.real()}, {"im", c.imag()}});
        coords.push_back(std::move(coord));
    }
    j["coords"] = std::move(coords);
    return j;
}

PolyMap load_polymap(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw StructuralError("cannot open map file: " + path);
    json j;
    in >> j;
    return polymap_from_json(j);
}

json germ_report_to_json(const AdaptedGerm& germ) {
    json j;
    j["schema"] = 1;
    j["adapted"] = germ.adapted;
    j["degrees"] = germ.blocks().degrees;
    j["block_dims"] = germ.blocks().dims;
    json offenders = json::array();
    for (const auto& mono : germ.certificate)
        offenders.push_back({{"block", mono.block},
                             {"coord", mono.coord},
                             {"exp", mono.exponent},
                             {"re", mono.coefficient.real()},
                             {"im", mono.coefficient.imag()},
                             {"block_degree", mono.block_degree},
                             {"total_degree", mono.total_degree}});
    j["offending_monomials"] = std::move(offenders);
    json verdicts = json::array();
    for (const auto& v : germ.factor_verdicts) {
        json entry;
        entry["kind"] = v.kind == NondegeneracyKind::CertifiedYes  ? "certified_yes"
                        : v.kind == NondegeneracyKind::CertifiedNo ? "certified_no"
                                                                   : "sampled_yes";
        entry["method"] = v.method;
        if (v.kind == NondegeneracyKind::SampledYes) entry["confidence"] = v.confidence;
        if (v.witness) {
            json w = json::array();
            for (int i = 0; i < v.witness->size(); ++i)
                w.push_back({{"re", (*v.witness)[i].real()}, {"im", (*v.witness)[i].imag()}});
            entry["witness"] = std::move(w);
        }
        verdicts.push_back(std::move(entry));
    }
    j["factor_verdicts"] = std::move(verdicts);
    return j;
}

json euler_report_to_json(const std::vector<double>& per_block) {
    json j;
    j["schema"] = 1;
    j["euler_residual_per_block"] = per_block;
    return j;
}

json green_value_to_json(const GreenValue& value) {
    json j;
    j["schema"] = 1;
    json per_block = json::array();
    for (const auto& g : value.per_block)
        per_block.push_back(g.finite ? json(g.value) : json("-inf"));
    j["per_block"] = std::move(per_block);
    j["max"] = value.max_value.finite ? json(value.max_value.value) : json("-inf");
    j["n_used"] = value.n_used;
    j["functional_residual"] = value.functional_residual;
    json trace = json::array();
    for (const auto& row : value.trace) {
        json r = json::array();
        for (const auto& g : row) r.push_back(g.finite ? json(g.value) : json("-inf"));
        trace.push_back(std::move(r));
    }
    j["trace"] = std::move(trace);
    return j;
}

std::string green_csv_header(int dimension, int blocks) {
    std::ostringstream out;
    for (int i = 0; i < dimension; ++i) out << "re" << i << ",im" << i << ",";
    for (int j = 0; j < blocks; ++j) out << "green" << j << ",";
    out << "n_used";
    for (int j = 0; j < blocks; ++j) out << ",residual" << j;
    return out.str();
}

std::string green_csv_row(const BlockVector& v, const GreenValue& value) {
    std::ostringstream out;
    out.precision(17);
    for (int i = 0; i < v.dimension(); ++i)
        out << v.coords()[i].real() << "," << v.coords()[i].imag() << ",";
    for (const auto& g : value.per_block) {
        if (g.finite)
            out << g.value;
        else
            out << "-inf";
        out << ",";
    }
    out << value.n_used;
    for (double r : value.functional_residual) out << "," << r;
    return out.str();
}

}  // namespace bottcher
