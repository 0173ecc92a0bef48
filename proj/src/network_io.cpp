#include "gridflex/network_io.hpp"

#include <cstdint>
#include <fstream>
#include <sstream>

#include "gridflex/errors.hpp"
#include "json_util.hpp"

namespace gridflex {

using detail::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

NetworkModel network_from_json(const ordered_json& doc, const std::string& origin) {
    detail::require_keys(doc, {"name", "s_base_mva", "v_base_kv", "units", "limits", "nodes",
                               "lines"},
                         origin);
    double s_base = detail::require_number(doc, "s_base_mva", origin);
    double v_base = detail::require_number(doc, "v_base_kv", origin);
    std::string units = detail::require_string(doc, "units", origin);
    if (units != "pu" && units != "ohms")
        throw InputError(origin + ": units must be \"pu\" or \"ohms\"");
    std::string name = doc.contains("name") ? detail::require_string(doc, "name", origin) : "";

    const ordered_json& jl = detail::require(doc, "limits", origin);
    detail::require_keys(jl, {"v_min_pu2", "v_max_pu2", "v_slack_pu2"}, origin + ".limits");
    OperatingLimits limits;
    limits.v_min_pu2 = detail::require_number(jl, "v_min_pu2", origin + ".limits");
    limits.v_max_pu2 = detail::require_number(jl, "v_max_pu2", origin + ".limits");
    limits.v_slack_pu2 = detail::require_number(jl, "v_slack_pu2", origin + ".limits");

    const ordered_json& jnodes = detail::require(doc, "nodes", origin);
    if (!jnodes.is_array()) throw InputError(origin + ": nodes must be an array");
    std::vector<Node> nodes;
    for (const auto& jn : jnodes) {
        const std::string where = origin + ".nodes";
        detail::require_keys(jn, {"id", "kind", "rating_kva"}, where);
        Node n;
        n.id = detail::require_string(jn, "id", where);
        std::string kind = detail::require_string(jn, "kind", where);
        if (kind == "slack") {
            n.kind = NodeKind::Slack;
            if (jn.contains("rating_kva"))
                throw InputError(where + ": slack node " + n.id + " must not carry rating_kva");
        } else if (kind == "transformer") {
            n.kind = NodeKind::Transformer;
            n.rating_kva = detail::require_number(jn, "rating_kva", where);
        } else {
            throw InputError(where + ": node kind must be \"slack\" or \"transformer\"");
        }
        nodes.push_back(std::move(n));
    }

    const ordered_json& jlines = detail::require(doc, "lines", origin);
    if (!jlines.is_array()) throw InputError(origin + ": lines must be an array");
    std::vector<LineSegment> lines;
    for (const auto& je : jlines) {
        const std::string where = origin + ".lines";
        detail::require_keys(je, {"from", "to", "r_pu", "x_pu", "r_ohm", "x_ohm", "i_max_pu2"},
                             where);
        bool has_pu = je.contains("r_pu") || je.contains("x_pu");
        bool has_ohm = je.contains("r_ohm") || je.contains("x_ohm");
        if (has_pu && has_ohm)
            throw InputError(where + ": file mixes ohm and per-unit impedance conventions");
        if (units == "pu" && has_ohm)
            throw InputError(where + ": units is \"pu\" but line carries ohmic impedance");
        if (units == "ohms" && has_pu)
            throw InputError(where + ": units is \"ohms\" but line carries per-unit impedance");

        LineSegment line;
        line.from = detail::require_string(je, "from", where);
        line.to = detail::require_string(je, "to", where);
        if (units == "pu") {
            line.r_pu = detail::require_number(je, "r_pu", where);
            line.x_pu = detail::require_number(je, "x_pu", where);
        } else {
            line.r_pu = to_per_unit(detail::require_number(je, "r_ohm", where), v_base, s_base);
            line.x_pu = to_per_unit(detail::require_number(je, "x_ohm", where), v_base, s_base);
        }
        line.i_max_pu2 = detail::require_number(je, "i_max_pu2", where);
        lines.push_back(std::move(line));
    }

    return NetworkModel(std::move(nodes), std::move(lines), limits, s_base, v_base, name);
}

} // namespace

NetworkModel parse_network(std::istream& in, const std::string& origin) {
    std::ostringstream buf;
    buf << in.rdbuf();
    return network_from_json(detail::parse_json(buf.str(), origin), origin);
}

NetworkModel load_network(const std::string& path) {
    return network_from_json(detail::parse_json(read_file(path), path), path);
}

std::string network_to_json(const NetworkModel& network) {
    ordered_json doc;
    doc["name"] = network.name();
    doc["s_base_mva"] = network.s_base_mva();
    doc["v_base_kv"] = network.v_base_kv();
    doc["units"] = "pu";
    doc["limits"] = {{"v_min_pu2", network.limits().v_min_pu2},
                     {"v_max_pu2", network.limits().v_max_pu2},
                     {"v_slack_pu2", network.limits().v_slack_pu2}};
    doc["nodes"] = ordered_json::array();
    for (const Node& n : network.nodes()) {
        ordered_json jn;
        jn["id"] = n.id;
        if (n.kind == NodeKind::Slack) {
            jn["kind"] = "slack";
        } else {
            jn["kind"] = "transformer";
            jn["rating_kva"] = n.rating_kva;
        }
        doc["nodes"].push_back(std::move(jn));
    }
    doc["lines"] = ordered_json::array();
    for (const LineSegment& e : network.lines()) {
        doc["lines"].push_back({{"from", e.from},
                                {"to", e.to},
                                {"r_pu", e.r_pu},
                                {"x_pu", e.x_pu},
                                {"i_max_pu2", e.i_max_pu2}});
    }
    return doc.dump(2) + "\n";
}

void save_network(const NetworkModel& network, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << network_to_json(network);
}

std::string network_fingerprint(const NetworkModel& network) {
    const std::string canon = network_to_json(network);
    std::uint64_t hash = 1469598103934665603ull;
    for (unsigned char ch : canon) {
        hash ^= ch;
        hash *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace gridflex
