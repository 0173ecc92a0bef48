#include "gridflex/network.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <sstream>

#include "gridflex/errors.hpp"

namespace gridflex {

namespace {

std::string join_ids(const std::vector<std::string>& ids) {
    std::string out;
    for (size_t i = 0; i < ids.size(); ++i) {
        if (i) out += ", ";
        out += ids[i];
    }
    return out;
}

} // namespace

NetworkModel::NetworkModel(std::vector<Node> nodes, std::vector<LineSegment> lines,
                           OperatingLimits limits, double s_base_mva, double v_base_kv,
                           std::string name)
    : nodes_(std::move(nodes)),
      lines_(std::move(lines)),
      limits_(limits),
      s_base_mva_(s_base_mva),
      v_base_kv_(v_base_kv),
      name_(std::move(name)) {
    if (!(s_base_mva_ > 0.0)) throw ValidationError("s_base_mva must be positive");
    if (!(v_base_kv_ > 0.0)) throw ValidationError("v_base_kv must be positive");
    if (!(limits_.v_min_pu2 > 0.0) || !(limits_.v_min_pu2 < limits_.v_max_pu2))
        throw ValidationError("operating limits require 0 < v_min_pu2 < v_max_pu2");
    if (limits_.v_slack_pu2 < limits_.v_min_pu2 || limits_.v_slack_pu2 > limits_.v_max_pu2)
        throw ValidationError("v_slack_pu2 must lie within [v_min_pu2, v_max_pu2]");

    std::sort(nodes_.begin(), nodes_.end(),
              [](const Node& a, const Node& b) { return a.id < b.id; });
    std::sort(lines_.begin(), lines_.end(), [](const LineSegment& a, const LineSegment& b) {
        return std::tie(a.from, a.to) < std::tie(b.from, b.to);
    });

    std::vector<std::string> slack_ids;
    for (int i = 0; i < static_cast<int>(nodes_.size()); ++i) {
        const Node& n = nodes_[i];
        if (n.id.empty()) throw ValidationError("node with empty id");
        if (!index_.emplace(n.id, i).second)
            throw ValidationError("duplicate node id: " + n.id);
        if (n.kind == NodeKind::Slack) {
            slack_ids.push_back(n.id);
            slack_index_ = i;
        } else if (!(n.rating_kva > 0.0)) {
            throw ValidationError("transformer node " + n.id + " needs rating_kva > 0");
        }
    }
    if (slack_ids.empty()) throw ValidationError("no slack node");
    if (slack_ids.size() > 1)
        throw ValidationError("multiple slack nodes: " + join_ids(slack_ids));

    for (const LineSegment& line : lines_) {
        if (!index_.count(line.from) || !index_.count(line.to)) {
            throw ValidationError("line " + line.from + "--" + line.to +
                                  " references an unknown node");
        }
        if (line.from == line.to)
            throw ValidationError("line " + line.from + "--" + line.to + " is a self-loop");
        if (line.r_pu < 0.0 || line.x_pu < 0.0)
            throw ValidationError("line " + line.from + "--" + line.to +
                                  " has negative impedance");
        if (line.r_pu == 0.0 && line.x_pu == 0.0)
            throw ValidationError("line " + line.from + "--" + line.to +
                                  " has zero impedance; merge the nodes instead");
        if (!(line.i_max_pu2 > 0.0))
            throw ValidationError("line " + line.from + "--" + line.to +
                                  " needs i_max_pu2 > 0");
    }
}

int NetworkModel::node_index(const std::string& id) const {
    auto it = index_.find(id);
    if (it == index_.end()) throw ValidationError("unknown node id: " + id);
    return it->second;
}

RadialOrder validate_radial(const NetworkModel& network) {
    const int n = network.node_count();
    const int m = network.line_count();
    if (m != n - 1) {
        std::ostringstream msg;
        msg << "not radial: " << m << " lines for " << n << " nodes (need node count - 1)";
        throw ValidationError(msg.str());
    }

    // adjacency
    std::vector<std::vector<std::pair<int, int>>> adj(n); // (neighbor, line index)
    for (int e = 0; e < m; ++e) {
        const LineSegment& line = network.lines()[e];
        int a = network.node_index(line.from);
        int b = network.node_index(line.to);
        adj[a].push_back({b, e});
        adj[b].push_back({a, e});
    }

    RadialOrder order;
    order.slack = network.slack_index();
    order.parent_node.assign(n, -1);
    order.parent_line.assign(n, -1);
    order.depth.assign(n, 0);
    order.child_lines.assign(n, {});

    std::vector<bool> seen(n, false);
    std::deque<int> queue{order.slack};
    seen[order.slack] = true;
    while (!queue.empty()) {
        int i = queue.front();
        queue.pop_front();
        order.bfs_order.push_back(i);
        for (auto [j, e] : adj[i]) {
            if (j == order.parent_node[i]) continue;
            if (seen[j]) {
                throw ValidationError("cycle detected involving nodes " +
                                      network.nodes()[i].id + " and " + network.nodes()[j].id);
            }
            seen[j] = true;
            order.parent_node[j] = i;
            order.parent_line[j] = e;
            order.depth[j] = order.depth[i] + 1;
            order.child_lines[i].push_back(e);
            queue.push_back(j);
        }
    }

    if (static_cast<int>(order.bfs_order.size()) != n) {
        std::vector<std::string> missing;
        for (int i = 0; i < n; ++i)
            if (!seen[i]) missing.push_back(network.nodes()[i].id);
        throw ValidationError("disconnected from the slack: " + join_ids(missing));
    }
    return order;
}

std::map<std::string, std::string> feeder_partition(const NetworkModel& network,
                                                    const RadialOrder& order) {
    if (order.slack != network.slack_index() ||
        static_cast<int>(order.parent_node.size()) != network.node_count()) {
        throw ValidationError("feeder_partition requires the RadialOrder of this network");
    }

    // Child subtree roots in lexicographic id order get F1, F2, ...
    std::vector<int> roots;
    for (int i = 0; i < network.node_count(); ++i)
        if (order.parent_node[i] == order.slack) roots.push_back(i);
    std::sort(roots.begin(), roots.end(), [&](int a, int b) {
        return network.nodes()[a].id < network.nodes()[b].id;
    });

    std::vector<std::string> label(network.node_count());
    std::map<std::string, std::string> result;
    for (size_t k = 0; k < roots.size(); ++k)
        label[roots[k]] = "F" + std::to_string(k + 1);
    for (int i : order.bfs_order) {
        if (i == order.slack) continue;
        int parent = order.parent_node[i];
        if (label[i].empty()) label[i] = label[parent];
        result[network.nodes()[i].id] = label[i];
    }
    return result;
}

double to_per_unit(double raw_ohms, double raw_kv, double s_base_mva) {
    if (!(raw_kv > 0.0) || !(s_base_mva > 0.0))
        throw InputError("per-unit conversion needs positive voltage and power bases");
    return raw_ohms / (raw_kv * raw_kv / s_base_mva);
}

} // namespace gridflex
