#pragma once

#include <map>
#include <string>
#include <vector>

namespace gridflex {

enum class NodeKind { Slack, Transformer };

struct Node {
    std::string id;
    NodeKind kind = NodeKind::Transformer;
    double rating_kva = 0.0; // nameplate MV/LV transformer rating; unused for the slack
};

struct LineSegment {
    std::string from;
    std::string to;
    double r_pu = 0.0;
    double x_pu = 0.0;
    double i_max_pu2 = 0.0; // security limit on l = |I|^2, per-unit^2
};

struct OperatingLimits {
    double v_min_pu2 = 0.9025;  // 0.95^2
    double v_max_pu2 = 1.1025;  // 1.05^2
    double v_slack_pu2 = 1.0;
};

// Radial MV network in per-unit. Nodes are sorted by id and lines by
// (from, to) at construction so downstream output is reproducible.
// Field-level invariants are checked on construction; radiality is
// checked separately by validate_radial().
class NetworkModel {
public:
    NetworkModel(std::vector<Node> nodes, std::vector<LineSegment> lines,
                 OperatingLimits limits, double s_base_mva, double v_base_kv,
                 std::string name = "");

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<LineSegment>& lines() const { return lines_; }
    const OperatingLimits& limits() const { return limits_; }
    double s_base_mva() const { return s_base_mva_; }
    double v_base_kv() const { return v_base_kv_; }
    const std::string& name() const { return name_; }

    int node_index(const std::string& id) const; // throws ValidationError if unknown
    int slack_index() const { return slack_index_; }
    int node_count() const { return static_cast<int>(nodes_.size()); }
    int line_count() const { return static_cast<int>(lines_.size()); }

private:
    std::vector<Node> nodes_;
    std::vector<LineSegment> lines_;
    OperatingLimits limits_;
    double s_base_mva_;
    double v_base_kv_;
    std::string name_;
    std::map<std::string, int> index_;
    int slack_index_ = -1;
};

// Tree structure rooted at the slack, produced by validate_radial and
// consumed by the sweep solver and the OPF builder.
struct RadialOrder {
    int slack = -1;
    std::vector<int> parent_node;  // per node index; -1 at the slack
    std::vector<int> parent_line;  // line index of the edge to the parent; -1 at the slack
    std::vector<int> depth;        // hops from the slack
    std::vector<int> bfs_order;    // node indices, slack first, children after parents
    std::vector<std::vector<int>> child_lines; // per node: line indices towards children
};

// Accepts iff the network is a tree rooted at a single slack: line count =
// node count - 1, connected, no cycles. Throws ValidationError naming the
// offending nodes otherwise.
RadialOrder validate_radial(const NetworkModel& network);

// Labels each child subtree of the slack F1, F2, ... (in lexicographic
// order of the subtree root ids). The slack carries no label.
std::map<std::string, std::string> feeder_partition(const NetworkModel& network,
                                                    const RadialOrder& order);

// raw_ohms / (raw_kv^2 / s_base_mva); throws InputError on nonpositive base.
double to_per_unit(double raw_ohms, double raw_kv, double s_base_mva);

} // namespace gridflex
