#include "gridflex/powerflow.hpp"

#include <algorithm>
#include <cmath>

#include "gridflex/errors.hpp"

namespace gridflex {

PowerFlowResult solve_sweep(const NetworkModel& network, const RadialOrder& order,
                            const std::vector<NodalPQ>& demand,
                            const std::vector<NodalPQ>* setpoints,
                            const SweepOptions& options) {
    const int n = network.node_count();
    const int m = network.line_count();
    if (static_cast<int>(demand.size()) != n)
        throw ValidationError("solve_sweep: demand must be given for every node");
    if (setpoints && static_cast<int>(setpoints->size()) != n)
        throw ValidationError("solve_sweep: setpoints must be given for every node");

    // effective consumption; flexibility set-points are generation-positive
    std::vector<double> dp(n), dq(n);
    for (int i = 0; i < n; ++i) {
        dp[i] = demand[i].p - (setpoints ? (*setpoints)[i].p : 0.0);
        dq[i] = demand[i].q - (setpoints ? (*setpoints)[i].q : 0.0);
    }

    PowerFlowResult res;
    res.v_pu2.assign(n, network.limits().v_slack_pu2);
    res.flow_p.assign(m, 0.0);
    res.flow_q.assign(m, 0.0);
    res.l_pu2.assign(m, 0.0);

    // node indices deepest-first for the backward pass
    std::vector<int> reverse(order.bfs_order.rbegin(), order.bfs_order.rend());

    double residual = 0.0;
    for (int it = 1; it <= options.max_iterations; ++it) {
        // backward: sending-end flows with the line's own loss term r*l, x*l
        // (l from the previous iterate)
        for (int j : reverse) {
            if (j == order.slack) continue;
            int e = order.parent_line[j];
            double p = dp[j], q = dq[j];
            for (int f : order.child_lines[j]) {
                p += res.flow_p[f];
                q += res.flow_q[f];
            }
            const LineSegment& line = network.lines()[e];
            res.flow_p[e] = p + line.r_pu * res.l_pu2[e];
            res.flow_q[e] = q + line.x_pu * res.l_pu2[e];
        }

        // forward: voltage drop and squared current update
        residual = 0.0;
        bool collapsed = false;
        for (int j : order.bfs_order) {
            if (j == order.slack) continue;
            int e = order.parent_line[j];
            int i = order.parent_node[j];
            const LineSegment& line = network.lines()[e];
            double l = (res.flow_p[e] * res.flow_p[e] + res.flow_q[e] * res.flow_q[e]) /
                       res.v_pu2[i];
            double v = res.v_pu2[i] - 2.0 * (line.r_pu * res.flow_p[e] + line.x_pu * res.flow_q[e]) +
                       (line.r_pu * line.r_pu + line.x_pu * line.x_pu) * l;
            residual = std::max(residual, std::abs(v - res.v_pu2[j]));
            res.l_pu2[e] = l;
            res.v_pu2[j] = v;
            if (!(v > 0.0)) collapsed = true;
        }

        res.iterations = it;
        res.last_residual = residual;
        if (collapsed) {
            res.voltage_collapse = true;
            res.converged = false;
            return res;
        }
        if (residual < options.tol_v_pu2) {
            res.converged = true;
            break;
        }
    }

    res.losses_pu = 0.0;
    for (int e = 0; e < m; ++e) res.losses_pu += network.lines()[e].r_pu * res.l_pu2[e];

    // slack import: flows on the slack's own lines
    res.slack_p = dp[order.slack];
    res.slack_q = dq[order.slack];
    for (int f : order.child_lines[order.slack]) {
        res.slack_p += res.flow_p[f];
        res.slack_q += res.flow_q[f];
    }
    return res;
}

RealizedCosts realized_costs(const PowerFlowResult& result, const NetworkModel& network,
                             const PriceSet& prices, double dt_hours) {
    if (!result.converged)
        throw NumericalError("realized_costs: power flow did not converge (residual " +
                             std::to_string(result.last_residual) + ")");

    RealizedCosts costs;
    costs.losses_kwh = result.losses_pu * network.s_base_mva() * 1000.0 * dt_hours;

    const OperatingLimits& lim = network.limits();
    double v_dev = 0.0;
    for (double v : result.v_pu2)
        v_dev += std::max({0.0, v - lim.v_max_pu2, lim.v_min_pu2 - v});
    double l_dev = 0.0;
    for (int e = 0; e < network.line_count(); ++e)
        l_dev += std::max(0.0, result.l_pu2[e] - network.lines()[e].i_max_pu2);

    costs.violation_cost = (prices.v_violation_price_per_pu2h * v_dev +
                            prices.flow_violation_price_per_pu2h * l_dev) *
                           dt_hours;
    return costs;
}

} // namespace gridflex
