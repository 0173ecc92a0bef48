#pragma once

#include <vector>

#include "gridflex/network.hpp"

namespace gridflex {

// Per-node (p, q) pair in per-unit. Used both for demand (consumption
// positive) and for flexibility set-points (generation positive); the
// effective demand seen by a solver is demand - setpoint.
struct NodalPQ {
    double p = 0.0;
    double q = 0.0;
};

struct PriceSet {
    double loss_price_per_kwh = 0.0;
    double v_violation_price_per_pu2h = 0.0;
    double flow_violation_price_per_pu2h = 0.0;
};

struct PowerFlowResult {
    std::vector<double> v_pu2;    // per node index, squared voltage magnitude
    std::vector<double> flow_p;   // per line index, sending-end P (pu)
    std::vector<double> flow_q;   // per line index, sending-end Q (pu)
    std::vector<double> l_pu2;    // per line index, |I|^2 (pu^2)
    double losses_pu = 0.0;       // sum r_ij * l_ij
    double slack_p = 0.0;         // import at the slack, pu
    double slack_q = 0.0;
    bool converged = false;
    bool voltage_collapse = false; // some v dropped to <= 0 during iteration
    int iterations = 0;
    double last_residual = 0.0;   // max |dv| of the final iteration, pu^2
};

struct SweepOptions {
    double tol_v_pu2 = 1e-8;
    int max_iterations = 100;
};

// Exact radial power flow by backward/forward sweep on the branch-flow
// variables (v, l, P, Q). Backward pass accumulates sending-end flows with
// r*l / x*l loss terms, forward pass updates v_j = v_i - 2(rP + xQ) +
// (r^2+x^2) l; iterates to a fixed point. `demand` must cover every
// non-slack node (consumption positive); `setpoints`, when given, are
// subtracted from demand (generation positive).
PowerFlowResult solve_sweep(const NetworkModel& network, const RadialOrder& order,
                            const std::vector<NodalPQ>& demand,
                            const std::vector<NodalPQ>* setpoints = nullptr,
                            const SweepOptions& options = {});

struct RealizedCosts {
    double losses_kwh = 0.0;
    double violation_cost = 0.0;
};

// losses_kwh = losses_pu * s_base_mva * 1000 * dt_hours.
// violation_cost = price_v * sum_i max(0, v_i - v_max, v_min - v_i) * dt
//                + price_l * sum_ij max(0, l_ij - i_max) * dt.
// Throws NumericalError on an unconverged result.
RealizedCosts realized_costs(const PowerFlowResult& result, const NetworkModel& network,
                             const PriceSet& prices, double dt_hours);

} // namespace gridflex
