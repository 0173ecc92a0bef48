#include "gridflex/opf.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "gridflex/errors.hpp"

namespace gridflex {

FlexBounds FlexBounds::zero(int node_count) {
    FlexBounds fb;
    fb.p_min.assign(node_count, 0.0);
    fb.p_max.assign(node_count, 0.0);
    fb.q_min.assign(node_count, 0.0);
    fb.q_max.assign(node_count, 0.0);
    return fb;
}

void FlexBounds::validate(int node_count) const {
    const size_t n = static_cast<size_t>(node_count);
    if (p_min.size() != n || p_max.size() != n || q_min.size() != n || q_max.size() != n)
        throw ValidationError("flex bounds must cover every node");
    for (size_t i = 0; i < n; ++i) {
        if (!(p_min[i] <= 0.0 && 0.0 <= p_max[i]) || !(q_min[i] <= 0.0 && 0.0 <= q_max[i]))
            throw ValidationError("flex bounds must admit zero dispatch (p_min <= 0 <= p_max)");
        if (!std::isfinite(p_min[i]) || !std::isfinite(p_max[i]) || !std::isfinite(q_min[i]) ||
            !std::isfinite(q_max[i]))
            throw ValidationError("flex bounds must be finite");
    }
}

std::string OpfVarIndex::name(int var) const {
    if (var < 0 || var >= static_cast<int>(labels.size())) return "?";
    return labels[var];
}

OpfProblem build_problem(const NetworkModel& net, const RadialOrder& order,
                         const std::vector<NodalPQ>& demand, const CostWeights& weights,
                         const FlexBounds& flex, SchedulingCostMode mode) {
    const int n = net.node_count();
    const int m = net.line_count();
    if (weights.w_l < 0 || weights.w_v < 0 || weights.w_lim < 0 || weights.w_p < 0 ||
        weights.w_q < 0)
        throw ValidationError("objective weights must be nonnegative");
    if (static_cast<int>(demand.size()) != n)
        throw ValidationError("injections must be given for every node");
    for (int j = 0; j < n; ++j) {
        if (j == order.slack) continue;
        if (!std::isfinite(demand[j].p) || !std::isfinite(demand[j].q))
            throw ValidationError("missing or non-finite injection at node " +
                                  net.nodes()[j].id);
    }
    flex.validate(n);

    OpfProblem prob;
    OpfVarIndex& ix = prob.vars;
    ix.v.assign(n, -1);
    ix.p.assign(n, -1);
    ix.q.assign(n, -1);
    ix.t_p.assign(n, -1);
    ix.t_q.assign(n, -1);
    ix.vdev.assign(n, -1);
    ix.l.assign(m, -1);
    ix.P.assign(m, -1);
    ix.Q.assign(m, -1);
    ix.ldev.assign(m, -1);
    for (int e = 0; e < m; ++e) prob.line_r.push_back(net.lines()[e].r_pu);

    auto add_var = [&](const std::string& label) {
        ix.labels.push_back(label);
        return ix.num_vars++;
    };
    auto node_id = [&](int j) { return net.nodes()[j].id; };
    auto line_id = [&](int e) { return net.lines()[e].from + "-" + net.lines()[e].to; };

    for (int j = 0; j < n; ++j) ix.v[j] = add_var("v[" + node_id(j) + "]");
    for (int e = 0; e < m; ++e) ix.l[e] = add_var("l[" + line_id(e) + "]");
    for (int e = 0; e < m; ++e) ix.P[e] = add_var("P[" + line_id(e) + "]");
    for (int e = 0; e < m; ++e) ix.Q[e] = add_var("Q[" + line_id(e) + "]");
    for (int j = 0; j < n; ++j) {
        if (j == order.slack) continue;
        ix.p[j] = add_var("p[" + node_id(j) + "]");
        ix.q[j] = add_var("q[" + node_id(j) + "]");
        // scheduling epigraphs only exist where the dispatch is not pinched
        // to zero and the weight actually prices it
        if (flex.p_min[j] < flex.p_max[j] && weights.w_p > 0)
            ix.t_p[j] = add_var("t_p[" + node_id(j) + "]");
        if (flex.q_min[j] < flex.q_max[j] && weights.w_q > 0)
            ix.t_q[j] = add_var("t_q[" + node_id(j) + "]");
    }
    if (weights.w_v > 0)
        for (int j = 0; j < n; ++j) {
            if (j == order.slack) continue;
            ix.vdev[j] = add_var("Vdev[" + node_id(j) + "]");
        }
    if (weights.w_lim > 0)
        for (int e = 0; e < m; ++e) ix.ldev[e] = add_var("Ldev[" + line_id(e) + "]");

    conic::ConicProgram& cp = prob.program;
    cp.num_vars = ix.num_vars;
    cp.c.assign(ix.num_vars, 0.0);

    // objective per Eq. (1)
    for (int e = 0; e < m; ++e) cp.c[ix.l[e]] = weights.w_l * net.lines()[e].r_pu;
    for (int j = 0; j < n; ++j) {
        if (ix.vdev[j] >= 0) cp.c[ix.vdev[j]] = weights.w_v;
        if (ix.t_p[j] >= 0) cp.c[ix.t_p[j]] = weights.w_p;
        if (ix.t_q[j] >= 0) cp.c[ix.t_q[j]] = weights.w_q;
    }
    for (int e = 0; e < m; ++e)
        if (ix.ldev[e] >= 0) cp.c[ix.ldev[e]] = weights.w_lim;

    auto add_eq = [&](conic::SparseRow row, double rhs) {
        cp.eq_rows.push_back(std::move(row));
        cp.eq_rhs.push_back(rhs);
    };
    auto add_ineq = [&](conic::SparseRow row, double rhs) {
        cp.ineq_rows.push_back(std::move(row));
        cp.ineq_rhs.push_back(rhs);
    };

    // slack voltage fixed
    add_eq({{ix.v[order.slack], 1.0}}, net.limits().v_slack_pu2);

    // nodal balances, Eqs. (2)-(3): power arriving over the parent line net
    // of its loss, plus local flexibility (generation positive), covers the
    // local consumption and the child flows
    for (int j = 0; j < n; ++j) {
        if (j == order.slack) continue;
        const int e = order.parent_line[j];
        const LineSegment& pl = net.lines()[e];
        conic::SparseRow rp = {{ix.P[e], 1.0}, {ix.l[e], -pl.r_pu}, {ix.p[j], 1.0}};
        conic::SparseRow rq = {{ix.Q[e], 1.0}, {ix.l[e], -pl.x_pu}, {ix.q[j], 1.0}};
        for (int f : order.child_lines[j]) {
            rp.push_back({ix.P[f], -1.0});
            rq.push_back({ix.Q[f], -1.0});
        }
        add_eq(std::move(rp), demand[j].p);
        add_eq(std::move(rq), demand[j].q);
        prob.balance_rows += 2;
    }

    // voltage drop, Eq. (4): v_j = v_i - 2(rP + xQ) + (r^2 + x^2) l, plus the
    // relaxed branch-current relation l * v_i >= P^2 + Q^2 per line. A cone
    // block may not share variables with another, so nodes feeding several
    // lines get per-line copies of their sending voltage, tied by equality.
    std::vector<bool> v_in_cone(n, false);
    for (int e = 0; e < m; ++e) {
        const LineSegment& line = net.lines()[e];
        const int a = net.node_index(line.from), b = net.node_index(line.to);
        const int j = (order.parent_line[b] == e) ? b : a; // child end
        const int i = (j == b) ? a : b;                    // sending end
        add_eq({{ix.v[j], 1.0},
                {ix.v[i], -1.0},
                {ix.P[e], 2.0 * line.r_pu},
                {ix.Q[e], 2.0 * line.x_pu},
                {ix.l[e], -(line.r_pu * line.r_pu + line.x_pu * line.x_pu)}},
               0.0);
        prob.voltage_rows += 1;
        int v_send = ix.v[i];
        if (v_in_cone[i]) {
            v_send = add_var("vs[" + line_id(e) + "]");
            cp.c.push_back(0.0);
            add_eq({{v_send, 1.0}, {ix.v[i], -1.0}}, 0.0);
        } else {
            v_in_cone[i] = true;
        }
        cp.cones.push_back({ix.l[e], v_send, {ix.P[e], ix.Q[e]}});
        prob.cone_blocks += 1;
    }
    cp.num_vars = ix.num_vars;

    // flexibility: box rows, or an equality when the bounds pinch to zero
    for (int j = 0; j < n; ++j) {
        if (j == order.slack) continue;
        if (flex.p_min[j] < flex.p_max[j]) {
            add_ineq({{ix.p[j], 1.0}}, flex.p_max[j]);
            add_ineq({{ix.p[j], -1.0}}, -flex.p_min[j]);
        } else {
            add_eq({{ix.p[j], 1.0}}, flex.p_min[j]);
        }
        if (flex.q_min[j] < flex.q_max[j]) {
            add_ineq({{ix.q[j], 1.0}}, flex.q_max[j]);
            add_ineq({{ix.q[j], -1.0}}, -flex.q_min[j]);
        } else {
            add_eq({{ix.q[j], 1.0}}, flex.q_min[j]);
        }
    }

    // piecewise-linear penalties as epigraphs:
    // Vdev >= 0, Vdev >= v - v_max, Vdev >= v_min - v; Ldev >= 0,
    // Ldev >= l - i_max
    for (int j = 0; j < n; ++j) {
        if (ix.vdev[j] < 0) continue;
        add_ineq({{ix.vdev[j], -1.0}}, 0.0);
        add_ineq({{ix.v[j], 1.0}, {ix.vdev[j], -1.0}}, net.limits().v_max_pu2);
        add_ineq({{ix.v[j], -1.0}, {ix.vdev[j], -1.0}}, -net.limits().v_min_pu2);
    }
    for (int e = 0; e < m; ++e) {
        if (ix.ldev[e] < 0) continue;
        add_ineq({{ix.ldev[e], -1.0}}, 0.0);
        add_ineq({{ix.l[e], 1.0}, {ix.ldev[e], -1.0}}, net.lines()[e].i_max_pu2);
    }

    // scheduling cost epigraphs: t >= p, t >= -p (absolute) or t >= p, t >= 0
    for (int j = 0; j < n; ++j) {
        if (ix.t_p[j] >= 0) {
            add_ineq({{ix.p[j], 1.0}, {ix.t_p[j], -1.0}}, 0.0);
            if (mode == SchedulingCostMode::Absolute)
                add_ineq({{ix.p[j], -1.0}, {ix.t_p[j], -1.0}}, 0.0);
            else
                add_ineq({{ix.t_p[j], -1.0}}, 0.0);
        }
        if (ix.t_q[j] >= 0) {
            add_ineq({{ix.q[j], 1.0}, {ix.t_q[j], -1.0}}, 0.0);
            if (mode == SchedulingCostMode::Absolute)
                add_ineq({{ix.q[j], -1.0}, {ix.t_q[j], -1.0}}, 0.0);
            else
                add_ineq({{ix.t_q[j], -1.0}}, 0.0);
        }
    }

    cp.validate();
    return prob;
}

OpfSolution solve_opf(const OpfProblem& prob, const conic::SolverConfig& config,
                      const OpfTolerances& tol) {
    const OpfVarIndex& ix = prob.vars;
    const int n = static_cast<int>(ix.v.size());
    const int m = static_cast<int>(ix.l.size());

    conic::SolverResult sr = conic::solve(prob.program, config);

    OpfSolution sol;
    sol.status = sr.status;
    sol.iterations = sr.iterations;
    sol.message = sr.message;
    if (sr.status != conic::SolveStatus::Optimal) return sol;

    const std::vector<double>& x = sr.x;
    sol.v.resize(n);
    sol.flex_p.assign(n, 0.0);
    sol.flex_q.assign(n, 0.0);
    sol.vdev.assign(n, 0.0);
    sol.l.resize(m);
    sol.flow_p.resize(m);
    sol.flow_q.resize(m);
    sol.ldev.assign(m, 0.0);
    sol.relax_gap.resize(m);

    for (int j = 0; j < n; ++j) {
        sol.v[j] = x[ix.v[j]];
        if (ix.p[j] >= 0) sol.flex_p[j] = x[ix.p[j]];
        if (ix.q[j] >= 0) sol.flex_q[j] = x[ix.q[j]];
        if (ix.vdev[j] >= 0) sol.vdev[j] = x[ix.vdev[j]];
    }
    for (int e = 0; e < m; ++e) {
        sol.l[e] = x[ix.l[e]];
        sol.flow_p[e] = x[ix.P[e]];
        sol.flow_q[e] = x[ix.Q[e]];
        if (ix.ldev[e] >= 0) sol.ldev[e] = x[ix.ldev[e]];
    }
    for (int e = 0; e < m; ++e) {
        const conic::ConeBlock& blk = prob.program.cones[e];
        double zz = 0.0;
        for (int zi : blk.z) zz += x[zi] * x[zi];
        sol.relax_gap[e] = x[blk.u] * x[blk.w] - zz;
    }

    OpfObjectiveTerms& t = sol.terms;
    for (int e = 0; e < m; ++e) t.losses += prob.line_r[e] * sol.l[e];
    for (int j = 0; j < n; ++j) {
        t.vdev += sol.vdev[j];
        if (ix.t_p[j] >= 0) t.c_p += x[ix.t_p[j]];
        if (ix.t_q[j] >= 0) t.c_q += x[ix.t_q[j]];
    }
    for (int e = 0; e < m; ++e) t.ldev += sol.ldev[e];
    for (int j = 0; j < prob.program.num_vars; ++j)
        t.weighted_total += prob.program.c[j] * x[j];

    // contract checks: residuals and relaxation gap sign
    for (size_t i = 0; i < prob.program.eq_rows.size(); ++i) {
        double r = -prob.program.eq_rhs[i];
        for (auto [j, a] : prob.program.eq_rows[i]) r += a * x[j];
        sol.eq_residual = std::max(sol.eq_residual, std::abs(r));
    }
    for (size_t i = 0; i < prob.program.ineq_rows.size(); ++i) {
        double r = -prob.program.ineq_rhs[i];
        for (auto [j, a] : prob.program.ineq_rows[i]) r += a * x[j];
        sol.ineq_violation = std::max(sol.ineq_violation, r);
    }
    double min_gap = 0.0;
    for (double g : sol.relax_gap) min_gap = std::min(min_gap, g);
    if (sol.eq_residual > tol.eq_residual || sol.ineq_violation > tol.ineq_violation ||
        min_gap < -tol.eq_residual) {
        sol.status = conic::SolveStatus::NumericalFailure;
        std::ostringstream msg;
        msg << "solver reported optimal but the solution violates the OPF tolerances: "
            << "eq_residual " << sol.eq_residual << ", ineq_violation " << sol.ineq_violation
            << ", min cone gap " << min_gap;
        sol.message = msg.str();
    }
    return sol;
}

std::pair<double, double> scheduling_cost(const std::vector<double>& p,
                                          const std::vector<double>& q,
                                          SchedulingCostMode mode) {
    double cp = 0.0, cq = 0.0;
    for (double v : p)
        cp += mode == SchedulingCostMode::Absolute ? std::abs(v) : std::max(0.0, v);
    for (double v : q)
        cq += mode == SchedulingCostMode::Absolute ? std::abs(v) : std::max(0.0, v);
    return {cp, cq};
}

TightnessVerdict check_relaxation_tightness(const OpfSolution& sol, double tol) {
    if (sol.status != conic::SolveStatus::Optimal)
        throw NumericalError("check_relaxation_tightness requires an optimal solution");
    TightnessVerdict verdict;
    for (size_t e = 0; e < sol.relax_gap.size(); ++e) {
        verdict.max_gap = std::max(verdict.max_gap, sol.relax_gap[e]);
        if (sol.relax_gap[e] > tol) {
            verdict.tight = false;
            verdict.loose_lines.push_back(static_cast<int>(e));
        }
    }
    return verdict;
}

std::vector<NodalPQ> extract_setpoints(const OpfSolution& sol, const FlexBounds& flex) {
    if (sol.status != conic::SolveStatus::Optimal)
        throw NumericalError("extract_setpoints requires an optimal solution");
    const int n = static_cast<int>(sol.flex_p.size());
    flex.validate(n);
    std::vector<NodalPQ> sp(n);
    for (int j = 0; j < n; ++j) {
        const double p = sol.flex_p[j], q = sol.flex_q[j];
        if (p < flex.p_min[j] - 1e-8 || p > flex.p_max[j] + 1e-8 || q < flex.q_min[j] - 1e-8 ||
            q > flex.q_max[j] + 1e-8)
            throw NumericalError("set-point outside flex bounds beyond 1e-8 at node index " +
                                 std::to_string(j));
        sp[j] = {p, q};
    }
    return sp;
}

std::string dump_problem(const OpfProblem& prob) {
    return conic::dump_program(prob.program, prob.vars.labels);
}

} // namespace gridflex
