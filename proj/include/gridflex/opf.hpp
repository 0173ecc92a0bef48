#pragma once

#include <string>
#include <vector>

#include "gridflex/conic.hpp"
#include "gridflex/network.hpp"
#include "gridflex/powerflow.hpp"

namespace gridflex {

struct CostWeights {
    double w_l = 1.0;   // losses
    double w_v = 1.0;   // voltage deviation penalty
    double w_lim = 1.0; // flow deviation penalty
    double w_p = 0.0;   // active scheduling cost
    double w_q = 0.0;   // reactive scheduling cost
};

// Per-node bounds on the flexibility variables, indexed like network nodes
// (slack entries ignored). Zero dispatch must stay feasible:
// p_min <= 0 <= p_max, q_min <= 0 <= q_max.
struct FlexBounds {
    std::vector<double> p_min, p_max, q_min, q_max;

    static FlexBounds zero(int node_count);
    void validate(int node_count) const; // throws ValidationError
};

// Shape of the scheduling cost c_p(p): |p| (curtailment and injection both
// cost) or max(0, p) for sensitivity studies.
enum class SchedulingCostMode { Absolute, PositivePart };

// Variable layout of one OPF instance; -1 marks variables that were fixed
// to zero by equal flex bounds and therefore not emitted.
struct OpfVarIndex {
    int num_vars = 0;
    std::vector<int> v;           // per node
    std::vector<int> l, P, Q;     // per line
    std::vector<int> p, q;        // per node, -1 at slack
    std::vector<int> t_p, t_q;    // scheduling epigraphs, -1 when absent
    std::vector<int> vdev;        // per node, -1 at slack or w_v = 0
    std::vector<int> ldev;        // per line, -1 when w_lim = 0
    std::vector<std::string> labels; // per variable, for dumps

    std::string name(int var) const;
};

struct OpfProblem {
    conic::ConicProgram program;
    OpfVarIndex vars;
    std::vector<double> line_r;   // per line, for the loss breakdown
    // counts kept for diagnostics/tests
    int balance_rows = 0;  // Eq. (2)+(3) rows
    int voltage_rows = 0;  // Eq. (4) rows
    int cone_blocks = 0;
};

// Convex branch-flow OPF with piecewise-linear violation penalties:
//   min  w_l sum r*l + w_v sum Vdev + w_lim sum Ldev + w_p sum c_p + w_q sum c_q
//   s.t. per non-slack node: active and reactive balances (flex generation
//        positive), per line: v_j = v_i - 2(rP + xQ) + (r^2+x^2) l and the
//        relaxation l * v_i >= P^2 + Q^2, penalty epigraphs
//        Vdev >= 0, Vdev >= v - v_max, Vdev >= v_min - v,
//        Ldev >= 0, Ldev >= l - i_max, scheduling epigraphs, flex bounds,
//        slack voltage fixed.
// `demand` is consumption-positive per node (slack entry ignored).
OpfProblem build_problem(const NetworkModel& network, const RadialOrder& order,
                         const std::vector<NodalPQ>& demand, const CostWeights& weights,
                         const FlexBounds& flex,
                         SchedulingCostMode mode = SchedulingCostMode::Absolute);

struct OpfObjectiveTerms {
    double losses = 0.0;      // sum r*l, unweighted
    double vdev = 0.0;        // sum Vdev
    double ldev = 0.0;        // sum Ldev
    double c_p = 0.0;         // sum scheduling epigraph values, active
    double c_q = 0.0;
    double weighted_total = 0.0;
};

struct OpfSolution {
    conic::SolveStatus status = conic::SolveStatus::NumericalFailure;
    int iterations = 0;
    std::vector<double> v;          // per node, pu^2
    std::vector<double> l;          // per line, pu^2
    std::vector<double> flow_p, flow_q; // per line, pu
    std::vector<double> flex_p, flex_q; // per node, generation positive, 0 at slack
    std::vector<double> vdev;       // per node, 0 at slack
    std::vector<double> ldev;       // per line
    OpfObjectiveTerms terms;
    std::vector<double> relax_gap;  // per line: l*v_i - (P^2+Q^2)
    double eq_residual = 0.0;       // max |equality row residual|
    double ineq_violation = 0.0;    // max positive inequality violation
    std::string message;
};

struct OpfTolerances {
    double eq_residual = 1e-6;
    double ineq_violation = 1e-6;
    double tightness = 1e-6;
};

// Solves via the conic module; populates the per-term breakdown and the
// relaxation gaps. Optimal status is only reported when the solution also
// passes the equality/inequality residual tolerances.
OpfSolution solve_opf(const OpfProblem& problem, const conic::SolverConfig& config = {},
                      const OpfTolerances& tolerances = {});

// Reference definition of the scheduling cost terms: c_p = sum |p_i| (or
// positive parts), c_q likewise. The epigraph encoding inside the program
// realizes the same values at any optimum with positive weights.
std::pair<double, double> scheduling_cost(const std::vector<double>& p,
                                          const std::vector<double>& q,
                                          SchedulingCostMode mode = SchedulingCostMode::Absolute);

struct TightnessVerdict {
    bool tight = true;
    std::vector<int> loose_lines; // line indices with gap > tol
    double max_gap = 0.0;
};

// Flags line ij loose when l*v_i - (P^2+Q^2) > tol. Throws on non-optimal
// input.
TightnessVerdict check_relaxation_tightness(const OpfSolution& solution, double tol = 1e-6);

// The dispatched flexibility exactly as solved (generation positive),
// verified to sit within bounds to 1e-8. Throws on non-optimal input.
std::vector<NodalPQ> extract_setpoints(const OpfSolution& solution, const FlexBounds& flex);

// Deterministic diagnostic serialization of the program with named
// variables (the conic dump format).
std::string dump_problem(const OpfProblem& problem);

} // namespace gridflex
