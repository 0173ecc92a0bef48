#pragma once

#include <string>
#include <utility>
#include <vector>

namespace gridflex::conic {

// One sparse constraint row: list of (column, coefficient).
using SparseRow = std::vector<std::pair<int, double>>;

// Rotated second-order relation on designated variables:
//   x[u] * x[w] >= sum_k x[z_k]^2,  x[u] >= 0, x[w] >= 0.
struct ConeBlock {
    int u = -1;
    int w = -1;
    std::vector<int> z;
};

// min c'x  s.t.  A x = b,  G x <= h (row-wise),  cone blocks as above.
// LPs are simply programs with zero cone blocks.
struct ConicProgram {
    int num_vars = 0;
    std::vector<double> c;
    std::vector<SparseRow> eq_rows;
    std::vector<double> eq_rhs;
    std::vector<SparseRow> ineq_rows;
    std::vector<double> ineq_rhs;
    std::vector<ConeBlock> cones;

    int num_eq() const { return static_cast<int>(eq_rows.size()); }
    int num_ineq() const { return static_cast<int>(ineq_rows.size()); }

    // Dimension consistency, index ranges, no variable in two cone blocks.
    // Throws InputError on violation.
    void validate() const;
};

enum class SolveStatus {
    Optimal,
    PrimalInfeasible,
    DualInfeasible, // includes unbounded primal
    IterationLimit,
    NumericalFailure,
};

const char* to_string(SolveStatus status);

// Default tolerances reflect what dense double-precision KKT solves can
// reach reliably: feasibility to 1e-8, complementarity gap to 1e-7. Tighter
// targets are accepted but may end in an honest NumericalFailure when the
// iterates run out of floating-point headroom.
struct SolverConfig {
    double feastol = 1e-8;        // primal/dual feasibility target (relative)
    double abstol = 1e-7;         // absolute complementarity gap target
    double reltol = 1e-7;         // relative complementarity gap target
    int max_iterations = 200;
    double frac_to_boundary = 0.99;
    double static_reg = 1e-11;    // KKT regularization
    int ruiz_iterations = 8;      // equilibration sweeps over (A, G)
    bool verbose = false;
};

struct SolverResult {
    SolveStatus status = SolveStatus::NumericalFailure;
    std::vector<double> x;       // primal
    std::vector<double> y_eq;    // duals of A x = b
    std::vector<double> z_ineq;  // duals of G x <= h, nonnegative
    // Per cone block, (a, b, c...) in the dual cone {4ab >= |c|^2, a,b >= 0};
    // stationarity reads c + A'y + G'z - scatter(cone_duals) = 0.
    std::vector<std::vector<double>> cone_duals;
    int iterations = 0;
    double primal_residual = 0.0; // unscaled, see residuals()
    double dual_residual = 0.0;
    double gap = 0.0;
    std::string message;         // context for failures / certificates
};

// Primal-dual interior-point method on the homogeneous self-dual embedding
// with Nesterov-Todd scaling and Mehrotra predictor-corrector steps.
// Deterministic: identical program + config give bit-identical results.
SolverResult solve(const ConicProgram& program, const SolverConfig& config = {});

struct ResidualReport {
    double primal_res = 0.0; // max of |Ax-b|, (Gx-h)+, cone violations
    double dual_res = 0.0;   // stationarity + dual cone membership
    double gap = 0.0;        // |c'x + b'y + h'z|
};

// Pure diagnostic, usable against foreign solutions.
ResidualReport residuals(const ConicProgram& program, const std::vector<double>& x,
                         const std::vector<double>& y_eq, const std::vector<double>& z_ineq,
                         const std::vector<std::vector<double>>& cone_duals);

// Diagnostic dump/load for replaying failures. Deterministic ordering.
std::string dump_program(const ConicProgram& program,
                         const std::vector<std::string>& var_names = {});
ConicProgram load_program(const std::string& text);

} // namespace gridflex::conic
