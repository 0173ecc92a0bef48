#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstring>
#include <vector>

#include "gridflex/conic.hpp"
#include "gridflex/errors.hpp"
#include "gridflex/rng.hpp"

using namespace gridflex;
using conic::ConicProgram;
using conic::SolveStatus;

namespace {

// Brute-force LP oracle: enumerate all basic points of G x <= h and keep the
// best feasible one. Independent of the interior-point path it checks.
struct VertexOptimum {
    bool found = false;
    double objective = 0.0;
    std::vector<double> x;
};

VertexOptimum best_vertex(const ConicProgram& lp) {
    const int n = lp.num_vars;
    const int m = lp.num_ineq();
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(m, n);
    Eigen::VectorXd h(m);
    for (int i = 0; i < m; ++i) {
        for (auto [j, a] : lp.ineq_rows[i]) G(i, j) = a;
        h[i] = lp.ineq_rhs[i];
    }
    Eigen::VectorXd c(n);
    for (int j = 0; j < n; ++j) c[j] = lp.c[j];

    VertexOptimum best;
    std::vector<int> pick(n);
    // iterate over all n-subsets of rows
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    while (true) {
        Eigen::MatrixXd B(n, n);
        Eigen::VectorXd rhs(n);
        for (int r = 0; r < n; ++r) {
            B.row(r) = G.row(idx[r]);
            rhs[r] = h[idx[r]];
        }
        Eigen::FullPivLU<Eigen::MatrixXd> lu(B);
        if (lu.isInvertible()) {
            Eigen::VectorXd x = lu.solve(rhs);
            if (((G * x - h).array() <= 1e-9).all()) {
                double obj = c.dot(x);
                if (!best.found || obj < best.objective) {
                    best.found = true;
                    best.objective = obj;
                    best.x.assign(x.data(), x.data() + n);
                }
            }
        }
        // next combination
        int k = n - 1;
        while (k >= 0 && idx[k] == m - n + k) --k;
        if (k < 0) break;
        ++idx[k];
        for (int r = k + 1; r < n; ++r) idx[r] = idx[r - 1] + 1;
    }
    return best;
}

ConicProgram random_bounded_lp(Rng& rng) {
    ConicProgram lp;
    const int n = 2 + static_cast<int>(rng.index(3)); // 2..4 vars
    lp.num_vars = n;
    lp.c.resize(n);
    for (double& ci : lp.c) ci = rng.uniform(-1.0, 1.0);
    // box rows keep the feasible set bounded with 0 in the interior
    for (int j = 0; j < n; ++j) {
        lp.ineq_rows.push_back({{j, 1.0}});
        lp.ineq_rhs.push_back(rng.uniform(0.2, 2.0));
        lp.ineq_rows.push_back({{j, -1.0}});
        lp.ineq_rhs.push_back(rng.uniform(0.2, 2.0));
    }
    const int extra = static_cast<int>(rng.index(static_cast<std::uint64_t>(10 - 2 * n) + 1));
    for (int r = 0; r < extra; ++r) {
        conic::SparseRow row;
        for (int j = 0; j < n; ++j) row.push_back({j, rng.uniform(-1.0, 1.0)});
        lp.ineq_rows.push_back(row);
        lp.ineq_rhs.push_back(rng.uniform(0.05, 1.0));
    }
    return lp;
}

} // namespace

TEST_SUITE("solver") {

TEST_CASE("one-variable LP: min x s.t. x >= 1") {
    ConicProgram lp;
    lp.num_vars = 1;
    lp.c = {1.0};
    lp.ineq_rows = {{{0, -1.0}}};
    lp.ineq_rhs = {-1.0};
    auto res = conic::solve(lp);
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.x[0] == doctest::Approx(1.0).epsilon(1e-8));
    // exact analytic optimum has zero residuals
    auto rep = conic::residuals(lp, {1.0}, {}, {1.0}, {});
    CHECK(rep.primal_res == 0.0);
    CHECK(rep.dual_res == 0.0);
    CHECK(rep.gap == 0.0);
}

TEST_CASE("perturbed primal shows up in the residual report") {
    ConicProgram lp;
    lp.num_vars = 1;
    lp.c = {1.0};
    lp.ineq_rows = {{{0, -1.0}}};
    lp.ineq_rhs = {-1.0};
    auto rep = conic::residuals(lp, {1.0 - 0.01}, {}, {1.0}, {});
    CHECK(rep.primal_res >= 0.01);
}

TEST_CASE("rotated cone boundary: min w s.t. u = 1, z = 2") {
    ConicProgram prog;
    prog.num_vars = 3; // u, w, z
    prog.c = {0.0, 1.0, 0.0};
    prog.eq_rows = {{{0, 1.0}}, {{2, 1.0}}};
    prog.eq_rhs = {1.0, 2.0};
    prog.cones = {{0, 1, {2}}};
    auto res = conic::solve(prog);
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.x[1] == doctest::Approx(4.0).epsilon(1e-7));
}

TEST_CASE("3-variable LP against the vertex-enumeration oracle") {
    ConicProgram lp;
    lp.num_vars = 3;
    lp.c = {-1.0, -2.0, 0.5};
    lp.ineq_rows = {
        {{0, 1.0}, {1, 1.0}, {2, 1.0}},
        {{0, -1.0}},
        {{1, -1.0}},
        {{2, -1.0}},
    };
    lp.ineq_rhs = {1.0, 0.0, 0.0, 0.0};
    auto oracle = best_vertex(lp);
    REQUIRE(oracle.found);
    auto res = conic::solve(lp);
    REQUIRE(res.status == SolveStatus::Optimal);
    double obj = 0.0;
    for (int j = 0; j < 3; ++j) obj += lp.c[j] * res.x[j];
    CHECK(obj == doctest::Approx(oracle.objective).epsilon(1e-7));
}

TEST_CASE("200 random bounded LPs match brute-force vertex enumeration") {
    Rng rng(20240611);
    for (int trial = 0; trial < 200; ++trial) {
        ConicProgram lp = random_bounded_lp(rng);
        auto oracle = best_vertex(lp);
        REQUIRE(oracle.found);
        auto res = conic::solve(lp);
        REQUIRE_MESSAGE(res.status == SolveStatus::Optimal, "trial ", trial, ": ", res.message);
        double obj = 0.0;
        for (int j = 0; j < lp.num_vars; ++j) obj += lp.c[j] * res.x[j];
        CHECK_MESSAGE(std::abs(obj - oracle.objective) <=
                          1e-6 * std::max(1.0, std::abs(oracle.objective)),
                      "trial ", trial, ": ipm ", obj, " vs oracle ", oracle.objective);
    }
}

TEST_CASE("equality-constrained LP") {
    // min x0 + x1  s.t.  x0 + x1 + x2 = 1, x >= 0  ->  optimum 0
    ConicProgram lp;
    lp.num_vars = 3;
    lp.c = {1.0, 1.0, 0.0};
    lp.eq_rows = {{{0, 1.0}, {1, 1.0}, {2, 1.0}}};
    lp.eq_rhs = {1.0};
    for (int j = 0; j < 3; ++j) {
        lp.ineq_rows.push_back({{j, -1.0}});
        lp.ineq_rhs.push_back(0.0);
    }
    auto res = conic::solve(lp);
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(std::abs(res.x[0]) < 1e-7);
    CHECK(std::abs(res.x[1]) < 1e-7);
    CHECK(res.x[2] == doctest::Approx(1.0).epsilon(1e-7));
}

TEST_CASE("determinism: identical program gives bit-identical results") {
    Rng rng(7);
    ConicProgram lp = random_bounded_lp(rng);
    auto r1 = conic::solve(lp);
    auto r2 = conic::solve(lp);
    REQUIRE(r1.status == SolveStatus::Optimal);
    CHECK(r1.iterations == r2.iterations);
    REQUIRE(r1.x.size() == r2.x.size());
    CHECK(std::memcmp(r1.x.data(), r2.x.data(), r1.x.size() * sizeof(double)) == 0);
    CHECK(std::memcmp(r1.z_ineq.data(), r2.z_ineq.data(), r1.z_ineq.size() * sizeof(double)) ==
          0);
}

TEST_CASE("scaling robustness: 1000x objective") {
    Rng rng(99);
    ConicProgram lp = random_bounded_lp(rng);
    auto base = conic::solve(lp);
    REQUIRE(base.status == SolveStatus::Optimal);
    ConicProgram scaled = lp;
    for (double& ci : scaled.c) ci *= 1000.0;
    auto res = conic::solve(scaled);
    REQUIRE(res.status == SolveStatus::Optimal);
    double obj_base = 0.0, obj_scaled = 0.0;
    for (int j = 0; j < lp.num_vars; ++j) {
        obj_base += lp.c[j] * base.x[j];
        obj_scaled += scaled.c[j] * res.x[j];
    }
    CHECK(std::abs(obj_scaled - 1000.0 * obj_base) <=
          1e-9 * std::max(1.0, std::abs(1000.0 * obj_base)));
    for (int j = 0; j < lp.num_vars; ++j)
        CHECK(std::abs(res.x[j] - base.x[j]) < 1e-6);
}

TEST_CASE("cone feasibility at reported optima") {
    // minimize losses-like objective over a small cone program
    ConicProgram prog;
    prog.num_vars = 4; // u, w, z0, z1
    prog.c = {1.0, 0.0, 0.0, 0.0};
    prog.eq_rows = {{{1, 1.0}}, {{2, 1.0}}, {{3, 1.0}}};
    prog.eq_rhs = {1.5, 0.3, -0.4};
    prog.cones = {{0, 1, {2, 3}}};
    auto res = conic::solve(prog);
    REQUIRE(res.status == SolveStatus::Optimal);
    const double uw = res.x[0] * res.x[1];
    const double zz = res.x[2] * res.x[2] + res.x[3] * res.x[3];
    CHECK(uw - zz >= -1e-8);
    CHECK(res.x[0] >= -1e-10);
    // optimum sits on the boundary: u = |z|^2 / w
    CHECK(res.x[0] == doctest::Approx(0.25 / 1.5).epsilon(1e-6));
}

TEST_CASE("primal infeasible LP is certified") {
    // x <= -1 and x >= 1
    ConicProgram lp;
    lp.num_vars = 1;
    lp.c = {0.0};
    lp.ineq_rows = {{{0, 1.0}}, {{0, -1.0}}};
    lp.ineq_rhs = {-1.0, -1.0};
    auto res = conic::solve(lp);
    CHECK(res.status == SolveStatus::PrimalInfeasible);
    // certificate: z >= 0 with h'z < 0 and G'z = 0
    double hz = 0.0, gz = 0.0;
    for (int i = 0; i < 2; ++i) {
        hz += lp.ineq_rhs[i] * res.z_ineq[i];
        gz += lp.ineq_rows[i][0].second * res.z_ineq[i];
    }
    CHECK(hz < 0.0);
    CHECK(std::abs(gz) < 1e-6);
}

TEST_CASE("unbounded LP reported as dual infeasible") {
    ConicProgram lp;
    lp.num_vars = 1;
    lp.c = {1.0};
    lp.ineq_rows = {{{0, 1.0}}};
    lp.ineq_rhs = {0.0};
    auto res = conic::solve(lp);
    CHECK(res.status == SolveStatus::DualInfeasible);
}

TEST_CASE("iteration cap reports residuals instead of claiming optimal") {
    Rng rng(3);
    ConicProgram lp = random_bounded_lp(rng);
    conic::SolverConfig cfg;
    cfg.max_iterations = 1;
    auto res = conic::solve(lp, cfg);
    CHECK(res.status == SolveStatus::IterationLimit);
    CHECK(res.message.find("iteration cap") != std::string::npos);
}

TEST_CASE("badly scaled LP still solves to tolerance") {
    ConicProgram lp;
    lp.num_vars = 2;
    lp.c = {1e6, -1e-4};
    lp.ineq_rows = {{{0, 1e5}}, {{0, -1e5}}, {{1, 1e-3}}, {{1, -1e-3}}};
    lp.ineq_rhs = {1e3, 1e3, 1.0, 1.0};
    conic::SolverConfig cfg;
    cfg.abstol = cfg.reltol = 1e-9; // x1's reduced cost is ~1e-4: position ~ gap/1e-4
    auto res = conic::solve(lp, cfg);
    REQUIRE(res.status == SolveStatus::Optimal);
    CHECK(res.x[0] == doctest::Approx(-0.01).epsilon(1e-6));
    CHECK(res.x[1] == doctest::Approx(1000.0).epsilon(1e-5));
}

TEST_CASE("program dump/load round-trip") {
    Rng rng(11);
    ConicProgram lp = random_bounded_lp(rng);
    lp.cones.push_back({0, 1, {}});
    // make room for the cone variables not to clash with the box rows
    std::string dumped = conic::dump_program(lp, {});
    ConicProgram back = conic::load_program(dumped);
    CHECK(back.num_vars == lp.num_vars);
    CHECK(back.c == lp.c);
    CHECK(back.ineq_rhs == lp.ineq_rhs);
    REQUIRE(back.cones.size() == 1);
    CHECK(back.cones[0].u == 0);
    CHECK(conic::dump_program(back, {}) == dumped);
}

TEST_CASE("validation rejects malformed programs") {
    ConicProgram bad;
    bad.num_vars = 2;
    bad.c = {1.0};
    CHECK_THROWS_AS(conic::solve(bad), InputError);
    bad.c = {1.0, 0.0};
    bad.cones = {{0, 1, {0}}}; // variable reused inside one block
    CHECK_THROWS_AS(conic::solve(bad), InputError);
}

} // TEST_SUITE
