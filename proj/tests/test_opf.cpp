#include <doctest.h>

#include <cmath>

#include "gridflex/errors.hpp"
#include "gridflex/opf.hpp"
#include "gridflex/powerflow.hpp"
#include "gridflex/rng.hpp"
#include "test_support.hpp"

using namespace gridflex;
using testsup::two_bus_network;

namespace {

FlexBounds uniform_flex(int n, int slack, double p, double q) {
    FlexBounds fb = FlexBounds::zero(n);
    for (int j = 0; j < n; ++j) {
        if (j == slack) continue;
        fb.p_min[j] = -p;
        fb.p_max[j] = p;
        fb.q_min[j] = -q;
        fb.q_max[j] = q;
    }
    return fb;
}

} // namespace

TEST_SUITE("opf") {

TEST_CASE("two-bus problem has the expected shape") {
    NetworkModel net = two_bus_network();
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    demand[net.node_index("n2")] = {0.1, 0.02};
    CostWeights w{1.0, 10.0, 10.0, 0.1, 0.1};
    FlexBounds fb = uniform_flex(2, order.slack, 0.05, 0.02);

    OpfProblem prob = build_problem(net, order, demand, w, fb);
    CHECK(prob.balance_rows == 2);
    CHECK(prob.voltage_rows == 1);
    CHECK(prob.cone_blocks == 1);
    // variables: v1 v2 l P Q p2 q2 t_p2 t_q2 Vdev2 Ldev12
    CHECK(prob.program.num_vars == 11);
    // equalities: slack fix + 2 balances + 1 voltage row
    CHECK(prob.program.num_eq() == 4);
    // inequalities: 4 flex box + 3 Vdev + 2 Ldev + 4 scheduling
    CHECK(prob.program.num_ineq() == 13);

    std::string dump = dump_problem(prob);
    CHECK(dump.find("Vdev[n2]") != std::string::npos);
    CHECK(dump_problem(prob) == dump); // deterministic
    conic::ConicProgram back = conic::load_program(dump);
    CHECK(back.num_vars == prob.program.num_vars);
}

TEST_CASE("build validates its inputs") {
    NetworkModel net = two_bus_network();
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    SUBCASE("negative weight") {
        CostWeights w;
        w.w_v = -1.0;
        CHECK_THROWS_AS(build_problem(net, order, demand, w, FlexBounds::zero(2)),
                        ValidationError);
    }
    SUBCASE("missing injection") {
        std::vector<NodalPQ> short_demand(1);
        CHECK_THROWS_AS(build_problem(net, order, short_demand, {}, FlexBounds::zero(2)),
                        ValidationError);
        demand[net.node_index("n2")] = {std::nan(""), 0.0};
        CHECK_THROWS_WITH_AS(build_problem(net, order, demand, {}, FlexBounds::zero(2)),
                             doctest::Contains("injection"), ValidationError);
    }
    SUBCASE("flex bounds must admit zero") {
        FlexBounds fb = FlexBounds::zero(2);
        fb.p_min[net.node_index("n2")] = 0.1;
        fb.p_max[net.node_index("n2")] = 0.2;
        CHECK_THROWS_AS(build_problem(net, order, demand, {}, fb), ValidationError);
    }
}

TEST_CASE("zero load, zero flex: objective 0 and flat voltages") {
    NetworkModel net = two_bus_network();
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    OpfProblem prob = build_problem(net, order, demand, {1.0, 1.0, 1.0, 0.0, 0.0},
                                    FlexBounds::zero(2));
    OpfSolution sol = solve_opf(prob);
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    CHECK(std::abs(sol.terms.weighted_total) < 1e-8);
    CHECK(sol.v[0] == doctest::Approx(1.0).epsilon(1e-7));
    CHECK(sol.v[1] == doctest::Approx(1.0).epsilon(1e-7));
    auto verdict = check_relaxation_tightness(sol);
    CHECK(verdict.tight);
    auto sp = extract_setpoints(sol, FlexBounds::zero(2));
    CHECK(sp[1].p == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("expensive flexibility is not dispatched; losses match the sweep") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.1, 0.0};
    CostWeights w{1.0, 1.0, 1.0, 1000.0, 1000.0};
    FlexBounds fb = uniform_flex(2, order.slack, 0.1, 0.05);
    OpfSolution sol = solve_opf(build_problem(net, order, demand, w, fb));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    CHECK(std::abs(sol.flex_p[n2]) < 1e-8);
    CHECK(std::abs(sol.flex_q[n2]) < 1e-8);

    auto sweep = solve_sweep(net, order, demand);
    REQUIRE(sweep.converged);
    CHECK(std::abs(sol.terms.losses - sweep.losses_pu) < 1e-6);
    CHECK(std::abs(sol.v[n2] - sweep.v_pu2[n2]) < 1e-6);
}

TEST_CASE("free local supply zeroes the line: dispatch hits the load, losses vanish") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.1, 0.0};
    CostWeights w{1.0, 1.0, 1.0, 0.0, 0.0}; // free scheduling
    FlexBounds fb = FlexBounds::zero(2);
    fb.p_max[n2] = 0.1;
    fb.p_min[n2] = -0.1;
    OpfSolution sol = solve_opf(build_problem(net, order, demand, w, fb));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    // the loss surface is quadratically flat around the analytic optimum
    // p = 0.1, so the dispatch is only pinned to ~sqrt(gap/r)
    CHECK(sol.flex_p[n2] == doctest::Approx(0.1).epsilon(1e-3));
    CHECK(sol.terms.losses < 1e-7);

    auto sp = extract_setpoints(sol, fb);
    CHECK(sp[n2].p == doctest::Approx(0.1).epsilon(1e-3));
}

TEST_CASE("saturated dispatch lands exactly on the bound") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.1, 0.0};
    CostWeights w{1.0, 1.0, 1.0, 0.0, 0.0};
    FlexBounds fb = FlexBounds::zero(2);
    fb.p_max[n2] = 0.04; // less than the load: the optimum saturates
    fb.p_min[n2] = 0.0;
    conic::SolverConfig tight;
    // the assertion is on the position of an active bound, whose distance
    // from the iterate scales with the complementarity gap
    tight.feastol = 1e-9;
    tight.abstol = 1e-10;
    tight.reltol = 1e-10;
    OpfSolution sol = solve_opf(build_problem(net, order, demand, w, fb), tight);
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    auto sp = extract_setpoints(sol, fb);
    CHECK(std::abs(sp[n2].p - 0.04) < 1e-8);
}

TEST_CASE("scheduling cost reference function") {
    auto [cp, cq] = scheduling_cost({0.1, -0.1}, {0.0, 0.0});
    CHECK(cp == doctest::Approx(0.2));
    CHECK(cq == 0.0);
    auto [cp2, cq2] = scheduling_cost({0.1, -0.1}, {-0.5, 0.25},
                                      SchedulingCostMode::PositivePart);
    CHECK(cp2 == doctest::Approx(0.1));
    CHECK(cq2 == doctest::Approx(0.25));
    auto [cp3, cq3] = scheduling_cost({}, {});
    CHECK(cp3 == 0.0);
    CHECK(cq3 == 0.0);
}

TEST_CASE("positive-part scheduling mode prices only injections") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.05, 0.0};
    CostWeights w{1.0, 1.0, 1.0, 0.001, 0.001};
    FlexBounds fb = uniform_flex(2, order.slack, 0.05, 0.02);
    OpfSolution sol = solve_opf(
        build_problem(net, order, demand, w, fb, SchedulingCostMode::PositivePart));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    // cheap supply: with only positive parts priced this dispatches freely
    CHECK(sol.flex_p[n2] > 0.0);
}

TEST_CASE("epigraph faithfulness: deviation variables equal the max formula") {
    // Load heavy enough to pull the voltage below v_min, flow above i_max.
    NetworkModel net = two_bus_network(0.1, 0.1, /*i_max_pu2=*/0.02);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.45, 0.1};
    CostWeights w{1.0, 5.0, 5.0, 0.0, 0.0};
    OpfSolution sol = solve_opf(build_problem(net, order, demand, w, FlexBounds::zero(2)));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);

    const OperatingLimits& lim = net.limits();
    const double vdev_expect =
        std::max({0.0, sol.v[n2] - lim.v_max_pu2, lim.v_min_pu2 - sol.v[n2]});
    CHECK(vdev_expect > 0.0); // the instance is genuinely out of band
    CHECK(std::abs(sol.vdev[n2] - vdev_expect) < 1e-6);
    const double ldev_expect = std::max(0.0, sol.l[0] - net.lines()[0].i_max_pu2);
    CHECK(ldev_expect > 0.0);
    CHECK(std::abs(sol.ldev[0] - ldev_expect) < 1e-6);
}

TEST_CASE("objective dominance: huge w_v drives Vdev to zero when flex can fix it") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    const int n2 = net.node_index("n2");
    std::vector<NodalPQ> demand(2);
    demand[n2] = {0.45, 0.1}; // undervoltage without help
    CostWeights w{1.0, 1e4, 1.0, 1.0, 1.0};
    FlexBounds fb = uniform_flex(2, order.slack, 0.45, 0.1); // full relief available
    OpfSolution sol = solve_opf(build_problem(net, order, demand, w, fb));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    CHECK(sol.vdev[n2] < 1e-6);
    CHECK(sol.v[n2] >= net.limits().v_min_pu2 - 1e-6);
}

TEST_CASE("tightness check flags a constructed defect") {
    NetworkModel net = two_bus_network();
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    demand[net.node_index("n2")] = {0.05, 0.01};
    OpfSolution sol =
        solve_opf(build_problem(net, order, demand, {1, 1, 1, 0, 0}, FlexBounds::zero(2)));
    REQUIRE(sol.status == conic::SolveStatus::Optimal);
    CHECK(check_relaxation_tightness(sol).tight);

    OpfSolution perturbed = sol;
    perturbed.l[0] += 0.1;
    perturbed.relax_gap[0] += 0.1 * perturbed.v[0];
    auto verdict = check_relaxation_tightness(perturbed);
    CHECK_FALSE(verdict.tight);
    CHECK(verdict.loose_lines == std::vector<int>{0});
    CHECK(verdict.max_gap == doctest::Approx(0.1 * perturbed.v[0]).epsilon(1e-6));

    OpfSolution bad = sol;
    bad.status = conic::SolveStatus::IterationLimit;
    CHECK_THROWS_AS(check_relaxation_tightness(bad), NumericalError);
    CHECK_THROWS_AS(extract_setpoints(bad, FlexBounds::zero(2)), NumericalError);
}

TEST_CASE("zero-flex OPF reproduces the sweep on random radial instances") {
    Rng rng(2024);
    for (int trial = 0; trial < 20; ++trial) {
        NetworkModel net = testsup::random_radial_network(4 + int(rng.index(32)), rng);
        RadialOrder order = validate_radial(net);
        std::vector<NodalPQ> demand(net.node_count());
        for (int j = 0; j < net.node_count(); ++j)
            if (j != order.slack) demand[j] = {rng.uniform(0.0, 0.025), rng.uniform(0.0, 0.008)};

        OpfSolution sol = solve_opf(
            build_problem(net, order, demand, {1.0, 10.0, 10.0, 0.0, 0.0},
                          FlexBounds::zero(net.node_count())));
        REQUIRE_MESSAGE(sol.status == conic::SolveStatus::Optimal, "trial ", trial, ": ",
                        sol.message);

        // relaxation tightness on trees under positive loss weight
        auto verdict = check_relaxation_tightness(sol, 1e-6);
        CHECK_MESSAGE(verdict.tight, "trial ", trial, " max gap ", verdict.max_gap);

        auto sweep = solve_sweep(net, order, demand);
        REQUIRE(sweep.converged);
        for (int j = 0; j < net.node_count(); ++j)
            CHECK_MESSAGE(std::abs(sol.v[j] - sweep.v_pu2[j]) < 1e-5, "trial ", trial,
                          " node ", j);
        for (int e = 0; e < net.line_count(); ++e)
            CHECK_MESSAGE(std::abs(sol.l[e] - sweep.l_pu2[e]) < 1e-5, "trial ", trial, " line ",
                          e);
    }
}

} // TEST_SUITE
