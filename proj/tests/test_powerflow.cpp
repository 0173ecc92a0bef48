#include <doctest.h>

#include <cmath>

#include "gridflex/errors.hpp"
#include "gridflex/powerflow.hpp"
#include "gridflex/rng.hpp"
#include "test_support.hpp"

using namespace gridflex;
using testsup::two_bus_closed_form;
using testsup::two_bus_network;

TEST_SUITE("powerflow") {

TEST_CASE("no load gives the flat profile") {
    Rng rng(31);
    NetworkModel net = testsup::random_radial_network(12, rng);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(net.node_count());
    auto res = solve_sweep(net, order, demand);
    REQUIRE(res.converged);
    for (double v : res.v_pu2) CHECK(v == net.limits().v_slack_pu2);
    for (double l : res.l_pu2) CHECK(l == 0.0);
    CHECK(res.losses_pu == 0.0);
}

TEST_CASE("two-bus sweep matches the closed-form quadratic to 1e-8") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    demand[net.node_index("n2")] = {0.1, 0.0};
    auto res = solve_sweep(net, order, demand);
    REQUIRE(res.converged);

    auto oracle = two_bus_closed_form(1.0, 0.1, 0.1, 0.1, 0.0);
    // frozen oracle values (computed once from the quadratic above)
    CHECK(oracle.l == doctest::Approx(0.010206207483085).epsilon(1e-12));
    CHECK(oracle.P == doctest::Approx(0.101020620748309).epsilon(1e-12));
    CHECK(oracle.v2 == doctest::Approx(0.979795875850338).epsilon(1e-12));

    const int n2 = net.node_index("n2");
    CHECK(std::abs(res.v_pu2[n2] - oracle.v2) < 1e-8);
    CHECK(std::abs(res.l_pu2[0] - oracle.l) < 1e-8);
    CHECK(std::abs(res.flow_p[0] - oracle.P) < 1e-8);
    CHECK(std::abs(res.flow_q[0] - oracle.Q) < 1e-8);
    CHECK(std::abs(res.losses_pu - oracle.losses) < 1e-8);
}

TEST_CASE("injection set-point reverses the flow and lifts the voltage") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2); // no load
    std::vector<NodalPQ> setpoints(2);
    setpoints[net.node_index("n2")] = {0.1, 0.0}; // generation-positive injection
    auto res = solve_sweep(net, order, demand, &setpoints);
    REQUIRE(res.converged);

    // effective consumption -0.1: same oracle with the sign flipped
    auto oracle = two_bus_closed_form(1.0, 0.1, 0.1, -0.1, 0.0);
    const int n2 = net.node_index("n2");
    CHECK(res.flow_p[0] < 0.0);
    CHECK(res.v_pu2[n2] > net.limits().v_slack_pu2);
    CHECK(std::abs(res.v_pu2[n2] - oracle.v2) < 1e-8);
    CHECK(std::abs(res.l_pu2[0] - oracle.l) < 1e-8);
}

TEST_CASE("branch-flow identity l*v_i = P^2 + Q^2 holds at convergence") {
    Rng rng(404);
    for (int trial = 0; trial < 10; ++trial) {
        NetworkModel net = testsup::random_radial_network(4 + int(rng.index(28)), rng);
        RadialOrder order = validate_radial(net);
        std::vector<NodalPQ> demand(net.node_count());
        for (int j = 0; j < net.node_count(); ++j)
            if (j != order.slack) demand[j] = {rng.uniform(0.0, 0.03), rng.uniform(0.0, 0.01)};
        auto res = solve_sweep(net, order, demand);
        REQUIRE(res.converged);
        for (int e = 0; e < net.line_count(); ++e) {
            const int child = [&] {
                for (int j = 0; j < net.node_count(); ++j)
                    if (order.parent_line[j] == e) return j;
                return -1;
            }();
            const int i = order.parent_node[child];
            const double lhs = res.l_pu2[e] * res.v_pu2[i];
            const double rhs = res.flow_p[e] * res.flow_p[e] + res.flow_q[e] * res.flow_q[e];
            CHECK(std::abs(lhs - rhs) < 1e-8);
        }
        CHECK(res.losses_pu >= 0.0);
    }
}

TEST_CASE("all-consumption loads pull every voltage below the slack") {
    Rng rng(505);
    NetworkModel net = testsup::random_radial_network(20, rng);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(net.node_count());
    for (int j = 0; j < net.node_count(); ++j)
        if (j != order.slack) demand[j] = {0.01, 0.004};
    auto res = solve_sweep(net, order, demand);
    REQUIRE(res.converged);
    for (int j = 0; j < net.node_count(); ++j)
        if (j != order.slack) CHECK(res.v_pu2[j] < net.limits().v_slack_pu2);
}

TEST_CASE("losses scale near-quadratically at low loading") {
    Rng rng(606);
    NetworkModel net = testsup::random_radial_network(15, rng);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(net.node_count()), doubled(net.node_count());
    for (int j = 0; j < net.node_count(); ++j)
        if (j != order.slack) {
            demand[j] = {0.004, 0.001};
            doubled[j] = {0.008, 0.002};
        }
    auto r1 = solve_sweep(net, order, demand);
    auto r2 = solve_sweep(net, order, doubled);
    REQUIRE(r1.converged);
    REQUIRE(r2.converged);
    const double factor = r2.losses_pu / r1.losses_pu;
    CHECK(factor > 3.9);
    CHECK(factor < 4.3);
}

TEST_CASE("hopeless loading is flagged, not silently reported") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    RadialOrder order = validate_radial(net);
    std::vector<NodalPQ> demand(2);
    demand[net.node_index("n2")] = {100.0, 50.0}; // far beyond the loadability limit
    auto res = solve_sweep(net, order, demand);
    CHECK_FALSE(res.converged);
    CHECK((res.voltage_collapse || res.iterations == 100));
    PriceSet prices{0.1, 100.0, 100.0};
    CHECK_THROWS_AS(realized_costs(res, net, prices, 1.0 / 6.0), NumericalError);
}

TEST_CASE("realized costs: piecewise branches") {
    NetworkModel net = two_bus_network(0.1, 0.1);
    PriceSet prices;
    prices.loss_price_per_kwh = 0.0;
    prices.v_violation_price_per_pu2h = 100.0;
    prices.flow_violation_price_per_pu2h = 40.0;

    PowerFlowResult res;
    res.converged = true;
    res.v_pu2 = {1.0, 1.0};
    res.flow_p = {0.0};
    res.flow_q = {0.0};
    res.l_pu2 = {0.0};
    res.losses_pu = 0.0;

    SUBCASE("everything in band costs nothing") {
        auto costs = realized_costs(res, net, prices, 1.0 / 6.0);
        CHECK(costs.violation_cost == 0.0);
        CHECK(costs.losses_kwh == 0.0);
    }
    SUBCASE("overvoltage branch evaluates the piecewise formula") {
        res.v_pu2[1] = 1.21; // v_max is 1.1025
        auto costs = realized_costs(res, net, prices, 1.0 / 6.0);
        CHECK(costs.violation_cost == doctest::Approx(100.0 * 0.1075 / 6.0).epsilon(1e-12));
    }
    SUBCASE("undervoltage branch") {
        res.v_pu2[1] = 0.81; // v_min is 0.9025
        auto costs = realized_costs(res, net, prices, 1.0 / 6.0);
        CHECK(costs.violation_cost ==
              doctest::Approx(100.0 * (0.9025 - 0.81) / 6.0).epsilon(1e-12));
    }
    SUBCASE("flow deviation branch") {
        res.l_pu2[0] = 10.5; // i_max_pu2 is 10.0
        auto costs = realized_costs(res, net, prices, 1.0 / 6.0);
        CHECK(costs.violation_cost == doctest::Approx(40.0 * 0.5 / 6.0).epsilon(1e-12));
    }
    SUBCASE("losses convert through the power base and step length") {
        res.losses_pu = 0.002;
        prices.loss_price_per_kwh = 0.12;
        auto costs = realized_costs(res, net, prices, 1.0 / 6.0);
        CHECK(costs.losses_kwh == doctest::Approx(0.002 * 10.0 * 1000.0 / 6.0).epsilon(1e-12));
    }
}

} // TEST_SUITE
