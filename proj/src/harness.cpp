#include "gridflex/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <map>
#include <sstream>
#include <thread>

#include "gridflex/errors.hpp"
#include "gridflex/network_io.hpp"
#include "gridflex/timeutil.hpp"

namespace gridflex {

namespace {

constexpr double kDtHours = MeasurementSeries::kStepSeconds / 3600.0;

// per-feeder scenario add for the head series: the heads are physical
// measurements, so they must grow by add_kw per downstream transformer
std::vector<FeederHeadSeries> scenario_heads(const std::vector<FeederHeadSeries>& heads,
                                             const std::map<std::string, int>& member_count,
                                             double add_kw, double pf) {
    std::vector<FeederHeadSeries> out;
    for (const FeederHeadSeries& head : heads) {
        auto it = member_count.find(head.id);
        const int members = it == member_count.end() ? 0 : it->second;
        auto bumped = apply_scenario_load({head}, add_kw * members, pf);
        out.push_back(std::move(bumped[0]));
    }
    return out;
}

struct SeriesIndex {
    // per network node index: pointer into the series vector, null at slack
    std::vector<const MeasurementSeries*> by_node;
    std::int64_t start = 0;
    int steps = 0;
};

SeriesIndex index_series(const NetworkModel& net, const RadialOrder& order,
                         const std::vector<MeasurementSeries>& series) {
    SeriesIndex ix;
    ix.by_node.assign(net.node_count(), nullptr);
    std::map<std::string, const MeasurementSeries*> by_id;
    for (const MeasurementSeries& s : series) by_id[s.id] = &s;
    const MeasurementSeries* any = nullptr;
    for (int j = 0; j < net.node_count(); ++j) {
        if (j == order.slack) continue;
        auto it = by_id.find(net.nodes()[j].id);
        if (it == by_id.end())
            throw ValidationError("no measurement series for node " + net.nodes()[j].id);
        ix.by_node[j] = it->second;
        any = it->second;
    }
    if (!any) throw ValidationError("network has no transformer nodes");
    ix.start = any->start_epoch_s;
    ix.steps = any->steps();
    for (int j = 0; j < net.node_count(); ++j) {
        const MeasurementSeries* s = ix.by_node[j];
        if (s && (s->start_epoch_s != ix.start || s->steps() != ix.steps))
            throw ValidationError("series " + s->id + " is misaligned with the other series");
    }
    return ix;
}

} // namespace

void CaseConfig::validate(int node_count) const {
    if (case_id < 0 || case_id > 2)
        throw ValidationError("case_id must be 0, 1 or 2");
    if (scenario_id != 1 && scenario_id != 2)
        throw ValidationError("scenario_id must be 1 or 2");
    if (!(weights.w_l > 0))
        throw ValidationError("w_l must be > 0 (a zero loss weight breaks relaxation "
                              "tightness)");
    if (weights.w_v < 0 || weights.w_lim < 0 || weights.w_p < 0 || weights.w_q < 0)
        throw ValidationError("objective weights must be nonnegative");
    if (prices.loss_price_per_kwh < 0 || prices.v_violation_price_per_pu2h < 0 ||
        prices.flow_violation_price_per_pu2h < 0)
        throw ValidationError("prices must be nonnegative");
    if (scenario_add_kw < 0) throw ValidationError("scenario_add_kw must be nonnegative");
    if (!(scenario_power_factor > 0) || scenario_power_factor > 1)
        throw ValidationError("scenario power factor must be in (0, 1]");
    flex.validate(node_count);
}

CaseReport run_case(const CaseConfig& config, const NetworkModel& net,
                    const RadialOrder& order, const std::vector<MeasurementSeries>& true_series,
                    const std::vector<FeederHeadSeries>& head_series, int jobs) {
    config.validate(net.node_count());
    if (jobs < 1) jobs = 1;

    auto partition = feeder_partition(net, order);
    std::map<std::string, int> member_count;
    for (auto& [node, feeder] : partition) member_count[feeder] += 1;

    // scenario loads go on before anything else
    std::vector<MeasurementSeries> truth = true_series;
    std::vector<FeederHeadSeries> heads = head_series;
    if (config.scenario_id == 2 && config.scenario_add_kw > 0) {
        truth = apply_scenario_load(std::move(truth), config.scenario_add_kw,
                                    config.scenario_power_factor);
        heads = scenario_heads(heads, member_count, config.scenario_add_kw,
                               config.scenario_power_factor);
    }

    SeriesIndex truth_ix = index_series(net, order, truth);

    // Case 1 never sees the true loads: it works from the feeder heads
    // disaggregated by transformer rating
    std::vector<MeasurementSeries> allocated;
    if (config.case_id == 1) {
        std::map<std::string, const FeederHeadSeries*> head_by_id;
        for (const FeederHeadSeries& h : heads) head_by_id[h.id] = &h;
        std::map<std::string, std::vector<std::pair<std::string, double>>> members;
        for (int j = 0; j < net.node_count(); ++j) {
            if (j == order.slack) continue;
            members[partition.at(net.nodes()[j].id)].push_back(
                {net.nodes()[j].id, net.nodes()[j].rating_kva});
        }
        for (auto& [feeder, list] : members) {
            auto it = head_by_id.find(feeder);
            if (it == head_by_id.end())
                throw ValidationError("no feeder-head series for feeder " + feeder);
            auto parts = allocate_by_rating(*it->second, list);
            allocated.insert(allocated.end(), parts.begin(), parts.end());
        }
    }
    SeriesIndex alloc_ix =
        config.case_id == 1 ? index_series(net, order, allocated) : SeriesIndex{};
    if (config.case_id == 1 && (alloc_ix.start != truth_ix.start || alloc_ix.steps != truth_ix.steps))
        throw ValidationError("feeder-head series are misaligned with the node series");

    const int steps = truth_ix.steps;
    const int n = net.node_count();
    const double s_base_kw = net.s_base_mva() * 1000.0;

    auto demand_at = [&](const SeriesIndex& six, int t) {
        std::vector<NodalPQ> demand(n);
        for (int j = 0; j < n; ++j) {
            if (!six.by_node[j]) continue;
            demand[j] = {six.by_node[j]->p_kw[t] / s_base_kw,
                         six.by_node[j]->q_kvar[t] / s_base_kw};
        }
        return demand;
    };

    std::vector<StepRecord> records(steps);
    std::vector<std::string> failures(steps);

    auto run_step = [&](int t) {
        StepRecord rec;
        rec.timestamp = truth_ix.start + MeasurementSeries::kStepSeconds * t;
        std::vector<NodalPQ> truth_demand = demand_at(truth_ix, t);
        std::vector<NodalPQ> setpoints;

        if (config.case_id != 0) {
            std::vector<NodalPQ> opf_demand =
                config.case_id == 1 ? demand_at(alloc_ix, t) : truth_demand;
            OpfProblem prob = build_problem(net, order, opf_demand, config.weights,
                                            config.flex, config.sched_mode);
            OpfSolution sol = solve_opf(prob, config.solver);
            if (sol.status != conic::SolveStatus::Optimal)
                throw NumericalError(std::string("OPF ") + conic::to_string(sol.status) +
                                     (sol.message.empty() ? "" : ": " + sol.message));
            rec.opf_ran = true;
            rec.opf_iterations = sol.iterations;
            auto verdict = check_relaxation_tightness(sol, 1e-6);
            rec.opf_tight = verdict.tight;
            rec.opf_max_gap = verdict.max_gap;
            setpoints = extract_setpoints(sol, config.flex);
            for (const NodalPQ& sp : setpoints) {
                rec.dispatch_p_abs_pu += std::abs(sp.p);
                rec.dispatch_q_abs_pu += std::abs(sp.q);
            }
            // replay the OPF's own injections through the exact solver; when
            // the relaxation is tight the two must agree
            auto replay = solve_sweep(net, order, opf_demand, &setpoints);
            if (replay.converged) {
                double dev = 0.0;
                for (int j = 0; j < n; ++j) dev = std::max(dev, std::abs(replay.v_pu2[j] - sol.v[j]));
                for (int e = 0; e < net.line_count(); ++e)
                    dev = std::max(dev, std::abs(replay.l_pu2[e] - sol.l[e]));
                rec.opf_sweep_dev = dev;
            } else {
                rec.opf_sweep_dev = std::numeric_limits<double>::infinity();
            }
        }

        // realization: exact power flow with the true loads and, for the
        // market cases, the cleared set-points
        PowerFlowResult flow = solve_sweep(net, order, truth_demand,
                                           setpoints.empty() ? nullptr : &setpoints);
        if (!flow.converged)
            throw NumericalError(flow.voltage_collapse
                                     ? "power flow voltage collapse"
                                     : "power flow did not converge (residual " +
                                           std::to_string(flow.last_residual) + ")");
        rec.sweep_converged = true;
        rec.sweep_iterations = flow.iterations;
        RealizedCosts costs = realized_costs(flow, net, config.prices, kDtHours);
        rec.losses_kwh = costs.losses_kwh;
        rec.violation_cost = costs.violation_cost;
        return rec;
    };

    std::atomic<int> cursor{0};
    auto worker = [&] {
        for (;;) {
            const int t = cursor.fetch_add(1);
            if (t >= steps) return;
            try {
                records[t] = run_step(t);
            } catch (const std::exception& e) {
                failures[t] = e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        const int count = std::min(jobs, steps);
        pool.reserve(count);
        for (int k = 0; k < count; ++k) pool.emplace_back(worker);
        for (std::thread& th : pool) th.join();
    }

    for (int t = 0; t < steps; ++t) {
        if (!failures[t].empty()) {
            std::ostringstream msg;
            msg << "case " << config.case_id << " scenario " << config.scenario_id << " step "
                << t << " (" << format_iso8601(records[t].timestamp ? records[t].timestamp
                                                                    : truth_ix.start + 600 * t)
                << "): " << failures[t];
            throw NumericalError(msg.str());
        }
    }

    CaseReport report;
    report.case_id = config.case_id;
    report.scenario_id = config.scenario_id;
    report.network_fingerprint = network_fingerprint(net);
    report.config_echo = case_config_to_json(config);
    report.choices = {
        "flex sign convention: set-points are generation-positive; realized demand = "
        "measured - set-point",
        "scenario add applied at every transformer node; feeder heads grow by "
        "member_count * add_kw",
        "case 1 allocates feeder-head measurements by transformer kVA rating with no loss "
        "correction",
        std::string("scheduling cost mode: ") +
            (config.sched_mode == SchedulingCostMode::Absolute ? "absolute" : "positive_part"),
    };
    report.steps = std::move(records);
    for (const StepRecord& rec : report.steps) {
        report.total_losses_kwh += rec.losses_kwh;
        report.total_violation_cost += rec.violation_cost;
    }
    return report;
}

Comparison compare_cases(const std::vector<CaseReport>& reports) {
    if (reports.empty()) throw ValidationError("compare_cases: no reports");
    Comparison cmp;
    cmp.scenario_id = reports.front().scenario_id;
    cmp.network_fingerprint = reports.front().network_fingerprint;
    const CaseReport* reference = nullptr;
    for (const CaseReport& rep : reports) {
        if (rep.scenario_id != cmp.scenario_id)
            throw ValidationError("compare_cases: mismatched scenario ids");
        if (rep.network_fingerprint != cmp.network_fingerprint)
            throw ValidationError("compare_cases: reports come from different networks");
        if (rep.case_id == 0) reference = &rep;
    }
    if (!reference) throw ValidationError("compare_cases: Case 0 reference is missing");

    std::vector<const CaseReport*> sorted;
    for (const CaseReport& rep : reports) sorted.push_back(&rep);
    std::sort(sorted.begin(), sorted.end(),
              [](const CaseReport* a, const CaseReport* b) { return a->case_id < b->case_id; });

    auto decrease_pct = [](double ref, double value) {
        return ref != 0.0 ? (ref - value) / ref * 100.0 : 0.0;
    };
    for (const CaseReport* rep : sorted) {
        ComparisonRow row;
        row.case_id = rep->case_id;
        row.losses_kwh = rep->total_losses_kwh;
        row.violation_cost = rep->total_violation_cost;
        row.losses_decrease_pct = decrease_pct(reference->total_losses_kwh, rep->total_losses_kwh);
        row.violation_decrease_pct =
            decrease_pct(reference->total_violation_cost, rep->total_violation_cost);
        cmp.rows.push_back(row);
    }
    return cmp;
}

} // namespace gridflex
