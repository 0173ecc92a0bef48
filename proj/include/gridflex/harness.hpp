#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gridflex/network.hpp"
#include "gridflex/opf.hpp"
#include "gridflex/powerflow.hpp"
#include "gridflex/timeseries.hpp"

namespace gridflex {

// Case 0: no market, monitoring (exact power flow on true loads).
// Case 1: market without monitoring (OPF on rating-allocated loads, realized
//         on true loads).
// Case 2: market with monitoring (OPF on true loads, realized on true loads).
struct CaseConfig {
    int case_id = 0;     // 0, 1, 2
    int scenario_id = 1; // 1 = measured loading, 2 = electrification add-on
    CostWeights weights;
    PriceSet prices;
    FlexBounds flex;
    double scenario_add_kw = 0.0;       // 0 for scenario 1
    double scenario_power_factor = 1.0; // reactive share of the added load
    SchedulingCostMode sched_mode = SchedulingCostMode::Absolute;
    conic::SolverConfig solver;

    void validate(int node_count) const; // throws ValidationError (w_l > 0, ids, prices >= 0)
};

struct StepRecord {
    std::int64_t timestamp = 0;
    double losses_kwh = 0.0;
    double violation_cost = 0.0;
    double dispatch_p_abs_pu = 0.0; // sum |p set-point|
    double dispatch_q_abs_pu = 0.0;
    bool sweep_converged = false;
    int sweep_iterations = 0;
    bool opf_ran = false;
    int opf_iterations = 0;
    bool opf_tight = false;
    double opf_max_gap = 0.0;
    // max |v_opf - v_sweep|, |l_opf - l_sweep| replaying the OPF's own
    // injections through the sweep solver; meaningful when opf_tight
    double opf_sweep_dev = 0.0;
};

struct CaseReport {
    int case_id = 0;
    int scenario_id = 1;
    std::string network_fingerprint;
    std::string config_echo;           // JSON echo of the resolved CaseConfig
    std::string run_config_echo;       // JSON echo of the driving run config, if any
    std::vector<std::string> choices;  // modeling choices logged into the header
    std::vector<StepRecord> steps;
    double total_losses_kwh = 0.0;
    double total_violation_cost = 0.0;
};

std::string case_config_to_json(const CaseConfig& config);

// Runs one case over the full series; steps may execute concurrently
// (jobs > 1) but the report is assembled in timestamp order and is
// byte-identical for any jobs value. Any infeasible OPF step or unconverged
// sweep aborts with NumericalError naming the step; partial reports are
// never produced.
CaseReport run_case(const CaseConfig& config, const NetworkModel& network,
                    const RadialOrder& order, const std::vector<MeasurementSeries>& true_series,
                    const std::vector<FeederHeadSeries>& head_series, int jobs = 1);

struct ComparisonRow {
    int case_id = 0;
    double losses_kwh = 0.0;
    double violation_cost = 0.0;
    // (case0 - this)/case0, the paper's "% decrease in relation to Case 0"
    double losses_decrease_pct = 0.0;
    double violation_decrease_pct = 0.0;
};

struct Comparison {
    int scenario_id = 1;
    std::string network_fingerprint;
    std::vector<ComparisonRow> rows;
};

// Reports must share scenario and network; Case 0 must be present as the
// reference. Throws ValidationError otherwise.
Comparison compare_cases(const std::vector<CaseReport>& reports);

struct SyntheticStudy {
    NetworkModel network;
    std::vector<MeasurementSeries> node_series;   // true per-node loads, 24 h
    std::vector<FeederHeadSeries> feeder_heads;   // per-feeder sums of the above
};

// Stand-in for the proprietary study network: a seeded radial MV network
// with `feeder_count` subtrees plus heterogeneous daily load profiles
// (morning/evening peaks, per-node utilization and peak-shift spread so
// rating-proportional allocation is genuinely wrong). All parameters are
// synthetic MV-typical values; deterministic per seed.
SyntheticStudy generate_synthetic_network(int node_count, int feeder_count, std::uint64_t seed);

// --- report/table serialization (report_io.cpp) ---

std::string report_to_json(const CaseReport& report);
CaseReport report_from_json(const std::string& text, const std::string& origin);
void save_report(const CaseReport& report, const std::string& path);
CaseReport load_report(const std::string& path);

std::string comparison_to_json(const Comparison& comparison);
std::string comparison_to_text(const Comparison& comparison);
// Flat per-step table (timestamp, then losses/violation columns per case)
// for plotting the 24 h evolution.
std::string timeseries_table_csv(const std::vector<CaseReport>& reports);

} // namespace gridflex
