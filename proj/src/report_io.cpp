#include <charconv>
#include <fstream>
#include <sstream>

#include "gridflex/errors.hpp"
#include "gridflex/harness.hpp"
#include "gridflex/timeutil.hpp"
#include "json_util.hpp"

namespace gridflex {

using detail::ordered_json;

namespace {

ordered_json solver_to_json(const conic::SolverConfig& s) {
    return {{"feastol", s.feastol},
            {"abstol", s.abstol},
            {"reltol", s.reltol},
            {"max_iterations", s.max_iterations}};
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

} // namespace

std::string case_config_to_json(const CaseConfig& c) {
    ordered_json doc;
    doc["case_id"] = c.case_id;
    doc["scenario_id"] = c.scenario_id;
    doc["weights"] = {{"w_l", c.weights.w_l},
                      {"w_v", c.weights.w_v},
                      {"w_lim", c.weights.w_lim},
                      {"w_p", c.weights.w_p},
                      {"w_q", c.weights.w_q}};
    doc["prices"] = {
        {"loss_price_per_kwh", c.prices.loss_price_per_kwh},
        {"v_violation_price_per_pu2h", c.prices.v_violation_price_per_pu2h},
        {"flow_violation_price_per_pu2h", c.prices.flow_violation_price_per_pu2h}};
    doc["flex"] = {{"p_min", c.flex.p_min},
                   {"p_max", c.flex.p_max},
                   {"q_min", c.flex.q_min},
                   {"q_max", c.flex.q_max}};
    doc["scenario_add_kw"] = c.scenario_add_kw;
    doc["scenario_power_factor"] = c.scenario_power_factor;
    doc["scheduling_cost"] =
        c.sched_mode == SchedulingCostMode::Absolute ? "absolute" : "positive_part";
    doc["solver"] = solver_to_json(c.solver);
    return doc.dump();
}

std::string report_to_json(const CaseReport& rep) {
    ordered_json doc;
    doc["format"] = "gridflex-case-report/1";
    doc["case_id"] = rep.case_id;
    doc["scenario_id"] = rep.scenario_id;
    doc["network_fingerprint"] = rep.network_fingerprint;
    doc["case_config"] =
        rep.config_echo.empty() ? ordered_json() : detail::parse_json(rep.config_echo, "echo");
    doc["run_config"] = rep.run_config_echo.empty()
                            ? ordered_json()
                            : detail::parse_json(rep.run_config_echo, "echo");
    doc["choices"] = rep.choices;
    doc["totals"] = {{"losses_kwh", rep.total_losses_kwh},
                     {"violation_cost", rep.total_violation_cost}};
    doc["steps"] = ordered_json::array();
    for (const StepRecord& s : rep.steps) {
        ordered_json js;
        js["timestamp"] = format_iso8601(s.timestamp);
        js["losses_kwh"] = s.losses_kwh;
        js["violation_cost"] = s.violation_cost;
        js["dispatch_p_abs_pu"] = s.dispatch_p_abs_pu;
        js["dispatch_q_abs_pu"] = s.dispatch_q_abs_pu;
        js["sweep_converged"] = s.sweep_converged;
        js["sweep_iterations"] = s.sweep_iterations;
        js["opf_ran"] = s.opf_ran;
        if (s.opf_ran) {
            js["opf_iterations"] = s.opf_iterations;
            js["opf_tight"] = s.opf_tight;
            js["opf_max_gap"] = s.opf_max_gap;
            js["opf_sweep_dev"] = s.opf_sweep_dev;
        }
        doc["steps"].push_back(std::move(js));
    }
    return doc.dump(1) + "\n";
}

CaseReport report_from_json(const std::string& text, const std::string& origin) {
    const ordered_json doc = detail::parse_json(text, origin);
    detail::require_keys(doc,
                         {"format", "case_id", "scenario_id", "network_fingerprint",
                          "case_config", "run_config", "choices", "totals", "steps"},
                         origin);
    if (detail::require_string(doc, "format", origin) != "gridflex-case-report/1")
        throw InputError(origin + ": unsupported report format");
    CaseReport rep;
    rep.case_id = static_cast<int>(detail::require_number(doc, "case_id", origin));
    rep.scenario_id = static_cast<int>(detail::require_number(doc, "scenario_id", origin));
    rep.network_fingerprint = detail::require_string(doc, "network_fingerprint", origin);
    if (doc.contains("case_config") && !doc["case_config"].is_null())
        rep.config_echo = doc["case_config"].dump();
    if (doc.contains("run_config") && !doc["run_config"].is_null())
        rep.run_config_echo = doc["run_config"].dump();
    for (const auto& ch : detail::require(doc, "choices", origin))
        rep.choices.push_back(ch.get<std::string>());
    const ordered_json& totals = detail::require(doc, "totals", origin);
    rep.total_losses_kwh = detail::require_number(totals, "losses_kwh", origin + ".totals");
    rep.total_violation_cost =
        detail::require_number(totals, "violation_cost", origin + ".totals");
    for (const auto& js : detail::require(doc, "steps", origin)) {
        StepRecord s;
        s.timestamp = parse_iso8601(detail::require_string(js, "timestamp", origin + ".steps"));
        s.losses_kwh = detail::require_number(js, "losses_kwh", origin + ".steps");
        s.violation_cost = detail::require_number(js, "violation_cost", origin + ".steps");
        s.dispatch_p_abs_pu = detail::require_number(js, "dispatch_p_abs_pu", origin + ".steps");
        s.dispatch_q_abs_pu = detail::require_number(js, "dispatch_q_abs_pu", origin + ".steps");
        s.sweep_converged = detail::require(js, "sweep_converged", origin + ".steps").get<bool>();
        s.sweep_iterations =
            static_cast<int>(detail::require_number(js, "sweep_iterations", origin + ".steps"));
        s.opf_ran = detail::require(js, "opf_ran", origin + ".steps").get<bool>();
        if (s.opf_ran) {
            s.opf_iterations =
                static_cast<int>(detail::require_number(js, "opf_iterations", origin + ".steps"));
            s.opf_tight = detail::require(js, "opf_tight", origin + ".steps").get<bool>();
            s.opf_max_gap = detail::require_number(js, "opf_max_gap", origin + ".steps");
            s.opf_sweep_dev = detail::require_number(js, "opf_sweep_dev", origin + ".steps");
        }
        rep.steps.push_back(s);
    }
    return rep;
}

void save_report(const CaseReport& rep, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << report_to_json(rep);
}

CaseReport load_report(const std::string& path) {
    return report_from_json(read_file(path), path);
}

std::string comparison_to_json(const Comparison& cmp) {
    ordered_json doc;
    doc["format"] = "gridflex-comparison/1";
    doc["scenario_id"] = cmp.scenario_id;
    doc["network_fingerprint"] = cmp.network_fingerprint;
    doc["rows"] = ordered_json::array();
    for (const ComparisonRow& row : cmp.rows) {
        doc["rows"].push_back({{"case_id", row.case_id},
                               {"losses_kwh", row.losses_kwh},
                               {"violation_cost", row.violation_cost},
                               {"losses_decrease_pct", row.losses_decrease_pct},
                               {"violation_decrease_pct", row.violation_decrease_pct}});
    }
    return doc.dump(1) + "\n";
}

std::string comparison_to_text(const Comparison& cmp) {
    std::ostringstream out;
    out << "scenario " << cmp.scenario_id << " (24 h totals, decreases relative to Case 0)\n";
    char line[160];
    std::snprintf(line, sizeof(line), "%-8s %14s %12s %16s %12s\n", "case", "losses_kwh",
                  "decrease", "violation_cost", "decrease");
    out << line;
    for (const ComparisonRow& row : cmp.rows) {
        std::snprintf(line, sizeof(line), "Case %-3d %14.2f %11.1f%% %16.2f %11.1f%%\n",
                      row.case_id, row.losses_kwh, row.losses_decrease_pct, row.violation_cost,
                      row.violation_decrease_pct);
        out << line;
    }
    return out.str();
}

std::string timeseries_table_csv(const std::vector<CaseReport>& reports) {
    if (reports.empty()) throw ValidationError("timeseries_table_csv: no reports");
    std::vector<const CaseReport*> sorted;
    for (const CaseReport& rep : reports) sorted.push_back(&rep);
    std::sort(sorted.begin(), sorted.end(),
              [](const CaseReport* a, const CaseReport* b) { return a->case_id < b->case_id; });
    const size_t steps = sorted.front()->steps.size();
    for (const CaseReport* rep : sorted)
        if (rep->steps.size() != steps)
            throw ValidationError("timeseries_table_csv: reports differ in step count");

    std::ostringstream out;
    out << "timestamp";
    for (const CaseReport* rep : sorted)
        out << ",case" << rep->case_id << "_losses_kwh,case" << rep->case_id
            << "_violation_cost";
    out << "\n";
    char num[64];
    auto emit = [&](double v) {
        auto [ptr, ec] = std::to_chars(num, num + sizeof(num), v);
        (void)ec;
        out.write(num, ptr - num);
    };
    for (size_t t = 0; t < steps; ++t) {
        out << format_iso8601(sorted.front()->steps[t].timestamp);
        for (const CaseReport* rep : sorted) {
            out << ',';
            emit(rep->steps[t].losses_kwh);
            out << ',';
            emit(rep->steps[t].violation_cost);
        }
        out << "\n";
    }
    return out.str();
}

} // namespace gridflex
