#include "gridflex/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "gridflex/errors.hpp"
#include "gridflex/network_io.hpp"
#include "gridflex/timeutil.hpp"
#include "json_util.hpp"

namespace gridflex {

namespace fs = std::filesystem;
using detail::ordered_json;

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << content;
}

ordered_json run_config_json(const RunConfig& c) {
    ordered_json doc;
    if (c.use_synthetic) {
        doc["synthetic"] = {{"nodes", c.synthetic_nodes},
                            {"feeders", c.synthetic_feeders},
                            {"seed", c.seed}};
    } else {
        doc["network"] = c.network_path;
        doc["measurements"] = c.measurements_path;
        if (!c.head_measurements_path.empty())
            doc["head_measurements"] = c.head_measurements_path;
    }
    doc["cases"] = c.cases;
    doc["scenarios"] = c.scenarios;
    doc["scenario_add_kw"] = c.scenario_add_kw;
    doc["scenario_power_factor"] = c.scenario_power_factor;
    doc["weights"] = {{"w_l", c.weights.w_l},
                      {"w_v", c.weights.w_v},
                      {"w_lim", c.weights.w_lim},
                      {"w_p", c.weights.w_p},
                      {"w_q", c.weights.w_q}};
    doc["prices"] = {
        {"loss_price_per_kwh", c.prices.loss_price_per_kwh},
        {"v_violation_price_per_pu2h", c.prices.v_violation_price_per_pu2h},
        {"flow_violation_price_per_pu2h", c.prices.flow_violation_price_per_pu2h}};
    doc["flex"] = {{"p_fraction_of_rating", c.flex_p_fraction_of_rating},
                   {"q_fraction_of_rating", c.flex_q_fraction_of_rating}};
    doc["scheduling_cost"] =
        c.sched_mode == SchedulingCostMode::Absolute ? "absolute" : "positive_part";
    doc["solver"] = {{"feastol", c.solver.feastol},
                     {"abstol", c.solver.abstol},
                     {"reltol", c.solver.reltol},
                     {"max_iterations", c.solver.max_iterations}};
    return doc;
}

} // namespace

std::string RunConfig::echo_json() const { return run_config_json(*this).dump(); }

RunConfig load_run_config(const std::string& path) {
    const ordered_json doc = detail::parse_json(read_file(path), path);
    detail::require_keys(doc,
                         {"network", "measurements", "head_measurements", "synthetic", "cases",
                          "scenarios", "scenario_add_kw", "scenario_power_factor", "weights",
                          "prices", "flex", "scheduling_cost", "solver"},
                         path);
    RunConfig cfg;
    const fs::path base = fs::path(path).parent_path();
    auto resolve = [&](const std::string& p) {
        fs::path q(p);
        return q.is_absolute() ? q.string() : (base / q).string();
    };

    const bool has_paths = doc.contains("network") || doc.contains("measurements") ||
                           doc.contains("head_measurements");
    const bool has_synth = doc.contains("synthetic");
    if (has_paths && has_synth)
        throw InputError(path + ": give either file paths or a synthetic block, not both");
    if (!has_paths && !has_synth)
        throw InputError(path + ": missing input source (network/measurements or synthetic)");

    if (has_synth) {
        const ordered_json& js = doc["synthetic"];
        detail::require_keys(js, {"nodes", "feeders", "seed"}, path + ".synthetic");
        cfg.use_synthetic = true;
        cfg.synthetic_nodes = static_cast<int>(detail::require_number(js, "nodes", path));
        cfg.synthetic_feeders = static_cast<int>(detail::require_number(js, "feeders", path));
        cfg.seed = static_cast<std::uint64_t>(detail::require_number(js, "seed", path));
    } else {
        cfg.network_path = resolve(detail::require_string(doc, "network", path));
        cfg.measurements_path = resolve(detail::require_string(doc, "measurements", path));
        if (doc.contains("head_measurements"))
            cfg.head_measurements_path =
                resolve(detail::require_string(doc, "head_measurements", path));
        for (const std::string& p : {cfg.network_path, cfg.measurements_path})
            if (!fs::exists(p)) throw InputError(path + ": referenced path missing: " + p);
        if (!cfg.head_measurements_path.empty() && !fs::exists(cfg.head_measurements_path))
            throw InputError(path + ": referenced path missing: " + cfg.head_measurements_path);
    }

    if (doc.contains("cases")) {
        cfg.cases.clear();
        for (const auto& v : doc["cases"]) cfg.cases.push_back(v.get<int>());
        if (cfg.cases.empty()) throw InputError(path + ": cases must not be empty");
    }
    if (doc.contains("scenarios")) {
        cfg.scenarios.clear();
        for (const auto& v : doc["scenarios"]) cfg.scenarios.push_back(v.get<int>());
        if (cfg.scenarios.empty()) throw InputError(path + ": scenarios must not be empty");
    }
    for (int c : cfg.cases)
        if (c < 0 || c > 2) throw InputError(path + ": cases must be within {0, 1, 2}");
    for (int s : cfg.scenarios)
        if (s != 1 && s != 2) throw InputError(path + ": scenarios must be within {1, 2}");

    if (doc.contains("scenario_add_kw"))
        cfg.scenario_add_kw = detail::require_number(doc, "scenario_add_kw", path);
    if (doc.contains("scenario_power_factor"))
        cfg.scenario_power_factor = detail::require_number(doc, "scenario_power_factor", path);

    const ordered_json& jw = detail::require(doc, "weights", path);
    detail::require_keys(jw, {"w_l", "w_v", "w_lim", "w_p", "w_q"}, path + ".weights");
    cfg.weights.w_l = detail::require_number(jw, "w_l", path);
    cfg.weights.w_v = detail::require_number(jw, "w_v", path);
    cfg.weights.w_lim = detail::require_number(jw, "w_lim", path);
    cfg.weights.w_p = detail::require_number(jw, "w_p", path);
    cfg.weights.w_q = detail::require_number(jw, "w_q", path);
    if (!(cfg.weights.w_l > 0))
        throw InputError(path + ": w_l must be > 0 (zero loss weight breaks relaxation "
                                "tightness)");

    const ordered_json& jp = detail::require(doc, "prices", path);
    detail::require_keys(jp,
                         {"loss_price_per_kwh", "v_violation_price_per_pu2h",
                          "flow_violation_price_per_pu2h"},
                         path + ".prices");
    cfg.prices.loss_price_per_kwh = detail::require_number(jp, "loss_price_per_kwh", path);
    cfg.prices.v_violation_price_per_pu2h =
        detail::require_number(jp, "v_violation_price_per_pu2h", path);
    cfg.prices.flow_violation_price_per_pu2h =
        detail::require_number(jp, "flow_violation_price_per_pu2h", path);

    const ordered_json& jf = detail::require(doc, "flex", path);
    detail::require_keys(jf, {"p_fraction_of_rating", "q_fraction_of_rating"}, path + ".flex");
    cfg.flex_p_fraction_of_rating = detail::require_number(jf, "p_fraction_of_rating", path);
    cfg.flex_q_fraction_of_rating = detail::require_number(jf, "q_fraction_of_rating", path);
    if (cfg.flex_p_fraction_of_rating < 0 || cfg.flex_q_fraction_of_rating < 0)
        throw InputError(path + ": flex fractions must be nonnegative");

    if (doc.contains("scheduling_cost")) {
        const std::string mode = detail::require_string(doc, "scheduling_cost", path);
        if (mode == "absolute")
            cfg.sched_mode = SchedulingCostMode::Absolute;
        else if (mode == "positive_part")
            cfg.sched_mode = SchedulingCostMode::PositivePart;
        else
            throw InputError(path + ": scheduling_cost must be absolute or positive_part");
    }
    if (doc.contains("solver")) {
        const ordered_json& js = doc["solver"];
        detail::require_keys(js, {"feastol", "abstol", "reltol", "max_iterations"},
                             path + ".solver");
        cfg.solver.feastol = detail::require_number(js, "feastol", path);
        cfg.solver.abstol = detail::require_number(js, "abstol", path);
        cfg.solver.reltol = detail::require_number(js, "reltol", path);
        cfg.solver.max_iterations =
            static_cast<int>(detail::require_number(js, "max_iterations", path));
    }
    return cfg;
}

int cmd_validate(const std::string& network_path, std::ostream& out, std::ostream& err) {
    try {
        NetworkModel net = load_network(network_path);
        RadialOrder order = validate_radial(net);
        auto part = feeder_partition(net, order);
        std::map<std::string, int> sizes;
        for (auto& [node, feeder] : part) sizes[feeder] += 1;
        out << "network OK: " << net.node_count() << " nodes, " << net.line_count()
            << " lines, " << sizes.size() << " feeder(s)";
        for (auto& [feeder, count] : sizes) out << " " << feeder << "=" << count;
        out << ", fingerprint " << network_fingerprint(net) << "\n";
        return 0;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    }
}

namespace {

// Study defaults. The objective weights are proportional to the realized
// prices (w_l : w_v : w_lim = loss_price * s_base_kw : v_price : l_price)
// and scheduling is free, so the monitored OPF minimizes exactly the
// realized total cost over the flexibility set; the case-ordering is then a
// structural property of information quality, not a tuning accident.
// Nonzero w_p/w_q remain available through the config.
RunConfig default_study_config() {
    RunConfig cfg;
    cfg.cases = {0, 1, 2};
    cfg.scenarios = {1, 2};
    cfg.scenario_add_kw = 300.0;
    cfg.scenario_power_factor = 1.0;
    cfg.prices = {0.12, 1500.0, 600.0};
    // 0.12 CHF/kWh on a 10 MVA base = 1200 CHF per pu-hour of losses
    cfg.weights = {1.0, 1500.0 / 1200.0, 600.0 / 1200.0, 0.0, 0.0};
    cfg.flex_p_fraction_of_rating = 0.05;
    cfg.flex_q_fraction_of_rating = 0.03;
    return cfg;
}

FlexBounds flex_from_ratings(const NetworkModel& net, double p_frac, double q_frac) {
    const double s_base_kw = net.s_base_mva() * 1000.0;
    FlexBounds fb = FlexBounds::zero(net.node_count());
    for (int j = 0; j < net.node_count(); ++j) {
        const Node& node = net.nodes()[j];
        if (node.kind == NodeKind::Slack) continue;
        const double p_pu = p_frac * node.rating_kva / s_base_kw;
        const double q_pu = q_frac * node.rating_kva / s_base_kw;
        fb.p_min[j] = -p_pu;
        fb.p_max[j] = p_pu;
        fb.q_min[j] = -q_pu;
        fb.q_max[j] = q_pu;
    }
    return fb;
}

} // namespace

int cmd_gen(int nodes, int feeders, std::uint64_t seed, const std::string& out_dir,
            std::ostream& out, std::ostream& err) {
    try {
        SyntheticStudy study = generate_synthetic_network(nodes, feeders, seed);
        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        save_network(study.network, (dir / "network.json").string());
        save_measurements(study.node_series, (dir / "measurements.csv").string(), "node_id");
        save_measurements(study.feeder_heads, (dir / "head_measurements.csv").string(),
                          "feeder_id");

        RunConfig cfg = default_study_config();
        cfg.network_path = "network.json";
        cfg.measurements_path = "measurements.csv";
        cfg.head_measurements_path = "head_measurements.csv";
        write_file((dir / "config.json").string(), run_config_json(cfg).dump(2) + "\n");

        out << "wrote network.json, measurements.csv, head_measurements.csv, config.json to "
            << out_dir << "\n";
        return 0;
    } catch (const InputError& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return 1;
    }
}

int cmd_run(const std::string& config_path, const std::string& out_dir, int jobs,
            std::ostream& out, std::ostream& err) {
    try {
        RunConfig cfg = load_run_config(config_path);

        NetworkModel net = [&] {
            if (cfg.use_synthetic)
                return generate_synthetic_network(cfg.synthetic_nodes, cfg.synthetic_feeders,
                                                  cfg.seed)
                    .network;
            return load_network(cfg.network_path);
        }();
        RadialOrder order = validate_radial(net);

        std::vector<MeasurementSeries> truth;
        std::vector<FeederHeadSeries> heads;
        if (cfg.use_synthetic) {
            SyntheticStudy study = generate_synthetic_network(cfg.synthetic_nodes,
                                                              cfg.synthetic_feeders, cfg.seed);
            truth = std::move(study.node_series);
            heads = std::move(study.feeder_heads);
        } else {
            truth = load_measurements(cfg.measurements_path, "node_id");
            const bool need_heads =
                std::find(cfg.cases.begin(), cfg.cases.end(), 1) != cfg.cases.end();
            if (need_heads && cfg.head_measurements_path.empty())
                throw InputError(config_path +
                                 ": case 1 requested but head_measurements missing");
            if (!cfg.head_measurements_path.empty())
                heads = load_measurements(cfg.head_measurements_path, "feeder_id");
        }

        fs::create_directories(out_dir);
        const fs::path dir(out_dir);
        const std::string echo = cfg.echo_json();

        for (int scenario : cfg.scenarios) {
            std::vector<CaseReport> reports;
            for (int case_id : cfg.cases) {
                CaseConfig cc;
                cc.case_id = case_id;
                cc.scenario_id = scenario;
                cc.weights = cfg.weights;
                cc.prices = cfg.prices;
                cc.flex = flex_from_ratings(net, cfg.flex_p_fraction_of_rating,
                                            cfg.flex_q_fraction_of_rating);
                cc.scenario_add_kw = scenario == 2 ? cfg.scenario_add_kw : 0.0;
                cc.scenario_power_factor = cfg.scenario_power_factor;
                cc.sched_mode = cfg.sched_mode;
                cc.solver = cfg.solver;
                CaseReport rep = run_case(cc, net, order, truth, heads, jobs);
                rep.run_config_echo = echo;
                std::ostringstream name;
                name << "s" << scenario << "_case" << case_id << ".report.json";
                save_report(rep, (dir / name.str()).string());
                reports.push_back(std::move(rep));
            }
            const bool has_case0 =
                std::find(cfg.cases.begin(), cfg.cases.end(), 0) != cfg.cases.end();
            if (has_case0 && reports.size() > 1) {
                Comparison cmp = compare_cases(reports);
                std::ostringstream base;
                base << "s" << scenario;
                write_file((dir / (base.str() + "_compare.json")).string(),
                           comparison_to_json(cmp));
                out << comparison_to_text(cmp);
            }
            std::ostringstream tname;
            tname << "s" << scenario << "_timeseries.csv";
            write_file((dir / tname.str()).string(), timeseries_table_csv(reports));
        }
        return 0;
    } catch (const NumericalError& e) {
        err << "numerical error: " << e.what() << "\n";
        return 3;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    }
}

int cmd_compare(const std::vector<std::string>& report_paths, std::ostream& out,
                std::ostream& err) {
    try {
        std::vector<CaseReport> reports;
        for (const std::string& path : report_paths) reports.push_back(load_report(path));
        Comparison cmp = compare_cases(reports);
        out << comparison_to_text(cmp);
        out << comparison_to_json(cmp);
        return 0;
    } catch (const ValidationError& e) {
        err << "validation error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        err << "input error: " << e.what() << "\n";
        return 2;
    }
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"local flexibility market study on radial MV networks"};
    app.require_subcommand(1);

    std::string network_path;
    auto* validate = app.add_subcommand("validate", "check a network file");
    validate->add_option("network", network_path, "network JSON file")->required();

    int nodes = 35, feeders = 2, jobs = 1;
    std::uint64_t seed = 1;
    std::string out_dir = ".", config_path;
    auto* gen = app.add_subcommand("gen", "generate a synthetic study network");
    gen->add_option("--nodes", nodes, "total node count including the slack");
    gen->add_option("--feeders", feeders, "feeder count");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out_dir, "output directory")->required();

    auto* run = app.add_subcommand("run", "run the configured cases and scenarios");
    run->add_option("--config", config_path, "run configuration JSON")->required();
    run->add_option("--out", out_dir, "output directory")->required();
    run->add_option("--jobs", jobs, "concurrent per-step solves");

    std::vector<std::string> report_paths;
    auto* compare = app.add_subcommand("compare", "compare saved case reports");
    compare->add_option("reports", report_paths, "report JSON files")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) { // --help
            out << app.help();
            return 0;
        }
        err << e.what() << "\n";
        return 2;
    }

    if (validate->parsed()) return cmd_validate(network_path, out, err);
    if (gen->parsed()) return cmd_gen(nodes, feeders, seed, out_dir, out, err);
    if (run->parsed()) return cmd_run(config_path, out_dir, jobs, out, err);
    if (compare->parsed()) return cmd_compare(report_paths, out, err);
    err << "no subcommand\n";
    return 2;
}

} // namespace gridflex
