#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "gridflex/harness.hpp"

namespace gridflex {

// Declarative run configuration, one JSON file, unknown keys rejected.
// Either the three input paths or the `synthetic` block must be given.
struct RunConfig {
    // inputs
    std::string network_path;
    std::string measurements_path;
    std::string head_measurements_path;
    bool use_synthetic = false;
    int synthetic_nodes = 0;
    int synthetic_feeders = 0;
    std::uint64_t seed = 1;

    std::vector<int> cases = {0, 1, 2};
    std::vector<int> scenarios = {1};
    double scenario_add_kw = 300.0;
    double scenario_power_factor = 1.0;
    CostWeights weights;
    PriceSet prices;
    double flex_p_fraction_of_rating = 0.0;
    double flex_q_fraction_of_rating = 0.0;
    SchedulingCostMode sched_mode = SchedulingCostMode::Absolute;
    conic::SolverConfig solver;

    std::string echo_json() const; // canonical echo for report headers
};

RunConfig load_run_config(const std::string& path); // throws InputError/ValidationError

// Exit codes: 0 success, 1 validation failure, 2 input/config error,
// 3 runtime numerical failure.
int cmd_validate(const std::string& network_path, std::ostream& out, std::ostream& err);
int cmd_gen(int nodes, int feeders, std::uint64_t seed, const std::string& out_dir,
            std::ostream& out, std::ostream& err);
int cmd_run(const std::string& config_path, const std::string& out_dir, int jobs,
            std::ostream& out, std::ostream& err);
int cmd_compare(const std::vector<std::string>& report_paths, std::ostream& out,
                std::ostream& err);

// Full argv-level entry point (the `gridflex` binary forwards here).
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

} // namespace gridflex
