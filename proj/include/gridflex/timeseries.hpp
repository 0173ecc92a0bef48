#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

namespace gridflex {

// One 10-minute active/reactive series. Sign convention: consumption
// positive, generation negative. The same struct carries per-node series
// (id = node id) and feeder-head series (id = feeder label).
struct MeasurementSeries {
    static constexpr std::int64_t kStepSeconds = 600;

    std::string id;
    std::int64_t start_epoch_s = 0;
    std::vector<double> p_kw;
    std::vector<double> q_kvar;

    int steps() const { return static_cast<int>(p_kw.size()); }
    std::int64_t timestamp(int step) const { return start_epoch_s + kStepSeconds * step; }
};

using FeederHeadSeries = MeasurementSeries;

// Delimited text, columns `timestamp,<id_column>,p_kw,q_kvar`, one row per
// (timestamp, id). All series must share one gap-free 10-minute grid;
// misalignment, gaps and non-numeric samples are reported with row/series
// context. Returns series sorted by id.
std::vector<MeasurementSeries> load_measurements(const std::string& path,
                                                 const std::string& id_column = "node_id");
std::vector<MeasurementSeries> parse_measurements(std::istream& in, const std::string& origin,
                                                  const std::string& id_column);
void save_measurements(const std::vector<MeasurementSeries>& series, const std::string& path,
                       const std::string& id_column = "node_id");

// Rating-proportional disaggregation of a feeder-head series onto member
// transformers: node k gets head * rating_k / sum(ratings). The last member
// absorbs the rounding so the members sum to the head exactly at every step.
std::vector<MeasurementSeries> allocate_by_rating(
    const FeederHeadSeries& head, const std::vector<std::pair<std::string, double>>& members);

// Adds add_kw to every series at every step; reactive power follows the
// power factor: q += add_kw * tan(acos(power_factor)).
std::vector<MeasurementSeries> apply_scenario_load(std::vector<MeasurementSeries> series,
                                                   double add_kw, double power_factor);

} // namespace gridflex
