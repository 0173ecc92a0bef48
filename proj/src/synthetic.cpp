#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "gridflex/errors.hpp"
#include "gridflex/harness.hpp"
#include "gridflex/rng.hpp"
#include "gridflex/timeutil.hpp"

// Synthetic stand-in for the proprietary study network. All parameters are
// invented MV-typical values: 20 kV feeders on a 10 MVA base, cable
// impedances around 0.3 + j0.25 ohm/km, MV/LV transformers of a few hundred
// kVA, daily profiles with morning and evening peaks. Per-node utilization,
// peak shift, jitter and optional PV make the true loads deviate from
// rating-proportional shares, which is what separates the monitored cases
// from the allocated one.

namespace gridflex {

namespace {

constexpr int kSteps = 144;
constexpr double kSBaseMva = 10.0;
constexpr double kVBaseKv = 20.0;

double gauss(double x) { return std::exp(-x * x); }

struct NodeProfile {
    double util, shift_h, jit_amp1, jit_amp2, jit_phase1, jit_phase2;
    int jit_freq1, jit_freq2;
    double tan_phi;
    double pv_cap_kw; // 0 when the node has no PV
};

} // namespace

SyntheticStudy generate_synthetic_network(int node_count, int feeder_count,
                                          std::uint64_t seed) {
    if (node_count < 3) throw InputError("synthetic network needs at least 3 nodes");
    if (feeder_count < 1) throw InputError("synthetic network needs at least 1 feeder");
    if (feeder_count > node_count - 1)
        throw InputError("more feeders than non-slack nodes");

    Rng rng(seed);
    auto node_id = [](int i) {
        char buf[8];
        std::snprintf(buf, sizeof(buf), "n%03d", i);
        return std::string(buf);
    };

    // --- topology: feeders grow mostly as mainlines with occasional laterals
    const int transformers = node_count - 1;
    std::vector<int> parent(node_count, -1);
    std::vector<std::vector<int>> feeder_members(feeder_count);
    for (int i = 1; i < node_count; ++i) {
        const int f = (i - 1) % feeder_count;
        std::vector<int>& members = feeder_members[f];
        if (members.empty()) {
            parent[i] = 0;
        } else if (rng.uniform() < 0.55) {
            parent[i] = members.back();
        } else {
            parent[i] = members[rng.index(members.size())];
        }
        members.push_back(i);
    }

    // --- ratings and line impedances
    const double rating_pool[] = {400.0, 630.0, 800.0, 1000.0};
    std::vector<double> rating(node_count, 0.0);
    std::vector<double> line_r(node_count), line_x(node_count); // keyed by child node
    for (int i = 1; i < node_count; ++i) {
        rating[i] = rating_pool[rng.index(4)];
        const double length_km = 0.4 + 1.8 * std::pow(rng.uniform(), 1.2);
        const double r_per_km = 0.30 * (1.0 + 0.3 * (rng.uniform() - 0.5));
        const double x_per_km = 0.24 * (1.0 + 0.3 * (rng.uniform() - 0.5));
        line_r[i] = to_per_unit(r_per_km * length_km, kVBaseKv, kSBaseMva);
        line_x[i] = to_per_unit(x_per_km * length_km, kVBaseKv, kSBaseMva);
    }

    // --- feeder-level daily shapes
    std::vector<double> feeder_shift(feeder_count), feeder_evening(feeder_count);
    for (int f = 0; f < feeder_count; ++f) {
        feeder_shift[f] = rng.uniform(-0.6, 0.6);
        feeder_evening[f] = rng.uniform(0.42, 0.55);
    }
    auto shape = [&](int f, double h) {
        const double d = feeder_shift[f];
        return 0.34 + 0.30 * gauss((h - 8.3 - d) / 2.0) +
               feeder_evening[f] * gauss((h - 19.0 - d) / 2.4);
    };

    // --- per-node profile parameters
    std::vector<NodeProfile> prof(node_count);
    for (int i = 1; i < node_count; ++i) {
        NodeProfile& np = prof[i];
        np.util = rng.uniform(0.34, 0.60);
        np.shift_h = rng.uniform(-1.3, 1.3);
        np.jit_amp1 = rng.uniform(0.03, 0.07);
        np.jit_amp2 = rng.uniform(0.02, 0.05);
        np.jit_freq1 = 2 + static_cast<int>(rng.index(4));
        np.jit_freq2 = 7 + static_cast<int>(rng.index(7));
        np.jit_phase1 = rng.uniform(0.0, 6.283185307179586);
        np.jit_phase2 = rng.uniform(0.0, 6.283185307179586);
        np.tan_phi = std::tan(std::acos(rng.uniform(0.93, 0.985)));
        // strong rooftop PV on a minority of stations: the midday export is
        // what rating-proportional allocation cannot see
        np.pv_cap_kw = rng.uniform() < 0.4 ? rating[i] * rng.uniform(0.5, 0.9) : 0.0;
    }

    // --- true node series
    const std::int64_t start = parse_iso8601("2022-06-15T00:00:00");
    std::vector<MeasurementSeries> node_series;
    for (int i = 1; i < node_count; ++i) {
        const int f = (i - 1) % feeder_count;
        const NodeProfile& np = prof[i];
        MeasurementSeries s;
        s.id = node_id(i);
        s.start_epoch_s = start;
        s.p_kw.resize(kSteps);
        s.q_kvar.resize(kSteps);
        for (int t = 0; t < kSteps; ++t) {
            const double h = t / 6.0;
            const double jit =
                1.0 +
                np.jit_amp1 *
                    std::sin(6.283185307179586 * np.jit_freq1 * t / kSteps + np.jit_phase1) +
                np.jit_amp2 *
                    std::sin(6.283185307179586 * np.jit_freq2 * t / kSteps + np.jit_phase2);
            const double consumption = rating[i] * np.util * shape(f, h - np.shift_h) * jit;
            const double pv = np.pv_cap_kw * gauss((h - 13.2) / 2.8);
            s.p_kw[t] = consumption - pv;
            s.q_kvar[t] = consumption * np.tan_phi;
        }
        node_series.push_back(std::move(s));
    }

    // --- feeder heads: plain sums of the member series
    std::vector<FeederHeadSeries> heads(feeder_count);
    for (int f = 0; f < feeder_count; ++f) {
        heads[f].id = "F" + std::to_string(f + 1);
        heads[f].start_epoch_s = start;
        heads[f].p_kw.assign(kSteps, 0.0);
        heads[f].q_kvar.assign(kSteps, 0.0);
    }
    for (int i = 1; i < node_count; ++i) {
        const int f = (i - 1) % feeder_count;
        const MeasurementSeries& s = node_series[i - 1];
        for (int t = 0; t < kSteps; ++t) {
            heads[f].p_kw[t] += s.p_kw[t];
            heads[f].q_kvar[t] += s.q_kvar[t];
        }
    }

    // --- security limits: per-line peak apparent flow estimate (sum of the
    // downstream series, losses ignored) with depth-dependent margins, so
    // normal loading is clean but a flat electrification add-on congests the
    // trunk lines first
    std::vector<std::vector<double>> down_p(node_count, std::vector<double>(kSteps, 0.0));
    std::vector<std::vector<double>> down_q(node_count, std::vector<double>(kSteps, 0.0));
    std::vector<int> down_count(node_count, 0);
    for (int i = 1; i < node_count; ++i) {
        for (int a = i; a != 0; a = parent[a]) {
            down_count[a] += 1;
            const MeasurementSeries& s = node_series[i - 1];
            for (int t = 0; t < kSteps; ++t) {
                down_p[a][t] += s.p_kw[t];
                down_q[a][t] += s.q_kvar[t];
            }
        }
    }
    const double s_base_kw = kSBaseMva * 1000.0;
    std::vector<double> i_max(node_count, 0.0); // keyed by child node
    for (int i = 1; i < node_count; ++i) {
        double l_peak = 0.0;
        for (int t = 0; t < kSteps; ++t) {
            const double s2 = (down_p[i][t] * down_p[i][t] + down_q[i][t] * down_q[i][t]) /
                              (s_base_kw * s_base_kw);
            l_peak = std::max(l_peak, s2 / 0.95);
        }
        const double margin = down_count[i] >= 8 ? 1.6 : (down_count[i] >= 3 ? 1.9 : 2.4);
        i_max[i] = margin * margin * l_peak;
    }

    // --- assemble the model
    std::vector<Node> nodes{{node_id(0), NodeKind::Slack, 0.0}};
    std::vector<LineSegment> lines;
    for (int i = 1; i < node_count; ++i) {
        nodes.push_back({node_id(i), NodeKind::Transformer, rating[i]});
        lines.push_back({node_id(parent[i]), node_id(i), line_r[i], line_x[i], i_max[i]});
    }
    OperatingLimits limits;
    limits.v_min_pu2 = 0.9025;  // 0.95^2
    limits.v_max_pu2 = 1.1025;  // 1.05^2
    limits.v_slack_pu2 = 1.0404; // slack held at 1.02 pu

    SyntheticStudy study{
        NetworkModel(std::move(nodes), std::move(lines), limits, kSBaseMva, kVBaseKv,
                     "synthetic-" + std::to_string(node_count) + "-" +
                         std::to_string(feeder_count) + "-" + std::to_string(seed)),
        std::move(node_series), std::move(heads)};
    (void)transformers;
    return study;
}

} // namespace gridflex
