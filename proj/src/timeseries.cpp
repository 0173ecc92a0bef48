#include "gridflex/timeseries.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "gridflex/errors.hpp"
#include "gridflex/timeutil.hpp"

namespace gridflex {

// --- ISO-8601 <-> epoch seconds (naive, no zone) ---

namespace {

// days since 1970-01-01 for a civil date (Howard Hinnant's algorithm)
std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2u) / 5u + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const unsigned doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    const std::int64_t yr = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
    m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
    y = static_cast<int>(yr + (m <= 2));
}

} // namespace

std::int64_t parse_iso8601(const std::string& text) {
    int y, mo, d, h, mi, s;
    char sep;
    if (std::sscanf(text.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d, &sep, &h, &mi, &s) !=
            7 ||
        (sep != 'T' && sep != ' ')) {
        throw InputError("bad timestamp \"" + text + "\" (want YYYY-MM-DDTHH:MM:SS)");
    }
    if (mo < 1 || mo > 12 || d < 1 || d > 31 || h > 23 || mi > 59 || s > 60)
        throw InputError("bad timestamp \"" + text + "\"");
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

std::string format_iso8601(std::int64_t epoch_seconds) {
    std::int64_t days = epoch_seconds / 86400;
    std::int64_t rem = epoch_seconds % 86400;
    if (rem < 0) {
        rem += 86400;
        days -= 1;
    }
    int y, m, d;
    civil_from_days(days, y, m, d);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02lld:%02lld:%02lld", y, m, d,
                  static_cast<long long>(rem / 3600), static_cast<long long>(rem / 60 % 60),
                  static_cast<long long>(rem % 60));
    return buf;
}

// --- measurement documents ---

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            fields.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur += ch;
        }
    }
    fields.push_back(cur);
    return fields;
}

double parse_sample(const std::string& text, const std::string& context) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size())
        throw InputError(context + ": non-numeric sample \"" + text + "\"");
    return value;
}

} // namespace

std::vector<MeasurementSeries> parse_measurements(std::istream& in, const std::string& origin,
                                                  const std::string& id_column) {
    std::string line;
    if (!std::getline(in, line)) throw InputError(origin + ": empty document");
    auto header = split_csv_line(line);
    const std::vector<std::string> want = {"timestamp", id_column, "p_kw", "q_kvar"};
    if (header != want) {
        throw InputError(origin + ": header must be \"timestamp," + id_column +
                         ",p_kw,q_kvar\"");
    }

    struct Raw {
        std::vector<std::int64_t> t;
        std::vector<double> p, q;
    };
    std::map<std::string, Raw> by_id;
    int row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto fields = split_csv_line(line);
        std::ostringstream ctx;
        ctx << origin << " row " << row;
        if (fields.size() != 4) throw InputError(ctx.str() + ": expected 4 columns");
        Raw& raw = by_id[fields[1]];
        raw.t.push_back(parse_iso8601(fields[0]));
        raw.p.push_back(parse_sample(fields[2], ctx.str() + " (series " + fields[1] + ")"));
        raw.q.push_back(parse_sample(fields[3], ctx.str() + " (series " + fields[1] + ")"));
    }
    if (by_id.empty()) throw InputError(origin + ": no data rows");

    std::vector<MeasurementSeries> result;
    for (auto& [id, raw] : by_id) {
        std::vector<size_t> perm(raw.t.size());
        for (size_t i = 0; i < perm.size(); ++i) perm[i] = i;
        std::sort(perm.begin(), perm.end(),
                  [&](size_t a, size_t b) { return raw.t[a] < raw.t[b]; });

        MeasurementSeries s;
        s.id = id;
        s.start_epoch_s = raw.t[perm[0]];
        for (size_t k = 0; k < perm.size(); ++k) {
            std::int64_t expect = s.start_epoch_s + MeasurementSeries::kStepSeconds *
                                                        static_cast<std::int64_t>(k);
            std::int64_t got = raw.t[perm[k]];
            if (got == expect) {
                s.p_kw.push_back(raw.p[perm[k]]);
                s.q_kvar.push_back(raw.q[perm[k]]);
            } else if (got > expect) {
                throw InputError(origin + ": series " + id + " has a gap at " +
                                 format_iso8601(expect));
            } else {
                throw InputError(origin + ": series " + id + " has a duplicate timestamp " +
                                 format_iso8601(got));
            }
        }
        result.push_back(std::move(s));
    }

    // all series must live on one grid
    const MeasurementSeries& ref = result.front();
    for (const MeasurementSeries& s : result) {
        if (s.start_epoch_s != ref.start_epoch_s || s.steps() != ref.steps()) {
            throw InputError(origin + ": series " + s.id + " (starts " +
                             format_iso8601(s.start_epoch_s) + ", " +
                             std::to_string(s.steps()) + " steps) is misaligned with series " +
                             ref.id + " (starts " + format_iso8601(ref.start_epoch_s) + ", " +
                             std::to_string(ref.steps()) + " steps)");
        }
    }
    return result;
}

std::vector<MeasurementSeries> load_measurements(const std::string& path,
                                                 const std::string& id_column) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open file: " + path);
    return parse_measurements(in, path, id_column);
}

void save_measurements(const std::vector<MeasurementSeries>& series, const std::string& path,
                       const std::string& id_column) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write file: " + path);
    out << "timestamp," << id_column << ",p_kw,q_kvar\n";
    if (series.empty()) return;
    char num[64];
    auto emit = [&](double v) {
        auto [ptr, ec] = std::to_chars(num, num + sizeof(num), v);
        (void)ec;
        out.write(num, ptr - num);
    };
    // row-per-(timestamp, id), timestamps outermost for readability
    for (int k = 0; k < series.front().steps(); ++k) {
        for (const MeasurementSeries& s : series) {
            out << format_iso8601(s.timestamp(k)) << ',' << s.id << ',';
            emit(s.p_kw[k]);
            out << ',';
            emit(s.q_kvar[k]);
            out << '\n';
        }
    }
}

std::vector<MeasurementSeries> allocate_by_rating(
    const FeederHeadSeries& head, const std::vector<std::pair<std::string, double>>& members) {
    if (members.empty()) throw ValidationError("allocate_by_rating: empty member list");
    double total = 0.0;
    for (const auto& [id, rating] : members) {
        if (!(rating > 0.0))
            throw ValidationError("allocate_by_rating: nonpositive rating for " + id);
        total += rating;
    }

    std::vector<MeasurementSeries> out(members.size());
    for (size_t k = 0; k < members.size(); ++k) {
        out[k].id = members[k].first;
        out[k].start_epoch_s = head.start_epoch_s;
        out[k].p_kw.resize(head.steps());
        out[k].q_kvar.resize(head.steps());
    }
    const size_t last = members.size() - 1;
    for (int t = 0; t < head.steps(); ++t) {
        double psum = 0.0, qsum = 0.0;
        for (size_t k = 0; k < last; ++k) {
            double share = members[k].second / total;
            out[k].p_kw[t] = head.p_kw[t] * share;
            out[k].q_kvar[t] = head.q_kvar[t] * share;
            psum += out[k].p_kw[t];
            qsum += out[k].q_kvar[t];
        }
        // last member absorbs the rounding so the sum is exact
        out[last].p_kw[t] = head.p_kw[t] - psum;
        out[last].q_kvar[t] = head.q_kvar[t] - qsum;
    }
    return out;
}

std::vector<MeasurementSeries> apply_scenario_load(std::vector<MeasurementSeries> series,
                                                   double add_kw, double power_factor) {
    if (!(power_factor > 0.0) || power_factor > 1.0)
        throw ValidationError("apply_scenario_load: power factor must be in (0, 1]");
    const double add_kvar = add_kw * std::tan(std::acos(power_factor));
    for (MeasurementSeries& s : series) {
        for (double& p : s.p_kw) p += add_kw;
        for (double& q : s.q_kvar) q += add_kvar;
    }
    return series;
}

} // namespace gridflex
