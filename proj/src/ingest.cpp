#include "pchsl/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

#include "pchsl/errors.hpp"

namespace pchsl {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) out.push_back(field);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

std::string trim(const std::string& s) {
    auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

bool parse_double(const std::string& s, double& out) {
    const std::string t = trim(s);
    if (t.empty()) return false;
    char* end = nullptr;
    out = std::strtod(t.c_str(), &end);
    return end == t.c_str() + t.size();
}

bool looks_numeric(const std::string& s) {
    double v;
    return parse_double(s, v);
}

// ISO-8601 "YYYY-MM-DD[T ]HH:MM:SS[(.fff)][Z]" to epoch seconds (UTC).
bool parse_iso8601(const std::string& raw, double& out) {
    const std::string s = trim(raw);
    int y, mo, d, h, mi;
    double sec;
    char sep;
    if (std::sscanf(s.c_str(), "%d-%d-%d%c%d:%d:%lf", &y, &mo, &d, &sep, &h, &mi, &sec) != 7)
        return false;
    if (sep != 'T' && sep != ' ') return false;
    std::tm tm{};
    tm.tm_year = y - 1900;
    tm.tm_mon = mo - 1;
    tm.tm_mday = d;
    tm.tm_hour = h;
    tm.tm_min = mi;
    tm.tm_sec = 0;
    const time_t base = timegm(&tm);
    if (base == static_cast<time_t>(-1)) return false;
    out = static_cast<double>(base) + sec;
    return true;
}

enum class TimestampKind { undetected, numeric, iso };

double parse_timestamp(const std::string& s, TimestampKind& kind, std::size_t line_no) {
    double v;
    if (kind == TimestampKind::undetected) {
        if (parse_double(s, v)) {
            kind = TimestampKind::numeric;
            return v;
        }
        if (parse_iso8601(s, v)) {
            kind = TimestampKind::iso;
            return v;
        }
        throw Error(error_codes::MalformedRow,
                    "line " + std::to_string(line_no) + ": unparseable timestamp '" + s + "'");
    }
    const bool ok = (kind == TimestampKind::numeric) ? parse_double(s, v) : parse_iso8601(s, v);
    if (!ok)
        throw Error(error_codes::MalformedRow,
                    "line " + std::to_string(line_no) + ": timestamp '" + s +
                        "' does not match the format detected for this file");
    return v;
}

void check_uniform_spacing(const std::vector<double>& ts) {
    if (ts.size() < 2) return;
    const double ref = (ts.back() - ts.front()) / static_cast<double>(ts.size() - 1);
    if (!(ref > 0.0))
        throw Error(error_codes::NonUniformSampling, "timestamps are not strictly increasing");
    for (std::size_t i = 1; i < ts.size(); ++i) {
        const double d = ts[i] - ts[i - 1];
        if (!(d > 0.0))
            throw Error(error_codes::NonUniformSampling, "timestamps are not strictly increasing");
        if (std::abs(d - ref) > 1e-6 * ref)
            throw Error(error_codes::NonUniformSampling,
                        "grid spacing varies beyond 1e-6 relative tolerance (step " +
                            std::to_string(i) + ": " + std::to_string(d) + " vs " +
                            std::to_string(ref) + ")");
    }
}

// Fill NaN cells by linear interpolation along the row; leading/trailing
// gaps take the nearest observed value.
void interpolate_row(Eigen::RowVectorXd& row) {
    const Eigen::Index T = row.size();
    Eigen::Index first = -1, last = -1;
    for (Eigen::Index t = 0; t < T; ++t) {
        if (std::isfinite(row[t])) {
            if (first < 0) first = t;
            last = t;
        }
    }
    if (first < 0) {
        row.setZero();  // segment with no usable observation
        return;
    }
    for (Eigen::Index t = 0; t < first; ++t) row[t] = row[first];
    for (Eigen::Index t = last + 1; t < T; ++t) row[t] = row[last];
    Eigen::Index prev = first;
    for (Eigen::Index t = first + 1; t <= last; ++t) {
        if (!std::isfinite(row[t])) continue;
        if (t > prev + 1) {
            const double lo = row[prev], hi = row[t];
            for (Eigen::Index k = prev + 1; k < t; ++k) {
                const double w = static_cast<double>(k - prev) / static_cast<double>(t - prev);
                row[k] = lo + w * (hi - lo);
            }
        }
        prev = t;
    }
}

struct LongRow {
    std::string segment;
    double timestamp;
    double value;  // NaN = missing
    std::size_t line_no;
};

TimeSeriesMatrix assemble(const std::vector<LongRow>& rows) {
    if (rows.empty()) throw Error(error_codes::EmptyInput, "no data rows");

    std::vector<std::string> segment_ids;
    std::unordered_map<std::string, int> seg_index;
    std::map<double, int> ts_index;  // sorted unique timestamps
    for (const auto& r : rows) {
        if (seg_index.emplace(r.segment, static_cast<int>(segment_ids.size())).second)
            segment_ids.push_back(r.segment);
        ts_index.emplace(r.timestamp, 0);
    }
    std::vector<double> timestamps;
    timestamps.reserve(ts_index.size());
    for (auto& [t, idx] : ts_index) {
        idx = static_cast<int>(timestamps.size());
        timestamps.push_back(t);
    }
    check_uniform_spacing(timestamps);

    const auto N = static_cast<Eigen::Index>(segment_ids.size());
    const auto T = static_cast<Eigen::Index>(timestamps.size());
    Eigen::MatrixXd values =
        Eigen::MatrixXd::Constant(N, T, std::numeric_limits<double>::quiet_NaN());
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> seen =
        Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>::Constant(N, T, false);
    for (const auto& r : rows) {
        const int i = seg_index[r.segment];
        const int j = ts_index[r.timestamp];
        if (seen(i, j))
            throw Error(error_codes::MalformedRow,
                        "line " + std::to_string(r.line_no) + ": duplicate (segment, timestamp) pair (" +
                            r.segment + ", " + std::to_string(r.timestamp) + ")");
        seen(i, j) = true;
        values(i, j) = r.value;
    }
    for (Eigen::Index i = 0; i < N; ++i) {
        Eigen::RowVectorXd row = values.row(i);
        interpolate_row(row);
        values.row(i) = row;
    }

    TimeSeriesMatrix out;
    out.values = std::move(values);
    out.segment_ids = std::move(segment_ids);
    out.timestamps = std::move(timestamps);
    return out;
}

}  // namespace

TimeSeriesMatrix load_long_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(error_codes::IoError, "cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw Error(error_codes::EmptyInput, path + " is empty");
    const auto header = split_line(trim(line));
    int seg_col = -1, ts_col = -1, val_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string h = trim(header[c]);
        if (h == schema.segment_col) seg_col = static_cast<int>(c);
        else if (h == schema.timestamp_col) ts_col = static_cast<int>(c);
        else if (h == schema.value_col) val_col = static_cast<int>(c);
    }
    if (seg_col < 0 || ts_col < 0 || val_col < 0)
        throw Error(error_codes::MalformedRow,
                    "header must contain columns " + schema.segment_col + "," +
                        schema.timestamp_col + "," + schema.value_col);

    std::vector<LongRow> rows;
    TimestampKind kind = TimestampKind::undetected;
    std::size_t line_no = 1;
    const std::size_t need = static_cast<std::size_t>(std::max({seg_col, ts_col, val_col})) + 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto fields = split_line(t);
        if (fields.size() < need)
            throw Error(error_codes::MalformedRow,
                        "line " + std::to_string(line_no) + ": expected at least " +
                            std::to_string(need) + " fields, got " + std::to_string(fields.size()));
        LongRow r;
        r.segment = trim(fields[seg_col]);
        r.timestamp = parse_timestamp(fields[ts_col], kind, line_no);
        const std::string vs = trim(fields[val_col]);
        if (vs.empty() || vs == "nan" || vs == "NaN" || vs == "NA") {
            r.value = std::numeric_limits<double>::quiet_NaN();
        } else if (!parse_double(vs, r.value)) {
            throw Error(error_codes::MalformedRow,
                        "line " + std::to_string(line_no) + ": unparseable value '" + vs + "'");
        }
        r.line_no = line_no;
        rows.push_back(std::move(r));
    }
    return assemble(rows);
}

TimeSeriesMatrix load_wide_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(error_codes::IoError, "cannot open '" + path + "'");

    std::string line;
    if (!std::getline(in, line)) throw Error(error_codes::EmptyInput, path + " is empty");
    const auto header = split_line(trim(line));
    if (header.size() < 2)
        throw Error(error_codes::MalformedRow, "wide header needs segment_id plus timestamps");

    TimestampKind kind = TimestampKind::undetected;
    std::vector<double> timestamps;
    for (std::size_t c = 1; c < header.size(); ++c)
        timestamps.push_back(parse_timestamp(trim(header[c]), kind, 1));
    if (!std::is_sorted(timestamps.begin(), timestamps.end()))
        throw Error(error_codes::NonUniformSampling, "wide header timestamps must be increasing");
    check_uniform_spacing(timestamps);

    std::vector<std::string> segment_ids;
    std::vector<Eigen::RowVectorXd> data_rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string t = trim(line);
        if (t.empty()) continue;
        const auto fields = split_line(t);
        if (fields.size() != header.size())
            throw Error(error_codes::MalformedRow,
                        "line " + std::to_string(line_no) + ": expected " +
                            std::to_string(header.size()) + " fields, got " +
                            std::to_string(fields.size()));
        segment_ids.push_back(trim(fields[0]));
        Eigen::RowVectorXd row(static_cast<Eigen::Index>(timestamps.size()));
        for (std::size_t c = 1; c < fields.size(); ++c) {
            const std::string vs = trim(fields[c]);
            double v = std::numeric_limits<double>::quiet_NaN();
            if (!vs.empty() && vs != "nan" && vs != "NaN" && vs != "NA") {
                if (!parse_double(vs, v))
                    throw Error(error_codes::MalformedRow,
                                "line " + std::to_string(line_no) + ": unparseable value '" + vs + "'");
            }
            row[static_cast<Eigen::Index>(c - 1)] = v;
        }
        interpolate_row(row);
        data_rows.push_back(std::move(row));
    }
    if (data_rows.empty()) throw Error(error_codes::EmptyInput, "no data rows");

    TimeSeriesMatrix out;
    out.values.resize(static_cast<Eigen::Index>(data_rows.size()),
                      static_cast<Eigen::Index>(timestamps.size()));
    for (std::size_t i = 0; i < data_rows.size(); ++i)
        out.values.row(static_cast<Eigen::Index>(i)) = data_rows[i];
    out.segment_ids = std::move(segment_ids);
    out.timestamps = std::move(timestamps);
    return out;
}

TimeSeriesMatrix load_csv(const std::string& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error(error_codes::IoError, "cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line)) throw Error(error_codes::EmptyInput, path + " is empty");
    const auto header = split_line(trim(line));
    std::size_t named = 0;
    for (const auto& h : header) {
        const std::string t = trim(h);
        if (t == schema.segment_col || t == schema.timestamp_col || t == schema.value_col) ++named;
    }
    in.close();
    if (named == 3) return load_long_csv(path, schema);
    if (!header.empty() && trim(header[0]) == schema.segment_col && header.size() >= 2 &&
        (looks_numeric(trim(header[1])) || [&] {
            double v;
            return parse_iso8601(trim(header[1]), v);
        }()))
        return load_wide_csv(path);
    throw Error(error_codes::MalformedRow, "unrecognized CSV header in '" + path + "'");
}

void write_long_csv(const std::string& path, const TimeSeriesMatrix& x) {
    std::ofstream out(path);
    if (!out) throw Error(error_codes::IoError, "cannot open '" + path + "' for writing");
    out << "segment_id,timestamp,value\n";
    char buf[64];
    for (Eigen::Index i = 0; i < x.n_segments(); ++i) {
        for (Eigen::Index t = 0; t < x.n_steps(); ++t) {
            out << x.segment_ids[static_cast<std::size_t>(i)] << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", x.timestamps[static_cast<std::size_t>(t)]);
            out << buf << ',';
            std::snprintf(buf, sizeof(buf), "%.17g", x.values(i, t));
            out << buf << '\n';
        }
    }
}

EventSplit split_at_event(const TimeSeriesMatrix& x, double event_time) {
    if (x.n_steps() < 2) throw Error(error_codes::WindowTooShort, "need at least 2 time steps");
    if (!(event_time > x.timestamps.front() && event_time <= x.timestamps.back()))
        throw Error(error_codes::EventOutOfRange,
                    "event_time " + std::to_string(event_time) + " outside (" +
                        std::to_string(x.timestamps.front()) + ", " +
                        std::to_string(x.timestamps.back()) + "]");

    const auto it = std::lower_bound(x.timestamps.begin(), x.timestamps.end(), event_time);
    const auto cut = static_cast<Eigen::Index>(it - x.timestamps.begin());
    const Eigen::Index Tb = cut, Ta = x.n_steps() - cut;
    if (Tb < 5 || Ta < 5)
        throw Error(error_codes::WindowTooShort,
                    "windows of " + std::to_string(Tb) + " and " + std::to_string(Ta) +
                        " columns; both sides need >= 5");

    EventSplit split;
    split.event_time = event_time;
    split.before.values = x.values.leftCols(Tb);
    split.before.segment_ids = x.segment_ids;
    split.before.timestamps.assign(x.timestamps.begin(), x.timestamps.begin() + Tb);
    split.after.values = x.values.rightCols(Ta);
    split.after.segment_ids = x.segment_ids;
    split.after.timestamps.assign(x.timestamps.begin() + Tb, x.timestamps.end());
    return split;
}

std::pair<TimeSeriesMatrix, NormalizationStats> normalize(
    const TimeSeriesMatrix& x, NormalizationMode mode,
    const std::optional<NormalizationStats>& stats) {
    TimeSeriesMatrix out = x;
    if (stats) {
        const NormalizationStats& s = *stats;
        if (s.mode == NormalizationMode::none) return {out, s};
        if (s.mode == NormalizationMode::zscore_per_segment) {
            if (s.mean.size() != x.n_segments())
                throw Error(error_codes::DimensionMismatch,
                            "normalization stats cover " + std::to_string(s.mean.size()) +
                                " segments, data has " + std::to_string(x.n_segments()));
            for (Eigen::Index i = 0; i < x.n_segments(); ++i) {
                if (s.constant_flags[static_cast<std::size_t>(i)])
                    out.values.row(i).setZero();
                else
                    out.values.row(i) = (x.values.row(i).array() - s.mean[i]) / s.sd[i];
            }
        } else {
            if (s.global_sd > 0.0)
                out.values = (x.values.array() - s.global_mean) / s.global_sd;
            else
                out.values.setZero();
        }
        return {out, s};
    }

    NormalizationStats s;
    s.mode = mode;
    switch (mode) {
        case NormalizationMode::none:
            return {out, s};
        case NormalizationMode::zscore_per_segment: {
            const auto N = x.n_segments();
            const auto T = x.n_steps();
            s.mean.resize(N);
            s.sd.resize(N);
            s.constant_flags.assign(static_cast<std::size_t>(N), false);
            for (Eigen::Index i = 0; i < N; ++i) {
                const double m = x.values.row(i).mean();
                const double var =
                    (x.values.row(i).array() - m).square().sum() / static_cast<double>(T);
                const double sd = std::sqrt(var);
                s.mean[i] = m;
                s.sd[i] = sd;
                if (sd < 1e-15 * (1.0 + std::abs(m))) {
                    s.constant_flags[static_cast<std::size_t>(i)] = true;
                    s.sd[i] = 0.0;
                    out.values.row(i).setZero();
                } else {
                    out.values.row(i) = (x.values.row(i).array() - m) / sd;
                }
            }
            return {out, s};
        }
        case NormalizationMode::global_zscore: {
            const double m = x.values.mean();
            const double var =
                (x.values.array() - m).square().sum() / static_cast<double>(x.values.size());
            const double sd = std::sqrt(var);
            s.global_mean = m;
            s.global_sd = sd;
            s.constant_flags.assign(static_cast<std::size_t>(x.n_segments()), false);
            if (sd < 1e-15 * (1.0 + std::abs(m))) {
                s.global_sd = 0.0;
                s.constant_flags.assign(static_cast<std::size_t>(x.n_segments()), true);
                out.values.setZero();
            } else {
                out.values = (x.values.array() - m) / sd;
            }
            return {out, s};
        }
    }
    return {out, s};  // unreachable
}

double parse_instant(const std::string& s) {
    double v;
    if (parse_double(s, v)) return v;
    if (parse_iso8601(s, v)) return v;
    throw Error(error_codes::ConfigError,
                "'" + s + "' is neither a numeric epoch nor an ISO-8601 datetime");
}

NormalizationMode normalization_mode_from_string(const std::string& s) {
    if (s == "zscore_per_segment") return NormalizationMode::zscore_per_segment;
    if (s == "global_zscore") return NormalizationMode::global_zscore;
    if (s == "none") return NormalizationMode::none;
    throw Error(error_codes::ConfigError, "unknown normalization mode '" + s + "'");
}

std::string to_string(NormalizationMode mode) {
    switch (mode) {
        case NormalizationMode::zscore_per_segment: return "zscore_per_segment";
        case NormalizationMode::global_zscore: return "global_zscore";
        case NormalizationMode::none: return "none";
    }
    return "none";
}

}  // namespace pchsl
