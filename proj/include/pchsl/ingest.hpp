#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

namespace pchsl {

/// Dense multivariate time series: one row per segment, one column per
/// time step. Timestamps are epoch seconds on a uniform grid.
struct TimeSeriesMatrix {
    Eigen::MatrixXd values;                // N x T
    std::vector<std::string> segment_ids;  // N, first-appearance order
    std::vector<double> timestamps;        // T, strictly increasing, uniform
    std::optional<double> event_time;      // within [front, back] when set

    Eigen::Index n_segments() const { return values.rows(); }
    Eigen::Index n_steps() const { return values.cols(); }

    /// Grid spacing in seconds. Requires at least two timestamps.
    double dt() const { return timestamps[1] - timestamps[0]; }
};

struct EventSplit {
    TimeSeriesMatrix before;
    TimeSeriesMatrix after;
    double event_time = 0.0;
};

enum class NormalizationMode { zscore_per_segment, global_zscore, none };

/// Statistics captured during normalization so the same affine map can be
/// re-applied to another window (the after window uses the before-window
/// statistics so both live in one coordinate frame).
struct NormalizationStats {
    NormalizationMode mode = NormalizationMode::zscore_per_segment;
    Eigen::VectorXd mean;              // per segment (zscore_per_segment)
    Eigen::VectorXd sd;                // population sd per segment
    std::vector<bool> constant_flags;  // rows with zero variance
    double global_mean = 0.0;
    double global_sd = 1.0;
};

struct CsvSchema {
    std::string segment_col = "segment_id";
    std::string timestamp_col = "timestamp";
    std::string value_col = "value";
};

/// Load a long-format CSV (segment_id,timestamp,value). Timestamps are
/// ISO-8601 datetimes or integer epoch seconds, auto-detected per file.
/// Missing cells are linearly interpolated along time within each segment;
/// leading/trailing gaps take the nearest observed value.
TimeSeriesMatrix load_long_csv(const std::string& path, const CsvSchema& schema = {});

/// Wide-format alternative: first column segment_id, remaining headers are
/// timestamps.
TimeSeriesMatrix load_wide_csv(const std::string& path);

/// Sniffs long vs wide format from the header row.
TimeSeriesMatrix load_csv(const std::string& path, const CsvSchema& schema = {});

/// Long-format export, inverse of load_long_csv (values round-trip to
/// 1e-12 relative).
void write_long_csv(const std::string& path, const TimeSeriesMatrix& x);

/// Partition columns at event_time: before gets timestamps < event_time,
/// after gets the rest. Both sides must keep >= 5 steps.
EventSplit split_at_event(const TimeSeriesMatrix& x, double event_time);

std::pair<TimeSeriesMatrix, NormalizationStats> normalize(
    const TimeSeriesMatrix& x, NormalizationMode mode,
    const std::optional<NormalizationStats>& stats = std::nullopt);

NormalizationMode normalization_mode_from_string(const std::string& s);
std::string to_string(NormalizationMode mode);

/// Epoch seconds from an ISO-8601 datetime or a numeric literal.
double parse_instant(const std::string& s);

}  // namespace pchsl
