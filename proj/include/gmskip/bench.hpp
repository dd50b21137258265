#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "gmskip/skip_core.hpp"
#include "gmskip/toy_model.hpp"

namespace gmskip {

struct LatencyStats {
    double median_s = 0.0;
    double p10_s = 0.0;
    double p90_s = 0.0;
    int reps = 1;
    int warmup = 0;
    std::uint64_t ops = 0;  // MACs of one timed pass over all inputs

    friend bool operator==(const LatencyStats&, const LatencyStats&) = default;
};

/// Linear-interpolated percentile (q in [0, 1]) of unsorted samples.
double percentile(std::vector<double> samples, double q);

/// `warmup` untimed passes, then `reps` timed passes over all inputs, single-threaded.
LatencyStats measure_latency(const ToyModel& model, const std::vector<TokenSequence>& inputs,
                             const BlockSet& retained, int reps, int warmup);

/// 100 * (a.median - b.median) / a.median. Throws ZeroBaseline.
double compare_latency(const LatencyStats& baseline, const LatencyStats& candidate);

struct ReportRow {
    std::string method;
    double score = 0.0;
    double sparsity_pct = 0.0;
    LatencyStats latency;

    friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

enum class ReportFormat { table, csv, json };

ReportFormat parse_report_format(std::string_view text);

/// Rows sorted by sparsity; percentages with 2 decimals, seconds with 4.
/// CSV columns: method,score,sparsity_pct,latency_median_s,latency_p10_s,latency_p90_s,ops.
/// Throws EmptyReport.
std::string build_report(std::vector<ReportRow> rows, ReportFormat format);

/// Reads the CSV layout above (header required). Throws ParseError.
std::vector<ReportRow> parse_report_csv(const std::string& text);

}  // namespace gmskip
