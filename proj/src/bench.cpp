#include "gmskip/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "gmskip/error.hpp"

namespace gmskip {

double percentile(std::vector<double> samples, double q) {
    if (samples.empty()) fail(ErrorCode::InvalidArgument, "percentile of no samples");
    std::sort(samples.begin(), samples.end());
    const double pos = q * static_cast<double>(samples.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, samples.size() - 1);
    const double frac = pos - static_cast<double>(lo);
    return samples[lo] + (samples[hi] - samples[lo]) * frac;
}

LatencyStats measure_latency(const ToyModel& model, const std::vector<TokenSequence>& inputs,
                             const BlockSet& retained, int reps, int warmup) {
    if (reps < 1) fail(ErrorCode::InvalidArgument, "reps must be at least 1");
    if (warmup < 0) fail(ErrorCode::InvalidArgument, "warmup must be non-negative");
    if (inputs.empty()) fail(ErrorCode::EmptyDataset, "no inputs to time");

    // Keeps the optimizer from discarding forward passes.
    volatile double sink = 0.0;
    auto pass = [&](OpCounter* ops) {
        for (const TokenSequence& in : inputs) sink = sink + model.forward(in, retained, ops).logits.data.back();
    };
    for (int i = 0; i < warmup; ++i) pass(nullptr);

    LatencyStats stats;
    stats.reps = reps;
    stats.warmup = warmup;
    OpCounter counter;
    pass(&counter);
    stats.ops = counter.macs;

    std::vector<double> samples;
    samples.reserve(static_cast<std::size_t>(reps));
    for (int i = 0; i < reps; ++i) {
        const auto t0 = std::chrono::steady_clock::now();
        pass(nullptr);
        const auto t1 = std::chrono::steady_clock::now();
        samples.push_back(std::chrono::duration<double>(t1 - t0).count());
    }
    stats.median_s = percentile(samples, 0.5);
    stats.p10_s = percentile(samples, 0.1);
    stats.p90_s = percentile(samples, 0.9);
    return stats;
}

double compare_latency(const LatencyStats& baseline, const LatencyStats& candidate) {
    if (baseline.median_s == 0.0) fail(ErrorCode::ZeroBaseline, "baseline median latency is zero");
    return 100.0 * (baseline.median_s - candidate.median_s) / baseline.median_s;
}

ReportFormat parse_report_format(std::string_view text) {
    if (text == "table") return ReportFormat::table;
    if (text == "csv") return ReportFormat::csv;
    if (text == "json") return ReportFormat::json;
    fail(ErrorCode::InvalidArgument, "format must be table, csv or json, got \"" + std::string(text) + "\"");
}

namespace {

constexpr const char* kCsvHeader = "method,score,sparsity_pct,latency_median_s,latency_p10_s,latency_p90_s,ops";

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> split_csv_line(const std::string& line, std::size_t lineno) {
    std::vector<std::string> out;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            out.push_back(std::move(cur));
            cur.clear();
        } else {
            cur += c;
        }
    }
    if (quoted) fail(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": unterminated quote");
    out.push_back(std::move(cur));
    return out;
}

double to_double(const std::string& s, std::size_t lineno) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != s.size())
        fail(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": bad number \"" + s + "\"");
    return v;
}

}  // namespace

std::string build_report(std::vector<ReportRow> rows, ReportFormat format) {
    if (rows.empty()) fail(ErrorCode::EmptyReport, "no rows to report");
    std::stable_sort(rows.begin(), rows.end(),
                     [](const ReportRow& a, const ReportRow& b) { return a.sparsity_pct < b.sparsity_pct; });
    std::ostringstream out;
    switch (format) {
        case ReportFormat::csv:
            out << kCsvHeader << '\n';
            for (const ReportRow& r : rows)
                out << csv_field(r.method) << ',' << format_real(r.score) << ',' << format_fixed(r.sparsity_pct, 2)
                    << ',' << format_fixed(r.latency.median_s, 4) << ',' << format_fixed(r.latency.p10_s, 4) << ','
                    << format_fixed(r.latency.p90_s, 4) << ',' << r.latency.ops << '\n';
            break;
        case ReportFormat::json: {
            nlohmann::ordered_json arr = nlohmann::ordered_json::array();
            for (const ReportRow& r : rows) {
                nlohmann::ordered_json j;
                j["method"] = r.method;
                j["score"] = r.score;
                j["sparsity_pct"] = format_fixed(r.sparsity_pct, 2);
                j["latency_median_s"] = format_fixed(r.latency.median_s, 4);
                j["latency_p10_s"] = format_fixed(r.latency.p10_s, 4);
                j["latency_p90_s"] = format_fixed(r.latency.p90_s, 4);
                j["reps"] = r.latency.reps;
                j["warmup"] = r.latency.warmup;
                j["ops"] = r.latency.ops;
                arr.push_back(std::move(j));
            }
            out << arr.dump(2) << '\n';
            break;
        }
        case ReportFormat::table: {
            std::size_t w = 6;
            for (const ReportRow& r : rows) w = std::max(w, r.method.size());
            auto pad = [](const std::string& s, std::size_t n) { return s + std::string(n > s.size() ? n - s.size() : 0, ' '); };
            auto lpad = [](const std::string& s, std::size_t n) { return std::string(n > s.size() ? n - s.size() : 0, ' ') + s; };
            out << pad("Method", w) << " | " << lpad("Score", 10) << " | " << lpad("Sps.", 6) << " | " << lpad("Lat.", 9)
                << " | " << lpad("P10", 9) << " | " << lpad("P90", 9) << " | " << lpad("Ops", 12) << '\n';
            out << std::string(w, '-') << "-+-" << std::string(10, '-') << "-+-" << std::string(6, '-') << "-+-"
                << std::string(9, '-') << "-+-" << std::string(9, '-') << "-+-" << std::string(9, '-') << "-+-"
                << std::string(12, '-') << '\n';
            for (const ReportRow& r : rows)
                out << pad(r.method, w) << " | " << lpad(format_fixed(r.score, 4), 10) << " | "
                    << lpad(format_fixed(r.sparsity_pct, 2), 6) << " | " << lpad(format_fixed(r.latency.median_s, 4), 9)
                    << " | " << lpad(format_fixed(r.latency.p10_s, 4), 9) << " | "
                    << lpad(format_fixed(r.latency.p90_s, 4), 9) << " | " << lpad(std::to_string(r.latency.ops), 12)
                    << '\n';
            break;
        }
    }
    return out.str();
}

std::vector<ReportRow> parse_report_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<ReportRow> rows;
    bool header = false;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (!header) {
            if (line != kCsvHeader)
                fail(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected header " + kCsvHeader);
            header = true;
            continue;
        }
        const std::vector<std::string> f = split_csv_line(line, lineno);
        if (f.size() != 7)
            fail(ErrorCode::ParseError, "line " + std::to_string(lineno) + ": expected 7 fields, got " +
                                            std::to_string(f.size()));
        ReportRow r;
        r.method = f[0];
        r.score = to_double(f[1], lineno);
        r.sparsity_pct = to_double(f[2], lineno);
        r.latency.median_s = to_double(f[3], lineno);
        r.latency.p10_s = to_double(f[4], lineno);
        r.latency.p90_s = to_double(f[5], lineno);
        r.latency.ops = static_cast<std::uint64_t>(to_double(f[6], lineno));
        rows.push_back(std::move(r));
    }
    if (!header) fail(ErrorCode::ParseError, "missing CSV header");
    return rows;
}

}  // namespace gmskip
