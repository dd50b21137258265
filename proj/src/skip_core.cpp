#include "gmskip/skip_core.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>

#include <json.hpp>

#include "gmskip/error.hpp"

namespace gmskip {

using ojson = nlohmann::ordered_json;

BlockSet::BlockSet(int total_blocks, std::vector<BlockIndex> retained)
    : total_blocks_(total_blocks), retained_(std::move(retained)) {
    std::sort(retained_.begin(), retained_.end());
    validate_block_indices(total_blocks_, retained_);
}

BlockSet BlockSet::full(int total_blocks) {
    if (total_blocks <= 0) fail(ErrorCode::EmptyModel, "total_blocks must be positive");
    std::vector<BlockIndex> all(static_cast<std::size_t>(total_blocks));
    std::iota(all.begin(), all.end(), 0);
    return BlockSet(total_blocks, std::move(all));
}

BlockSet BlockSet::from_skipped(int total_blocks, std::span<const BlockIndex> skipped) {
    validate_block_indices(total_blocks, skipped);
    std::vector<bool> gone(static_cast<std::size_t>(total_blocks), false);
    for (BlockIndex b : skipped) gone[static_cast<std::size_t>(b)] = true;
    std::vector<BlockIndex> kept;
    for (int b = 0; b < total_blocks; ++b)
        if (!gone[static_cast<std::size_t>(b)]) kept.push_back(b);
    return BlockSet(total_blocks, std::move(kept));
}

std::vector<BlockIndex> BlockSet::skipped() const {
    std::vector<BlockIndex> out;
    auto it = retained_.begin();
    for (int b = 0; b < total_blocks_; ++b) {
        if (it != retained_.end() && *it == b) {
            ++it;
        } else {
            out.push_back(b);
        }
    }
    return out;
}

bool BlockSet::contains(BlockIndex b) const {
    return std::binary_search(retained_.begin(), retained_.end(), b);
}

BlockSet BlockSet::without(BlockIndex b) const {
    if (!contains(b)) fail(ErrorCode::BlockNotRetained, "block " + std::to_string(b) + " is not retained");
    std::vector<BlockIndex> kept;
    kept.reserve(retained_.size() - 1);
    for (BlockIndex r : retained_)
        if (r != b) kept.push_back(r);
    return BlockSet(total_blocks_, std::move(kept));
}

std::string BlockSet::key() const {
    std::string out;
    for (std::size_t i = 0; i < retained_.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(retained_[i]);
    }
    return out;
}

double sparsity(const SkipConfig& config) {
    return static_cast<double>(config.skipped.size()) / static_cast<double>(config.total_blocks);
}

double sparsity_pct(std::size_t skipped, int total_blocks) {
    return 100.0 * static_cast<double>(skipped) / static_cast<double>(total_blocks);
}

std::string format_fixed(double value, int decimals) {
    const double scale = std::pow(10.0, decimals);
    double rounded = std::round(value * scale) / scale;
    if (rounded == 0.0) rounded = 0.0;  // drop the sign of -0
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, rounded);
    return buf;
}

std::string format_real(double value) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, ptr);
}

void validate_block_indices(int total_blocks, std::span<const BlockIndex> indices) {
    if (total_blocks <= 0) fail(ErrorCode::EmptyModel, "total_blocks must be positive");
    std::set<BlockIndex> seen;
    for (BlockIndex b : indices) {
        if (b < 0 || b >= total_blocks)
            fail(ErrorCode::IndexOutOfRange,
                 "block " + std::to_string(b) + " outside [0, " + std::to_string(total_blocks) + ")");
        if (!seen.insert(b).second) fail(ErrorCode::DuplicateIndex, "block " + std::to_string(b) + " repeated");
    }
}

void validate(const SkipConfig& c) {
    validate_block_indices(c.total_blocks, c.skipped);
    if (!(c.lambda >= 0.0 && c.lambda <= 1.0))
        fail(ErrorCode::LambdaOutOfRange, "lambda " + std::to_string(c.lambda) + " outside [0, 1]");
    if (c.max_remove < 0) fail(ErrorCode::BudgetExceeded, "max_remove must be non-negative");
    if (c.skipped.size() > static_cast<std::size_t>(c.max_remove))
        fail(ErrorCode::BudgetExceeded, std::to_string(c.skipped.size()) + " skipped blocks exceed max_remove " +
                                            std::to_string(c.max_remove));
    if (!std::isfinite(c.full_score) || !std::isfinite(c.final_score))
        fail(ErrorCode::NonFiniteScore, "scores must be finite");
    if (!c.skipped.empty() && !(c.final_score >= c.lambda * c.full_score))
        fail(ErrorCode::FloorViolated, "final_score below lambda * full_score");

    std::vector<BlockIndex> accepted;
    for (std::size_t i = 0; i < c.trace.size(); ++i) {
        const IterationRecord& r = c.trace[i];
        const std::string where = "trace[" + std::to_string(i) + "]";
        if (r.iteration != static_cast<int>(i) + 1) fail(ErrorCode::TraceMismatch, where + " iteration out of sequence");
        if (!r.candidate_deltas.contains(r.chosen))
            fail(ErrorCode::TraceMismatch, where + " chosen block has no delta");
        for (const auto& [b, d] : r.candidate_deltas) {
            if (b < 0 || b >= c.total_blocks) fail(ErrorCode::IndexOutOfRange, where + " candidate out of range");
            if (!std::isfinite(d)) fail(ErrorCode::NonFiniteScore, where + " delta not finite");
        }
        if (!std::isfinite(r.score_after)) fail(ErrorCode::NonFiniteScore, where + " score_after not finite");
        if (r.accepted) {
            if (!(r.score_after >= c.lambda * c.full_score))
                fail(ErrorCode::FloorViolated, where + " accepted below the lambda floor");
            accepted.push_back(r.chosen);
        } else if (i + 1 != c.trace.size()) {
            fail(ErrorCode::TraceMismatch, where + " rejected record is not the last one");
        }
    }
    if (!c.trace.empty() && accepted != c.skipped)
        fail(ErrorCode::TraceMismatch, "accepted trace choices differ from skipped");
}

namespace {

ojson to_json(const SkipConfig& c) {
    ojson j;
    j["model_id"] = c.model_id;
    j["total_blocks"] = c.total_blocks;
    j["skipped"] = c.skipped;
    j["lambda"] = c.lambda;
    j["max_remove"] = c.max_remove;
    j["metric"] = c.metric;
    j["full_score"] = c.full_score;
    j["final_score"] = c.final_score;
    ojson trace = ojson::array();
    for (const IterationRecord& r : c.trace) {
        ojson rec;
        rec["iteration"] = r.iteration;
        ojson deltas = ojson::object();
        for (const auto& [b, d] : r.candidate_deltas) deltas[std::to_string(b)] = d;
        rec["candidate_deltas"] = std::move(deltas);
        rec["chosen"] = r.chosen;
        rec["score_after"] = r.score_after;
        rec["accepted"] = r.accepted;
        trace.push_back(std::move(rec));
    }
    j["trace"] = std::move(trace);
    return j;
}

void check_keys(const ojson& obj, std::initializer_list<const char*> required, const std::string& where) {
    if (!obj.is_object()) fail(ErrorCode::SchemaError, where + " must be an object");
    for (const char* k : required)
        if (!obj.contains(k)) fail(ErrorCode::SchemaError, where + " missing field \"" + k + "\"");
    for (const auto& [k, v] : obj.items()) {
        bool known = std::any_of(required.begin(), required.end(), [&](const char* r) { return k == r; });
        if (!known) fail(ErrorCode::SchemaError, where + " unexpected field \"" + k + "\"");
    }
}

const ojson& typed(const ojson& obj, const char* key, bool (ojson::*pred)() const noexcept, const char* type,
                   const std::string& where) {
    const ojson& v = obj.at(key);
    if (!(v.*pred)()) fail(ErrorCode::SchemaError, where + " field \"" + key + "\" must be " + type);
    return v;
}

int as_int(const ojson& obj, const char* key, const std::string& where) {
    const ojson& v = typed(obj, key, &ojson::is_number_integer, "an integer", where);
    return v.get<int>();
}

double as_real(const ojson& obj, const char* key, const std::string& where) {
    return typed(obj, key, &ojson::is_number, "a number", where).get<double>();
}

std::string as_str(const ojson& obj, const char* key, const std::string& where) {
    return typed(obj, key, &ojson::is_string, "a string", where).get<std::string>();
}

std::pair<std::size_t, std::size_t> line_col(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

}  // namespace

std::string serialize(const SkipConfig& config) { return to_json(config).dump(2) + "\n"; }

SkipConfig deserialize(const std::string& text) {
    ojson j;
    try {
        j = ojson::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = line_col(text, e.byte);
        fail(ErrorCode::ParseError, "line " + std::to_string(line) + ", column " + std::to_string(col) + ": " + e.what());
    }
    const std::string top = "config";
    check_keys(j,
               {"model_id", "total_blocks", "skipped", "lambda", "max_remove", "metric", "full_score", "final_score",
                "trace"},
               top);
    SkipConfig c;
    c.model_id = as_str(j, "model_id", top);
    c.total_blocks = as_int(j, "total_blocks", top);
    for (const ojson& b : typed(j, "skipped", &ojson::is_array, "an array", top)) {
        if (!b.is_number_integer()) fail(ErrorCode::SchemaError, "config field \"skipped\" must hold integers");
        c.skipped.push_back(b.get<int>());
    }
    c.lambda = as_real(j, "lambda", top);
    c.max_remove = as_int(j, "max_remove", top);
    c.metric = as_str(j, "metric", top);
    c.full_score = as_real(j, "full_score", top);
    c.final_score = as_real(j, "final_score", top);
    const ojson& trace = typed(j, "trace", &ojson::is_array, "an array", top);
    for (std::size_t i = 0; i < trace.size(); ++i) {
        const std::string where = "trace[" + std::to_string(i) + "]";
        const ojson& rec = trace[i];
        check_keys(rec, {"iteration", "candidate_deltas", "chosen", "score_after", "accepted"}, where);
        IterationRecord r;
        r.iteration = as_int(rec, "iteration", where);
        for (const auto& [k, v] : typed(rec, "candidate_deltas", &ojson::is_object, "an object", where).items()) {
            std::size_t used = 0;
            int idx = 0;
            try {
                idx = std::stoi(k, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used == 0 || used != k.size())
                fail(ErrorCode::SchemaError, where + " candidate key \"" + k + "\" is not an integer");
            if (!v.is_number()) fail(ErrorCode::SchemaError, where + " candidate delta must be a number");
            r.candidate_deltas[idx] = v.get<double>();
        }
        r.chosen = as_int(rec, "chosen", where);
        r.score_after = as_real(rec, "score_after", where);
        r.accepted = typed(rec, "accepted", &ojson::is_boolean, "a boolean", where).get<bool>();
        c.trace.push_back(std::move(r));
    }
    validate(c);
    return c;
}

}  // namespace gmskip
