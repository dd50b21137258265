#include "gmskip/search.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <exception>
#include <optional>
#include <thread>

#include "gmskip/splitmix.hpp"

namespace gmskip {

double delta(Evaluator& evaluator, const BlockSet& current, BlockIndex b) {
    const BlockSet reduced = current.without(b);
    return evaluator.score(current).value - evaluator.score(reduced).value;
}

BlockIndex select_block(const std::map<BlockIndex, double>& deltas, double tie_tolerance) {
    if (deltas.empty()) fail(ErrorCode::EmptyCandidates, "no candidate blocks");
    double best = deltas.begin()->second;
    for (const auto& [b, d] : deltas) best = std::min(best, d);
    BlockIndex chosen = deltas.begin()->first;
    for (const auto& [b, d] : deltas)
        if (d <= best + tie_tolerance) chosen = b;  // ascending keys: the last hit is the largest index
    return chosen;
}

bool verify_trace(const SkipConfig& config, double tie_tolerance) {
    for (const IterationRecord& r : config.trace)
        if (r.candidate_deltas.empty() || select_block(r.candidate_deltas, tie_tolerance) != r.chosen) return false;
    return true;
}

namespace {

/// Scores every set, in parallel when jobs > 1. Results are positional, so the
/// outcome does not depend on scheduling. Rethrows the first failure by position.
std::vector<double> score_all(Evaluator& evaluator, const std::vector<BlockSet>& sets, int jobs) {
    std::vector<double> out(sets.size());
    std::vector<std::exception_ptr> errors(sets.size());
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(std::max(jobs, 1)), sets.size());
    if (workers <= 1) {
        for (std::size_t i = 0; i < sets.size(); ++i) out[i] = evaluator.score(sets[i]).value;
        return out;
    }
    std::atomic<std::size_t> next{0};
    auto work = [&] {
        for (std::size_t i = next++; i < sets.size(); i = next++) {
            try {
                out[i] = evaluator.score(sets[i]).value;
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
    for (std::thread& t : pool) t.join();
    for (const std::exception_ptr& e : errors)
        if (e) std::rethrow_exception(e);
    return out;
}

void check_params(const SearchParams& p) {
    if (!(p.lambda >= 0.0 && p.lambda <= 1.0))
        fail(ErrorCode::LambdaOutOfRange, "lambda " + std::to_string(p.lambda) + " outside [0, 1]");
    if (p.max_remove < 0) fail(ErrorCode::InvalidArgument, "max_remove must be non-negative");
    if (!(p.tie_tolerance >= 0.0)) fail(ErrorCode::InvalidArgument, "tie_tolerance must be non-negative");
    if (p.jobs < 1) fail(ErrorCode::InvalidArgument, "jobs must be at least 1");
}

}  // namespace

SkipConfig greedy_search(Evaluator& evaluator, const SearchParams& params, std::string model_id) {
    check_params(params);
    const int total = evaluator.total_blocks();
    if (total < 1) fail(ErrorCode::EmptyModel, "evaluator reports no blocks");

    SkipConfig config;
    config.model_id = std::move(model_id);
    config.total_blocks = total;
    config.lambda = params.lambda;
    config.max_remove = params.max_remove;
    config.metric = evaluator.metric_name();

    BlockSet current = BlockSet::full(total);
    try {
        config.full_score = evaluator.score(current).value;
        config.final_score = config.full_score;
        const double floor = params.lambda * config.full_score;

        for (int i = 1; i <= params.max_remove && !current.empty(); ++i) {
            std::vector<BlockSet> reduced;
            for (BlockIndex b : current.retained()) reduced.push_back(current.without(b));
            const std::vector<double> after = score_all(evaluator, reduced, params.jobs);

            IterationRecord rec;
            rec.iteration = i;
            std::map<BlockIndex, double> post;
            for (std::size_t c = 0; c < reduced.size(); ++c) {
                const BlockIndex b = current.retained()[c];
                rec.candidate_deltas[b] = config.final_score - after[c];
                post[b] = after[c];
            }
            rec.chosen = select_block(rec.candidate_deltas, params.tie_tolerance);
            rec.score_after = post.at(rec.chosen);
            rec.accepted = rec.score_after >= floor;
            config.trace.push_back(rec);
            if (!rec.accepted) break;
            current = current.without(rec.chosen);
            config.skipped.push_back(rec.chosen);
            config.final_score = rec.score_after;
        }
    } catch (const Error& e) {
        throw SearchAborted(e.code(), std::string("search aborted: ") + e.what(), config);
    }
    return config;
}

std::map<int, OracleEntry> brute_force_oracle(Evaluator& evaluator, int max_blocks_for_exhaustive) {
    const int total = evaluator.total_blocks();
    if (total > max_blocks_for_exhaustive || total > 30)
        fail(ErrorCode::TooManyBlocks, std::to_string(total) + " blocks exceed the exhaustive limit " +
                                           std::to_string(max_blocks_for_exhaustive));
    std::map<int, OracleEntry> best;
    std::map<int, std::vector<BlockIndex>> best_skipped;
    const std::uint64_t subsets = std::uint64_t{1} << total;
    for (std::uint64_t mask = 0; mask < subsets; ++mask) {
        std::vector<BlockIndex> kept;
        for (int b = 0; b < total; ++b)
            if (mask & (std::uint64_t{1} << b)) kept.push_back(b);
        BlockSet s(total, std::move(kept));
        const double v = evaluator.score(s).value;
        const int card = static_cast<int>(s.size());
        std::vector<BlockIndex> skipped = s.skipped();
        auto it = best.find(card);
        if (it == best.end()) {
            best.emplace(card, OracleEntry{std::move(s), v});
            best_skipped[card] = std::move(skipped);
        } else if (v > it->second.score || (v == it->second.score && skipped > best_skipped[card])) {
            it->second = OracleEntry{std::move(s), v};
            best_skipped[card] = std::move(skipped);
        }
    }
    return best;
}

// ---------------------------------------------------------------------------
// baselines

namespace {

int parse_int(std::string_view text, std::string_view what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size())
        fail(ErrorCode::InvalidStrategy, "bad " + std::string(what) + " \"" + std::string(text) + "\"");
    return v;
}

}  // namespace

BaselineStrategy BaselineStrategy::parse(std::string_view text) {
    const std::size_t colon = text.find(':');
    if (colon == std::string_view::npos)
        fail(ErrorCode::InvalidStrategy, "strategy must look like kind:value, got \"" + std::string(text) + "\"");
    const std::string_view kind = text.substr(0, colon);
    std::string_view rest = text.substr(colon + 1);
    BaselineStrategy s;
    if (kind == "fixed-interval") {
        s.kind = Kind::fixed_interval;
    } else if (kind == "forward") {
        s.kind = Kind::forward;
    } else if (kind == "reverse") {
        s.kind = Kind::reverse;
    } else if (kind == "random") {
        s.kind = Kind::random_uneven;
        const std::size_t comma = rest.find(',');
        if (comma != std::string_view::npos) {
            std::string_view opt = rest.substr(comma + 1);
            rest = rest.substr(0, comma);
            if (opt.substr(0, 5) != "seed=") fail(ErrorCode::InvalidStrategy, "expected seed=<int> after random:k");
            opt.remove_prefix(5);
            auto [ptr, ec] = std::from_chars(opt.data(), opt.data() + opt.size(), s.seed);
            if (opt.empty() || ec != std::errc() || ptr != opt.data() + opt.size())
                fail(ErrorCode::InvalidStrategy, "bad seed \"" + std::string(opt) + "\"");
        }
    } else {
        fail(ErrorCode::InvalidStrategy, "unknown strategy \"" + std::string(kind) + "\"");
    }
    s.param = parse_int(rest, "strategy value");
    return s;
}

std::string BaselineStrategy::to_string() const {
    switch (kind) {
        case Kind::fixed_interval: return "fixed-interval:" + std::to_string(param);
        case Kind::forward: return "forward:" + std::to_string(param);
        case Kind::reverse: return "reverse:" + std::to_string(param);
        case Kind::random_uneven: return "random:" + std::to_string(param) + ",seed=" + std::to_string(seed);
    }
    return "unknown";
}

std::vector<BlockIndex> BaselineStrategy::skipped(int total_blocks) const {
    if (total_blocks < 1) fail(ErrorCode::EmptyModel, "total_blocks must be positive");
    std::vector<BlockIndex> out;
    if (kind == Kind::fixed_interval) {
        if (param < 2) fail(ErrorCode::InvalidStrategy, "interval must be at least 2");
        for (int b = param - 1; b < total_blocks; b += param) out.push_back(b);
        return out;
    }
    if (param < 0 || param > total_blocks)
        fail(ErrorCode::InvalidStrategy,
             "block count " + std::to_string(param) + " outside [0, " + std::to_string(total_blocks) + "]");
    switch (kind) {
        case Kind::forward:
            for (int b = 0; b < param; ++b) out.push_back(b);
            break;
        case Kind::reverse:
            for (int b = total_blocks - param; b < total_blocks; ++b) out.push_back(b);
            break;
        case Kind::random_uneven: {
            // partial Fisher-Yates over 0..L-1
            std::vector<BlockIndex> pool(static_cast<std::size_t>(total_blocks));
            for (int b = 0; b < total_blocks; ++b) pool[static_cast<std::size_t>(b)] = b;
            SplitMix64 rng(seed);
            for (int i = 0; i < param; ++i) {
                const std::size_t j = static_cast<std::size_t>(i) +
                                      rng.next_below(static_cast<std::uint64_t>(total_blocks - i));
                std::swap(pool[static_cast<std::size_t>(i)], pool[j]);
            }
            out.assign(pool.begin(), pool.begin() + param);
            std::sort(out.begin(), out.end());
            break;
        }
        case Kind::fixed_interval: break;
    }
    return out;
}

SkipConfig baseline_search(Evaluator& evaluator, const BaselineStrategy& strategy, std::string model_id) {
    const int total = evaluator.total_blocks();
    SkipConfig config;
    config.model_id = std::move(model_id);
    config.total_blocks = total;
    config.skipped = strategy.skipped(total);
    config.lambda = 0.0;
    config.max_remove = static_cast<int>(config.skipped.size());
    config.metric = evaluator.metric_name();
    config.full_score = evaluator.score(BlockSet::full(total)).value;
    config.final_score = evaluator.score(BlockSet::from_skipped(total, config.skipped)).value;
    return config;
}

DeletionOrder parse_deletion_order(std::string_view text) {
    if (text == "forward") return DeletionOrder::forward;
    if (text == "reverse") return DeletionOrder::reverse;
    fail(ErrorCode::InvalidStrategy, "deletion order must be forward or reverse, got \"" + std::string(text) + "\"");
}

std::string_view to_string(DeletionOrder order) {
    return order == DeletionOrder::forward ? "forward" : "reverse";
}

std::vector<CurvePoint> deletion_curve(Evaluator& evaluator, DeletionOrder order) {
    const int total = evaluator.total_blocks();
    std::vector<CurvePoint> curve;
    for (int k = 0; k <= total; ++k) {
        BaselineStrategy s;
        s.kind = order == DeletionOrder::forward ? BaselineStrategy::Kind::forward : BaselineStrategy::Kind::reverse;
        s.param = k;
        curve.push_back({k, evaluator.score(BlockSet::from_skipped(total, s.skipped(total))).value});
    }
    return curve;
}

// ---------------------------------------------------------------------------
// csv

void write_trace_deltas_csv(std::ostream& out, const SkipConfig& config) {
    out << "iteration,block,delta\n";
    for (const IterationRecord& r : config.trace)
        for (const auto& [b, d] : r.candidate_deltas) out << r.iteration << ',' << b << ',' << format_real(d) << '\n';
}

void write_trace_steps_csv(std::ostream& out, const SkipConfig& config) {
    out << "iteration,chosen,score_after,accepted\n";
    for (const IterationRecord& r : config.trace)
        out << r.iteration << ',' << r.chosen << ',' << format_real(r.score_after) << ','
            << (r.accepted ? "true" : "false") << '\n';
}

void write_curve_csv(std::ostream& out, DeletionOrder order, int total_blocks, const std::vector<CurvePoint>& curve,
                     bool header) {
    if (header) out << "order,k,sparsity_pct,score\n";
    for (const CurvePoint& p : curve)
        out << to_string(order) << ',' << p.k << ','
            << format_fixed(sparsity_pct(static_cast<std::size_t>(p.k), total_blocks), 2) << ','
            << format_real(p.score) << '\n';
}

}  // namespace gmskip
