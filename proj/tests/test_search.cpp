#include <doctest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "gmskip/error.hpp"
#include "gmskip/search.hpp"
#include "oracles/step_oracle.hpp"
#include "support.hpp"

using namespace gmskip;

namespace {

std::shared_ptr<FunctionEvaluator> table_eval(int L, std::uint64_t seed, bool quantize = false) {
    return FunctionEvaluator::from_table(L, "top1", support::synthetic_table(L, seed, quantize));
}

struct Counting final : Evaluator {
    EvaluatorPtr inner;
    std::atomic<int> calls{0};
    explicit Counting(EvaluatorPtr e) : inner(std::move(e)) {}
    int total_blocks() const override { return inner->total_blocks(); }
    std::string metric_name() const override { return inner->metric_name(); }
    MetricScore score(const BlockSet& s) override {
        ++calls;
        return inner->score(s);
    }
};

std::shared_ptr<const ToyModel> toy(std::uint64_t seed, int L, std::vector<int> redundant = {}) {
    ToyModelSpec s;
    s.seed = seed;
    s.n_blocks = L;
    s.redundant_blocks = std::move(redundant);
    return std::make_shared<const ToyModel>(s);
}

}  // namespace

TEST_CASE("select_block") {
    CHECK(select_block({{0, 0.3}, {1, 0.1}, {2, 0.4}}) == 1);
    CHECK(select_block({{0, 0.0}, {3, 0.0}, {5, 0.2}}) == 3);
    CHECK(select_block({{4, -0.1}, {5, 0.0}}) == 4);
    CHECK(select_block({{2, 0.10}, {6, 0.11}}, 0.02) == 6);
    CHECK(select_block({{2, 0.10}, {6, 0.11}}) == 2);
    try {
        select_block({});
        FAIL("no throw");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::EmptyCandidates);
    }
}

TEST_CASE("delta is measured against the current set") {
    auto e = FunctionEvaluator::from_table(3, "top1", {{"0,1,2", 0.9}, {"0,2", 0.7}, {"0,1", 0.5}, {"1,2", 0.2}});
    CHECK(delta(*e, BlockSet::full(3), 1) == doctest::Approx(0.2));
    CHECK(delta(*e, BlockSet::full(3), 0) == doctest::Approx(0.7));
    CHECK_THROWS_AS(delta(*e, BlockSet(3, {0, 2}), 1), Error);
}

TEST_CASE("planted redundancy goes first, deepest first") {
    auto model = toy(42, 8, {5, 6});
    ToyEvaluator e(model, gen_calibration(*model, Task::single, 128, 1), "top1");
    SearchParams p;
    p.max_remove = 4;
    p.lambda = 1.0;
    const SkipConfig cfg = greedy_search(e, p, model->spec().to_string());
    REQUIRE(cfg.skipped.size() >= 2);
    CHECK(cfg.skipped[0] == 6);
    CHECK(cfg.skipped[1] == 5);
    CHECK(cfg.trace[0].candidate_deltas.at(6) == 0.0);
    CHECK(cfg.trace[1].candidate_deltas.at(5) == 0.0);
    CHECK(cfg.trace[1].score_after == 1.0);
    CHECK(cfg.full_score == 1.0);
    CHECK_NOTHROW(validate(cfg));
    CHECK(verify_trace(cfg));
    CHECK(oracle::replay(e, cfg) == std::nullopt);
}

TEST_CASE("budget and floor edges") {
    auto e = table_eval(5, 3);
    SearchParams p;
    p.max_remove = 0;
    const SkipConfig none = greedy_search(*e, p);
    CHECK(none.skipped.empty());
    CHECK(none.trace.empty());
    CHECK(none.final_score == none.full_score);

    p.max_remove = 5;
    p.lambda = 0.0;
    const SkipConfig all = greedy_search(*e, p);
    CHECK(all.skipped.size() == 5);
    CHECK(all.trace.size() == 5);
    CHECK(std::all_of(all.trace.begin(), all.trace.end(), [](const IterationRecord& r) { return r.accepted; }));
    CHECK(oracle::replay(*e, all) == std::nullopt);
    std::set<int> distinct(all.skipped.begin(), all.skipped.end());
    CHECK(distinct.size() == 5);

    p.lambda = 1.0;
    const SkipConfig strict = greedy_search(*e, p);
    CHECK(strict.final_score >= strict.full_score);
    if (!strict.trace.empty()) CHECK_FALSE(strict.trace.back().accepted);

    SearchParams bad;
    bad.lambda = 1.2;
    CHECK_THROWS_AS(greedy_search(*e, bad), Error);
    bad = {};
    bad.jobs = 0;
    CHECK_THROWS_AS(greedy_search(*e, bad), Error);
}

TEST_CASE("floor invariant over seeded searches") {
    int searches = 0;
    for (std::uint64_t seed = 0; seed < 17; ++seed)
        for (double lambda : {1.0, 0.9, 0.5}) {
            auto e = table_eval(6, seed, seed % 2 == 0);
            SearchParams p;
            p.max_remove = 6;
            p.lambda = lambda;
            const SkipConfig cfg = greedy_search(*e, p);
            ++searches;
            CAPTURE(seed);
            CAPTURE(lambda);
            for (std::size_t i = 0; i < cfg.trace.size(); ++i) {
                const IterationRecord& r = cfg.trace[i];
                CHECK(r.accepted == (r.score_after >= lambda * cfg.full_score));
                if (!r.accepted) CHECK(i + 1 == cfg.trace.size());
            }
            CHECK(oracle::replay(*e, cfg) == std::nullopt);
        }
    CHECK(searches >= 50);
}

TEST_CASE("cached greedy on six blocks with budget three stays within sixteen evaluations") {
    auto counting = std::make_shared<Counting>(table_eval(6, 9));
    auto c = cached(counting);
    SearchParams p;
    p.max_remove = 3;
    p.lambda = 0.0;
    const SkipConfig cfg = greedy_search(*c, p);
    CHECK(cfg.skipped.size() == 3);
    // 1 full-set score, then 6 + 5 + 4 candidates
    CHECK(counting->calls.load() <= 1 + 6 + 5 + 4);
}

TEST_CASE("parallel scoring gives identical traces") {
    auto model = toy(5, 6);
    auto data = gen_calibration(*model, Task::multi, 48, 4);
    auto run = [&](int jobs) {
        ToyEvaluator e(model, data, "set_precision");
        SearchParams p;
        p.max_remove = 5;
        p.lambda = 0.3;
        p.jobs = jobs;
        return serialize(greedy_search(e, p, "x"));
    };
    const std::string one = run(1);
    CHECK(run(4) == one);
    CHECK(run(16) == one);
}

TEST_CASE("evaluator failure aborts with the partial config") {
    auto inner = table_eval(4, 2);
    int calls = 0;
    FunctionEvaluator flaky(4, "top1", [&](const BlockSet& s) {
        if (++calls > 6) fail(ErrorCode::AdapterError, "scripted");
        return inner->score(s).value;
    });
    SearchParams p;
    p.max_remove = 4;
    p.lambda = 0.0;
    try {
        greedy_search(flaky, p);
        FAIL("no throw");
    } catch (const SearchAborted& e) {
        CHECK(e.code() == ErrorCode::AdapterError);
        CHECK(e.partial().skipped.size() == 1);
        CHECK(e.partial().trace.size() == 1);
    }
}

TEST_CASE("brute-force oracle on a tabulated two-block model") {
    auto e = FunctionEvaluator::from_table(2, "top1", {{"0,1", 1.0}, {"0", 0.5}, {"1", 0.5}, {"", 0.1}});
    const auto best = brute_force_oracle(*e);
    CHECK(best.at(2).score == 1.0);
    CHECK(best.at(1).score == 0.5);
    // tie between skipping [0] and [1]: the larger skipped list wins
    CHECK(best.at(1).retained.key() == "0");
    CHECK(best.at(0).score == 0.1);
    auto big = table_eval(3, 1);
    CHECK_THROWS_AS(brute_force_oracle(*big, 2), Error);
}

TEST_CASE("greedy never beats the per-cardinality optimum") {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto e = table_eval(7, seed);
        const auto best = brute_force_oracle(*e);
        SearchParams p;
        p.max_remove = 7;
        p.lambda = 0.0;
        const SkipConfig g = greedy_search(*e, p);
        for (std::size_t k = 1; k <= g.trace.size(); ++k)
            CHECK(best.at(7 - static_cast<int>(k)).score >= g.trace[k - 1].score_after);
    }
}

TEST_CASE("baseline strategies") {
    CHECK(BaselineStrategy::parse("fixed-interval:2").skipped(32).size() == 16);
    CHECK(BaselineStrategy::parse("fixed-interval:4").skipped(8) == std::vector<int>{3, 7});
    CHECK(BaselineStrategy::parse("forward:3").skipped(8) == std::vector<int>{0, 1, 2});
    CHECK(BaselineStrategy::parse("reverse:10").skipped(32).front() == 22);
    CHECK(format_fixed(sparsity_pct(BaselineStrategy::parse("reverse:10").skipped(32).size(), 32), 2) == "31.25");
    const auto r = BaselineStrategy::parse("random:8,seed=7");
    CHECK(r.skipped(32) == r.skipped(32));
    CHECK(r.skipped(32).size() == 8);
    const auto picked = r.skipped(32);
    CHECK(std::is_sorted(picked.begin(), picked.end()));
    CHECK_FALSE(r.skipped(32) == BaselineStrategy::parse("random:8,seed=8").skipped(32));
    CHECK(BaselineStrategy::parse(r.to_string()).skipped(32) == r.skipped(32));
    for (const char* bad : {"fixed-interval:0", "fixed-interval:1", "forward:x", "sideways:2", "random:3,sed=1", ""}) {
        CAPTURE(bad);
        CHECK_THROWS_AS(BaselineStrategy::parse(bad).skipped(8), Error);
    }
    CHECK_THROWS_AS(BaselineStrategy::parse("forward:9").skipped(8), Error);

    auto e = table_eval(6, 4);
    const SkipConfig cfg = baseline_search(*e, BaselineStrategy::parse("reverse:2"), "m");
    CHECK(cfg.skipped == std::vector<int>{4, 5});
    CHECK(cfg.lambda == 0.0);
    CHECK(cfg.max_remove == 2);
    CHECK(cfg.final_score == e->score(BlockSet(6, {0, 1, 2, 3})).value);
    CHECK_NOTHROW(validate(cfg));
}

TEST_CASE("deletion curves share their endpoints") {
    auto model = toy(8, 8);
    ToyEvaluator e(model, gen_calibration(*model, Task::single, 64, 3), "top1");
    const auto fwd = deletion_curve(e, DeletionOrder::forward);
    const auto rev = deletion_curve(e, DeletionOrder::reverse);
    REQUIRE(fwd.size() == 9);
    REQUIRE(rev.size() == 9);
    CHECK(fwd.front().score == rev.front().score);
    CHECK(fwd.back().score == rev.back().score);
    std::ostringstream csv;
    write_curve_csv(csv, DeletionOrder::forward, 8, fwd);
    write_curve_csv(csv, DeletionOrder::reverse, 8, rev, false);
    const std::string text = csv.str();
    CHECK(text.rfind("order,k,sparsity_pct,score\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 19);
}

TEST_CASE("trace csv") {
    auto e = table_eval(3, 1);
    SearchParams p;
    p.max_remove = 2;
    p.lambda = 0.0;
    const SkipConfig cfg = greedy_search(*e, p);
    std::ostringstream d, s;
    write_trace_deltas_csv(d, cfg);
    write_trace_steps_csv(s, cfg);
    const std::string deltas = d.str();
    CHECK(std::count(deltas.begin(), deltas.end(), '\n') == 1 + 3 + 2);
    CHECK(s.str().rfind("iteration,chosen,score_after,accepted\n1,", 0) == 0);
}
