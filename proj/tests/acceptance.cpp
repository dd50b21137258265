// End-to-end acceptance run. One PASS/FAIL line per criterion; exit status is
// nonzero if any gating criterion fails. Timing in criterion 10 is reported only.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>

#include "gmskip/bench.hpp"
#include "gmskip/search.hpp"
#include "oracles/cider_oracle.hpp"
#include "oracles/step_oracle.hpp"
#include "support.hpp"

using namespace gmskip;

namespace {

int failures = 0;

void report(int n, const std::string& name, const std::function<std::string()>& check) {
    const auto t0 = std::chrono::steady_clock::now();
    std::string why;
    try {
        why = check();
    } catch (const std::exception& e) {
        why = std::string("exception: ") + e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (!why.empty()) ++failures;
    std::printf("%s %2d %s (%.2fs)%s%s\n", why.empty() ? "PASS" : "FAIL", n, name.c_str(), secs,
                why.empty() ? "" : ": ", why.c_str());
    std::fflush(stdout);
}

std::shared_ptr<const ToyModel> toy(std::uint64_t seed, int L, int d, std::vector<int> redundant = {}) {
    ToyModelSpec s;
    s.seed = seed;
    s.n_blocks = L;
    s.dim = d;
    s.redundant_blocks = std::move(redundant);
    return std::make_shared<const ToyModel>(s);
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

std::string algorithm_fidelity() {
    auto model = toy(7, 8, 32);
    const auto data = gen_calibration(*model, Task::single, 128, 2);
    ToyEvaluator e(model, data, "top1");
    SearchParams p;
    p.max_remove = 8;
    p.lambda = 0.0;
    const SkipConfig cfg = greedy_search(e, p, model->spec().to_string());
    if (cfg.trace.size() != 8) return "expected 8 iterations, got " + std::to_string(cfg.trace.size());
    ToyEvaluator fresh(model, data, "top1");
    if (auto m = oracle::replay(fresh, cfg)) return "iteration " + std::to_string(m->iteration) + ": " + m->what;
    return {};
}

std::string planted_redundancy() {
    auto model = toy(42, 8, 32, {5, 6});
    ToyEvaluator e(model, gen_calibration(*model, Task::single, 256, 1), "top1");
    SearchParams p;
    p.max_remove = 7;
    p.lambda = 1.0;
    const SkipConfig cfg = greedy_search(e, p, model->spec().to_string());
    if (cfg.skipped.size() < 2 || cfg.skipped[0] != 6 || cfg.skipped[1] != 5) return "first removals not 6, 5";
    if (cfg.full_score != 1.0) return "full score " + format_real(cfg.full_score);
    for (int i = 0; i < 2; ++i) {
        const IterationRecord& r = cfg.trace[static_cast<std::size_t>(i)];
        if (r.candidate_deltas.at(r.chosen) != 0.0) return "nonzero delta on a planted block";
        if (r.score_after != 1.0) return "score after planted removal " + format_real(r.score_after);
    }
    return {};
}

std::string floor_invariant() {
    int searches = 0;
    for (std::uint64_t seed = 100; searches < 51; ++seed)
        for (double lambda : {1.0, 0.9, 0.5}) {
            auto model = toy(seed, 6, 16);
            const Task task = seed % 2 ? Task::single : Task::multi;
            ToyEvaluator e(model, gen_calibration(*model, task, 32, seed), task == Task::single ? "top1" : "set_precision");
            SearchParams p;
            p.max_remove = 6;
            p.lambda = lambda;
            const SkipConfig cfg = greedy_search(e, p);
            ++searches;
            for (std::size_t i = 0; i < cfg.trace.size(); ++i) {
                const IterationRecord& r = cfg.trace[i];
                if (r.accepted != (r.score_after >= lambda * cfg.full_score))
                    return "seed " + std::to_string(seed) + ": accept flag disagrees with the floor";
                if (!r.accepted && i + 1 != cfg.trace.size())
                    return "seed " + std::to_string(seed) + ": search continued after a rejection";
            }
            if (cfg.skipped.size() != static_cast<std::size_t>(std::count_if(
                                          cfg.trace.begin(), cfg.trace.end(),
                                          [](const IterationRecord& r) { return r.accepted; })))
                return "seed " + std::to_string(seed) + ": skipped list does not match accepted steps";
        }
    return {};
}

std::string sparsity_arithmetic() {
    const std::pair<int, const char*> cases[] = {{11, "34.38"}, {16, "50.00"}, {10, "31.25"}};
    for (auto [k, want] : cases) {
        const std::string got = format_fixed(sparsity_pct(static_cast<std::size_t>(k), 32), 2);
        if (got != want) return std::to_string(k) + "/32 gave " + got;
    }
    return {};
}

std::string latency_arithmetic() {
    struct Pair {
        double full, skip, want;
    };
    for (const Pair& c : {Pair{0.6006, 0.3280, 45.4}, Pair{1.4265, 1.0170, 28.7}, Pair{1.1293, 0.7106, 37.1}}) {
        LatencyStats a, b;
        a.median_s = c.full;
        b.median_s = c.skip;
        const double got = compare_latency(a, b);
        if (std::abs(got - c.want) >= 0.1) return format_fixed(got, 2) + " vs " + format_fixed(c.want, 1);
    }
    return {};
}

std::string cider_golden() {
    const std::vector<ReferenceSet> refs{{tokenize("a man riding a horse")}, {tokenize("two dogs play")}};
    const double w = std::log(1.5) + 1.0, u = std::log(3.0) + 1.0;
    const double c1 = 3.0 * w / (std::sqrt(7.0) * std::sqrt(2 * w * w + u * u));
    const double c2 = w / (2.0 * std::sqrt(w * w + u * u));
    const double want = (10.0 / 4.0 * (c1 + c2) + 7.5) / 2.0;
    const double got = cider({tokenize("a man walking"), tokenize("two dogs play")}, refs).value;
    if (std::abs(got - want) >= 1e-9) return "golden " + format_real(got) + " vs " + format_real(want);

    std::mt19937 rng(77);
    const std::vector<std::string> words{"a", "b", "c", "d", "e", "f"};
    auto sentence = [&](int lo) {
        std::uniform_int_distribution<int> len(lo, 8), pick(0, static_cast<int>(words.size()) - 1);
        std::vector<std::string> t;
        for (int i = len(rng); i > 0; --i) t.push_back(words[static_cast<std::size_t>(pick(rng))]);
        return t;
    };
    for (int trial = 0; trial < 20; ++trial) {
        std::uniform_int_distribution<int> n_ex(1, 5), n_ref(1, 3);
        std::vector<ReferenceSet> r;
        std::vector<Caption> cands;
        std::vector<std::vector<std::vector<std::string>>> o_refs;
        std::vector<std::vector<std::string>> o_cands;
        for (int i = n_ex(rng); i > 0; --i) {
            ReferenceSet set;
            std::vector<std::vector<std::string>> o_set;
            for (int j = n_ref(rng); j > 0; --j) {
                o_set.push_back(sentence(1));
                set.push_back(Caption{o_set.back()});
            }
            r.push_back(set);
            o_refs.push_back(o_set);
            o_cands.push_back(sentence(0));
            cands.push_back(Caption{o_cands.back()});
        }
        const double a = cider(cands, r).value, b = oracle::cider(o_cands, o_refs);
        if (std::abs(a - b) >= 1e-9) return "random corpus " + std::to_string(trial) + " differs";
    }
    return {};
}

std::string deletion_curve_endpoints(const support::fs::path& dir) {
    const auto r = support::run(support::quote(GMSKIP_CLI) +
                                " baseline --model toy:seed=8,L=8 --dataset selfgen:single,n=64 --metric top1"
                                " --strategy deletion-curve --out curve.csv --out-dir " +
                                support::quote(dir.string()));
    if (r.code != 0) return "exit " + std::to_string(r.code) + ": " + r.output;
    std::istringstream in(support::slurp(dir / "curve.csv"));
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::map<int, std::string>> curves;
    int rows = 0;
    while (std::getline(in, line)) {
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string x; std::getline(ss, x, ',');) f.push_back(x);
        if (f.size() != 4) return "bad row " + line;
        curves[f[0]][std::stoi(f[1])] = f[3];
        ++rows;
    }
    if (rows != 18 || curves["forward"].size() != 9 || curves["reverse"].size() != 9) return "expected 9 rows per order";
    if (curves["forward"][0] != curves["reverse"][0]) return "k=0 endpoints differ";
    if (curves["forward"][8] != curves["reverse"][8]) return "k=L endpoints differ";
    double fwd = 0, rev = 0;
    for (int k = 0; k <= 8; ++k) {
        fwd += std::stod(curves["forward"][k]);
        rev += std::stod(curves["reverse"][k]);
    }
    std::printf("     info: mean curve score forward %.4f reverse %.4f\n", fwd / 9, rev / 9);
    return {};
}

std::string cache_contract(const support::fs::path& dir) {
    auto model = toy(5, 6, 32);
    const auto data = gen_calibration(*model, Task::single, 64, 3);
    auto counting = std::make_shared<Counting>(std::make_shared<ToyEvaluator>(model, data, "top1"));
    auto c = std::make_shared<CachedEvaluator>(counting);
    SearchParams p;
    p.max_remove = 3;
    p.lambda = 0.0;
    const SkipConfig cfg = greedy_search(*c, p);
    if (counting->calls.load() > 16) return std::to_string(counting->calls.load()) + " underlying calls";
    ToyEvaluator plain(model, data, "top1");
    for (std::uint64_t mask = 0; mask < 64; ++mask) {
        std::vector<int> kept;
        for (int b = 0; b < 6; ++b)
            if (mask >> b & 1) kept.push_back(b);
        const BlockSet s(6, kept);
        if (!(c->score(s) == plain.score(s))) return "cached score differs on {" + s.key() + "}";
    }

    const std::string args = support::quote(GMSKIP_CLI) +
                             " search --model toy:seed=5,L=8 --dataset selfgen:single,n=64 --metric top1"
                             " --lambda 0.5 --out c.json --out-dir ";
    const auto seq = dir / "seq", par = dir / "par";
    if (support::run(args + support::quote(seq.string()) + " --jobs 1").code != 0) return "sequential run failed";
    if (support::run(args + support::quote(par.string()) + " --jobs 4").code != 0) return "parallel run failed";
    for (const char* f : {"c.json", "c.deltas.csv", "c.steps.csv"})
        if (support::slurp(seq / f) != support::slurp(par / f)) return std::string(f) + " differs between --jobs 1 and 4";
    return {};
}

std::string wire_protocol(const support::fs::path& dir) {
    const auto table = support::synthetic_table(6, 31);
    support::write_table(dir / "t.json", 6, "top1", table);
    const std::string adapter = support::quote(GMSKIP_STUB_ADAPTER) + " " + support::quote((dir / "t.json").string());
    const std::string model = "external:" + adapter;
    const auto r = support::run(support::quote(GMSKIP_CLI) + " search --model " + support::quote(model) +
                                " --metric top1 --lambda 0.6 --max-remove 5 --out ext.json --out-dir " +
                                support::quote(dir.string()));
    if (r.code != 0) return "stub search exit " + std::to_string(r.code) + ": " + r.output;

    auto local = FunctionEvaluator::from_table(6, "top1", table);
    SearchParams p;
    p.max_remove = 5;
    p.lambda = 0.6;
    const SkipConfig want = greedy_search(*local, p, model);
    const SkipConfig got = deserialize(support::slurp(dir / "ext.json"));
    if (!(got == want)) return "SkipConfig differs from the in-process search";

    const auto bad = support::run(support::quote(GMSKIP_CLI) + " search --model " +
                                  support::quote(model + " malformed 2") +
                                  " --metric top1 --lambda 0.6 --out bad.json --out-dir " + support::quote(dir.string()));
    if (bad.code != 3) return "malformed adapter exit " + std::to_string(bad.code);
    return {};
}

std::string efficiency_signal() {
    ToyModelSpec spec;
    spec.n_blocks = 8;
    const ToyModel m(spec);
    std::vector<TokenSequence> inputs;
    for (int i = 0; i < 8; ++i) {
        TokenSequence t;
        for (int j = 0; j < 12; ++j) t.push_back((i * 7 + j * 3) % (spec.vocab - 1) + 1);
        inputs.push_back(t);
    }
    std::vector<std::uint64_t> ops;
    std::vector<double> medians;
    for (int skipped = 0; skipped <= 8; ++skipped) {
        std::vector<int> kept;
        for (int b = 0; b < 8 - skipped; ++b) kept.push_back(b);
        const LatencyStats s = measure_latency(m, inputs, BlockSet(8, kept), 30, 2);
        std::uint64_t closed = 0;
        for (const auto& t : inputs) closed += ToyModel::forward_macs(spec, static_cast<int>(t.size()), 8 - skipped);
        if (s.ops != closed) return "measured ops differ from the closed form at " + std::to_string(skipped);
        ops.push_back(s.ops);
        medians.push_back(s.median_s);
    }
    const std::uint64_t step = ops[0] - ops[1];
    for (std::size_t i = 1; i < ops.size(); ++i)
        if (!(ops[i] < ops[i - 1]) || ops[i - 1] - ops[i] != step) return "op count not strictly linear";

    int slower = 0;
    for (std::size_t i = 1; i < medians.size(); ++i)
        if (medians[i] > medians[i - 1] * 1.05) ++slower;
    std::printf("     info: median wall-clock %.3g ms (0 skipped) .. %.3g ms (8 skipped), %d of 8 steps slower by >5%%\n",
                medians.front() * 1e3, medians.back() * 1e3, slower);
    return {};
}

}  // namespace

int main() {
    const auto dir = support::scratch_dir("acceptance");
    report(1, "algorithm fidelity vs uncached single-step argmin", algorithm_fidelity);
    report(2, "planted redundancy removed 6 then 5 at full score", planted_redundancy);
    report(3, "lambda floor invariant over 51 seeded searches", floor_invariant);
    report(4, "sparsity arithmetic 34.38 / 50.00 / 31.25", sparsity_arithmetic);
    report(5, "latency reduction 45.4 / 28.7 / 37.1", latency_arithmetic);
    report(6, "cider golden corpus and 20 random corpora", cider_golden);
    report(7, "deletion curve endpoints coincide", [&] { return deletion_curve_endpoints(dir / "curve"); });
    report(8, "cache equivalence, call bound, jobs determinism", [&] { return cache_contract(dir / "cache"); });
    report(9, "stub adapter matches in-process search; malformed exits 3", [&] { return wire_protocol(dir); });
    report(10, "op count strictly linear in skipped blocks", efficiency_signal);
    support::fs::remove_all(dir);
    std::printf("%d of 10 criteria failed\n", failures);
    return failures ? 1 : 0;
}
