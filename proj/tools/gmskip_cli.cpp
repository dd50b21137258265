#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "gmskip/bench.hpp"
#include "gmskip/calibration.hpp"
#include "gmskip/error.hpp"
#include "gmskip/evaluator.hpp"
#include "gmskip/search.hpp"
#include "gmskip/toy_model.hpp"

namespace fs = std::filesystem;
using namespace gmskip;

namespace {

constexpr int kExitValidation = 2;
constexpr int kExitAdapter = 3;

std::string g_command_line;

struct DatasetSpec {
    bool selfgen = false;
    Task task = Task::single;
    int n = 256;
    std::uint64_t seed = 1;
    std::string path;
};

DatasetSpec parse_dataset(const std::string& text) {
    DatasetSpec d;
    const std::string prefix = "selfgen:";
    if (text.rfind(prefix, 0) != 0) {
        d.path = text;
        return d;
    }
    d.selfgen = true;
    std::stringstream ss(text.substr(prefix.size()));
    std::string item;
    bool first = true;
    while (std::getline(ss, item, ',')) {
        if (first) {
            d.task = parse_task(item);
            first = false;
            continue;
        }
        const auto eq = item.find('=');
        if (eq == std::string::npos) fail(ErrorCode::InvalidArgument, "dataset option \"" + item + "\" is not key=value");
        const std::string key = item.substr(0, eq), val = item.substr(eq + 1);
        try {
            std::size_t used = 0;
            if (key == "n") {
                d.n = std::stoi(val, &used);
            } else if (key == "seed") {
                d.seed = std::stoull(val, &used);
            } else {
                fail(ErrorCode::InvalidArgument, "unknown dataset option \"" + key + "\"");
            }
            if (used != val.size()) throw std::invalid_argument(val);
        } catch (const std::logic_error&) {
            fail(ErrorCode::InvalidArgument, "bad value \"" + val + "\" for dataset option " + key);
        }
    }
    if (first) fail(ErrorCode::InvalidTask, "selfgen needs a task: single, multi or caption");
    if (d.n < 1) fail(ErrorCode::EmptyDataset, "selfgen n must be positive");
    return d;
}

// Everything a subcommand needs after the model and data flags are resolved.
struct Backend {
    std::string model_id;
    std::uint64_t seed = 0;
    std::shared_ptr<const ToyModel> toy;
    std::optional<CalibrationSet> data;
    EvaluatorPtr evaluator;
};

struct BackendFlags {
    std::string model;
    std::string dataset;
    std::string metric;
    double timeout_s = 600.0;
};

Backend open_backend(const BackendFlags& f, bool need_metric = true) {
    Backend b;
    const std::string ext = "external:";
    if (f.model.rfind(ext, 0) == 0) {
        const std::string command = f.model.substr(ext.size());
        if (command.empty()) fail(ErrorCode::InvalidArgument, "external: needs a command");
        ExternalEvaluator::Options opt;
        opt.expected_metric = f.metric;
        opt.timeout = std::chrono::milliseconds(static_cast<long long>(f.timeout_s * 1000.0));
        b.model_id = f.model;
        b.evaluator = cached(std::make_shared<ExternalEvaluator>(command, opt));
        return b;
    }
    if (f.model.rfind("toy:", 0) != 0)
        fail(ErrorCode::InvalidSpec, "--model must be toy:<spec> or external:<command>");
    const ToyModelSpec spec = ToyModelSpec::parse(f.model);
    b.model_id = spec.to_string();
    b.seed = spec.seed;
    auto model = std::make_shared<const ToyModel>(spec);
    b.toy = model;
    if (need_metric) MetricRegistry::builtin().lookup(f.metric);  // unknown names fail before any work

    if (f.dataset.empty()) {
        if (!need_metric) return b;
        fail(ErrorCode::InvalidArgument, "--dataset is required for toy models");
    }
    const DatasetSpec d = parse_dataset(f.dataset);
    b.data = d.selfgen ? gen_calibration(*model, d.task, d.n, d.seed) : read_jsonl_file(d.path);
    if (need_metric) b.evaluator = cached(std::make_shared<ToyEvaluator>(model, *b.data, f.metric));
    return b;
}

int default_jobs() {
    if (const char* env = std::getenv("GM_SKIP_JOBS")) {
        try {
            const int n = std::stoi(env);
            if (n >= 1) return n;
        } catch (const std::logic_error&) {
        }
        std::cerr << "warning: ignoring GM_SKIP_JOBS=" << env << '\n';
    }
    return 1;
}

std::string utc_timestamp() {
    const std::time_t now = std::time(nullptr);
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ostringstream out;
    out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
    return out.str();
}

// Collects output files and writes the manifest after all of them.
class Outputs {
public:
    Outputs(const std::string& out_dir, const std::string& out) {
        fs::path p(out);
        if (p.is_relative()) p = fs::path(out_dir) / p;
        if (p.has_parent_path()) fs::create_directories(p.parent_path());
        main_ = p;
        stem_ = p;
        stem_.replace_extension();
    }

    const fs::path& main() const { return main_; }
    fs::path sibling(const std::string& suffix) const { return fs::path(stem_.string() + suffix); }

    void write(const fs::path& path, const std::string& text) {
        std::ofstream f(path, std::ios::binary);
        f << text;
        if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
        artifacts_.push_back(path.string());
    }

    void manifest(std::uint64_t seed) {
        nlohmann::ordered_json j;
        j["command_line"] = g_command_line;
        j["seed"] = seed;
        j["timestamp"] = utc_timestamp();
        j["artifacts"] = artifacts_;
        const fs::path path = sibling(".manifest.json");
        std::ofstream f(path, std::ios::binary);
        f << j.dump(2) << '\n';
        if (!f) fail(ErrorCode::IoError, "cannot write " + path.string());
    }

private:
    fs::path main_;
    fs::path stem_;
    std::vector<std::string> artifacts_;
};

std::string read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(ErrorCode::IoError, "cannot open " + path);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

std::string list(const std::vector<BlockIndex>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? " " : "") + std::to_string(v[i]);
    return s + "]";
}

void write_search_outputs(Outputs& out, const SkipConfig& cfg, const fs::path& json_path) {
    out.write(json_path, serialize(cfg));
    std::ostringstream deltas, steps;
    write_trace_deltas_csv(deltas, cfg);
    write_trace_steps_csv(steps, cfg);
    out.write(out.sibling(".deltas.csv"), deltas.str());
    out.write(out.sibling(".steps.csv"), steps.str());
}

// ---------------------------------------------------------------------------

struct SearchFlags {
    BackendFlags backend;
    std::optional<double> lambda;
    std::string preset;
    std::optional<int> max_remove;
    double tie_tolerance = 0.0;
    int jobs = 1;
    std::string out = "config.json";
    std::string out_dir = ".";
};

int run_search(const SearchFlags& f) {
    double lambda = 1.0;
    if (f.lambda && !f.preset.empty()) fail(ErrorCode::InvalidArgument, "--lambda and --preset are exclusive");
    if (f.lambda) {
        lambda = *f.lambda;
    } else if (f.preset == "high-perf") {
        lambda = 1.0;
    } else if (f.preset == "high-sparsity") {
        lambda = 0.5;
    } else if (f.preset.empty()) {
        fail(ErrorCode::InvalidArgument, "one of --lambda or --preset is required");
    } else {
        fail(ErrorCode::InvalidArgument, "unknown preset \"" + f.preset + "\" (high-perf, high-sparsity)");
    }

    Backend b = open_backend(f.backend);
    SearchParams p;
    p.lambda = lambda;
    p.max_remove = f.max_remove ? *f.max_remove : b.evaluator->total_blocks() - 1;
    p.tie_tolerance = f.tie_tolerance;
    p.jobs = f.jobs;

    Outputs out(f.out_dir, f.out);
    try {
        const SkipConfig cfg = greedy_search(*b.evaluator, p, b.model_id);
        write_search_outputs(out, cfg, out.main());
        out.manifest(b.seed);
        std::cout << "skipped " << list(cfg.skipped) << " of " << cfg.total_blocks << " blocks ("
                  << format_fixed(sparsity_pct(cfg.skipped.size(), cfg.total_blocks), 2) << "% sparsity), "
                  << cfg.metric << ' ' << format_real(cfg.full_score) << " -> " << format_real(cfg.final_score)
                  << '\n';
    } catch (const SearchAborted& e) {
        // Keep what was decided; the partial config is still a valid one.
        write_search_outputs(out, e.partial(), out.sibling(".partial.json"));
        out.manifest(b.seed);
        throw;
    }
    return 0;
}

// ---------------------------------------------------------------------------

struct OracleFlags {
    BackendFlags backend;
    bool force = false;
    int jobs = 1;
    std::string out = "oracle.csv";
    std::string out_dir = ".";
};

int run_oracle(const OracleFlags& f) {
    Backend b = open_backend(f.backend);
    const int total = b.evaluator->total_blocks();
    if (total > 12 && !f.force)
        fail(ErrorCode::TooManyBlocks, std::to_string(total) + " blocks need 2^" + std::to_string(total) +
                                           " evaluations; pass --force to run anyway");
    const auto best = brute_force_oracle(*b.evaluator, f.force ? 30 : 12);

    SearchParams p;
    p.lambda = 0.0;
    p.max_remove = total;
    p.jobs = f.jobs;
    const SkipConfig greedy = greedy_search(*b.evaluator, p, b.model_id);

    std::ostringstream csv;
    csv << "k_skipped,sparsity_pct,oracle_score,oracle_skipped,greedy_score,greedy_skipped,gap\n";
    double worst = 0.0;
    for (int k = 0; k <= total; ++k) {
        const OracleEntry& o = best.at(total - k);
        std::vector<BlockIndex> gskip(greedy.skipped.begin(), greedy.skipped.begin() + k);
        const double g = k == 0 ? greedy.full_score : greedy.trace[static_cast<std::size_t>(k - 1)].score_after;
        const double gap = o.score - g;
        worst = std::max(worst, gap);
        csv << k << ',' << format_fixed(sparsity_pct(static_cast<std::size_t>(k), total), 2) << ','
            << format_real(o.score) << ',' << list(o.retained.skipped()) << ',' << format_real(g) << ','
            << list(gskip) << ',' << format_real(gap) << '\n';
    }
    Outputs out(f.out_dir, f.out);
    out.write(out.main(), csv.str());
    out.manifest(b.seed);
    std::cout << "largest oracle-greedy gap: " << format_real(worst) << '\n';
    return 0;
}

// ---------------------------------------------------------------------------

struct BaselineFlags {
    BackendFlags backend;
    std::vector<std::string> strategies;
    int reps = 10;
    int warmup = 1;
    std::string out = "baseline.csv";
    std::string out_dir = ".";
};

std::vector<TokenSequence> inputs_of(const CalibrationSet& data) {
    std::vector<TokenSequence> in;
    for (const Example& e : data.examples) in.push_back(e.tokens);
    return in;
}

int run_baseline(const BaselineFlags& f) {
    std::vector<DeletionOrder> curves;
    std::vector<BaselineStrategy> fixed;
    const std::string curve = "deletion-curve";
    for (const std::string& s : f.strategies) {
        if (s == curve) {
            curves.push_back(DeletionOrder::forward);
            curves.push_back(DeletionOrder::reverse);
        } else if (s.rfind(curve + ":", 0) == 0) {
            curves.push_back(parse_deletion_order(s.substr(curve.size() + 1)));
        } else {
            fixed.push_back(BaselineStrategy::parse(s));
        }
    }
    if (!curves.empty() && !fixed.empty())
        fail(ErrorCode::InvalidStrategy, "deletion curves and fixed strategies go to separate runs");

    Backend b = open_backend(f.backend);
    const int total = b.evaluator->total_blocks();
    Outputs out(f.out_dir, f.out);

    if (!curves.empty()) {
        std::ostringstream csv;
        std::vector<double> means;
        for (std::size_t i = 0; i < curves.size(); ++i) {
            const auto pts = deletion_curve(*b.evaluator, curves[i]);
            write_curve_csv(csv, curves[i], total, pts, i == 0);
            double sum = 0.0;
            for (const CurvePoint& p : pts) sum += p.score;
            means.push_back(sum / static_cast<double>(pts.size()));
            std::cout << to_string(curves[i]) << " curve: mean score " << format_fixed(means.back(), 4) << '\n';
        }
        out.write(out.main(), csv.str());
        out.manifest(b.seed);
        return 0;
    }

    std::vector<ReportRow> rows;
    std::vector<TokenSequence> inputs;
    if (b.toy && b.data) inputs = inputs_of(*b.data);
    for (const BaselineStrategy& s : fixed) {
        const SkipConfig cfg = baseline_search(*b.evaluator, s, b.model_id);
        ReportRow r;
        r.method = s.to_string();
        r.score = cfg.final_score;
        r.sparsity_pct = sparsity_pct(cfg.skipped.size(), total);
        if (!inputs.empty()) r.latency = measure_latency(*b.toy, inputs, cfg.retained(), f.reps, f.warmup);
        rows.push_back(r);
        std::cout << r.method << ": skipped " << list(cfg.skipped) << ", " << cfg.metric << ' '
                  << format_real(cfg.final_score) << ", sparsity " << format_fixed(r.sparsity_pct, 2) << "%\n";
    }
    out.write(out.main(), build_report(rows, ReportFormat::csv));
    out.manifest(b.seed);
    return 0;
}

// ---------------------------------------------------------------------------

struct BenchFlags {
    BackendFlags backend;
    std::string config;
    std::string from_csv;
    int reps = 100;
    int warmup = 5;
    int inputs = 16;
    std::string format = "table";
    std::string out;
};

int run_bench(const BenchFlags& f) {
    const ReportFormat format = parse_report_format(f.format);
    std::ostream& notes = format == ReportFormat::table ? std::cout : std::cerr;
    std::vector<ReportRow> rows;
    std::vector<std::pair<std::string, double>> reductions;

    if (!f.from_csv.empty()) {
        rows = parse_report_csv(read_file(f.from_csv));
        // Each row is compared with the closest preceding zero-sparsity row.
        const ReportRow* base = nullptr;
        for (const ReportRow& r : rows) {
            if (r.sparsity_pct == 0.0) {
                base = &r;
                continue;
            }
            if (!base) fail(ErrorCode::ZeroBaseline, "row \"" + r.method + "\" has no full-layer row before it");
            reductions.emplace_back(r.method + " vs " + base->method, compare_latency(base->latency, r.latency));
        }
    } else {
        if (f.config.empty()) fail(ErrorCode::InvalidArgument, "--config or --from-csv is required");
        const SkipConfig cfg = deserialize(read_file(f.config));
        BackendFlags bf = f.backend;
        if (bf.model.empty()) bf.model = cfg.model_id;
        if (bf.model.rfind("toy:", 0) != 0) fail(ErrorCode::InvalidSpec, "bench times toy models only");
        Backend b = open_backend(bf, false);
        if (b.toy->n_blocks() != cfg.total_blocks)
            fail(ErrorCode::BlockCountMismatch, "config has " + std::to_string(cfg.total_blocks) +
                                                    " blocks, model has " + std::to_string(b.toy->n_blocks()));
        std::vector<TokenSequence> inputs;
        if (b.data) {
            inputs = inputs_of(*b.data);
        } else {
            inputs = inputs_of(gen_calibration(*b.toy, Task::single, f.inputs, 1));
        }
        const BlockSet full = BlockSet::full(cfg.total_blocks);
        ReportRow base{"full-layer", cfg.full_score, 0.0,
                       measure_latency(*b.toy, inputs, full, f.reps, f.warmup)};
        // An empty skip list runs exactly the full-layer pass; timing it twice would only measure noise.
        ReportRow skip{fs::path(f.config).stem().string(), cfg.final_score,
                       sparsity_pct(cfg.skipped.size(), cfg.total_blocks),
                       cfg.skipped.empty() ? base.latency
                                           : measure_latency(*b.toy, inputs, cfg.retained(), f.reps, f.warmup)};
        reductions.emplace_back(skip.method + " vs full-layer", compare_latency(base.latency, skip.latency));
        const double ops_cut = 100.0 * (static_cast<double>(base.latency.ops) - static_cast<double>(skip.latency.ops)) /
                               static_cast<double>(base.latency.ops);
        rows = {base, skip};
        notes << "op-count reduction: " << format_fixed(ops_cut, 2) << "%\n";
    }

    const std::string report = build_report(rows, format);
    if (f.out.empty()) {
        std::cout << report;
    } else {
        std::ofstream o(f.out, std::ios::binary);
        o << report;
        if (!o) fail(ErrorCode::IoError, "cannot write " + f.out);
    }
    for (const auto& [what, pct] : reductions)
        notes << "latency reduction " << what << ": " << format_fixed(pct, 1) << "% (" << format_fixed(pct, 2)
              << ")\n";
    return 0;
}

void add_backend(CLI::App* cmd, BackendFlags& f, bool metric_required) {
    cmd->add_option("--model", f.model, "toy:<spec> or external:<command>")->required();
    cmd->add_option("--dataset", f.dataset, "path.jsonl or selfgen:<task>,n=<int>[,seed=<int>]");
    auto* m = cmd->add_option("--metric", f.metric, "top1, set_precision or cider");
    if (metric_required) m->required();
    cmd->add_option("--timeout", f.timeout_s, "seconds to wait for each adapter response")
        ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
    for (int i = 0; i < argc; ++i) g_command_line += (i ? " " : "") + std::string(argv[i]);

    CLI::App app{"Greedy metric-guided transformer block skipping"};
    app.require_subcommand(1);

    SearchFlags sf;
    sf.jobs = default_jobs();
    auto* search = app.add_subcommand("search", "greedy skip-set search");
    add_backend(search, sf.backend, true);
    search->add_option("--lambda", sf.lambda, "score floor as a fraction of the full model");
    search->add_option("--preset", sf.preset, "high-perf (lambda 1.0) or high-sparsity (lambda 0.5)");
    search->add_option("--max-remove", sf.max_remove, "removal budget K (default L-1)");
    search->add_option("--tie-tolerance", sf.tie_tolerance, "deltas this close to the minimum count as tied");
    search->add_option("--jobs", sf.jobs, "parallel candidate evaluations (default $GM_SKIP_JOBS or 1)");
    search->add_option("--out", sf.out, "config path, relative to --out-dir");
    search->add_option("--out-dir", sf.out_dir, "directory for all outputs");

    OracleFlags of;
    of.jobs = default_jobs();
    auto* oracle = app.add_subcommand("oracle", "exhaustive per-cardinality optimum against greedy");
    add_backend(oracle, of.backend, true);
    oracle->add_flag("--force", of.force, "allow more than 12 blocks");
    oracle->add_option("--jobs", of.jobs, "parallel candidate evaluations for the greedy run");
    oracle->add_option("--out", of.out, "CSV path, relative to --out-dir");
    oracle->add_option("--out-dir", of.out_dir, "directory for all outputs");

    BaselineFlags bf;
    auto* baseline = app.add_subcommand("baseline", "feedback-free skip strategies and deletion curves");
    add_backend(baseline, bf.backend, true);
    baseline
        ->add_option("--strategy", bf.strategies,
                     "fixed-interval:n, forward:k, reverse:k, random:k,seed=s, deletion-curve[:forward|:reverse]")
        ->required()
        ->delimiter(';');
    baseline->add_option("--reps", bf.reps, "timed passes per strategy")->check(CLI::PositiveNumber);
    baseline->add_option("--warmup", bf.warmup, "untimed passes per strategy")->check(CLI::NonNegativeNumber);
    baseline->add_option("--out", bf.out, "CSV path, relative to --out-dir");
    baseline->add_option("--out-dir", bf.out_dir, "directory for all outputs");

    BenchFlags bn;
    auto* bench = app.add_subcommand("bench", "latency of full-layer against a skip config");
    bench->add_option("--config", bn.config, "SkipConfig JSON written by search");
    bench->add_option("--from-csv", bn.from_csv, "report CSV with published latencies");
    bench->add_option("--model", bn.backend.model, "toy:<spec> (default: the config's model_id)");
    bench->add_option("--dataset", bn.backend.dataset, "inputs to time (default: 16 random sequences)");
    bench->add_option("--inputs", bn.inputs, "number of random sequences without --dataset")
        ->check(CLI::PositiveNumber);
    bench->add_option("--reps", bn.reps, "timed passes")->check(CLI::PositiveNumber);
    bench->add_option("--warmup", bn.warmup, "untimed passes")->check(CLI::NonNegativeNumber);
    bench->add_option("--format", bn.format, "table, csv or json");
    bench->add_option("--out", bn.out, "write the report here instead of stdout");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitValidation;
    }

    try {
        if (*search) return run_search(sf);
        if (*oracle) return run_oracle(of);
        if (*baseline) return run_baseline(bf);
        if (*bench) return run_bench(bn);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return is_adapter_failure(e.code()) ? kExitAdapter : kExitValidation;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitValidation;
    }
    return kExitValidation;
}
