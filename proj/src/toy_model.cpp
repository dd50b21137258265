#include "gmskip/toy_model.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "gmskip/error.hpp"
#include "gmskip/splitmix.hpp"

namespace gmskip {

// ---------------------------------------------------------------------------
// spec

void ToyModelSpec::validate() const {
    auto bad = [](const std::string& m) { fail(ErrorCode::InvalidSpec, m); };
    if (n_blocks < 1) bad("L must be at least 1");
    if (dim < 1) bad("d must be positive");
    if (n_heads < 1 || dim % n_heads != 0) bad("heads must divide d");
    if (vocab < 2) bad("vocab must be at least 2");
    if (max_len < 1) bad("max_len must be positive");
    for (BlockIndex b : redundant_blocks)
        if (b < 0 || b >= n_blocks) bad("redundant block " + std::to_string(b) + " outside [0, L)");
}

std::string ToyModelSpec::to_string() const {
    std::string s = "toy:seed=" + std::to_string(seed) + ",L=" + std::to_string(n_blocks) + ",d=" +
                    std::to_string(dim) + ",heads=" + std::to_string(n_heads) + ",vocab=" + std::to_string(vocab) +
                    ",max_len=" + std::to_string(max_len);
    if (!redundant_blocks.empty()) {
        s += ",redundant=";
        for (std::size_t i = 0; i < redundant_blocks.size(); ++i) {
            if (i) s += ';';
            s += std::to_string(redundant_blocks[i]);
        }
    }
    return s;
}

namespace {

template <class T>
T parse_number(std::string_view text, std::string_view key) {
    T value{};
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        fail(ErrorCode::InvalidSpec, "bad value \"" + std::string(text) + "\" for " + std::string(key));
    return value;
}

}  // namespace

ToyModelSpec ToyModelSpec::parse(std::string_view text) {
    constexpr std::string_view prefix = "toy:";
    if (text.substr(0, prefix.size()) != prefix)
        fail(ErrorCode::InvalidSpec, "toy model string must start with \"toy:\"");
    text.remove_prefix(prefix.size());
    ToyModelSpec spec;
    while (!text.empty()) {
        const std::size_t comma = text.find(',');
        std::string_view item = text.substr(0, comma);
        text = comma == std::string_view::npos ? std::string_view{} : text.substr(comma + 1);
        if (item.empty()) continue;
        const std::size_t eq = item.find('=');
        if (eq == std::string_view::npos) fail(ErrorCode::InvalidSpec, "expected key=value, got " + std::string(item));
        const std::string_view key = item.substr(0, eq);
        std::string_view val = item.substr(eq + 1);
        if (key == "seed") {
            spec.seed = parse_number<std::uint64_t>(val, key);
        } else if (key == "L") {
            spec.n_blocks = parse_number<int>(val, key);
        } else if (key == "d") {
            spec.dim = parse_number<int>(val, key);
        } else if (key == "heads") {
            spec.n_heads = parse_number<int>(val, key);
        } else if (key == "vocab") {
            spec.vocab = parse_number<int>(val, key);
        } else if (key == "max_len") {
            spec.max_len = parse_number<int>(val, key);
        } else if (key == "redundant") {
            spec.redundant_blocks.clear();
            while (!val.empty()) {
                const std::size_t semi = val.find(';');
                std::string_view idx = val.substr(0, semi);
                val = semi == std::string_view::npos ? std::string_view{} : val.substr(semi + 1);
                if (!idx.empty()) spec.redundant_blocks.push_back(parse_number<int>(idx, key));
            }
        } else {
            fail(ErrorCode::InvalidSpec, "unknown key \"" + std::string(key) + "\"");
        }
    }
    spec.validate();
    return spec;
}

// ---------------------------------------------------------------------------
// numerics

namespace {

constexpr double kNormEps = 1e-5;

Matrix draw(SplitMix64& rng, int rows, int cols, double scale) {
    Matrix m(rows, cols);
    for (double& v : m.data) v = rng.next_signed_unit() * scale;
    return m;
}

void count(OpCounter* ops, std::uint64_t n) {
    if (ops) ops->macs += n;
}

Matrix matmul(const Matrix& a, const Matrix& b, OpCounter* ops) {
    Matrix out(a.rows, b.cols);
    for (int i = 0; i < a.rows; ++i) {
        double* o = out.row(i);
        const double* ar = a.row(i);
        for (int k = 0; k < a.cols; ++k) {
            const double av = ar[k];
            const double* br = b.row(k);
            for (int j = 0; j < b.cols; ++j) o[j] += av * br[j];
        }
    }
    count(ops, static_cast<std::uint64_t>(a.rows) * a.cols * b.cols);
    return out;
}

Matrix layer_norm(const Matrix& x) {
    Matrix out(x.rows, x.cols);
    for (int i = 0; i < x.rows; ++i) {
        const double* r = x.row(i);
        double mean = 0.0;
        for (int j = 0; j < x.cols; ++j) mean += r[j];
        mean /= x.cols;
        double var = 0.0;
        for (int j = 0; j < x.cols; ++j) var += (r[j] - mean) * (r[j] - mean);
        var /= x.cols;
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        double* o = out.row(i);
        for (int j = 0; j < x.cols; ++j) o[j] = (r[j] - mean) * inv;
    }
    return out;
}

double gelu(double v) {
    constexpr double k = 0.7978845608028654;  // sqrt(2 / pi)
    return 0.5 * v * (1.0 + std::tanh(k * (v + 0.044715 * v * v * v)));
}

void add_into(Matrix& x, const Matrix& delta) {
    for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] += delta.data[i];
}

}  // namespace

std::string token_label(TokenId id) { return "t" + std::to_string(id); }

std::vector<int> rank_top_k(std::span<const double> scores, int k) {
    if (k < 1 || k > static_cast<int>(scores.size()))
        fail(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(scores.size()) + "]");
    std::vector<int> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return scores[static_cast<std::size_t>(a)] > scores[static_cast<std::size_t>(b)];
    });
    order.resize(static_cast<std::size_t>(k));
    return order;
}

ClassVocab TaskOptions::class_vocab() const {
    ClassVocab out(static_cast<std::size_t>(n_classes));
    std::iota(out.begin(), out.end(), 1);
    return out;
}

// ---------------------------------------------------------------------------
// model

ToyModel::ToyModel(ToyModelSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    SplitMix64 rng(spec_.seed);
    const int d = spec_.dim;
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    tok_emb_ = draw(rng, spec_.vocab, d, scale);
    pos_emb_ = draw(rng, spec_.max_len, d, scale);
    blocks_.reserve(static_cast<std::size_t>(spec_.n_blocks));
    for (int b = 0; b < spec_.n_blocks; ++b) {
        Block blk;
        blk.wq = draw(rng, d, d, scale);
        blk.wk = draw(rng, d, d, scale);
        blk.wv = draw(rng, d, d, scale);
        blk.wo = draw(rng, d, d, scale);
        blk.w1 = draw(rng, d, 4 * d, scale);
        blk.w2 = draw(rng, 4 * d, d, scale);
        blocks_.push_back(std::move(blk));
    }
    unembed_ = draw(rng, d, spec_.vocab, scale);
    for (BlockIndex b : spec_.redundant_blocks) {
        Block& blk = blocks_[static_cast<std::size_t>(b)];
        std::fill(blk.wo.data.begin(), blk.wo.data.end(), 0.0);
        std::fill(blk.w2.data.begin(), blk.w2.data.end(), 0.0);
    }
}

void ToyModel::check_input(const TokenSequence& input) const {
    if (input.empty()) fail(ErrorCode::InvalidArgument, "token sequence is empty");
    if (input.size() > static_cast<std::size_t>(spec_.max_len))
        fail(ErrorCode::SequenceTooLong,
             std::to_string(input.size()) + " tokens exceed max_len " + std::to_string(spec_.max_len));
    for (TokenId t : input)
        if (t < 0 || t >= spec_.vocab)
            fail(ErrorCode::InvalidArgument, "token " + std::to_string(t) + " outside vocabulary");
}

Matrix ToyModel::embed(const TokenSequence& input) const {
    const int n = static_cast<int>(input.size());
    Matrix x(n, spec_.dim);
    for (int t = 0; t < n; ++t) {
        const double* e = tok_emb_.row(input[static_cast<std::size_t>(t)]);
        const double* p = pos_emb_.row(t);
        double* o = x.row(t);
        for (int j = 0; j < spec_.dim; ++j) o[j] = e[j] + p[j];
    }
    return x;
}

Matrix ToyModel::attention_branch(BlockIndex b, const Matrix& x, OpCounter* ops) const {
    const Block& blk = block(b);
    const Matrix h = layer_norm(x);
    const Matrix q = matmul(h, blk.wq, ops);
    const Matrix k = matmul(h, blk.wk, ops);
    const Matrix v = matmul(h, blk.wv, ops);
    const int n = x.rows, hd = spec_.dim / spec_.n_heads;
    const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(hd));
    Matrix mixed(n, spec_.dim);
    std::vector<double> w(static_cast<std::size_t>(n));
    for (int head = 0; head < spec_.n_heads; ++head) {
        const int off = head * hd;
        for (int i = 0; i < n; ++i) {
            double mx = -INFINITY;
            for (int j = 0; j <= i; ++j) {
                double s = 0.0;
                for (int c = 0; c < hd; ++c) s += q(i, off + c) * k(j, off + c);
                w[static_cast<std::size_t>(j)] = s * inv_sqrt;
                mx = std::max(mx, w[static_cast<std::size_t>(j)]);
            }
            double z = 0.0;
            for (int j = 0; j <= i; ++j) {
                w[static_cast<std::size_t>(j)] = std::exp(w[static_cast<std::size_t>(j)] - mx);
                z += w[static_cast<std::size_t>(j)];
            }
            for (int j = 0; j <= i; ++j) {
                const double a = w[static_cast<std::size_t>(j)] / z;
                for (int c = 0; c < hd; ++c) mixed(i, off + c) += a * v(j, off + c);
            }
        }
    }
    // scores and weighted values: d * T(T+1)/2 each
    count(ops, static_cast<std::uint64_t>(spec_.dim) * n * (n + 1));
    return matmul(mixed, blk.wo, ops);
}

Matrix ToyModel::mlp_branch(BlockIndex b, const Matrix& x, OpCounter* ops) const {
    const Block& blk = block(b);
    Matrix hidden = matmul(layer_norm(x), blk.w1, ops);
    for (double& v : hidden.data) v = gelu(v);
    return matmul(hidden, blk.w2, ops);
}

ForwardOutput ToyModel::forward(const TokenSequence& input, const BlockSet& retained, OpCounter* ops) const {
    if (retained.total_blocks() != spec_.n_blocks)
        fail(ErrorCode::BlockCountMismatch, "block set has " + std::to_string(retained.total_blocks()) +
                                                " blocks, model has " + std::to_string(spec_.n_blocks));
    check_input(input);
    Matrix x = embed(input);
    for (BlockIndex b : retained.retained()) {
        add_into(x, attention_branch(b, x, ops));
        add_into(x, mlp_branch(b, x, ops));
    }
    ForwardOutput out;
    out.hidden_final = layer_norm(x);
    out.logits = matmul(out.hidden_final, unembed_, ops);
    return out;
}

std::uint64_t ToyModel::forward_macs(const ToyModelSpec& spec, int seq_len, int n_retained) {
    const std::uint64_t t = static_cast<std::uint64_t>(seq_len), d = static_cast<std::uint64_t>(spec.dim);
    const std::uint64_t per_block = 12 * t * d * d + d * t * (t + 1);
    return static_cast<std::uint64_t>(n_retained) * per_block + t * d * static_cast<std::uint64_t>(spec.vocab);
}

namespace {

std::vector<double> last_row(const Matrix& m) { return {m.row(m.rows - 1), m.row(m.rows - 1) + m.cols}; }

}  // namespace

Label ToyModel::classify(const TokenSequence& input, const BlockSet& retained, const ClassVocab& classes,
                         OpCounter* ops) const {
    return predict_set(input, retained, classes, 1, ops).front();
}

LabelSet ToyModel::predict_set(const TokenSequence& input, const BlockSet& retained, const ClassVocab& classes,
                               int k, OpCounter* ops) const {
    if (classes.empty()) fail(ErrorCode::EmptyClassVocab, "class vocabulary is empty");
    if (k < 1 || k > static_cast<int>(classes.size()))
        fail(ErrorCode::KOutOfRange, "k=" + std::to_string(k) + " outside [1, " + std::to_string(classes.size()) + "]");
    for (TokenId c : classes)
        if (c < 0 || c >= spec_.vocab) fail(ErrorCode::InvalidArgument, "class token outside vocabulary");
    const std::vector<double> last = last_row(forward(input, retained, ops).logits);
    std::vector<double> class_logits;
    for (TokenId c : classes) class_logits.push_back(last[static_cast<std::size_t>(c)]);
    LabelSet out;
    for (int i : rank_top_k(class_logits, k)) out.push_back(token_label(classes[static_cast<std::size_t>(i)]));
    return out;
}

Caption ToyModel::generate_greedy(const TokenSequence& prompt, const BlockSet& retained, int max_new,
                                  OpCounter* ops) const {
    if (max_new < 0) fail(ErrorCode::InvalidArgument, "max_new must be non-negative");
    check_input(prompt);
    if (prompt.size() + static_cast<std::size_t>(max_new) > static_cast<std::size_t>(spec_.max_len))
        fail(ErrorCode::SequenceTooLong, "prompt plus max_new exceeds max_len " + std::to_string(spec_.max_len));
    TokenSequence seq = prompt;
    Caption out;
    for (int step = 0; step < max_new; ++step) {
        const std::vector<double> last = last_row(forward(seq, retained, ops).logits);
        const TokenId next = static_cast<TokenId>(std::max_element(last.begin(), last.end()) - last.begin());
        if (next == 0) break;
        out.tokens.push_back(token_label(next));
        seq.push_back(next);
    }
    return out;
}

// ---------------------------------------------------------------------------
// calibration

Task parse_task(std::string_view name) {
    if (name == "single") return Task::single;
    if (name == "multi") return Task::multi;
    if (name == "caption") return Task::caption;
    fail(ErrorCode::InvalidTask, "unknown task \"" + std::string(name) + "\" (single|multi|caption)");
}

std::string_view to_string(Task task) {
    switch (task) {
        case Task::single: return "single";
        case Task::multi: return "multi";
        case Task::caption: return "caption";
    }
    return "unknown";
}

GoldKind gold_kind(Task task) {
    switch (task) {
        case Task::single: return GoldKind::label;
        case Task::multi: return GoldKind::label_set;
        case Task::caption: return GoldKind::references;
    }
    return GoldKind::label;
}

CalibrationSet gen_calibration(const ToyModel& model, Task task, int n, std::uint64_t seed,
                               const TaskOptions& options) {
    if (n < 1) fail(ErrorCode::InvalidArgument, "calibration size must be positive");
    const ToyModelSpec& spec = model.spec();
    int hi = std::min(options.max_input_len, spec.max_len);
    if (task == Task::caption) hi = std::min(hi, spec.max_len - options.caption_max_new);
    const int lo = std::min(options.min_len, hi);
    if (hi < 1 || lo < 1) fail(ErrorCode::InvalidArgument, "max_len too small for the requested task");

    const BlockSet full = BlockSet::full(model.n_blocks());
    const ClassVocab classes = options.class_vocab();
    SplitMix64 rng(seed);
    CalibrationSet data;
    data.kind = gold_kind(task);
    data.examples.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        Example ex;
        ex.id = "ex" + std::to_string(i);
        const int len = lo + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(hi - lo + 1)));
        for (int t = 0; t < len; ++t)
            ex.tokens.push_back(1 + static_cast<TokenId>(rng.next_below(static_cast<std::uint64_t>(spec.vocab - 1))));
        switch (task) {
            case Task::single: ex.label = model.classify(ex.tokens, full, classes); break;
            case Task::multi: ex.labels = model.predict_set(ex.tokens, full, classes, options.set_k); break;
            case Task::caption:
                ex.references.push_back(model.generate_greedy(ex.tokens, full, options.caption_max_new));
                break;
        }
        data.examples.push_back(std::move(ex));
    }
    return data;
}

}  // namespace gmskip
