#include "gmskip/evaluator.hpp"

#include <cerrno>
#include <cmath>
#include <csignal>
#include <cstring>

#include <fcntl.h>
#include <poll.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>

#include "gmskip/error.hpp"

namespace gmskip {

// ---------------------------------------------------------------------------
// toy

ToyEvaluator::ToyEvaluator(std::shared_ptr<const ToyModel> model, CalibrationSet data, std::string_view metric,
                           TaskOptions options)
    : model_(std::move(model)),
      data_(std::move(data)),
      metric_(&MetricRegistry::builtin().lookup(metric)),
      options_(options) {
    if (!model_) fail(ErrorCode::InvalidArgument, "toy evaluator needs a model");
    if (data_.examples.empty()) fail(ErrorCode::EmptyDataset, "calibration set is empty");
    if (metric_->kind != data_.kind)
        fail(ErrorCode::TaskMetricMismatch, "metric " + metric_->name + " needs \"" +
                                                std::string(to_string(metric_->kind)) + "\" golds, data has \"" +
                                                std::string(to_string(data_.kind)) + "\"");
    if (data_.kind == GoldKind::references) {
        std::vector<ReferenceSet> refs;
        for (const Example& e : data_.examples) refs.push_back(e.references);
        cider_.emplace(refs);
    }
}

MetricScore ToyEvaluator::score(const BlockSet& retained) {
    const ClassVocab classes = options_.class_vocab();
    switch (data_.kind) {
        case GoldKind::label: {
            std::vector<Label> preds;
            preds.reserve(data_.size());
            for (const Example& e : data_.examples) preds.push_back(model_->classify(e.tokens, retained, classes));
            return (*metric_)(Outputs{std::move(preds)}, data_.golds());
        }
        case GoldKind::label_set: {
            std::vector<LabelSet> preds;
            preds.reserve(data_.size());
            for (const Example& e : data_.examples)
                preds.push_back(model_->predict_set(e.tokens, retained, classes, options_.set_k));
            return (*metric_)(Outputs{std::move(preds)}, data_.golds());
        }
        case GoldKind::references: {
            std::vector<Caption> caps;
            caps.reserve(data_.size());
            for (const Example& e : data_.examples)
                caps.push_back(model_->generate_greedy(e.tokens, retained, options_.caption_max_new));
            return cider_->score(caps);
        }
    }
    fail(ErrorCode::TaskMetricMismatch, "unsupported gold kind");
}

// ---------------------------------------------------------------------------
// function / table

FunctionEvaluator::FunctionEvaluator(int total_blocks, std::string metric, Fn fn)
    : total_blocks_(total_blocks), metric_(std::move(metric)), fn_(std::move(fn)) {
    if (total_blocks_ < 1) fail(ErrorCode::EmptyModel, "total_blocks must be positive");
    if (!fn_) fail(ErrorCode::InvalidArgument, "scoring function is empty");
}

std::shared_ptr<FunctionEvaluator> FunctionEvaluator::from_table(int total_blocks, std::string metric,
                                                                 std::map<std::string, double> table) {
    return std::make_shared<FunctionEvaluator>(
        total_blocks, std::move(metric), [table = std::move(table)](const BlockSet& s) {
            auto it = table.find(s.key());
            if (it == table.end()) fail(ErrorCode::InvalidArgument, "no tabulated score for {" + s.key() + "}");
            return it->second;
        });
}

MetricScore FunctionEvaluator::score(const BlockSet& retained) {
    if (retained.total_blocks() != total_blocks_)
        fail(ErrorCode::BlockCountMismatch, "block set size differs from evaluator");
    const double v = fn_(retained);
    if (!std::isfinite(v)) fail(ErrorCode::NonFiniteScore, "score for {" + retained.key() + "} is not finite");
    return {v, metric_, 1};
}

// ---------------------------------------------------------------------------
// cache

CachedEvaluator::CachedEvaluator(EvaluatorPtr inner) : inner_(std::move(inner)) {
    if (!inner_) fail(ErrorCode::InvalidArgument, "cached() needs an evaluator");
}

MetricScore CachedEvaluator::score(const BlockSet& retained) {
    const std::string key = retained.key();
    {
        std::lock_guard lock(mu_);
        auto it = cache_.find(key);
        if (it != cache_.end()) {
            ++hits_;
            return it->second;
        }
    }
    ++misses_;
    MetricScore s = inner_->score(retained);
    std::lock_guard lock(mu_);
    cache_[key] = s;
    return s;
}

std::size_t CachedEvaluator::size() const {
    std::lock_guard lock(mu_);
    return cache_.size();
}

EvaluatorPtr cached(EvaluatorPtr inner) { return std::make_shared<CachedEvaluator>(std::move(inner)); }

// ---------------------------------------------------------------------------
// external adapter

namespace {

using json = nlohmann::json;

void close_fd(int& fd) {
    if (fd >= 0) ::close(fd);
    fd = -1;
}

}  // namespace

ExternalEvaluator::ExternalEvaluator(const std::string& command, Options options) : options_(std::move(options)) {
    // Writes to a dead adapter must surface as EPIPE, not kill the process.
    std::signal(SIGPIPE, SIG_IGN);

    int in_pipe[2], out_pipe[2];
    if (::pipe2(in_pipe, O_CLOEXEC) != 0) fail(ErrorCode::SpawnFailure, std::strerror(errno));
    if (::pipe2(out_pipe, O_CLOEXEC) != 0) {
        ::close(in_pipe[0]);
        ::close(in_pipe[1]);
        fail(ErrorCode::SpawnFailure, std::strerror(errno));
    }
    pid_ = ::fork();
    if (pid_ < 0) {
        for (int fd : {in_pipe[0], in_pipe[1], out_pipe[0], out_pipe[1]}) ::close(fd);
        fail(ErrorCode::SpawnFailure, std::strerror(errno));
    }
    if (pid_ == 0) {
        // Own process group, so a kill also reaches anything the shell forked.
        ::setpgid(0, 0);
        ::dup2(in_pipe[0], STDIN_FILENO);
        ::dup2(out_pipe[1], STDOUT_FILENO);
        ::execl("/bin/sh", "sh", "-c", command.c_str(), static_cast<char*>(nullptr));
        ::_exit(127);
    }
    ::close(in_pipe[0]);
    ::close(out_pipe[1]);
    to_child_ = in_pipe[1];
    from_child_ = out_pipe[0];

    std::string line;
    try {
        line = read_line();
    } catch (const Error& e) {
        shutdown();
        if (e.code() == ErrorCode::ProtocolError)
            fail(ErrorCode::SpawnFailure, "adapter \"" + command + "\" exited before the handshake");
        throw;
    }
    json hello;
    try {
        hello = json::parse(line);
    } catch (const json::parse_error&) {
        shutdown();
        fail(ErrorCode::ProtocolError, "malformed handshake: " + line);
    }
    if (!hello.is_object() || !hello.contains("hello") || !hello["hello"].is_object() ||
        !hello["hello"].contains("total_blocks") || !hello["hello"]["total_blocks"].is_number_integer() ||
        !hello["hello"].contains("metric") || !hello["hello"]["metric"].is_string()) {
        shutdown();
        fail(ErrorCode::ProtocolError, "malformed handshake: " + line);
    }
    total_blocks_ = hello["hello"]["total_blocks"].get<int>();
    metric_ = hello["hello"]["metric"].get<std::string>();
    if (total_blocks_ < 1) {
        shutdown();
        fail(ErrorCode::ProtocolError, "handshake total_blocks must be positive: " + line);
    }
    if (options_.expected_blocks > 0 && options_.expected_blocks != total_blocks_) {
        shutdown();
        fail(ErrorCode::ProtocolError, "adapter reports " + std::to_string(total_blocks_) + " blocks, expected " +
                                           std::to_string(options_.expected_blocks));
    }
    if (!options_.expected_metric.empty() && normalize_label(options_.expected_metric) != normalize_label(metric_)) {
        shutdown();
        fail(ErrorCode::ProtocolError, "adapter reports metric \"" + metric_ + "\", expected \"" +
                                           options_.expected_metric + "\"");
    }
}

ExternalEvaluator::~ExternalEvaluator() { shutdown(); }

void ExternalEvaluator::shutdown() {
    if (pid_ <= 0) return;
    if (to_child_ >= 0 && !broken_) {
        const std::string bye = "{\"shutdown\":true}\n";
        [[maybe_unused]] ssize_t n = ::write(to_child_, bye.data(), bye.size());
    }
    close_fd(to_child_);
    close_fd(from_child_);
    int status = 0;
    for (int i = 0; i < 100; ++i) {
        if (::waitpid(pid_, &status, WNOHANG) != 0) {
            pid_ = -1;
            return;
        }
        ::usleep(10'000);
    }
    ::kill(-pid_, SIGKILL);
    ::waitpid(pid_, &status, 0);
    pid_ = -1;
}

void ExternalEvaluator::broken(ErrorCode code, const std::string& message) {
    broken_ = true;
    fail(code, message);
}

std::string ExternalEvaluator::read_line() {
    using clock = std::chrono::steady_clock;
    const auto deadline = clock::now() + options_.timeout;
    for (;;) {
        const std::size_t nl = buffer_.find('\n');
        if (nl != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            return line;
        }
        const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - clock::now());
        if (left.count() <= 0) broken(ErrorCode::AdapterTimeout, "no response within the adapter timeout");
        pollfd pfd{from_child_, POLLIN, 0};
        const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left.count(), 1 << 30)));
        if (ready < 0) {
            if (errno == EINTR) continue;
            broken(ErrorCode::ProtocolError, std::string("poll failed: ") + std::strerror(errno));
        }
        if (ready == 0) continue;
        char chunk[4096];
        const ssize_t n = ::read(from_child_, chunk, sizeof chunk);
        if (n < 0) {
            if (errno == EINTR || errno == EAGAIN) continue;
            broken(ErrorCode::ProtocolError, std::string("read failed: ") + std::strerror(errno));
        }
        if (n == 0) broken(ErrorCode::ProtocolError, "adapter closed its output" +
                                                  (buffer_.empty() ? std::string() : " after partial line: " + buffer_));
        buffer_.append(chunk, static_cast<std::size_t>(n));
    }
}

void ExternalEvaluator::write_line(const std::string& line) {
    std::string data = line + "\n";
    std::size_t off = 0;
    while (off < data.size()) {
        const ssize_t n = ::write(to_child_, data.data() + off, data.size() - off);
        if (n < 0) {
            if (errno == EINTR) continue;
            broken(ErrorCode::ProtocolError, std::string("write to adapter failed: ") + std::strerror(errno));
        }
        off += static_cast<std::size_t>(n);
    }
}

MetricScore ExternalEvaluator::score(const BlockSet& retained) {
    std::lock_guard lock(mu_);
    if (broken_) fail(ErrorCode::ProtocolError, "adapter connection already failed");
    if (retained.total_blocks() != total_blocks_)
        fail(ErrorCode::BlockCountMismatch, "block set size differs from adapter");
    const std::int64_t id = ++next_id_;
    json req;
    req["id"] = id;
    req["retained"] = retained.retained();
    req["skipped"] = retained.skipped();
    write_line(req.dump());

    const std::string line = read_line();
    json resp;
    try {
        resp = json::parse(line);
    } catch (const json::parse_error&) {
        broken(ErrorCode::ProtocolError, "malformed response: " + line);
    }
    if (!resp.is_object() || !resp.contains("id") || !resp["id"].is_number_integer())
        broken(ErrorCode::ProtocolError, "response without integer id: " + line);
    if (resp["id"].get<std::int64_t>() != id)
        broken(ErrorCode::ProtocolError, "response id " + resp["id"].dump() + " for request " + std::to_string(id) +
                                             ": " + line);
    if (resp.contains("error")) {
        const std::string msg = resp["error"].is_string() ? resp["error"].get<std::string>() : resp["error"].dump();
        fail(ErrorCode::AdapterError, "adapter failed on {" + retained.key() + "}: " + msg);
    }
    if (!resp.contains("score") || !resp["score"].is_number())
        broken(ErrorCode::ProtocolError, "response without numeric score: " + line);
    const double v = resp["score"].get<double>();
    if (!std::isfinite(v)) broken(ErrorCode::ProtocolError, "non-finite score: " + line);
    return {v, metric_, 1};
}

std::int64_t ExternalEvaluator::requests_sent() const {
    std::lock_guard lock(mu_);
    return next_id_;
}

}  // namespace gmskip
