#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <sys/types.h>

#include "gmskip/calibration.hpp"
#include "gmskip/error.hpp"
#include "gmskip/metrics.hpp"
#include "gmskip/skip_core.hpp"
#include "gmskip/toy_model.hpp"

namespace gmskip {

/// Scores a retained block set on a calibration corpus; higher is better.
///
/// Implementations must be deterministic within a session and safe to call
/// from several threads at once (serializing internally if they must).
class Evaluator {
public:
    virtual ~Evaluator() = default;

    virtual int total_blocks() const = 0;
    virtual std::string metric_name() const = 0;
    virtual MetricScore score(const BlockSet& retained) = 0;
};

using EvaluatorPtr = std::shared_ptr<Evaluator>;

/// Built-in backend: runs the toy model over every example and aggregates with
/// the named metric. Throws TaskMetricMismatch when the metric's gold kind
/// differs from the data's.
class ToyEvaluator final : public Evaluator {
public:
    ToyEvaluator(std::shared_ptr<const ToyModel> model, CalibrationSet data, std::string_view metric,
                 TaskOptions options = {});

    int total_blocks() const override { return model_->n_blocks(); }
    std::string metric_name() const override { return metric_->name; }
    MetricScore score(const BlockSet& retained) override;

    const ToyModel& model() const noexcept { return *model_; }
    const CalibrationSet& data() const noexcept { return data_; }

private:
    std::shared_ptr<const ToyModel> model_;
    CalibrationSet data_;
    const Metric* metric_;
    TaskOptions options_;
    std::optional<CiderScorer> cider_;
};

/// Wraps an arbitrary scoring function; used for stubs and bindings.
class FunctionEvaluator final : public Evaluator {
public:
    using Fn = std::function<double(const BlockSet&)>;

    FunctionEvaluator(int total_blocks, std::string metric, Fn fn);

    /// Looks scores up by BlockSet::key(); unknown sets throw InvalidArgument.
    static std::shared_ptr<FunctionEvaluator> from_table(int total_blocks, std::string metric,
                                                         std::map<std::string, double> table);

    int total_blocks() const override { return total_blocks_; }
    std::string metric_name() const override { return metric_; }
    MetricScore score(const BlockSet& retained) override;

private:
    int total_blocks_;
    std::string metric_;
    Fn fn_;
};

/// Memoizes scores by canonical retained-set key. Concurrent misses on the same
/// key may compute twice; both results are equal by determinism.
class CachedEvaluator final : public Evaluator {
public:
    explicit CachedEvaluator(EvaluatorPtr inner);

    int total_blocks() const override { return inner_->total_blocks(); }
    std::string metric_name() const override { return inner_->metric_name(); }
    MetricScore score(const BlockSet& retained) override;

    std::size_t hits() const noexcept { return hits_.load(); }
    std::size_t misses() const noexcept { return misses_.load(); }
    std::size_t size() const;

private:
    EvaluatorPtr inner_;
    mutable std::mutex mu_;
    std::map<std::string, MetricScore> cache_;
    std::atomic<std::size_t> hits_{0};
    std::atomic<std::size_t> misses_{0};
};

EvaluatorPtr cached(EvaluatorPtr inner);

/// Child process speaking line-delimited JSON on stdin/stdout:
///   child  -> parent  {"hello": {"total_blocks": L, "metric": "<name>"}}
///   parent -> child   {"id": n, "retained": [...], "skipped": [...]}
///   child  -> parent  {"id": n, "score": x}  or  {"id": n, "error": "<msg>"}
///   parent -> child   {"shutdown": true}
/// Requests are serialized over the single pipe pair. After any protocol
/// failure every further call fails as well.
class ExternalEvaluator final : public Evaluator {
public:
    struct Options {
        int expected_blocks = 0;        // 0 accepts whatever the handshake says
        std::string expected_metric;    // empty accepts whatever the handshake says
        std::chrono::milliseconds timeout{600'000};
    };

    /// Spawns `/bin/sh -c command` and waits for the handshake.
    /// Throws SpawnFailure, ProtocolError, AdapterTimeout.
    ExternalEvaluator(const std::string& command, Options options);
    explicit ExternalEvaluator(const std::string& command) : ExternalEvaluator(command, Options{}) {}
    ~ExternalEvaluator() override;

    ExternalEvaluator(const ExternalEvaluator&) = delete;
    ExternalEvaluator& operator=(const ExternalEvaluator&) = delete;

    int total_blocks() const override { return total_blocks_; }
    std::string metric_name() const override { return metric_; }
    MetricScore score(const BlockSet& retained) override;

    std::int64_t requests_sent() const;

private:
    std::string read_line();
    void write_line(const std::string& line);
    [[noreturn]] void broken(ErrorCode code, const std::string& message);
    void shutdown();

    Options options_;
    pid_t pid_ = -1;
    int to_child_ = -1;
    int from_child_ = -1;
    std::string buffer_;
    int total_blocks_ = 0;
    std::string metric_;
    std::int64_t next_id_ = 0;
    bool broken_ = false;
    mutable std::mutex mu_;
};

}  // namespace gmskip
