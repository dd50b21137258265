#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace gmskip {

enum class ErrorCode {
    // skip-core validation
    DuplicateIndex,
    IndexOutOfRange,
    LambdaOutOfRange,
    EmptyModel,
    BudgetExceeded,
    FloorViolated,
    NonFiniteScore,
    TraceMismatch,
    ParseError,
    SchemaError,
    // metrics
    LengthMismatch,
    EmptyDataset,
    EmptyGoldSet,
    EmptyCorpus,
    EmptyReferenceSet,
    UnknownMetric,
    // toy model
    InvalidSpec,
    BlockCountMismatch,
    SequenceTooLong,
    EmptyClassVocab,
    KOutOfRange,
    InvalidTask,
    // evaluator
    TaskMetricMismatch,
    SpawnFailure,
    ProtocolError,
    AdapterTimeout,
    AdapterError,
    // search
    BlockNotRetained,
    EmptyCandidates,
    TooManyBlocks,
    InvalidStrategy,
    // bench
    ZeroBaseline,
    EmptyReport,
    // general
    InvalidArgument,
    IoError,
};

std::string_view to_string(ErrorCode code);

/// True for failures of an external adapter process (CLI exit code 3);
/// everything else is a usage or validation failure (exit code 2).
bool is_adapter_failure(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message);

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string& message);

}  // namespace gmskip
