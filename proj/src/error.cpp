#include "gmskip/error.hpp"

namespace gmskip {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::DuplicateIndex: return "DuplicateIndex";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::LambdaOutOfRange: return "LambdaOutOfRange";
        case ErrorCode::EmptyModel: return "EmptyModel";
        case ErrorCode::BudgetExceeded: return "BudgetExceeded";
        case ErrorCode::FloorViolated: return "FloorViolated";
        case ErrorCode::NonFiniteScore: return "NonFiniteScore";
        case ErrorCode::TraceMismatch: return "TraceMismatch";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::LengthMismatch: return "LengthMismatch";
        case ErrorCode::EmptyDataset: return "EmptyDataset";
        case ErrorCode::EmptyGoldSet: return "EmptyGoldSet";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::EmptyReferenceSet: return "EmptyReferenceSet";
        case ErrorCode::UnknownMetric: return "UnknownMetric";
        case ErrorCode::InvalidSpec: return "InvalidSpec";
        case ErrorCode::BlockCountMismatch: return "BlockCountMismatch";
        case ErrorCode::SequenceTooLong: return "SequenceTooLong";
        case ErrorCode::EmptyClassVocab: return "EmptyClassVocab";
        case ErrorCode::KOutOfRange: return "KOutOfRange";
        case ErrorCode::InvalidTask: return "InvalidTask";
        case ErrorCode::TaskMetricMismatch: return "TaskMetricMismatch";
        case ErrorCode::SpawnFailure: return "SpawnFailure";
        case ErrorCode::ProtocolError: return "ProtocolError";
        case ErrorCode::AdapterTimeout: return "AdapterTimeout";
        case ErrorCode::AdapterError: return "AdapterError";
        case ErrorCode::BlockNotRetained: return "BlockNotRetained";
        case ErrorCode::EmptyCandidates: return "EmptyCandidates";
        case ErrorCode::TooManyBlocks: return "TooManyBlocks";
        case ErrorCode::InvalidStrategy: return "InvalidStrategy";
        case ErrorCode::ZeroBaseline: return "ZeroBaseline";
        case ErrorCode::EmptyReport: return "EmptyReport";
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IoError: return "IoError";
    }
    return "Unknown";
}

bool is_adapter_failure(ErrorCode code) {
    switch (code) {
        case ErrorCode::SpawnFailure:
        case ErrorCode::ProtocolError:
        case ErrorCode::AdapterTimeout:
        case ErrorCode::AdapterError:
            return true;
        default:
            return false;
    }
}

Error::Error(ErrorCode code, const std::string& message)
    : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

void fail(ErrorCode code, const std::string& message) { throw Error(code, message); }

}  // namespace gmskip
