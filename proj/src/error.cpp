#include "iavc/error.hpp"

namespace iavc {

std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::ShapeMismatch: return "ShapeMismatch";
        case ErrorCode::DegenerateRow: return "DegenerateRow";
        case ErrorCode::InvalidRate: return "InvalidRate";
        case ErrorCode::OddWidth: return "OddWidth";
        case ErrorCode::NonScalarLoss: return "NonScalarLoss";
        case ErrorCode::UnknownParameter: return "UnknownParameter";
        case ErrorCode::DuplicateParameter: return "DuplicateParameter";
        case ErrorCode::ConfigError: return "ConfigError";
        case ErrorCode::EmptySequence: return "EmptySequence";
        case ErrorCode::LabelOutOfRange: return "LabelOutOfRange";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::MissingSequences: return "MissingSequences";
        case ErrorCode::UnknownToken: return "UnknownToken";
        case ErrorCode::LengthCapExceeded: return "LengthCapExceeded";
        case ErrorCode::InconsistentFlags: return "InconsistentFlags";
        case ErrorCode::EmptyCorpus: return "EmptyCorpus";
        case ErrorCode::SchemaError: return "SchemaError";
        case ErrorCode::DuplicateVideoId: return "DuplicateVideoId";
        case ErrorCode::UncoveredGame: return "UncoveredGame";
        case ErrorCode::VersionMismatch: return "VersionMismatch";
        case ErrorCode::CorruptFile: return "CorruptFile";
        case ErrorCode::IoError: return "IoError";
        case ErrorCode::AlignmentError: return "AlignmentError";
        case ErrorCode::MissingCheckpoint: return "MissingCheckpoint";
        case ErrorCode::DataError: return "DataError";
    }
    return "Unknown";
}

}  // namespace iavc
