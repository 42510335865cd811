#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace iavc {

// Every failure raised by the library carries one of these codes. The CLI maps
// them onto distinct process exit statuses.
enum class ErrorCode {
    ShapeMismatch = 10,
    DegenerateRow,
    InvalidRate,
    OddWidth,
    NonScalarLoss,
    UnknownParameter,
    DuplicateParameter,
    ConfigError,
    EmptySequence,
    LabelOutOfRange,
    EmptyInput,
    MissingSequences,
    UnknownToken,
    LengthCapExceeded,
    InconsistentFlags,
    EmptyCorpus,
    SchemaError,
    DuplicateVideoId,
    UncoveredGame,
    VersionMismatch,
    CorruptFile,
    IoError,
    AlignmentError,
    MissingCheckpoint,
    DataError,
};

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace iavc
