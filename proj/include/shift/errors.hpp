#pragma once

#include <stdexcept>
#include <string>

namespace shift {

enum class ErrorCode {
    DuplicateId,
    InvalidField,
    UnknownId,
    UnknownAttribute,
    UnknownView,
    TypeMismatch,
    OutOfRange,
    DeltaConflict,
    ChunkingMismatch,
    DimensionMismatch,
    ExtractorFailure,
    CorruptEntry,
    DimMismatch,
    EmptySplit,
    UnsupportedMethod,
    SyntaxError,
    UnknownKeyword,
    UnresolvedReference,
    UnknownScoringAlgorithm,
    CyclicPlan,
    MissingCost,
    TaskFailed,
    InvalidPool,
    BudgetTooSmall,
    InsufficientBudget,
    NoResultsForTarget,
    MissingAccuracy,
    StaleCache,
    IoError,
    ConfigError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(error_code_name(code)) + ": " + message),
          code_(code) {}

    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

// Parse error with source position (1-based line/column).
class QuerySyntaxError : public Error {
public:
    QuerySyntaxError(const std::string& message, int line, int column,
                     ErrorCode code = ErrorCode::SyntaxError)
        : Error(code,
                message + " (line " + std::to_string(line) + ", column " +
                    std::to_string(column) + ")"),
          line_(line), column_(column) {}

    int line() const { return line_; }
    int column() const { return column_; }

private:
    int line_;
    int column_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
    throw Error(code, message);
}

} // namespace shift
