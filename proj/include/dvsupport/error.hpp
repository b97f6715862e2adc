#ifndef DVSUPPORT_ERROR_HPP
#define DVSUPPORT_ERROR_HPP

#include <stdexcept>
#include <string>
#include <string_view>

namespace dvsupport {

/// Failure categories raised across the pipeline. Each stage documents which
/// codes it can throw; callers branch on code() rather than on message text.
enum class ErrorCode {
    InvalidArgument,
    IoError,
    // corpus
    MalformedRecord,
    DuplicateId,
    UnknownId,
    CoverageGap,
    SourceViolation,
    // llm_gateway
    MissingBinding,
    FirstItemTooLarge,
    BudgetExceeded,
    BackendUnavailable,
    // detect
    AmbiguousVerdict,
    // embed
    ProviderError,
    // reduce / cluster
    TooFewPoints,
    NonConvergence,
    // summarize / support
    EmptyClusterSet,
    CountMismatch,
    UnparseableLine,
    EmptyPool,
    // evaluate
    ClassTooSmall,
    // pipeline
    ConfigError,
    MissingUpstream,
};

inline std::string_view to_string(ErrorCode code) {
    switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::IoError: return "IoError";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::UnknownId: return "UnknownId";
    case ErrorCode::CoverageGap: return "CoverageGap";
    case ErrorCode::SourceViolation: return "SourceViolation";
    case ErrorCode::MissingBinding: return "MissingBinding";
    case ErrorCode::FirstItemTooLarge: return "FirstItemTooLarge";
    case ErrorCode::BudgetExceeded: return "BudgetExceeded";
    case ErrorCode::BackendUnavailable: return "BackendUnavailable";
    case ErrorCode::AmbiguousVerdict: return "AmbiguousVerdict";
    case ErrorCode::ProviderError: return "ProviderError";
    case ErrorCode::TooFewPoints: return "TooFewPoints";
    case ErrorCode::NonConvergence: return "NonConvergence";
    case ErrorCode::EmptyClusterSet: return "EmptyClusterSet";
    case ErrorCode::CountMismatch: return "CountMismatch";
    case ErrorCode::UnparseableLine: return "UnparseableLine";
    case ErrorCode::EmptyPool: return "EmptyPool";
    case ErrorCode::ClassTooSmall: return "ClassTooSmall";
    case ErrorCode::ConfigError: return "ConfigError";
    case ErrorCode::MissingUpstream: return "MissingUpstream";
    }
    return "Unknown";
}

/// Exception type for every recoverable failure in the library.
///
/// `subject()` carries the structured payload named by the error, for example
/// the line number of a MalformedRecord or the offending id of a DuplicateId.
class Error : public std::runtime_error {
public:
    Error(ErrorCode code, std::string subject, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + "(" + subject + "): " + message),
          code_(code), subject_(std::move(subject)) {}

    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }
    const std::string& subject() const noexcept { return subject_; }

    /// Same error with `context` prepended to the message.
    Error with_context(std::string_view context) const {
        Error copy(*this);
        static_cast<std::runtime_error&>(copy) =
            std::runtime_error(std::string(context) + ": " + what());
        return copy;
    }

private:
    ErrorCode code_;
    std::string subject_;
};

} // namespace dvsupport

#endif // DVSUPPORT_ERROR_HPP
