#pragma once

#include <stdexcept>
#include <string>

namespace ksc {

enum class ErrorCode {
    InvalidArgument,
    IndexOutOfRange,
    ThresholdBeyondTruncation,
    DuplicateRate,
    IllConditioned,
    CriticalParameter,
    QuadratureUnderResolved,
    RationalPoint,
    BelowMinimalTime,
    NoWitnessFound,
    GramianSingular,
    DissipationViolated,
    WeightUnderflow,
    NoContraction,
    StepUnconverged,
    NotCritical,
    BadRho,
    BetaTooSmall,
    Config,
};

inline const char* to_string(ErrorCode c) {
    switch (c) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::IndexOutOfRange: return "IndexOutOfRange";
        case ErrorCode::ThresholdBeyondTruncation: return "ThresholdBeyondTruncation";
        case ErrorCode::DuplicateRate: return "DuplicateRate";
        case ErrorCode::IllConditioned: return "IllConditioned";
        case ErrorCode::CriticalParameter: return "CriticalParameter";
        case ErrorCode::QuadratureUnderResolved: return "QuadratureUnderResolved";
        case ErrorCode::RationalPoint: return "RationalPoint";
        case ErrorCode::BelowMinimalTime: return "BelowMinimalTime";
        case ErrorCode::NoWitnessFound: return "NoWitnessFound";
        case ErrorCode::GramianSingular: return "GramianSingular";
        case ErrorCode::DissipationViolated: return "DissipationViolated";
        case ErrorCode::WeightUnderflow: return "WeightUnderflow";
        case ErrorCode::NoContraction: return "NoContraction";
        case ErrorCode::StepUnconverged: return "StepUnconverged";
        case ErrorCode::NotCritical: return "NotCritical";
        case ErrorCode::BadRho: return "BadRho";
        case ErrorCode::BetaTooSmall: return "BetaTooSmall";
        case ErrorCode::Config: return "Config";
    }
    return "Unknown";
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, ErrorCode code, const std::string& what) {
    if (!cond) fail(code, what);
}

}  // namespace ksc
