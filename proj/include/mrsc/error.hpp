#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace mrsc {

enum class ErrorCode {
    InvalidArgument,
    DimensionMismatch,
    NonFinite,
    EmptyInput,
    ParseError,
    RankTooLarge,
    SvdFailure,
    NoUsableColumns,
    EmptyDonorPool,
    ZeroActual,
    DegenerateBaseline,
};

constexpr std::string_view to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidArgument: return "InvalidArgument";
        case ErrorCode::DimensionMismatch: return "DimensionMismatch";
        case ErrorCode::NonFinite: return "NonFinite";
        case ErrorCode::EmptyInput: return "EmptyInput";
        case ErrorCode::ParseError: return "ParseError";
        case ErrorCode::RankTooLarge: return "RankTooLarge";
        case ErrorCode::SvdFailure: return "SvdFailure";
        case ErrorCode::NoUsableColumns: return "NoUsableColumns";
        case ErrorCode::EmptyDonorPool: return "EmptyDonorPool";
        case ErrorCode::ZeroActual: return "ZeroActual";
        case ErrorCode::DegenerateBaseline: return "DegenerateBaseline";
    }
    return "Unknown";
}

/// Numerical failures map to CLI exit code 3, everything else to 2.
constexpr bool is_numerical(ErrorCode code) {
    return code == ErrorCode::SvdFailure || code == ErrorCode::NoUsableColumns ||
           code == ErrorCode::DegenerateBaseline;
}

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message)
        : std::runtime_error(std::string(to_string(code)) + ": " + message), code_(code) {}

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

}  // namespace mrsc
