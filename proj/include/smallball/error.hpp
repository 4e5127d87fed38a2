#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace smallball {

enum class ErrorKind {
    parameter,
    range,
    shape,
    moment,
    degenerate_input,
    consistency,
    divisibility,
    input,
    bracket,
    contract,
    convergence,
    resolution,
    rank_deficiency,
    quantile,
    config,
};

inline std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::parameter: return "parameter error";
        case ErrorKind::range: return "range error";
        case ErrorKind::shape: return "shape error";
        case ErrorKind::moment: return "moment error";
        case ErrorKind::degenerate_input: return "degenerate-input error";
        case ErrorKind::consistency: return "consistency error";
        case ErrorKind::divisibility: return "divisibility error";
        case ErrorKind::input: return "input error";
        case ErrorKind::bracket: return "bracket error";
        case ErrorKind::contract: return "contract error";
        case ErrorKind::convergence: return "convergence error";
        case ErrorKind::resolution: return "resolution error";
        case ErrorKind::rank_deficiency: return "rank-deficiency error";
        case ErrorKind::quantile: return "quantile error";
        case ErrorKind::config: return "config error";
    }
    return "error";
}

/// Raised by every operation in the library; `kind()` identifies the failure class.
class Error : public std::runtime_error {
  public:
    Error(ErrorKind kind, const std::string& message)
        : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

  private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
    throw Error(kind, message);
}

inline void require(bool condition, ErrorKind kind, const std::string& message) {
    if (!condition) {
        fail(kind, message);
    }
}

/// Failures produced by the numerics themselves rather than by bad input.
inline bool is_numerical_contract(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::bracket:
        case ErrorKind::contract:
        case ErrorKind::convergence:
        case ErrorKind::resolution:
        case ErrorKind::rank_deficiency:
        case ErrorKind::quantile:
        case ErrorKind::degenerate_input:
            return true;
        default:
            return false;
    }
}

}  // namespace smallball
