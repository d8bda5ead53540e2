#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace pchsl {

// All recoverable failures are reported as Error with a stable machine
// code. Codes are listed as constants in error_codes so callers can match
// without string literals scattered around.
class Error : public std::runtime_error {
public:
    Error(std::string code, std::string message)
        : std::runtime_error(code + ": " + message),
          code_(std::move(code)),
          message_(std::move(message)) {}

    const std::string& code() const noexcept { return code_; }
    const std::string& message() const noexcept { return message_; }

private:
    std::string code_;
    std::string message_;
};

namespace error_codes {
// ingest
inline constexpr const char* MalformedRow = "MalformedRow";
inline constexpr const char* NonUniformSampling = "NonUniformSampling";
inline constexpr const char* EmptyInput = "EmptyInput";
inline constexpr const char* EventOutOfRange = "EventOutOfRange";
inline constexpr const char* WindowTooShort = "WindowTooShort";
// embed
inline constexpr const char* DimensionMismatch = "DimensionMismatch";
inline constexpr const char* PerplexityTooLarge = "PerplexityTooLarge";
inline constexpr const char* DegenerateDistances = "DegenerateDistances";
// dynamics
inline constexpr const char* TrajectoryTooShort = "TrajectoryTooShort";
inline constexpr const char* BadWindow = "BadWindow";
// hamfit
inline constexpr const char* SingularSystem = "SingularSystem";
inline constexpr const char* DivergedLoss = "DivergedLoss";
// bayes
inline constexpr const char* NonFiniteEnergy = "NonFiniteEnergy";
// structcmp
inline constexpr const char* FrameMismatch = "FrameMismatch";
inline constexpr const char* DegenerateReference = "DegenerateReference";
// synth
inline constexpr const char* Blowup = "Blowup";
// cli / config
inline constexpr const char* ConfigError = "ConfigError";
inline constexpr const char* IoError = "IoError";
}  // namespace error_codes

}  // namespace pchsl
