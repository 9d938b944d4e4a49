#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace nvtk {

// Error taxonomy mirrored by CLI exit codes: config=2, data=3, numeric=4.
enum class ErrorKind { Config, Data, Numeric };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, std::string msg)
        : std::runtime_error(std::move(msg)), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(std::string msg) : Error(ErrorKind::Config, std::move(msg)) {}
};

// Malformed input: bad syntax, bad magic, truncated payload. Carries a location.
struct ParseError : Error {
    explicit ParseError(std::string msg) : Error(ErrorKind::Data, std::move(msg)) {}
};

// Well-formed input violating a documented invariant.
struct ValidationError : Error {
    explicit ValidationError(std::string msg) : Error(ErrorKind::Data, std::move(msg)) {}
};

struct NumericError : Error {
    explicit NumericError(std::string msg) : Error(ErrorKind::Numeric, std::move(msg)) {}
};

// All randomness flows from explicitly seeded generators; no global RNG state.
using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed) { return Rng(seed); }

// Shortest decimal form that round-trips a double; keeps text outputs
// byte-stable across reruns.
std::string format_double(double v);

std::string version_string();

} // namespace nvtk
