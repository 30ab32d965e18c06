#pragma once

#include <stdexcept>
#include <string>

namespace rft {

// Base error. kind() maps onto CLI exit codes: numeric failures exit 3,
// everything else (bad dimensions, ranges, config, parse) exits 2.
class Error : public std::runtime_error {
public:
    enum class Kind { dimension, range, config, parse, numeric };

    Error(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& msg) : Error(Kind::dimension, msg) {}
};

struct RangeError : Error {
    explicit RangeError(const std::string& msg) : Error(Kind::range, msg) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(Kind::config, msg) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& msg) : Error(Kind::parse, msg) {}
};

// Divergence, non-finite velocities and similar numeric breakdowns.
struct NumericError : Error {
    explicit NumericError(const std::string& msg) : Error(Kind::numeric, msg) {}
};

}  // namespace rft
