#pragma once

#include <stdexcept>
#include <string>

namespace bfl {

// Root of every error the library throws. Callers that only care about
// "config problem vs. runtime problem" can catch ConfigError and Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DimensionError : public Error {
public:
    using Error::Error;
};

class InsufficientPopulationError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class ConsistencyError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

class DefenseConfigError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

// NaN or infinity crossed an API boundary.
class NumericError : public Error {
public:
    using Error::Error;
};

// A failure inside a simulation round, tagged with the round and stage.
class StageError : public Error {
public:
    StageError(int round, std::string stage, const std::string& what)
        : Error("round " + std::to_string(round) + ", stage '" + stage + "': " + what),
          round_(round),
          stage_(std::move(stage)) {}

    int round() const noexcept { return round_; }
    const std::string& stage() const noexcept { return stage_; }

private:
    int round_;
    std::string stage_;
};

}  // namespace bfl
