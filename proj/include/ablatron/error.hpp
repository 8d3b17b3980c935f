#pragma once

#include <stdexcept>
#include <string>

namespace ablatron {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid architecture or campaign configuration.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Input data that cannot be processed (non-finite values, labels out of range).
class DataError : public Error {
public:
    using Error::Error;
};

class TrainingError : public Error {
public:
    TrainingError(int epoch, const std::string& what)
        : Error("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}

    int epoch() const noexcept { return epoch_; }

private:
    int epoch_;
};

/// Ablation spec that does not address a valid target.
class SpecError : public Error {
public:
    using Error::Error;
};

/// Two evaluation reports that cannot be compared.
class ReportError : public Error {
public:
    using Error::Error;
};

/// A statistic that is undefined for the given input (zero variance, constant vector).
class StatsError : public Error {
public:
    using Error::Error;
};

class CheckpointError : public Error {
public:
    enum class Kind { io, bad_magic, version, truncated, shape };

    CheckpointError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

class ParseError : public Error {
public:
    enum class Kind { io, bad_magic, count_mismatch, truncated, bad_dimensions };

    ParseError(Kind kind, const std::string& what) : Error(what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

private:
    Kind kind_;
};

/// CSV or JSON content that violates its published schema.
class SchemaError : public Error {
public:
    using Error::Error;
};

class RunError : public Error {
public:
    RunError(int iteration, const std::string& what)
        : Error("iteration " + std::to_string(iteration) + ": " + what), iteration_(iteration) {}

    int iteration() const noexcept { return iteration_; }

private:
    int iteration_;
};

}  // namespace ablatron
