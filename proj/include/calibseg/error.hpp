#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace calibseg {

// Base of every error raised by the library. The CLI maps all of these to
// exit code 1.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidInput : public Error {
public:
    using Error::Error;
};

class InvalidConfig : public Error {
public:
    using Error::Error;
};

// A metric has no samples to average over (e.g. ECE with no foreground pixel).
class UndefinedMetric : public Error {
public:
    using Error::Error;
};

// KL(tau || s) with s_k == 0 where tau_k > 0.
class DivergenceInfinite : public Error {
public:
    using Error::Error;
};

class FormatError : public Error {
public:
    using Error::Error;
};

class TrainingDiverged : public Error {
public:
    TrainingDiverged(std::size_t step, const std::string& what)
        : Error("training diverged at step " + std::to_string(step) + ": " + what), step_(step) {}

    std::size_t step() const noexcept { return step_; }

private:
    std::size_t step_;
};

}  // namespace calibseg
