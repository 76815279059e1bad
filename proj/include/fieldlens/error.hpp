#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace fieldlens {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a data array and a tensor disagree on element count or layout.
class ConversionError : public Error {
public:
    using Error::Error;
};

/// A violated precondition on an otherwise well-formed call.
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ParseError : public Error {
public:
    ParseError(std::size_t line, const std::string& what)
        : Error("line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

class UnsupportedError : public Error {
public:
    using Error::Error;
};

/// Model file and model evaluation failures.
class ModelError : public Error {
public:
    using Error::Error;
};

class ShapeError : public ModelError {
public:
    ShapeError(std::size_t layer, const std::string& what)
        : ModelError("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

class SimulationError : public Error {
public:
    using Error::Error;
};

class SorNonConvergence : public SimulationError {
public:
    SorNonConvergence(double residual, int iterations)
        : SimulationError("pressure solve did not converge after " + std::to_string(iterations) +
                          " iterations (residual " + std::to_string(residual) + ")"),
          residual_(residual) {}

    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class DivergenceError : public SimulationError {
public:
    using SimulationError::SimulationError;
};

class PipelineError : public Error {
public:
    PipelineError(std::string node, const std::string& what)
        : Error(node.empty() ? what : "node '" + node + "': " + what), node_(std::move(node)) {}

    const std::string& node() const noexcept { return node_; }

private:
    std::string node_;
};

}  // namespace fieldlens
