#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <vector>

namespace bottcher {

/// Structural misuse: mismatched dimensions, invalid block data, bad arguments.
struct DimensionMismatchError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct StructuralError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Numerical failure of an iterative kernel (root finder, flow, stabilization).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Root finder ran out of budget; carries whatever roots were found so far.
struct RootFindingError : NumericalError {
    RootFindingError(const std::string& what, std::vector<std::complex<double>> partial)
        : NumericalError(what), partial_roots(std::move(partial)) {}
    std::vector<std::complex<double>> partial_roots;
};

/// A lift or flow came too close to the critical set of the underlying map.
struct CriticalProximityError : NumericalError {
    CriticalProximityError(const std::string& what, double det_magnitude)
        : NumericalError(what), det_magnitude(det_magnitude) {}
    double det_magnitude;
};

/// Orbit left the working ball of a Green evaluator: the point is not in the
/// local basin, so no Green value exists.
struct OrbitEscapeError : NumericalError {
    OrbitEscapeError(const std::string& what, int n, double norm)
        : NumericalError(what), iterations(n), norm(norm) {}
    int iterations;
    double norm;
};

/// Principal-branch ambiguity in a telescoping-log evaluation.
struct BranchError : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace bottcher
