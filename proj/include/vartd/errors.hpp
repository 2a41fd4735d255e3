#pragma once

#include <stdexcept>
#include <string>

namespace vartd {

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// Dimension mismatches, malformed inputs.
class StructuralError : public Error {
public:
    using Error::Error;
};

/// Chain fails the properness requirement (terminal unreachable).
class PropernessError : public Error {
public:
    using Error::Error;
};

/// Singular or ill-conditioned linear system.
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Episode exceeded the step cap before absorption.
class TruncationError : public Error {
public:
    using Error::Error;
};

/// Sampled system not invertible (too few episodes, dead features).
class DataDeficiencyError : public Error {
public:
    using Error::Error;
};

/// Iterative scheme left the stable region.
class DivergenceError : public Error {
public:
    using Error::Error;
};

/// Iterative scheme hit its iteration cap without reaching tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

} // namespace vartd
