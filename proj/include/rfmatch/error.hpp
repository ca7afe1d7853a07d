#pragma once

#include <stdexcept>
#include <string>

namespace rfmatch {

/// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
public:
    using Error::Error;
};

/// A network quantity hit a zero denominator (open/short singularity).
class SingularNetwork : public Error {
public:
    using Error::Error;
};

/// Load recovery failed: s12*s21 + (gin - s11)*s22 vanished.
class UnrecoverableLoad : public SingularNetwork {
public:
    using SingularNetwork::SingularNetwork;
};

class NoFeasibleSolution : public Error {
public:
    using Error::Error;
};

/// Schema or invariant violation in an input document.
class ValidationError : public Error {
public:
    using Error::Error;
};

/// Corrupt, truncated or version-mismatched file.
class FormatError : public Error {
public:
    using Error::Error;
};

/// Numerical breakdown during an iterative procedure (NaN loss, NaN gradient).
class NumericalError : public Error {
public:
    using Error::Error;
};

}  // namespace rfmatch
