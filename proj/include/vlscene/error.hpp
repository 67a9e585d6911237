#pragma once

#include <stdexcept>
#include <string>

namespace vlscene {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Incompatible extents; the message names the offending axis.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// NaN or Inf produced by (or fed into) an operation.
class NonFiniteError : public Error {
public:
    using Error::Error;
};

/// Malformed VLFT / VLSC / VLCK payloads and manifests.
class FormatError : public Error {
public:
    using Error::Error;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace vlscene
