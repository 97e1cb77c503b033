#pragma once

#include <stdexcept>
#include <string>

namespace gtf {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct DimensionMismatch : Error {
  using Error::Error;
};

// A reference direction whose norm falls below the degeneracy threshold.
struct DegenerateReference : Error {
  using Error::Error;
};

struct InvalidRange : Error {
  using Error::Error;
};

struct OutOfRange : Error {
  using Error::Error;
};

struct UnknownCondition : Error {
  using Error::Error;
};

struct DenoiserFailure : Error {
  using Error::Error;
};

// Precision fusion produced a non-positive precision (quotient path).
struct IndefinitePrecision : Error {
  using Error::Error;
};

struct UnsupportedComposition : Error {
  using Error::Error;
};

struct DimensionUnsupported : Error {
  using Error::Error;
};

struct SpecMismatch : Error {
  using Error::Error;
};

struct InvalidDim : Error {
  using Error::Error;
};

struct DataExhausted : Error {
  using Error::Error;
};

struct DivergedLoss : Error {
  using Error::Error;
};

struct ParseError : Error {
  using Error::Error;
};

struct ValidationError : Error {
  using Error::Error;
};

}  // namespace gtf
