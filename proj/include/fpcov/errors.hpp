/// \file errors.hpp
/// \brief Error taxonomy for the covariance/FPC estimation library.
///
/// Two broad classes matter to callers (and to the CLI exit-code mapping):
///  - configuration / input-format problems (bad flags, unreadable files,
///    malformed CSV, empty datasets)          -> ExitCode::kUsage (2)
///  - numeric / data-content failures during estimation (non-finite values,
///    no eligible curves, band geometry impossible, indefinite matrices)
///    -> ExitCode::kNumeric (1)
#pragma once

#include <stdexcept>
#include <string>

namespace fpcov {

enum class ExitCode : int { kOk = 0, kNumeric = 1, kUsage = 2 };

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  Error(std::string what, ExitCode code)
      : std::runtime_error(std::move(what)), code_(code) {}
  ExitCode exit_code() const noexcept { return code_; }

 private:
  ExitCode code_;
};

/// A numeric-stage failure (estimation cannot proceed on this data).
class NumericError : public Error {
 public:
  explicit NumericError(std::string what)
      : Error(std::move(what), ExitCode::kNumeric) {}
};

/// A configuration, usage, or input-format failure.
class UsageError : public Error {
 public:
  explicit UsageError(std::string what)
      : Error(std::move(what), ExitCode::kUsage) {}
};

/// An observation value or time is NaN/Inf, or a time lies outside [0,1].
class NonFiniteInput : public NumericError {
 public:
  explicit NonFiniteInput(std::string what) : NumericError(std::move(what)) {}
};

/// No curve satisfies the m_i >= 2 eligibility rule for the off-diagonal
/// covariance estimator.
class NoEligibleCurves : public NumericError {
 public:
  explicit NoEligibleCurves(std::string what) : NumericError(std::move(what)) {}
};

/// Two grid-indexed objects were combined but live on different grids.
class GridMismatch : public NumericError {
 public:
  explicit GridMismatch(std::string what) : NumericError(std::move(what)) {}
};

/// A band/window configuration requires evaluation outside the design
/// domain and no feasible fallback exists.
class DomainExceeded : public NumericError {
 public:
  explicit DomainExceeded(std::string what) : NumericError(std::move(what)) {}
};

/// A matrix that must be positive definite is not (Cholesky failed).
class NotPositiveDefinite : public NumericError {
 public:
  explicit NotPositiveDefinite(std::string what)
      : NumericError(std::move(what)) {}
};

/// Every (K, h) candidate in a model-selection sweep failed.
class AllCandidatesFailed : public NumericError {
 public:
  explicit AllCandidatesFailed(std::string what)
      : NumericError(std::move(what)) {}
};

/// A component/index request is outside the available range.
class IndexOutOfRange : public NumericError {
 public:
  explicit IndexOutOfRange(std::string what) : NumericError(std::move(what)) {}
};

/// Simulation or estimation configuration fails validation.
class InvalidConfig : public UsageError {
 public:
  explicit InvalidConfig(std::string what) : UsageError(std::move(what)) {}
};

/// An input file exists but contains no usable rows.
class NoData : public UsageError {
 public:
  explicit NoData(std::string what) : UsageError(std::move(what)) {}
};

/// An input file cannot be read or an output file cannot be written.
class IoError : public UsageError {
 public:
  explicit IoError(std::string what) : UsageError(std::move(what)) {}
};

/// An input file is readable but malformed.
class ParseError : public UsageError {
 public:
  explicit ParseError(std::string what) : UsageError(std::move(what)) {}
};

}  // namespace fpcov
