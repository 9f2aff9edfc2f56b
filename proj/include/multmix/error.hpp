#ifndef MULTMIX_ERROR_HPP
#define MULTMIX_ERROR_HPP

#include <stdexcept>
#include <string>

namespace multmix {

enum class ErrorKind {
  MissingColumn,
  EmptyData,
  Parse,
  UnknownFactor,
  Syntax,
  Semantic,
  UnsupportedModel,
  DegenerateFactor,
  ParameterOverflow,
  IndefiniteCurvature,
  CovarianceDegenerate,
  OracleSize,
  GradientOverflow,
  BadStart,
  InvalidArgument,
  NestingViolation,
  RequiresReplicates,
  InsufficientDf,
  CovarianceInconsistency,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::MissingColumn: return "missing-column";
    case ErrorKind::EmptyData: return "empty-data";
    case ErrorKind::Parse: return "parse";
    case ErrorKind::UnknownFactor: return "unknown-factor";
    case ErrorKind::Syntax: return "syntax";
    case ErrorKind::Semantic: return "semantic";
    case ErrorKind::UnsupportedModel: return "unsupported-model";
    case ErrorKind::DegenerateFactor: return "degenerate-factor";
    case ErrorKind::ParameterOverflow: return "parameter-overflow";
    case ErrorKind::IndefiniteCurvature: return "indefinite-curvature";
    case ErrorKind::CovarianceDegenerate: return "covariance-degenerate";
    case ErrorKind::OracleSize: return "oracle-size";
    case ErrorKind::GradientOverflow: return "gradient-overflow";
    case ErrorKind::BadStart: return "bad-start";
    case ErrorKind::InvalidArgument: return "invalid-argument";
    case ErrorKind::NestingViolation: return "nesting-violation";
    case ErrorKind::RequiresReplicates: return "requires-replicates";
    case ErrorKind::InsufficientDf: return "insufficient-df";
    case ErrorKind::CovarianceInconsistency: return "covariance-inconsistency";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (the CLI in
/// particular) can branch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

/// Formula syntax failure; offset is the byte position in the source text.
class SyntaxError : public Error {
 public:
  SyntaxError(std::size_t offset, const std::string& what)
      : Error(ErrorKind::Syntax,
              "syntax error at byte " + std::to_string(offset) + ": " + what),
        offset_(offset) {}

  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

}  // namespace multmix

#endif  // MULTMIX_ERROR_HPP
