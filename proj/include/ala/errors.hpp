#pragma once

#include <stdexcept>
#include <string>

namespace ala {

/// Error classes map one-to-one onto CLI exit codes.
enum class ErrorCode : int {
  kGeneric = 1,
  kConfig = 2,
  kParse = 3,
  kNotInvertible = 4,
  kNotConcave = 5,
  kNoConvergence = 6,
  kDegenerateResponse = 7,
  kRefuseEnumeration = 8,
  kInvalidModel = 9,
  kDomain = 10,
  kToleranceNotMet = 11,
};

class AlaError : public std::runtime_error {
 public:
  AlaError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

#define ALA_DEFINE_ERROR(Name, Code)                                  \
  class Name : public AlaError {                                      \
   public:                                                            \
    explicit Name(const std::string& what) : AlaError(Code, what) {} \
  };

ALA_DEFINE_ERROR(ConfigError, ErrorCode::kConfig)
ALA_DEFINE_ERROR(ParseError, ErrorCode::kParse)
ALA_DEFINE_ERROR(NotConcaveAtExpansion, ErrorCode::kNotConcave)
ALA_DEFINE_ERROR(NoConvergence, ErrorCode::kNoConvergence)
ALA_DEFINE_ERROR(DegenerateResponse, ErrorCode::kDegenerateResponse)
ALA_DEFINE_ERROR(RefuseEnumeration, ErrorCode::kRefuseEnumeration)
ALA_DEFINE_ERROR(InvalidModel, ErrorCode::kInvalidModel)
ALA_DEFINE_ERROR(DomainError, ErrorCode::kDomain)
ALA_DEFINE_ERROR(ToleranceNotMet, ErrorCode::kToleranceNotMet)

#undef ALA_DEFINE_ERROR

/// Raised when a Gram block cannot be factorized. `model` carries the bit
/// string of the offending model when known.
class NotInvertible : public AlaError {
 public:
  explicit NotInvertible(const std::string& what, std::string model = {})
      : AlaError(ErrorCode::kNotInvertible,
                 model.empty() ? what : what + " (model " + model + ")"),
        model_(std::move(model)) {}
  const std::string& model() const noexcept { return model_; }

 private:
  std::string model_;
};

}  // namespace ala
