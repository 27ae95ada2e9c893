#pragma once

#include <stdexcept>
#include <string>

namespace crm {

// Three families, mapped one-to-one onto CLI exit codes (2, 3, 4).
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const noexcept { return 1; }
};

class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 2; }
};

class NumericalError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 3; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const noexcept override { return 4; }
};

#define CRM_DEFINE_ERROR(Name, Base)          \
  class Name : public Base {                  \
   public:                                    \
    explicit Name(const std::string& what)    \
        : Base(#Name ": " + what) {}          \
  }

// input / contract violations
CRM_DEFINE_ERROR(SchemaError, ValidationError);
CRM_DEFINE_ERROR(AxisError, ValidationError);
CRM_DEFINE_ERROR(DateOrderError, ValidationError);
CRM_DEFINE_ERROR(EmptyUniverse, ValidationError);
CRM_DEFINE_ERROR(UnknownTicker, ValidationError);
CRM_DEFINE_ERROR(UnknownColumn, ValidationError);
CRM_DEFINE_ERROR(DimensionMismatch, ValidationError);
CRM_DEFINE_ERROR(DuplicateName, ValidationError);
CRM_DEFINE_ERROR(DegenerateInput, ValidationError);
CRM_DEFINE_ERROR(DegenerateColumn, ValidationError);
CRM_DEFINE_ERROR(InsufficientHistory, ValidationError);
CRM_DEFINE_ERROR(UnclassifiedTicker, ValidationError);
CRM_DEFINE_ERROR(ImpossiblePruning, ValidationError);
CRM_DEFINE_ERROR(WindowTooShort, ValidationError);
CRM_DEFINE_ERROR(AlignmentError, ValidationError);
CRM_DEFINE_ERROR(NonPositiveWeight, ValidationError);
CRM_DEFINE_ERROR(InvalidSpec, ValidationError);
CRM_DEFINE_ERROR(ConfigError, ValidationError);

// numerical failures
CRM_DEFINE_ERROR(NotPositiveDefinite, NumericalError);
CRM_DEFINE_ERROR(SingularQ, NumericalError);
CRM_DEFINE_ERROR(SingularDesign, NumericalError);
CRM_DEFINE_ERROR(RankDeficientOmega, NumericalError);
CRM_DEFINE_ERROR(DegenerateSignal, NumericalError);
CRM_DEFINE_ERROR(DegenerateReturns, NumericalError);
CRM_DEFINE_ERROR(NonPositiveVariance, NumericalError);

#undef CRM_DEFINE_ERROR

}  // namespace crm
