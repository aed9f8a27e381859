#pragma once

#include <stdexcept>
#include <string>

namespace sosctl {

// Base for every error raised by the toolkit. The CLI maps the subclasses
// onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define SOSCTL_DEFINE_ERROR(Name, Base)                              \
  class Name : public Base {                                         \
   public:                                                           \
    using Base::Base;                                                \
    const char* kind() const noexcept override { return #Name; }     \
  };

SOSCTL_DEFINE_ERROR(DimensionMismatch, Error)
SOSCTL_DEFINE_ERROR(UnrepresentableMonomial, Error)
SOSCTL_DEFINE_ERROR(AsymmetricInput, Error)
SOSCTL_DEFINE_ERROR(SimplexViolation, Error)
SOSCTL_DEFINE_ERROR(NonFinite, Error)
SOSCTL_DEFINE_ERROR(SingularFit, Error)
SOSCTL_DEFINE_ERROR(BasisOverflow, Error)
SOSCTL_DEFINE_ERROR(InfeasiblePoint, Error)
SOSCTL_DEFINE_ERROR(Infeasible, Error)
SOSCTL_DEFINE_ERROR(MaxIterations, Error)
SOSCTL_DEFINE_ERROR(ConfigError, Error)

#undef SOSCTL_DEFINE_ERROR

}  // namespace sosctl
