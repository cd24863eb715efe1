#pragma once

#include <stdexcept>
#include <string>

namespace sdgm {

enum class ErrorKind {
  InvalidArgument,
  EmptyCorpus,
  SequenceTooShort,
  IdOutOfRange,
  ShapeMismatch,
  PositionOutOfRange,
  StaleCache,
  SignalTooShort,
  DimensionMismatch,
  InsufficientData,
  DegenerateComponent,
  NonFinite,
  EmptyEvalSet,
  Io,
  Format,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace sdgm
