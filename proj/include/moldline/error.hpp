#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace moldline {

enum class ErrorCode {
  InvalidArgument,
  MissingFile,
  MalformedRecord,
  ChannelMismatch,
  BadSplitSize,
  EmptyTrace,
  DegenerateConstant,
  ZeroStd,
  BadDims,
  BadWidth,
  SignalTooShort,
  NoValidPairs,
  TooFewValues,
  SingularDesign,
  NotFitted,
  ShapeMismatch,
  NonFiniteLoss,
  BadConfig,
  UnknownModel,
};

std::string_view error_code_name(ErrorCode code);

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& message) {
  throw Error(code, message);
}

}  // namespace moldline
