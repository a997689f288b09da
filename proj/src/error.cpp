#include "moldline/error.hpp"

namespace moldline {

std::string_view error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "InvalidArgument";
    case ErrorCode::MissingFile: return "MissingFile";
    case ErrorCode::MalformedRecord: return "MalformedRecord";
    case ErrorCode::ChannelMismatch: return "ChannelMismatch";
    case ErrorCode::BadSplitSize: return "BadSplitSize";
    case ErrorCode::EmptyTrace: return "EmptyTrace";
    case ErrorCode::DegenerateConstant: return "DegenerateConstant";
    case ErrorCode::ZeroStd: return "ZeroStd";
    case ErrorCode::BadDims: return "BadDims";
    case ErrorCode::BadWidth: return "BadWidth";
    case ErrorCode::SignalTooShort: return "SignalTooShort";
    case ErrorCode::NoValidPairs: return "NoValidPairs";
    case ErrorCode::TooFewValues: return "TooFewValues";
    case ErrorCode::SingularDesign: return "SingularDesign";
    case ErrorCode::NotFitted: return "NotFitted";
    case ErrorCode::ShapeMismatch: return "ShapeMismatch";
    case ErrorCode::NonFiniteLoss: return "NonFiniteLoss";
    case ErrorCode::BadConfig: return "BadConfig";
    case ErrorCode::UnknownModel: return "UnknownModel";
  }
  return "Unknown";
}

}  // namespace moldline
