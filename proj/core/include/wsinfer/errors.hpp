#ifndef WSINFER_ERRORS_HPP
#define WSINFER_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace wsinfer {

enum class ErrorCode {
  BadProbability,
  BagSizeMismatch,
  EvidenceKindMismatch,
  UnsupportedSetting,
  BadParameter,
  RankCheckFailed,
  InfeasibleBag,
  InfeasibleWeakLabel,
  NormalizationFailure,
  DimensionMismatch,
  ShapeMismatch,
  CapExceeded,
  DegenerateFit,
  IoFailure,
  EmptyTestSet,
  SettingMismatch,
  ParseError,
};

const char* error_code_name(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(error_code_name(code)) + ": " + what),
        code_(code) {}

  ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

}  // namespace wsinfer

#endif
