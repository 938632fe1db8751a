#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace otproto {

enum class ErrorCode {
  NonFinite,
  ZeroDim,
  ZeroVector,
  DimMismatch,
  NumericOverflow,
  EmptyDataset,
  SingleClass,
  NoRegions,
  NoNegativePixels,
  MissingProvenance,
  BadMagic,
  BadVersion,
  TruncatedPayload,
  NonFiniteFloat,
  NotFound,
  InvalidConfig,
  IoFailure,
};

std::string_view to_string(ErrorCode code) noexcept;

/// Every failure raised by the library carries one of the codes above so that
/// callers (and the CLI) can map it onto a structured message or exit status.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace otproto
