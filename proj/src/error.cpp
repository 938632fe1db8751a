#include "otproto/error.hpp"

namespace otproto {

std::string_view to_string(ErrorCode code) noexcept {
  switch (code) {
    case ErrorCode::NonFinite: return "NonFinite";
    case ErrorCode::ZeroDim: return "ZeroDim";
    case ErrorCode::ZeroVector: return "ZeroVector";
    case ErrorCode::DimMismatch: return "DimMismatch";
    case ErrorCode::NumericOverflow: return "NumericOverflow";
    case ErrorCode::EmptyDataset: return "EmptyDataset";
    case ErrorCode::SingleClass: return "SingleClass";
    case ErrorCode::NoRegions: return "NoRegions";
    case ErrorCode::NoNegativePixels: return "NoNegativePixels";
    case ErrorCode::MissingProvenance: return "MissingProvenance";
    case ErrorCode::BadMagic: return "BadMagic";
    case ErrorCode::BadVersion: return "BadVersion";
    case ErrorCode::TruncatedPayload: return "TruncatedPayload";
    case ErrorCode::NonFiniteFloat: return "NonFiniteFloat";
    case ErrorCode::NotFound: return "NotFound";
    case ErrorCode::InvalidConfig: return "InvalidConfig";
    case ErrorCode::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

}  // namespace otproto
