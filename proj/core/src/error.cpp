#include "firn/error.hpp"

namespace firn {

std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::ColumnCountMismatch: return "ColumnCountMismatch";
    case ErrorKind::EmptyColumn: return "EmptyColumn";
    case ErrorKind::NonMonotonicTops: return "NonMonotonicTops";
    case ErrorKind::InvalidRecord: return "InvalidRecord";
    case ErrorKind::InsufficientLayers: return "InsufficientLayers";
    case ErrorKind::DegenerateChannel: return "DegenerateChannel";
    case ErrorKind::ZeroGraph: return "ZeroGraph";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::DivergedTraining: return "DivergedTraining";
    case ErrorKind::Format: return "Format";
    case ErrorKind::Io: return "Io";
    case ErrorKind::Config: return "Config";
  }
  return "Unknown";
}

}  // namespace firn
