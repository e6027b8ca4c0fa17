#include "objslam/error.hpp"

namespace objslam {

const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::AngleAtPi: return "AngleAtPi";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::InsufficientInstances: return "InsufficientInstances";
    case ErrorCode::InconsistentK: return "InconsistentK";
    case ErrorCode::DimensionMismatch: return "DimensionMismatch";
    case ErrorCode::Underconstrained: return "Underconstrained";
    case ErrorCode::Diverged: return "Diverged";
    case ErrorCode::GroundPlaneDegenerate: return "GroundPlaneDegenerate";
    case ErrorCode::UnknownVariable: return "UnknownVariable";
    case ErrorCode::DuplicateId: return "DuplicateId";
    case ErrorCode::GaugeUnfixed: return "GaugeUnfixed";
    case ErrorCode::DisconnectedGraph: return "DisconnectedGraph";
    case ErrorCode::EmptyIndex: return "EmptyIndex";
    case ErrorCode::MissingCorrespondence: return "MissingCorrespondence";
    case ErrorCode::NotApplicable: return "NotApplicable";
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

}  // namespace objslam
