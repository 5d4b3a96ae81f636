#include "annot/error.hpp"

namespace annot {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::EmptyTargetSet: return "EmptyTargetSet";
    case Errc::InsufficientNonTargets: return "InsufficientNonTargets";
    case Errc::OverlappingSets: return "OverlappingSets";
    case Errc::InvalidPlan: return "InvalidPlan";
    case Errc::DegenerateLength: return "DegenerateLength";
    case Errc::InconsistentTimeline: return "InconsistentTimeline";
    case Errc::NyquistViolation: return "NyquistViolation";
    case Errc::InvertedBand: return "InvertedBand";
    case Errc::NoMarkers: return "NoMarkers";
    case Errc::EmptyBaseline: return "EmptyBaseline";
    case Errc::ConvergenceFailure: return "ConvergenceFailure";
    case Errc::RankDeficiency: return "RankDeficiency";
    case Errc::InvalidConfig: return "InvalidConfig";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::NonFiniteGradient: return "NonFiniteGradient";
    case Errc::SingleClassTrainingSet: return "SingleClassTrainingSet";
    case Errc::PerplexityInfeasible: return "PerplexityInfeasible";
    case Errc::NonFiniteGradientDuringEmbedding: return "NonFiniteGradientDuringEmbedding";
    case Errc::FewerPointsThanClusters: return "FewerPointsThanClusters";
    case Errc::EmptyCluster: return "EmptyCluster";
    case Errc::MissingFeatures: return "MissingFeatures";
    case Errc::InsufficientClassMembers: return "InsufficientClassMembers";
    case Errc::BadConfig: return "BadConfig";
    case Errc::MissingInput: return "MissingInput";
    case Errc::SchemaVersionMismatch: return "SchemaVersionMismatch";
    case Errc::MalformedFile: return "MalformedFile";
    case Errc::PortUnavailable: return "PortUnavailable";
    case Errc::UnresolvableImages: return "UnresolvableImages";
    case Errc::NoClockOffset: return "NoClockOffset";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& what)
    : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::MissingInput:
    case Errc::MissingFeatures:
    case Errc::UnresolvableImages:
      return 3;
    case Errc::ConvergenceFailure:
    case Errc::RankDeficiency:
    case Errc::NonFiniteGradient:
    case Errc::NonFiniteGradientDuringEmbedding:
      return 4;
    default:
      return 2;
  }
}

} // namespace annot
