#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace annot {

// Every named failure mode across the library. The CLI maps these onto its
// exit codes (see exit_code_for).
enum class Errc {
  // rsvp
  EmptyTargetSet,
  InsufficientNonTargets,
  OverlappingSets,
  InvalidPlan,
  // eeg_sim
  DegenerateLength,
  InconsistentTimeline,
  // dsp
  NyquistViolation,
  InvertedBand,
  NoMarkers,
  EmptyBaseline,
  ConvergenceFailure,
  RankDeficiency,
  // p300_net
  InvalidConfig,
  ShapeMismatch,
  NonFiniteGradient,
  SingleClassTrainingSet,
  // outlier_refine
  PerplexityInfeasible,
  NonFiniteGradientDuringEmbedding,
  FewerPointsThanClusters,
  EmptyCluster,
  MissingFeatures,
  // evaluation
  InsufficientClassMembers,
  // pipeline / io
  BadConfig,
  MissingInput,
  SchemaVersionMismatch,
  MalformedFile,
  // bridge
  PortUnavailable,
  UnresolvableImages,
  NoClockOffset,
};

std::string_view errc_name(Errc code);

class Error : public std::runtime_error {
public:
  Error(Errc code, const std::string& what);

  Errc code() const noexcept { return code_; }

private:
  Errc code_;
};

// 0 ok, 2 bad config, 3 missing input, 4 numeric failure.
int exit_code_for(Errc code);

} // namespace annot
