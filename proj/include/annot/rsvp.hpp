#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace annot::rsvp {

struct StimulusItem {
  std::size_t index{0};
  std::string image_id;
  bool is_target{false};
  std::size_t block{0};

  bool operator==(const StimulusItem&) const = default;
};

struct TargetRatio {
  int targets{1};
  int nontargets{12};

  bool operator==(const TargetRatio&) const = default;
};

struct PlanConfig {
  double rate_hz{10.0};
  std::size_t block_size{100};
  double fixation_seconds{2.0};
  TargetRatio target_ratio{};
  std::uint64_t seed{0};
  // Use every supplied image instead of subsampling non-targets down to the
  // configured ratio. The plan then records the achieved (reduced) ratio.
  bool use_all_items{false};
};

struct SequencePlan {
  double rate_hz{10.0};
  std::size_t block_size{100};
  double fixation_seconds{2.0};
  TargetRatio target_ratio{};
  std::uint64_t seed{0};
  std::vector<StimulusItem> stimuli;

  std::size_t n_blocks() const;
  std::size_t n_targets() const;

  bool operator==(const SequencePlan&) const = default;
};

struct Onset {
  std::size_t stimulus_index{0};
  double seconds{0.0};
};

struct EventTimeline {
  std::vector<Onset> onsets;
  double session_length_seconds{0.0};
};

// Uniform shuffle subject to "no two targets adjacent": non-targets are
// shuffled, then targets are dropped into a uniformly chosen subset of the
// gaps between them. Every valid arrangement is equally likely.
SequencePlan generate_plan(const std::vector<std::string>& target_ids,
                           const std::vector<std::string>& nontarget_ids,
                           const PlanConfig& config);

EventTimeline build_timeline(const SequencePlan& plan);

enum class ViolationKind {
  NonIncreasingIndex,
  WrongBlock,
  ShortBlock,
  DuplicateImage,
  RatioViolation,
  BadParameter,
};

struct Violation {
  ViolationKind kind;
  std::size_t index{0};
  std::string detail;
};

std::string violation_name(ViolationKind kind);

std::vector<Violation> validate_plan(const SequencePlan& plan);

// Expected target count for n stimuli at ratio r:s, i.e. round(n*r/(r+s)).
std::size_t expected_targets(std::size_t n, const TargetRatio& ratio);

// plan.json (version 1).
std::string plan_to_json(const SequencePlan& plan);
SequencePlan plan_from_json(const std::string& text);

} // namespace annot::rsvp
