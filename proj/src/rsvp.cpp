#include "annot/rsvp.hpp"

#include "annot/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>
#include <unordered_set>

namespace annot::rsvp {

using nlohmann::ordered_json;

std::size_t SequencePlan::n_blocks() const {
  if (stimuli.empty() || block_size == 0) return 0;
  return (stimuli.size() + block_size - 1) / block_size;
}

std::size_t SequencePlan::n_targets() const {
  return static_cast<std::size_t>(
      std::count_if(stimuli.begin(), stimuli.end(), [](const auto& s) { return s.is_target; }));
}

std::size_t expected_targets(std::size_t n, const TargetRatio& ratio) {
  const double frac = static_cast<double>(ratio.targets) / (ratio.targets + ratio.nontargets);
  return static_cast<std::size_t>(std::llround(static_cast<double>(n) * frac));
}

namespace {

// Fisher-Yates with explicit index draws; std::shuffle's draw pattern is
// implementation-defined, this one is not.
template <typename T>
void seeded_shuffle(std::vector<T>& v, std::mt19937_64& rng) {
  for (std::size_t i = v.size(); i > 1; --i) {
    std::uniform_int_distribution<std::size_t> pick(0, i - 1);
    std::swap(v[i - 1], v[pick(rng)]);
  }
}

} // namespace

SequencePlan generate_plan(const std::vector<std::string>& target_ids,
                           const std::vector<std::string>& nontarget_ids,
                           const PlanConfig& config) {
  if (target_ids.empty()) throw Error(Errc::EmptyTargetSet, "no target images supplied");
  if (config.target_ratio.targets <= 0 || config.target_ratio.nontargets <= 0)
    throw Error(Errc::InvalidPlan, "target_ratio entries must be positive");
  if (config.block_size == 0 || !(config.rate_hz > 0.0) || config.fixation_seconds < 0.0)
    throw Error(Errc::InvalidPlan, "rate_hz, block_size must be positive and fixation non-negative");

  std::unordered_set<std::string> targets(target_ids.begin(), target_ids.end());
  std::unordered_set<std::string> nontargets(nontarget_ids.begin(), nontarget_ids.end());
  if (targets.size() != target_ids.size() || nontargets.size() != nontarget_ids.size())
    throw Error(Errc::OverlappingSets, "duplicate image ids within an input set");
  for (const auto& id : target_ids) {
    if (nontargets.count(id)) throw Error(Errc::OverlappingSets, "image id in both sets: " + id);
  }

  const std::size_t n_t = target_ids.size();
  std::size_t n_nt = 0;
  TargetRatio recorded = config.target_ratio;
  if (config.use_all_items) {
    n_nt = nontarget_ids.size();
    if (n_nt + 1 < n_t) {
      throw Error(Errc::InsufficientNonTargets,
                  "required " + std::to_string(n_t - 1) + " non-targets to separate targets, available " +
                      std::to_string(n_nt));
    }
    const auto g = std::gcd(n_t, n_nt == 0 ? n_t : n_nt);
    recorded = TargetRatio{static_cast<int>(n_t / g), static_cast<int>(n_nt / g)};
  } else {
    n_nt = static_cast<std::size_t>(std::llround(static_cast<double>(n_t) * config.target_ratio.nontargets /
                                                 config.target_ratio.targets));
    if (nontarget_ids.size() < n_nt) {
      throw Error(Errc::InsufficientNonTargets, "required " + std::to_string(n_nt) + ", available " +
                                                    std::to_string(nontarget_ids.size()));
    }
    if (n_nt + 1 < n_t) {
      throw Error(Errc::InsufficientNonTargets,
                  "ratio leaves too few non-targets to keep targets apart: required " +
                      std::to_string(n_t - 1) + ", available " + std::to_string(n_nt));
    }
  }

  std::mt19937_64 rng(config.seed);

  // Selection: sample n_nt non-targets without replacement (partial shuffle),
  // then shuffle the selection and the targets.
  std::vector<std::string> pool = nontarget_ids;
  for (std::size_t i = 0; i < n_nt; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
    std::swap(pool[i], pool[pick(rng)]);
  }
  pool.resize(n_nt);
  seeded_shuffle(pool, rng);

  std::vector<std::string> tgt = target_ids;
  seeded_shuffle(tgt, rng);

  // n_nt non-targets leave n_nt + 1 gaps; pick n_t of them uniformly.
  std::vector<std::size_t> gaps(n_nt + 1);
  std::iota(gaps.begin(), gaps.end(), 0);
  for (std::size_t i = 0; i < n_t; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, gaps.size() - 1);
    std::swap(gaps[i], gaps[pick(rng)]);
  }
  std::vector<bool> gap_used(n_nt + 1, false);
  for (std::size_t i = 0; i < n_t; ++i) gap_used[gaps[i]] = true;

  SequencePlan plan;
  plan.rate_hz = config.rate_hz;
  plan.block_size = config.block_size;
  plan.fixation_seconds = config.fixation_seconds;
  plan.target_ratio = recorded;
  plan.seed = config.seed;
  plan.stimuli.reserve(n_t + n_nt);

  std::size_t next_target = 0;
  auto push = [&](const std::string& id, bool is_target) {
    const std::size_t idx = plan.stimuli.size();
    plan.stimuli.push_back(StimulusItem{idx, id, is_target, idx / config.block_size});
  };
  for (std::size_t g = 0; g <= n_nt; ++g) {
    if (gap_used[g]) push(tgt[next_target++], true);
    if (g < n_nt) push(pool[g], false);
  }
  return plan;
}

EventTimeline build_timeline(const SequencePlan& plan) {
  auto violations = validate_plan(plan);
  if (!violations.empty()) {
    throw Error(Errc::InvalidPlan, violation_name(violations.front().kind) + " at index " +
                                       std::to_string(violations.front().index) + ": " +
                                       violations.front().detail);
  }
  EventTimeline tl;
  tl.onsets.reserve(plan.stimuli.size());
  for (const auto& s : plan.stimuli) {
    const double t = static_cast<double>(s.block + 1) * plan.fixation_seconds +
                     static_cast<double>(s.index) / plan.rate_hz;
    tl.onsets.push_back(Onset{s.index, t});
  }
  tl.session_length_seconds = static_cast<double>(plan.n_blocks()) * plan.fixation_seconds +
                              static_cast<double>(plan.stimuli.size()) / plan.rate_hz;
  return tl;
}

std::string violation_name(ViolationKind kind) {
  switch (kind) {
    case ViolationKind::NonIncreasingIndex: return "NonIncreasingIndex";
    case ViolationKind::WrongBlock: return "WrongBlock";
    case ViolationKind::ShortBlock: return "ShortBlock";
    case ViolationKind::DuplicateImage: return "DuplicateImage";
    case ViolationKind::RatioViolation: return "RatioViolation";
    case ViolationKind::BadParameter: return "BadParameter";
  }
  return "Unknown";
}

std::vector<Violation> validate_plan(const SequencePlan& plan) {
  std::vector<Violation> out;
  if (!(plan.rate_hz > 0.0) || plan.block_size == 0 || plan.fixation_seconds < 0.0 ||
      plan.target_ratio.targets <= 0 || plan.target_ratio.nontargets <= 0) {
    out.push_back({ViolationKind::BadParameter, 0, "rate_hz, block_size and target_ratio must be positive"});
    return out;
  }

  std::unordered_set<std::string> seen;
  std::vector<std::size_t> block_counts;
  for (std::size_t i = 0; i < plan.stimuli.size(); ++i) {
    const auto& s = plan.stimuli[i];
    if (s.index != i) {
      // Indices are positions: strictly increasing from 0 with no gaps.
      out.push_back({ViolationKind::NonIncreasingIndex, i,
                     "expected index " + std::to_string(i) + ", found " + std::to_string(s.index)});
    }
    if (s.block != i / plan.block_size) {
      out.push_back({ViolationKind::WrongBlock, i,
                     "expected block " + std::to_string(i / plan.block_size) + ", found " +
                         std::to_string(s.block)});
    }
    if (!seen.insert(s.image_id).second) {
      out.push_back({ViolationKind::DuplicateImage, i, "image_id " + s.image_id + " repeated"});
    }
    if (s.block >= block_counts.size()) block_counts.resize(s.block + 1, 0);
    ++block_counts[s.block];
  }
  for (std::size_t b = 0; b + 1 < block_counts.size(); ++b) {
    if (block_counts[b] != plan.block_size) {
      out.push_back({ViolationKind::ShortBlock, b * plan.block_size,
                     "block " + std::to_string(b) + " has " + std::to_string(block_counts[b]) + " items"});
    }
  }
  if (!plan.stimuli.empty()) {
    const auto expected = static_cast<long long>(expected_targets(plan.stimuli.size(), plan.target_ratio));
    const auto observed = static_cast<long long>(plan.n_targets());
    if (std::llabs(observed - expected) > 1) {
      std::size_t first_target = 0;
      for (const auto& s : plan.stimuli) {
        if (s.is_target) {
          first_target = s.index;
          break;
        }
      }
      out.push_back({ViolationKind::RatioViolation, first_target,
                     "expected " + std::to_string(expected) + " +/- 1 targets, observed " +
                         std::to_string(observed)});
    }
  }
  return out;
}

std::string plan_to_json(const SequencePlan& plan) {
  ordered_json j;
  j["version"] = 1;
  j["rate_hz"] = plan.rate_hz;
  j["block_size"] = plan.block_size;
  j["fixation_seconds"] = plan.fixation_seconds;
  j["target_ratio"] = {plan.target_ratio.targets, plan.target_ratio.nontargets};
  j["seed"] = plan.seed;
  auto& arr = j["stimuli"] = ordered_json::array();
  for (const auto& s : plan.stimuli) {
    ordered_json item;
    item["index"] = s.index;
    item["image_id"] = s.image_id;
    item["is_target"] = s.is_target;
    item["block"] = s.block;
    arr.push_back(std::move(item));
  }
  return j.dump(1) + "\n";
}

SequencePlan plan_from_json(const std::string& text) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const std::exception& e) {
    throw Error(Errc::MalformedFile, std::string("plan.json: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != 1)
    throw Error(Errc::SchemaVersionMismatch, "plan.json version must be 1");
  try {
    SequencePlan plan;
    plan.rate_hz = j.at("rate_hz").get<double>();
    plan.block_size = j.at("block_size").get<std::size_t>();
    plan.fixation_seconds = j.at("fixation_seconds").get<double>();
    const auto& r = j.at("target_ratio");
    plan.target_ratio = TargetRatio{r.at(0).get<int>(), r.at(1).get<int>()};
    plan.seed = j.at("seed").get<std::uint64_t>();
    for (const auto& item : j.at("stimuli")) {
      plan.stimuli.push_back(StimulusItem{item.at("index").get<std::size_t>(),
                                          item.at("image_id").get<std::string>(),
                                          item.at("is_target").get<bool>(), item.at("block").get<std::size_t>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("plan.json: ") + e.what());
  }
}

} // namespace annot::rsvp
