#pragma once

#include "annot/dsp.hpp"
#include "annot/metrics.hpp"
#include "annot/net.hpp"
#include "annot/refine.hpp"
#include "annot/rsvp.hpp"
#include "annot/sim.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace annot::eval {

// Image-id universe for one simulated session.
struct SessionSpec {
  std::string target_class{"target"};
  std::size_t n_targets{200};
  std::size_t n_nontargets{2300};
  std::size_t n_categories{20};
  // Prepended to every image id; distinct prefixes give disjoint id spaces.
  std::string id_prefix;
  rsvp::PlanConfig plan{.use_all_items = true};
};

struct ImageIds {
  std::vector<std::string> targets;
  std::vector<std::string> nontargets;
};

// "<prefix><target_class>_0000" for targets, "<prefix>c07_0003" for others.
ImageIds make_image_ids(const SessionSpec& spec);

struct SessionData {
  rsvp::SequencePlan plan;
  rsvp::EventTimeline timeline;
  dsp::EpochSet epochs;
  dsp::PreprocessReport report;
};

SessionData simulate_epochs(const SessionSpec& spec, const sim::SimConfig& sim, const dsp::PreprocessConfig& pre,
                            std::uint64_t seed);

struct ClassifierConfig {
  net::ModelConfig model{};
  net::TrainConfig train{};
  double validation_fraction{0.2};
};

// Stratified split; second holds ~fraction of each class.
std::pair<dsp::EpochSet, dsp::EpochSet> split_stratified(const dsp::EpochSet& set, double fraction, std::uint64_t seed);

net::TrainResult fit_classifier(const dsp::EpochSet& train_session, const ClassifierConfig& cfg, std::uint64_t seed);

ConfusionCounts score_predictions(const dsp::EpochSet& truth, const std::vector<net::Prediction>& predictions);

// Image ids of predicted targets, looked up in the plan.
std::vector<std::string> predicted_target_ids(const rsvp::SequencePlan& plan,
                                              const std::vector<net::Prediction>& predictions);

// Counts after refinement: predicted targets not kept become negatives.
ConfusionCounts refined_counts(const rsvp::SequencePlan& plan, const std::vector<net::Prediction>& predictions,
                               const refine::RefinementResult& refined);

struct RefineContext {
  const rsvp::SequencePlan* plan{nullptr};
  const refine::FeatureTable* features{nullptr};
  refine::RefineConfig config{};
};

struct FoldResult {
  std::size_t fold{0};
  std::size_t n_test{0};
  std::size_t n_test_targets{0};
  ConfusionCounts before{};
  ConfusionCounts after{};
  Metrics before_metrics{};
  Metrics after_metrics{};
  bool refined{false};
};

struct Summary {
  double mean{0.0};
  double std{0.0};
};

struct ExperimentReport {
  std::vector<FoldResult> folds;
  // Out-of-fold predictions in epoch order; every epoch is predicted once.
  std::vector<net::Prediction> predictions;
  // Refinement runs once over the pooled predicted-target set.
  std::optional<refine::RefinementResult> refinement;
  ConfusionCounts pooled_before{};
  ConfusionCounts pooled_after{};
  Metrics pooled_before_metrics{};
  Metrics pooled_after_metrics{};
  Summary f1_before, precision_before, recall_before;
  Summary f1_after, precision_after, recall_after;
  std::string fingerprint;
};

// Fold membership: each class shuffled then dealt round-robin.
std::vector<std::size_t> stratified_folds(const dsp::EpochSet& set, std::size_t k, std::uint64_t seed);

ExperimentReport kfold_evaluate(const dsp::EpochSet& set, std::size_t k, const ClassifierConfig& cfg,
                                const std::optional<RefineContext>& refine_ctx, std::uint64_t seed);

Summary summarize(const std::vector<double>& values);

// ---------------------------------------------------------------------------

struct SweepConfig {
  SessionSpec session{};
  sim::SimConfig sim{};
  dsp::PreprocessConfig preprocess{};
  ClassifierConfig classifier{};
  std::size_t repetitions{5};
  std::uint64_t seed{0};
};

struct RatePoint {
  double rate_hz{0.0};
  std::vector<double> f1;  // one per repetition
  double mean_f1{0.0};
};

struct SweepResult {
  std::vector<RatePoint> points;
  // Spearman correlation of (-rate, mean F1); absent for a single rate.
  std::optional<double> trend;
};

double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Train on one session and test on another, both at the given rate.
double rate_trial(double rate_hz, const SweepConfig& cfg, std::size_t repetition);

SweepResult rate_sweep(const std::vector<double>& rates, const SweepConfig& cfg);

// ---------------------------------------------------------------------------

struct TransferResult {
  std::vector<double> specific_f1;  // held-out class-A sessions
  std::vector<double> agnostic_f1;  // class-B sessions
  double mean_specific{0.0};
  double mean_agnostic{0.0};
  double difference{0.0};  // specific - agnostic
};

TransferResult transfer_experiment(const dsp::EpochSet& train_a, const std::vector<dsp::EpochSet>& heldout_a,
                                   const std::vector<dsp::EpochSet>& sessions_b, const ClassifierConfig& cfg,
                                   std::uint64_t seed);

struct TransferConfig {
  SessionSpec class_a{};
  SessionSpec class_b{};
  sim::SimConfig sim{};
  dsp::PreprocessConfig preprocess{};
  ClassifierConfig classifier{};
  std::size_t test_sessions{3};
  std::uint64_t seed{0};
};

// Simulates the sessions (ids of A and B must be disjoint) and runs the above.
TransferResult transfer_experiment(const TransferConfig& cfg);

} // namespace annot::eval
