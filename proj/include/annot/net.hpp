#pragma once

#include "annot/dsp.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace annot::net {

// Compact EEG classifier: temporal conv -> depthwise spatial conv -> ELU ->
// avg-pool -> dropout -> separable conv -> ELU -> avg-pool -> dropout ->
// dense -> softmax.
struct ModelConfig {
  std::size_t n_channels{14};
  std::size_t n_samples{128};
  std::size_t temporal_filters{8};
  std::size_t temporal_kernel{33};
  std::size_t depth_multiplier{2};
  std::size_t separable_kernel{17};
  std::size_t pool1{4};
  std::size_t pool2{8};
  double dropout_p{0.25};
  double elu_alpha{1.0};
  std::size_t n_classes{2};

  std::size_t spatial_maps() const { return temporal_filters * depth_multiplier; }
  std::size_t t1() const { return n_samples / pool1; }
  std::size_t t2() const { return t1() / pool2; }
  std::size_t dense_inputs() const { return spatial_maps() * t2(); }
};

// Throws InvalidConfig.
void validate(const ModelConfig& config);

enum Param : std::size_t {
  kTemporal = 0,   // [F1][K1]
  kSpatial,        // [F1*D][C]
  kSpatialBias,    // [F1*D]
  kSepDepth,       // [F1*D][K2]
  kSepPoint,       // [F1*D][F1*D]
  kSepBias,        // [F1*D]
  kDense,          // [classes][F1*D*T2]
  kDenseBias,      // [classes]
  kParamCount
};

struct Tensor {
  std::string name;
  std::vector<std::size_t> shape;
  std::vector<double> data;
};

struct P300Model {
  ModelConfig config;
  std::vector<Tensor> params;
  std::uint64_t rng_state{0};

  std::size_t parameter_count() const;
};

using Gradients = std::vector<std::vector<double>>;

P300Model init_model(const ModelConfig& config, std::uint64_t seed);

// Post-stimulus window of an epoch: channels x n_samples starting at onset.
Eigen::MatrixXd classifier_window(const dsp::Epoch& epoch, const ModelConfig& config);

// Per-channel zero mean / unit variance, flattened channel-major.
std::vector<double> standardize(const Eigen::MatrixXd& window);

// Rows are class probabilities. Dropout only in train_mode; when no rng is
// given, one seeded from model.rng_state is used.
Eigen::MatrixXd forward(const P300Model& model, std::span<const Eigen::MatrixXd> batch, bool train_mode,
                        std::mt19937_64* rng = nullptr);

struct LossAndGradients {
  double loss{0.0};
  Gradients grads;
};

// Weighted mean cross-entropy: sum_i w[y_i] * -log p_i[y_i] / sum_i w[y_i].
LossAndGradients loss_and_gradients(const P300Model& model, std::span<const Eigen::MatrixXd> batch,
                                    std::span<const int> labels, std::span<const double> class_weights,
                                    bool train_mode = false, std::mt19937_64* rng = nullptr);

// Same, over inputs that have already been through standardize().
Eigen::MatrixXd forward_standardized(const P300Model& model, std::span<const std::vector<double>> inputs,
                                     bool train_mode, std::mt19937_64* rng);
LossAndGradients loss_and_gradients_standardized(const P300Model& model,
                                                 std::span<const std::vector<double>> inputs,
                                                 std::span<const int> labels, std::span<const double> class_weights,
                                                 bool train_mode, std::mt19937_64* rng);

// ---------------------------------------------------------------------------
// Optimisation

struct TrainConfig {
  double lr{1e-3};
  double beta1{0.9};
  double beta2{0.999};
  double eps{1e-8};
  std::size_t batch_size{64};
  std::size_t max_epochs{100};
  std::size_t early_stop_patience{10};
  bool class_weighting{true};
  std::uint64_t seed{0};
};

struct AdamState {
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

AdamState make_adam_state(const P300Model& model);

// One Adam update at step t (t >= 1). Throws NonFiniteGradient.
void adam_step(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
               const TrainConfig& cfg, long t);
void adam_step(P300Model& model, const Gradients& grads, AdamState& state, const TrainConfig& cfg, long t);

struct EpochStats {
  std::size_t epoch{0};
  double train_loss{0.0};
  double val_loss{0.0};
  double val_f1{0.0};
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  std::size_t best_epoch{0};
  bool early_stopped{false};
};

struct TrainResult {
  P300Model model;
  TrainHistory history;
};

// inverse-frequency weights (n / (n_classes * n_c)) or all ones.
std::array<double, 2> class_weights_for(std::span<const int> labels, bool weighting);

TrainResult train(const P300Model& model, const dsp::EpochSet& train_set, const dsp::EpochSet& validation_set,
                  const TrainConfig& cfg);

struct Prediction {
  std::size_t stimulus_index{0};
  double score{0.0};  // target-class probability
  bool label{false};
};

// Argmax unless a probability threshold is given.
std::vector<Prediction> predict(const P300Model& model, const dsp::EpochSet& set,
                                std::optional<double> threshold = std::nullopt);

// ---------------------------------------------------------------------------
// Checkpoints: model.json (config + manifest) + params.f32le in manifest order.

void save_model(const std::filesystem::path& dir, const P300Model& model);
P300Model load_model(const std::filesystem::path& dir);
std::string history_to_csv(const TrainHistory& history);

std::string model_config_to_json(const ModelConfig& config);

} // namespace annot::net
