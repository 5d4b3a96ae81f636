#pragma once

#include "annot/sim.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace annot::dsp {

// ---------------------------------------------------------------------------
// Filters

// One biquad, a0 normalised to 1.
struct Biquad {
  double b0{1.0}, b1{0.0}, b2{0.0};
  double a1{0.0}, a2{0.0};
};

using Sos = std::vector<Biquad>;

// Butterworth sections (order must be even). The cutoff is pre-compensated so
// that the forward-backward response is -3 dB at cutoff_hz.
Sos butter_lowpass(int order, double cutoff_hz, double rate_hz);
Sos butter_highpass(int order, double cutoff_hz, double rate_hz);
// `order` identical second-order notch sections at freq_hz.
Sos iir_notch(int order, double freq_hz, double quality, double rate_hz);

// Forward-backward application with odd-extension padding and steady-state
// initial conditions. Zero phase; constant inputs pass exactly at DC gain.
std::vector<double> filtfilt(const Sos& sos, std::span<const double> x);

// Magnitude response (single pass) at freq_hz.
double magnitude(const Sos& sos, double freq_hz, double rate_hz);

struct NotchConfig {
  double quality{30.0};
};

EegRecording notch_filter(const EegRecording& rec, double freq_hz, int order = 1, NotchConfig cfg = {});

struct BandpassConfig {
  double lo_hz{0.1};
  double hi_hz{45.0};
  int order{4};
};

EegRecording bandpass_filter(const EegRecording& rec, BandpassConfig cfg = {});

// ---------------------------------------------------------------------------
// Epochs

struct Epoch {
  std::size_t stimulus_index{0};
  Eigen::MatrixXd samples;  // channels x window
  std::size_t onset_offset{0};
  std::optional<bool> label;
};

struct EpochSet {
  std::vector<Epoch> epochs;
  double rate_hz_sampling{128.0};
  std::vector<std::string> channel_names;
  // Markers whose window did not fit inside the recording.
  std::vector<std::size_t> dropped;

  std::size_t size() const { return epochs.size(); }
  std::size_t n_targets() const;
};

struct EpochWindow {
  double pre_seconds{0.5};
  double post_seconds{1.0};
};

EpochSet extract_epochs(const EegRecording& rec, EpochWindow window = {});

Epoch baseline_correct(const Epoch& epoch);
EpochSet baseline_correct(const EpochSet& set);

// epochs.json + epochs.f32le ([epoch][channel][sample], float32 LE).
void write_epochs(const std::string& dir, const EpochSet& set);
EpochSet read_epochs(const std::string& dir);

// ---------------------------------------------------------------------------
// ICA

struct IcaConfig {
  std::size_t n_components{0};  // 0 = all channels
  double tolerance{1e-6};
  int max_iterations{500};
  std::uint64_t seed{0};
  // Only every `decimate`-th sample is used to fit the unmixing matrix.
  std::size_t decimate{1};
};

struct IcaResult {
  Eigen::MatrixXd unmixing;    // components x channels, applied to centred data
  Eigen::MatrixXd mixing;      // channels x components
  Eigen::VectorXd channel_means;
  Eigen::MatrixXd sources;     // components x samples
  int iterations{0};
  double residual{0.0};
};

// Symmetric FastICA with the tanh (log-cosh) contrast.
IcaResult fastica(const Eigen::MatrixXd& data, IcaConfig cfg = {});
IcaResult fastica(const EegRecording& rec, std::size_t n_components, std::uint64_t seed = 0);

struct ArtifactRule {
  double kurtosis_threshold{5.0};      // excess kurtosis
  double frontal_fraction{0.6};
  std::vector<std::string> frontal{"af3", "af4", "f3", "f4"};
};

double excess_kurtosis(std::span<const double> x);

std::set<std::size_t> reject_artifact_components(const IcaResult& ica, const ChannelLayout& layout,
                                                 const ArtifactRule& rule = {});

// Subtracts the listed components' back-projection.
EegRecording remove_components(const EegRecording& rec, const IcaResult& ica, const std::set<std::size_t>& drop);

// ---------------------------------------------------------------------------
// Full chain

struct PreprocessConfig {
  std::vector<double> notch_hz{50.0, 60.0};
  int notch_order{1};
  BandpassConfig bandpass{};
  bool ica{true};
  // Fit on every 4th sample: a 300 ms blink still spans ~10 fitted points.
  IcaConfig ica_config{.decimate = 4};
  ArtifactRule artifact_rule{};
  // On ConvergenceFailure, retry on the dominant principal subspace with half
  // as many components, down to one. Gaussian background sources have no
  // preferred rotation, so a full-rank decomposition may never settle.
  bool ica_shrink_on_failure{true};
  EpochWindow window{};
  bool baseline{true};
};

struct PreprocessReport {
  bool ica_ran{false};
  bool ica_converged{false};
  int ica_iterations{0};
  double ica_residual{0.0};
  std::size_t ica_components{0};
  std::vector<std::size_t> removed_components;
  std::vector<std::size_t> dropped_epochs;
  std::string note;
};

struct PreprocessResult {
  EpochSet epochs;
  PreprocessReport report;
};

PreprocessResult preprocess(const EegRecording& rec, const PreprocessConfig& cfg = {});

} // namespace annot::dsp
