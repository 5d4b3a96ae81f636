#pragma once

#include "annot/rsvp.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace annot {

// Emotiv EPOC 14-channel montage.
struct ChannelLayout {
  std::vector<std::string> names;
  std::vector<double> erp_weights;

  static ChannelLayout emotiv14();

  std::size_t size() const { return names.size(); }
  // -1 when absent.
  int find(const std::string& name) const;
};

struct Marker {
  std::size_t onset_sample{0};
  std::size_t stimulus_index{0};
  bool is_target{false};

  bool operator==(const Marker&) const = default;
};

struct EegRecording {
  ChannelLayout layout;
  double rate_hz_sampling{128.0};
  Eigen::MatrixXd samples;  // channels x samples, microvolts
  std::vector<Marker> markers;
  std::int64_t start_time_ns{0};

  std::size_t n_channels() const { return static_cast<std::size_t>(samples.rows()); }
  std::size_t n_samples() const { return static_cast<std::size_t>(samples.cols()); }
};

} // namespace annot

namespace annot::sim {

struct SimConfig {
  double rate_hz_sampling{128.0};
  double noise_rms_uv{10.0};
  double erp_amp_uv{20.0};
  double erp_peak_ms{350.0};
  double erp_width_ms{75.0};
  double latency_jitter_ms{25.0};
  double std_evoked_amp_uv{1.5};
  double blink_rate_hz{0.2};
  double blink_amp_uv{100.0};
  double quantization_uv{1.95};
  // Seconds of signal kept after the last stimulus display ends, so that its
  // post-stimulus epoch fits.
  double tail_seconds{1.0};
  std::uint64_t seed{0};
};

// Throws InvalidConfig: amplitudes must be >= 0, erp_peak_ms in [250, 500],
// erp_width_ms and the sampling rate positive.
void validate(const SimConfig& config);

// 1/f background: white Gaussian noise shaped in the frequency domain, then
// each channel rescaled to exactly rms_uv.
Eigen::MatrixXd pink_noise(std::size_t n_samples, std::size_t n_channels, double rms_uv, std::uint64_t seed);

// Gaussian P300 bump over one second after onset. The centre sits on the
// sample nearest erp_peak_ms so that the peak value is exactly erp_amp_uv.
std::vector<double> erp_template(const SimConfig& config, double rate_hz);

// Closed-form P300 value at t seconds after onset, centred at centre_s.
double erp_value(double t_s, double centre_s, double amp_uv, double width_ms);

// Early biphasic response every stimulus gets (positive ~100 ms, negative ~170 ms).
double std_evoked_value(double t_s, double amp_uv);

// Blink shape: one sine period over 300 ms.
double blink_value(double t_s, double amp_uv);
inline constexpr double kBlinkSeconds = 0.3;

// Per-channel blink weights (frontal channels only).
std::vector<double> blink_weights(const ChannelLayout& layout);

// [start, end) sample interval touched by each stimulus' evoked response.
struct Support {
  std::size_t stimulus_index{0};
  std::size_t begin{0};
  std::size_t end{0};
};
std::vector<Support> evoked_support(const rsvp::EventTimeline& timeline, double rate_hz, std::size_t n_samples);
// Number of samples covered by two or more evoked responses.
std::size_t evoked_overlap_samples(const std::vector<Support>& support);

std::size_t recording_length(const rsvp::EventTimeline& timeline, const SimConfig& config);

struct SimComponents {
  Eigen::MatrixXd noise;
  Eigen::MatrixXd evoked;
  Eigen::MatrixXd blinks;
  std::vector<double> blink_onsets_s;
};

// Unquantized additive parts; simulate_session sums and quantizes them.
SimComponents simulate_components(const rsvp::SequencePlan& plan, const rsvp::EventTimeline& timeline,
                                  const SimConfig& config, const ChannelLayout& layout);

EegRecording simulate_session(const rsvp::SequencePlan& plan, const rsvp::EventTimeline& timeline,
                              const SimConfig& config, const ChannelLayout& layout);

double quantize(double value_uv, double step_uv);

} // namespace annot::sim
