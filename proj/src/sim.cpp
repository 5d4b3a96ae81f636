#include "annot/sim.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>
#include <random>

namespace annot {

ChannelLayout ChannelLayout::emotiv14() {
  return ChannelLayout{
      {"af3", "f7", "f3", "fc5", "t7", "p7", "o1", "o2", "p8", "t8", "fc6", "f4", "f8", "af4"},
      {1.0, 0.6, 1.0, 0.7, 0.3, 0.5, 0.4, 0.4, 0.5, 0.3, 0.7, 1.0, 0.6, 1.0},
  };
}

int ChannelLayout::find(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return static_cast<int>(i);
  }
  return -1;
}

} // namespace annot

namespace annot::sim {

void validate(const SimConfig& c) {
  auto fail = [](const std::string& why) { throw Error(Errc::InvalidConfig, "sim: " + why); };
  if (!(c.rate_hz_sampling > 0.0)) fail("rate_hz_sampling must be positive");
  for (double a : {c.noise_rms_uv, c.erp_amp_uv, c.std_evoked_amp_uv, c.blink_amp_uv, c.blink_rate_hz,
                   c.latency_jitter_ms, c.quantization_uv, c.tail_seconds})
    if (!(a >= 0.0) || !std::isfinite(a)) fail("amplitudes, rates and durations must be finite and >= 0");
  if (!(c.erp_peak_ms >= 250.0 && c.erp_peak_ms <= 500.0)) fail("erp_peak_ms must lie in [250, 500]");
  if (!(c.erp_width_ms > 0.0)) fail("erp_width_ms must be positive");
}

Eigen::MatrixXd pink_noise(std::size_t n_samples, std::size_t n_channels, double rms_uv, std::uint64_t seed) {
  if (n_samples < 2) throw Error(Errc::DegenerateLength, "pink_noise needs at least 2 samples");
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n_channels),
                                              static_cast<Eigen::Index>(n_samples));
  if (rms_uv <= 0.0 || n_channels == 0) return out;

  const std::size_t n_bins = n_samples / 2 + 1;
  std::vector<double> time(n_samples);
  std::vector<std::complex<double>> freq(n_bins);
  auto* fbuf = reinterpret_cast<fftw_complex*>(freq.data());
  fftw_plan fwd = fftw_plan_dft_r2c_1d(static_cast<int>(n_samples), time.data(), fbuf, FFTW_ESTIMATE);
  fftw_plan inv = fftw_plan_dft_c2r_1d(static_cast<int>(n_samples), fbuf, time.data(), FFTW_ESTIMATE);

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (std::size_t c = 0; c < n_channels; ++c) {
    for (auto& x : time) x = gauss(rng);
    fftw_execute(fwd);
    freq[0] = 0.0;
    for (std::size_t k = 1; k < n_bins; ++k) freq[k] /= std::sqrt(static_cast<double>(k));
    fftw_execute(inv);

    double ss = 0.0;
    for (double x : time) ss += x * x;
    const double rms = std::sqrt(ss / static_cast<double>(n_samples));
    const double scale = rms > 0.0 ? rms_uv / rms : 0.0;
    for (std::size_t i = 0; i < n_samples; ++i)
      out(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(i)) = time[i] * scale;
  }
  fftw_destroy_plan(fwd);
  fftw_destroy_plan(inv);
  return out;
}

double erp_value(double t_s, double centre_s, double amp_uv, double width_ms) {
  const double sigma = width_ms / 1000.0;
  const double d = t_s - centre_s;
  return amp_uv * std::exp(-(d * d) / (2.0 * sigma * sigma));
}

std::vector<double> erp_template(const SimConfig& config, double rate_hz) {
  if (!(config.erp_width_ms > 0.0)) throw Error(Errc::InvalidConfig, "erp_width_ms must be positive");
  const auto n = static_cast<std::size_t>(std::llround(rate_hz));
  const double centre = std::round(config.erp_peak_ms / 1000.0 * rate_hz) / rate_hz;
  std::vector<double> w(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    w[i] = erp_value(static_cast<double>(i) / rate_hz, centre, config.erp_amp_uv, config.erp_width_ms);
  }
  return w;
}

double std_evoked_value(double t_s, double amp_uv) {
  auto bump = [](double t, double mu, double sigma) {
    const double d = t - mu;
    return std::exp(-(d * d) / (2.0 * sigma * sigma));
  };
  return amp_uv * (bump(t_s, 0.100, 0.020) - bump(t_s, 0.170, 0.025));
}

double blink_value(double t_s, double amp_uv) {
  if (t_s < 0.0 || t_s >= kBlinkSeconds) return 0.0;
  return amp_uv * std::sin(2.0 * std::numbers::pi * t_s / kBlinkSeconds);
}

std::vector<double> blink_weights(const ChannelLayout& layout) {
  std::vector<double> w(layout.size(), 0.0);
  auto set = [&](const char* name, double v) {
    const int idx = layout.find(name);
    if (idx >= 0) w[static_cast<std::size_t>(idx)] = v;
  };
  set("af3", 1.0);
  set("af4", 1.0);
  set("f7", 0.5);
  set("f8", 0.5);
  set("f3", 0.6);
  set("f4", 0.6);
  return w;
}

std::vector<Support> evoked_support(const rsvp::EventTimeline& timeline, double rate_hz, std::size_t n_samples) {
  const auto len = static_cast<std::size_t>(std::llround(rate_hz));
  std::vector<Support> out;
  out.reserve(timeline.onsets.size());
  for (const auto& on : timeline.onsets) {
    const auto begin = static_cast<std::size_t>(std::llround(on.seconds * rate_hz));
    out.push_back(Support{on.stimulus_index, std::min(begin, n_samples), std::min(begin + len, n_samples)});
  }
  return out;
}

std::size_t evoked_overlap_samples(const std::vector<Support>& support) {
  std::size_t n = 0;
  for (const auto& s : support) n = std::max(n, s.end);
  std::vector<int> cover(n + 1, 0);
  for (const auto& s : support) {
    ++cover[s.begin];
    --cover[s.end];
  }
  std::size_t overlap = 0;
  int running = 0;
  for (std::size_t i = 0; i < n; ++i) {
    running += cover[i];
    if (running >= 2) ++overlap;
  }
  return overlap;
}

std::size_t recording_length(const rsvp::EventTimeline& timeline, const SimConfig& config) {
  return static_cast<std::size_t>(
      std::ceil((timeline.session_length_seconds + config.tail_seconds) * config.rate_hz_sampling));
}

namespace {

void check_consistent(const rsvp::SequencePlan& plan, const rsvp::EventTimeline& timeline) {
  if (timeline.onsets.size() != plan.stimuli.size())
    throw Error(Errc::InconsistentTimeline, "timeline has " + std::to_string(timeline.onsets.size()) +
                                                " onsets for " + std::to_string(plan.stimuli.size()) + " stimuli");
  double prev = -1.0;
  for (std::size_t i = 0; i < plan.stimuli.size(); ++i) {
    const auto& on = timeline.onsets[i];
    if (on.stimulus_index != plan.stimuli[i].index)
      throw Error(Errc::InconsistentTimeline, "onset " + std::to_string(i) + " refers to stimulus " +
                                                  std::to_string(on.stimulus_index));
    if (!(on.seconds > prev) || on.seconds > timeline.session_length_seconds)
      throw Error(Errc::InconsistentTimeline, "onset " + std::to_string(i) + " out of order or past session end");
    prev = on.seconds;
  }
}

} // namespace

SimComponents simulate_components(const rsvp::SequencePlan& plan, const rsvp::EventTimeline& timeline,
                                  const SimConfig& config, const ChannelLayout& layout) {
  validate(config);
  check_consistent(plan, timeline);
  const double fs = config.rate_hz_sampling;
  const std::size_t n = recording_length(timeline, config);
  const auto n_ch = static_cast<Eigen::Index>(layout.size());

  SimComponents parts;
  parts.noise = pink_noise(n, layout.size(), config.noise_rms_uv, derive_seed(config.seed, "noise"));
  parts.evoked = Eigen::MatrixXd::Zero(n_ch, static_cast<Eigen::Index>(n));
  parts.blinks = Eigen::MatrixXd::Zero(n_ch, static_cast<Eigen::Index>(n));

  std::mt19937_64 jitter_rng(derive_seed(config.seed, "jitter"));
  std::uniform_real_distribution<double> jitter(-1.0, 1.0);
  const double nominal_centre = std::round(config.erp_peak_ms / 1000.0 * fs) / fs;
  const auto span = static_cast<std::size_t>(std::llround(fs));

  for (std::size_t i = 0; i < plan.stimuli.size(); ++i) {
    const auto onset = static_cast<std::size_t>(std::llround(timeline.onsets[i].seconds * fs));
    const bool target = plan.stimuli[i].is_target;
    double centre = nominal_centre;
    if (target) centre += jitter(jitter_rng) * config.latency_jitter_ms / 1000.0;
    for (std::size_t j = 0; j < span && onset + j < n; ++j) {
      const double t = static_cast<double>(j) / fs;
      const double common = std_evoked_value(t, config.std_evoked_amp_uv);
      const double p300 = target ? erp_value(t, centre, config.erp_amp_uv, config.erp_width_ms) : 0.0;
      for (Eigen::Index c = 0; c < n_ch; ++c) {
        parts.evoked(c, static_cast<Eigen::Index>(onset + j)) +=
            common + p300 * layout.erp_weights[static_cast<std::size_t>(c)];
      }
    }
  }

  if (config.blink_rate_hz > 0.0 && config.blink_amp_uv > 0.0) {
    std::mt19937_64 blink_rng(derive_seed(config.seed, "blinks"));
    std::exponential_distribution<double> gap(config.blink_rate_hz);
    const auto weights = blink_weights(layout);
    const double duration = static_cast<double>(n) / fs;
    for (double t = gap(blink_rng); t < duration; t += gap(blink_rng)) {
      parts.blink_onsets_s.push_back(t);
      const auto first = static_cast<std::size_t>(std::ceil(t * fs));
      for (std::size_t s = first; s < n && static_cast<double>(s) / fs < t + kBlinkSeconds; ++s) {
        const double v = blink_value(static_cast<double>(s) / fs - t, config.blink_amp_uv);
        for (Eigen::Index c = 0; c < n_ch; ++c)
          parts.blinks(c, static_cast<Eigen::Index>(s)) += v * weights[static_cast<std::size_t>(c)];
      }
    }
  }
  return parts;
}

double quantize(double value_uv, double step_uv) {
  if (step_uv <= 0.0) return value_uv;
  return std::round(value_uv / step_uv) * step_uv;
}

EegRecording simulate_session(const rsvp::SequencePlan& plan, const rsvp::EventTimeline& timeline,
                              const SimConfig& config, const ChannelLayout& layout) {
  auto parts = simulate_components(plan, timeline, config, layout);
  EegRecording rec;
  rec.layout = layout;
  rec.rate_hz_sampling = config.rate_hz_sampling;
  rec.samples = parts.noise + parts.evoked + parts.blinks;
  const double q = config.quantization_uv;
  rec.samples = rec.samples.unaryExpr([q](double v) { return quantize(v, q); });
  rec.markers.reserve(plan.stimuli.size());
  for (std::size_t i = 0; i < plan.stimuli.size(); ++i) {
    rec.markers.push_back(Marker{static_cast<std::size_t>(std::llround(timeline.onsets[i].seconds * config.rate_hz_sampling)),
                                 plan.stimuli[i].index, plan.stimuli[i].is_target});
  }
  return rec;
}

} // namespace annot::sim
