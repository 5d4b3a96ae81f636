#include "annot/dsp.hpp"

#include "annot/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <complex>
#include <numbers>

namespace annot::dsp {

namespace {

void check_freq(double f, double rate_hz, const char* what) {
  if (!(f > 0.0) || !(f < rate_hz / 2.0)) {
    throw Error(Errc::NyquistViolation, std::string(what) + " " + std::to_string(f) + " Hz outside (0, " +
                                            std::to_string(rate_hz / 2.0) + ") Hz");
  }
}

void check_order(int order) {
  if (order < 2 || order % 2 != 0) throw Error(Errc::BadConfig, "filter order must be even and >= 2");
}

// Prewarped tan(pi f / fs), shifted so the squared (forward-backward)
// response reaches 1/sqrt(2) at f.
double compensated_k(double f, double rate_hz, int order, bool lowpass) {
  const double k = std::tan(std::numbers::pi * f / rate_hz);
  const double shift = std::pow(std::numbers::sqrt2 - 1.0, 1.0 / (2.0 * order));
  return lowpass ? k / shift : k * shift;
}

// Steady-state internal state of each DF2T section for unit step input.
std::vector<std::array<double, 2>> steady_state(const Sos& sos) {
  std::vector<std::array<double, 2>> zi(sos.size());
  double scale = 1.0;
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    const double gain = (q.b0 + q.b1 + q.b2) / (1.0 + q.a1 + q.a2);
    const double z2 = q.b2 - q.a2 * gain;
    const double z1 = q.b1 - q.a1 * gain + z2;
    zi[s] = {z1 * scale, z2 * scale};
    scale *= gain;
  }
  return zi;
}

void sosfilt_inplace(const Sos& sos, std::vector<double>& x, std::vector<std::array<double, 2>> z) {
  for (std::size_t s = 0; s < sos.size(); ++s) {
    const auto& q = sos[s];
    double z1 = z[s][0], z2 = z[s][1];
    for (double& v : x) {
      const double in = v;
      const double y = q.b0 * in + z1;
      z1 = q.b1 * in - q.a1 * y + z2;
      z2 = q.b2 * in - q.a2 * y;
      v = y;
    }
  }
}

std::size_t pad_length(const Sos& sos, std::size_t n) {
  double slowest = 0.0;
  for (const auto& q : sos) {
    // Roots of z^2 + a1 z + a2.
    const std::complex<double> disc = std::sqrt(std::complex<double>(q.a1 * q.a1 - 4.0 * q.a2, 0.0));
    const double r = std::max(std::abs((-q.a1 + disc) / 2.0), std::abs((-q.a1 - disc) / 2.0));
    if (r > 0.0 && r < 1.0) slowest = std::max(slowest, -1.0 / std::log(r));
  }
  const auto want = std::max<std::size_t>(3 * (2 * sos.size() + 1), static_cast<std::size_t>(std::ceil(6.0 * slowest)));
  return n == 0 ? 0 : std::min(want, n - 1);
}

template <typename Fn>
EegRecording map_channels(const EegRecording& rec, Fn&& fn) {
  EegRecording out = rec;
  std::vector<double> row(rec.n_samples());
  for (Eigen::Index c = 0; c < rec.samples.rows(); ++c) {
    for (std::size_t i = 0; i < row.size(); ++i) row[i] = rec.samples(c, static_cast<Eigen::Index>(i));
    auto y = fn(std::span<const double>(row));
    for (std::size_t i = 0; i < row.size(); ++i) out.samples(c, static_cast<Eigen::Index>(i)) = y[i];
  }
  return out;
}

} // namespace

Sos butter_lowpass(int order, double cutoff_hz, double rate_hz) {
  check_order(order);
  check_freq(cutoff_hz, rate_hz, "low-pass cutoff");
  const double k = compensated_k(cutoff_hz, rate_hz, order, true);
  Sos sos;
  for (int i = 0; i < order / 2; ++i) {
    const double q = 1.0 / (2.0 * std::sin(std::numbers::pi * (2 * i + 1) / (2.0 * order)));
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad b;
    b.b0 = k * k * norm;
    b.b1 = 2.0 * b.b0;
    b.b2 = b.b0;
    b.a1 = 2.0 * (k * k - 1.0) * norm;
    b.a2 = (1.0 - k / q + k * k) * norm;
    sos.push_back(b);
  }
  return sos;
}

Sos butter_highpass(int order, double cutoff_hz, double rate_hz) {
  check_order(order);
  check_freq(cutoff_hz, rate_hz, "high-pass cutoff");
  const double k = compensated_k(cutoff_hz, rate_hz, order, false);
  Sos sos;
  for (int i = 0; i < order / 2; ++i) {
    const double q = 1.0 / (2.0 * std::sin(std::numbers::pi * (2 * i + 1) / (2.0 * order)));
    const double norm = 1.0 / (1.0 + k / q + k * k);
    Biquad b;
    b.b0 = norm;
    b.b1 = -2.0 * norm;
    b.b2 = norm;
    b.a1 = 2.0 * (k * k - 1.0) * norm;
    b.a2 = (1.0 - k / q + k * k) * norm;
    sos.push_back(b);
  }
  return sos;
}

Sos iir_notch(int order, double freq_hz, double quality, double rate_hz) {
  check_freq(freq_hz, rate_hz, "notch frequency");
  if (order < 1 || !(quality > 0.0)) throw Error(Errc::BadConfig, "notch order >= 1 and quality > 0 required");
  const double w0 = 2.0 * std::numbers::pi * freq_hz / rate_hz;
  const double alpha = std::sin(w0) / (2.0 * quality);
  const double a0 = 1.0 + alpha;
  Biquad b;
  b.b0 = 1.0 / a0;
  b.b1 = -2.0 * std::cos(w0) / a0;
  b.b2 = 1.0 / a0;
  b.a1 = -2.0 * std::cos(w0) / a0;
  b.a2 = (1.0 - alpha) / a0;
  return Sos(static_cast<std::size_t>(order), b);
}

double magnitude(const Sos& sos, double freq_hz, double rate_hz) {
  const std::complex<double> z1 = std::polar(1.0, -2.0 * std::numbers::pi * freq_hz / rate_hz);
  const std::complex<double> z2 = z1 * z1;
  std::complex<double> h = 1.0;
  for (const auto& q : sos) h *= (q.b0 + q.b1 * z1 + q.b2 * z2) / (1.0 + q.a1 * z1 + q.a2 * z2);
  return std::abs(h);
}

std::vector<double> filtfilt(const Sos& sos, std::span<const double> x) {
  const std::size_t n = x.size();
  if (n == 0) return {};
  const std::size_t pad = pad_length(sos, n);

  std::vector<double> ext(n + 2 * pad);
  for (std::size_t i = 0; i < pad; ++i) ext[i] = 2.0 * x[0] - x[pad - i];
  std::copy(x.begin(), x.end(), ext.begin() + static_cast<std::ptrdiff_t>(pad));
  for (std::size_t i = 0; i < pad; ++i) ext[pad + n + i] = 2.0 * x[n - 1] - x[n - 2 - i];

  const auto zi = steady_state(sos);
  auto scaled = [&](double v) {
    auto z = zi;
    for (auto& s : z) {
      s[0] *= v;
      s[1] *= v;
    }
    return z;
  };
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  sosfilt_inplace(sos, ext, scaled(ext.front()));
  std::reverse(ext.begin(), ext.end());
  return {ext.begin() + static_cast<std::ptrdiff_t>(pad), ext.begin() + static_cast<std::ptrdiff_t>(pad + n)};
}

EegRecording notch_filter(const EegRecording& rec, double freq_hz, int order, NotchConfig cfg) {
  const auto sos = iir_notch(order, freq_hz, cfg.quality, rec.rate_hz_sampling);
  return map_channels(rec, [&](std::span<const double> x) { return filtfilt(sos, x); });
}

EegRecording bandpass_filter(const EegRecording& rec, BandpassConfig cfg) {
  if (!(cfg.lo_hz < cfg.hi_hz))
    throw Error(Errc::InvertedBand, "lo " + std::to_string(cfg.lo_hz) + " Hz >= hi " + std::to_string(cfg.hi_hz) + " Hz");
  auto sos = butter_highpass(cfg.order, cfg.lo_hz, rec.rate_hz_sampling);
  const auto lp = butter_lowpass(cfg.order, cfg.hi_hz, rec.rate_hz_sampling);
  sos.insert(sos.end(), lp.begin(), lp.end());
  return map_channels(rec, [&](std::span<const double> x) { return filtfilt(sos, x); });
}

} // namespace annot::dsp
