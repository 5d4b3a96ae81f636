#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/recording_io.hpp"
#include "annot/rsvp.hpp"
#include "annot/sim.hpp"

#include <cmath>
#include <complex>
#include <filesystem>
#include <numbers>

using namespace annot;
using annot::sim::SimConfig;

namespace {

std::vector<std::string> ids(const std::string& stem, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(stem + "_" + std::to_string(i));
  return out;
}

double rms(const Eigen::RowVectorXd& x) { return std::sqrt(x.squaredNorm() / static_cast<double>(x.size())); }

// A plan holding one target shown at t = 2 s.
rsvp::SequencePlan single_target_plan() {
  rsvp::SequencePlan plan;
  plan.stimuli.push_back({0, "only_0", true, 0});
  return plan;
}

SimConfig silent() {
  SimConfig c;
  c.noise_rms_uv = 0.0;
  c.blink_rate_hz = 0.0;
  c.latency_jitter_ms = 0.0;
  c.std_evoked_amp_uv = 0.0;
  return c;
}

} // namespace

TEST_CASE("pink noise: zero amplitude, RMS, determinism") {
  CHECK(sim::pink_noise(1000, 3, 0.0, 1).isZero(0.0));

  auto x = sim::pink_noise(128 * 60, 14, 10.0, 5);
  for (Eigen::Index c = 0; c < x.rows(); ++c) {
    const double r = rms(x.row(c));
    CHECK(r >= 9.0);
    CHECK(r <= 11.0);
  }
  CHECK(sim::pink_noise(128 * 60, 14, 10.0, 5) == x);
  CHECK_FALSE(sim::pink_noise(128 * 60, 14, 10.0, 6) == x);

  CHECK_THROWS_AS(sim::pink_noise(1, 1, 1.0, 0), Error);
}

TEST_CASE("pink noise spectrum falls as 1/f between 1 and 40 Hz") {
  const double fs = 128.0;
  const std::size_t n = 128 * 60;
  auto x = sim::pink_noise(n, 4, 10.0, 17);

  // Direct DFT, averaged over channels, then log-log least squares.
  std::vector<double> lf, lp;
  for (std::size_t k = 1; k < n / 2; ++k) {
    const double f = static_cast<double>(k) * fs / static_cast<double>(n);
    if (f < 1.0 || f > 40.0) continue;
    double power = 0.0;
    for (Eigen::Index c = 0; c < x.rows(); ++c) {
      std::complex<double> acc{0.0, 0.0};
      for (std::size_t t = 0; t < n; ++t)
        acc += x(c, static_cast<Eigen::Index>(t)) *
               std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n));
      power += std::norm(acc);
    }
    lf.push_back(std::log10(f));
    lp.push_back(std::log10(power));
  }
  double mf = 0, mp = 0;
  for (std::size_t i = 0; i < lf.size(); ++i) {
    mf += lf[i];
    mp += lp[i];
  }
  mf /= static_cast<double>(lf.size());
  mp /= static_cast<double>(lp.size());
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lf.size(); ++i) {
    sxy += (lf[i] - mf) * (lp[i] - mp);
    sxx += (lf[i] - mf) * (lf[i] - mf);
  }
  const double slope = sxy / sxx;
  CHECK(slope >= -1.4);
  CHECK(slope <= -0.6);
}

TEST_CASE("ERP template peaks at the sample nearest the configured latency") {
  SimConfig c;
  c.erp_amp_uv = 5.0;
  c.erp_peak_ms = 350.0;
  c.erp_width_ms = 75.0;
  auto w = sim::erp_template(c, 128.0);
  REQUIRE(w.size() == 128);
  const auto arg = std::max_element(w.begin(), w.end()) - w.begin();
  CHECK(arg == 45);
  CHECK(w[45] == doctest::Approx(5.0).epsilon(1e-15));
  // Closed form evaluated independently.
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double t = static_cast<double>(i) / 128.0 - 45.0 / 128.0;
    CHECK(w[i] == doctest::Approx(5.0 * std::exp(-t * t / (2 * 0.075 * 0.075))).epsilon(1e-12));
  }

  c.erp_amp_uv = 0.0;
  for (double v : sim::erp_template(c, 128.0)) CHECK(v == 0.0);

  CHECK(sim::erp_value(0.35 + 0.075, 0.35, 8.0, 75.0) == doctest::Approx(8.0 * std::exp(-0.5)));
  CHECK(sim::erp_value(0.35 - 0.075, 0.35, 8.0, 75.0) == doctest::Approx(0.6065306597 * 8.0));
}

TEST_CASE("noise-free single target reproduces the scaled, quantized template") {
  auto plan = single_target_plan();
  auto tl = rsvp::build_timeline(plan);
  REQUIRE(tl.onsets[0].seconds == 2.0);
  auto c = silent();
  c.erp_amp_uv = 5.0;
  auto layout = ChannelLayout::emotiv14();
  auto rec = sim::simulate_session(plan, tl, c, layout);

  REQUIRE(rec.markers.size() == 1);
  CHECK(rec.markers[0].onset_sample == 256);
  CHECK(rec.markers[0].is_target);
  for (Eigen::Index ch = 0; ch < rec.samples.rows(); ++ch) {
    for (Eigen::Index s = 0; s < rec.samples.cols(); ++s) {
      double want = 0.0;
      if (s >= 256 && s < 256 + 128) {
        const double t = static_cast<double>(s - 256) / 128.0 - 45.0 / 128.0;
        want = 5.0 * std::exp(-t * t / (2 * 0.075 * 0.075)) * layout.erp_weights[static_cast<std::size_t>(ch)];
      }
      REQUIRE(rec.samples(ch, s) == doctest::Approx(std::round(want / 1.95) * 1.95).epsilon(1e-12));
    }
  }
}

TEST_CASE("without targets or evoked responses the recording is the quantized noise") {
  auto plan = rsvp::generate_plan({"t"}, ids("n", 12), {.seed = 3});
  for (auto& s : plan.stimuli) s.is_target = false;
  auto tl = rsvp::build_timeline(plan);
  SimConfig c;
  c.blink_rate_hz = 0.0;
  c.std_evoked_amp_uv = 0.0;
  c.seed = 77;
  auto rec = sim::simulate_session(plan, tl, c, ChannelLayout::emotiv14());
  auto noise = sim::pink_noise(rec.n_samples(), 14, c.noise_rms_uv, derive_seed(77, "noise"));
  auto q = noise.unaryExpr([](double v) { return std::round(v / 1.95) * 1.95; });
  CHECK((rec.samples - q).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("linearity in the ERP amplitude") {
  auto plan = rsvp::generate_plan(ids("t", 10), ids("n", 120), {.seed = 8});
  auto tl = rsvp::build_timeline(plan);
  auto layout = ChannelLayout::emotiv14();
  SimConfig c;
  c.seed = 5;
  c.erp_amp_uv = 0.0;
  auto base = sim::simulate_components(plan, tl, c, layout);
  c.erp_amp_uv = 1.0;
  auto unit = sim::simulate_components(plan, tl, c, layout);
  c.erp_amp_uv = 7.5;
  auto scaled = sim::simulate_components(plan, tl, c, layout);

  const Eigen::MatrixXd pure = unit.evoked - base.evoked;
  CHECK(pure.cwiseAbs().maxCoeff() > 0.1);
  CHECK(((scaled.evoked - base.evoked) - 7.5 * pure).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(scaled.noise == base.noise);
  CHECK(scaled.blinks == base.blinks);

  // After quantization the difference is off by at most one step per sample.
  c.erp_amp_uv = 0.0;
  auto r0 = sim::simulate_session(plan, tl, c, layout);
  c.erp_amp_uv = 7.5;
  auto r1 = sim::simulate_session(plan, tl, c, layout);
  CHECK(((r1.samples - r0.samples) - 7.5 * pure).cwiseAbs().maxCoeff() <= 1.95 + 1e-9);
}

TEST_CASE("markers carry the plan's ground truth") {
  auto plan = rsvp::generate_plan(ids("t", 20), ids("n", 230), {.seed = 12, .use_all_items = true});
  auto tl = rsvp::build_timeline(plan);
  auto rec = sim::simulate_session(plan, tl, SimConfig{.seed = 2}, ChannelLayout::emotiv14());
  REQUIRE(rec.markers.size() == plan.stimuli.size());
  for (std::size_t i = 0; i < plan.stimuli.size(); ++i) {
    CHECK(rec.markers[i].stimulus_index == i);
    CHECK(rec.markers[i].is_target == plan.stimuli[i].is_target);
    CHECK(rec.markers[i].onset_sample == static_cast<std::size_t>(std::llround(tl.onsets[i].seconds * 128.0)));
    CHECK(rec.markers[i].onset_sample < rec.n_samples());
  }
  CHECK(rec.n_samples() == static_cast<std::size_t>(std::ceil((tl.session_length_seconds + 1.0) * 128.0)));
  CHECK(rec.samples.allFinite());
  // Every sample sits on the device's amplitude grid.
  for (Eigen::Index s = 0; s < rec.samples.cols(); s += 97)
    for (Eigen::Index ch = 0; ch < rec.samples.rows(); ++ch) {
      const double k = rec.samples(ch, s) / 1.95;
      CHECK(std::abs(k - std::round(k)) < 1e-9);
    }
}

TEST_CASE("blinks touch frontal channels only and arrive at the configured rate") {
  auto plan = rsvp::generate_plan(ids("t", 200), ids("n", 2300), {.use_all_items = true});
  auto tl = rsvp::build_timeline(plan);
  auto layout = ChannelLayout::emotiv14();
  SimConfig c;
  c.seed = 4;
  auto parts = sim::simulate_components(plan, tl, c, layout);
  const std::set<std::string> frontal{"af3", "af4", "f7", "f8", "f3", "f4"};
  for (std::size_t ch = 0; ch < layout.size(); ++ch) {
    const double peak = parts.blinks.row(static_cast<Eigen::Index>(ch)).cwiseAbs().maxCoeff();
    if (frontal.count(layout.names[ch]))
      CHECK(peak > 10.0);
    else
      CHECK(peak == 0.0);
  }
  // Poisson count over ~301 s at 0.2 Hz: mean ~60, sd ~7.8.
  const double duration = static_cast<double>(parts.blinks.cols()) / 128.0;
  const double mean = 0.2 * duration;
  CHECK(std::abs(static_cast<double>(parts.blink_onsets_s.size()) - mean) < 4.0 * std::sqrt(mean));
}

TEST_CASE("inter-onset interval against ERP duration") {
  auto at_rate = [](double rate) {
    auto plan = rsvp::generate_plan(ids("t", 10), ids("n", 120), {.rate_hz = rate, .seed = 1});
    auto tl = rsvp::build_timeline(plan);
    const auto n = sim::recording_length(tl, SimConfig{});
    return static_cast<double>(sim::evoked_overlap_samples(sim::evoked_support(tl, 128.0, n))) /
           static_cast<double>(n);
  };
  CHECK(at_rate(1.0) == 0.0);
  CHECK(at_rate(4.0) > 0);
  CHECK(at_rate(10.0) > 0.0);

  // With a one-second response, the deepest stack of concurrent responses
  // equals the presentation rate.
  auto depth = [](double rate) {
    auto plan = rsvp::generate_plan(ids("t", 10), ids("n", 120), {.rate_hz = rate, .seed = 1});
    auto tl = rsvp::build_timeline(plan);
    auto support = sim::evoked_support(tl, 128.0, sim::recording_length(tl, SimConfig{}));
    std::vector<int> cover(sim::recording_length(tl, SimConfig{}), 0);
    for (const auto& s : support)
      for (std::size_t i = s.begin; i < s.end; ++i) ++cover[i];
    return *std::max_element(cover.begin(), cover.end());
  };
  CHECK(depth(1.0) == 1);
  CHECK(depth(4.0) == 4);
  CHECK(depth(10.0) == 10);

  // At 1 Hz, the evoked signal of each stimulus stays inside its own support.
  auto plan = rsvp::generate_plan(ids("t", 5), ids("n", 60), {.rate_hz = 1.0, .seed = 2});
  auto tl = rsvp::build_timeline(plan);
  SimConfig c;
  c.seed = 9;
  auto parts = sim::simulate_components(plan, tl, c, ChannelLayout::emotiv14());
  auto support = sim::evoked_support(tl, 128.0, static_cast<std::size_t>(parts.evoked.cols()));
  std::vector<int> owner(static_cast<std::size_t>(parts.evoked.cols()), -1);
  for (const auto& s : support)
    for (std::size_t i = s.begin; i < s.end; ++i) {
      REQUIRE(owner[i] == -1);
      owner[i] = static_cast<int>(s.stimulus_index);
    }
  for (Eigen::Index i = 0; i < parts.evoked.cols(); ++i)
    if (owner[static_cast<std::size_t>(i)] == -1) REQUIRE(parts.evoked.col(i).isZero(0.0));
}

TEST_CASE("target-minus-non-target average recovers the P300 latency") {
  auto plan = rsvp::generate_plan(ids("t", 200), ids("n", 2300), {.seed = 21, .use_all_items = true});
  auto tl = rsvp::build_timeline(plan);
  SimConfig c;
  c.seed = 31;
  auto rec = sim::simulate_session(plan, tl, c, ChannelLayout::emotiv14());
  const std::vector<Eigen::Index> chans{0, 2, 11, 13};  // weight-1 channels
  std::vector<double> tgt(128, 0.0), non(128, 0.0);
  double nt = 0, nn = 0;
  for (const auto& m : rec.markers) {
    if (m.onset_sample + 128 > rec.n_samples()) continue;
    auto& acc = m.is_target ? tgt : non;
    (m.is_target ? nt : nn) += 1.0;
    for (std::size_t j = 0; j < 128; ++j)
      for (auto ch : chans) acc[j] += rec.samples(ch, static_cast<Eigen::Index>(m.onset_sample + j));
  }
  std::size_t best = 0;
  for (std::size_t j = 0; j < 128; ++j)
    if (tgt[j] / nt - non[j] / nn > tgt[best] / nt - non[best] / nn) best = j;
  const double latency_ms = static_cast<double>(best) / 128.0 * 1000.0;
  CHECK(std::abs(latency_ms - 350.0) <= 25.0);
}

TEST_CASE("simulation rejects inconsistent inputs") {
  auto plan = rsvp::generate_plan({"t"}, ids("n", 12), {.seed = 3});
  auto tl = rsvp::build_timeline(plan);
  auto short_tl = tl;
  short_tl.onsets.pop_back();
  auto code = [&](auto&& fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return Errc::BadConfig;
  };
  CHECK(code([&] { sim::simulate_session(plan, short_tl, {}, ChannelLayout::emotiv14()); }) ==
        Errc::InconsistentTimeline);
  auto swapped = tl;
  std::swap(swapped.onsets[1], swapped.onsets[2]);
  CHECK(code([&] { sim::simulate_session(plan, swapped, {}, ChannelLayout::emotiv14()); }) ==
        Errc::InconsistentTimeline);

  SimConfig bad;
  bad.erp_peak_ms = 600.0;
  CHECK(code([&] { sim::simulate_session(plan, tl, bad, ChannelLayout::emotiv14()); }) == Errc::InvalidConfig);
  bad = {};
  bad.noise_rms_uv = -1.0;
  CHECK(code([&] { sim::simulate_session(plan, tl, bad, ChannelLayout::emotiv14()); }) == Errc::InvalidConfig);
}

TEST_CASE("default layout invariants") {
  auto layout = ChannelLayout::emotiv14();
  CHECK(layout.size() == 14);
  CHECK(layout.names.front() == "af3");
  CHECK(layout.names.back() == "af4");
  CHECK(*std::max_element(layout.erp_weights.begin(), layout.erp_weights.end()) == 1.0);
  for (double w : layout.erp_weights) CHECK((w >= 0.0 && w <= 1.0));
}

TEST_CASE("recording directory round trip") {
  auto plan = rsvp::generate_plan(ids("t", 3), ids("n", 36), {.seed = 2});
  auto tl = rsvp::build_timeline(plan);
  auto rec = sim::simulate_session(plan, tl, SimConfig{.seed = 1}, ChannelLayout::emotiv14());
  rec.start_time_ns = 123456789;
  const auto dir = std::filesystem::temp_directory_path() / "annot_test_recording";
  std::filesystem::remove_all(dir);
  io::write_recording(dir, rec);
  auto back = io::read_recording(dir);
  CHECK(back.layout.names == rec.layout.names);
  CHECK(back.rate_hz_sampling == 128.0);
  CHECK(back.start_time_ns == 123456789);
  CHECK(back.markers == rec.markers);
  // float32 storage of values on a 1.95 grid: relative error below 1e-7.
  CHECK((back.samples - rec.samples).cwiseAbs().maxCoeff() <= 1e-7 * rec.samples.cwiseAbs().maxCoeff());

  // Rewriting what was read gives identical bytes.
  const auto dir2 = dir.string() + "_again";
  io::write_recording(dir2, back);
  for (const char* f : {"header.json", "samples.f32le", "markers.csv"})
    CHECK(read_file(dir / f) == read_file(std::filesystem::path(dir2) / f));

  const auto header = read_file(dir / "header.json");
  CHECK(header.find("\"units\": \"microvolts\"") != std::string::npos);
  CHECK(read_file(dir / "markers.csv").rfind("onset_sample,stimulus_index,is_target\n", 0) == 0);

  std::filesystem::remove(dir / "markers.csv");
  try {
    io::read_recording(dir);
    FAIL("expected MissingInput");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::MissingInput);
    CHECK(std::string(e.what()).find("markers.csv") != std::string::npos);
  }
  std::filesystem::remove_all(dir);
  std::filesystem::remove_all(dir2);
}
