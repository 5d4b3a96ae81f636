#pragma once

#include "annot/sim.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace annot::io {

// Recording directory: header.json, samples.f32le (frame-interleaved),
// markers.csv ("onset_sample,stimulus_index,is_target").
void write_recording(const std::filesystem::path& dir, const EegRecording& rec);
EegRecording read_recording(const std::filesystem::path& dir);

struct RecordingHeader {
  std::vector<std::string> channel_names;
  double rate_hz_sampling{0.0};
  std::size_t n_samples{0};
  std::int64_t start_time_ns{0};
};
RecordingHeader read_header(const std::filesystem::path& header_json);
std::string header_to_json(const RecordingHeader& header);

std::string markers_to_csv(const std::vector<Marker>& markers);
std::vector<Marker> markers_from_csv(const std::string& text);

std::string encode_f32le(std::span<const double> values);
std::vector<double> decode_f32le(const std::string& bytes);

// Throws MissingInput naming the file and the command that produces it.
void require_file(const std::filesystem::path& path, const std::string& producer);

} // namespace annot::io
