#include "annot/recording_io.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <sstream>

namespace annot::io {

using nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "f32le I/O assumes a little-endian host");

std::string encode_f32le(std::span<const double> values) {
  std::string out(values.size() * sizeof(float), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    const auto f = static_cast<float>(values[i]);
    std::memcpy(out.data() + i * sizeof(float), &f, sizeof(float));
  }
  return out;
}

std::vector<double> decode_f32le(const std::string& bytes) {
  if (bytes.size() % sizeof(float) != 0) throw Error(Errc::MalformedFile, "f32le payload not a multiple of 4 bytes");
  std::vector<double> out(bytes.size() / sizeof(float));
  for (std::size_t i = 0; i < out.size(); ++i) {
    float f = 0.0f;
    std::memcpy(&f, bytes.data() + i * sizeof(float), sizeof(float));
    out[i] = f;
  }
  return out;
}

void require_file(const std::filesystem::path& path, const std::string& producer) {
  if (!std::filesystem::exists(path))
    throw Error(Errc::MissingInput, path.string() + " not found (produced by `annotate " + producer + "`)");
}

std::string header_to_json(const RecordingHeader& header) {
  ordered_json j;
  j["version"] = 1;
  j["channel_names"] = header.channel_names;
  j["rate_hz_sampling"] = header.rate_hz_sampling;
  j["units"] = "microvolts";
  j["n_samples"] = header.n_samples;
  j["start_time_ns"] = header.start_time_ns;
  return j.dump(1) + "\n";
}

RecordingHeader read_header(const std::filesystem::path& header_json) {
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(header_json));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, header_json.string() + ": " + e.what());
  }
  if (!j.contains("version") || j["version"] != 1)
    throw Error(Errc::SchemaVersionMismatch, header_json.string() + " version must be 1");
  try {
    RecordingHeader h;
    h.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    h.rate_hz_sampling = j.at("rate_hz_sampling").get<double>();
    h.n_samples = j.at("n_samples").get<std::size_t>();
    h.start_time_ns = j.at("start_time_ns").get<std::int64_t>();
    if (j.at("units") != "microvolts") throw Error(Errc::MalformedFile, "units must be microvolts");
    return h;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, header_json.string() + ": " + e.what());
  }
}

std::string markers_to_csv(const std::vector<Marker>& markers) {
  std::ostringstream out;
  out << "onset_sample,stimulus_index,is_target\n";
  for (const auto& m : markers) out << m.onset_sample << ',' << m.stimulus_index << ',' << (m.is_target ? 1 : 0) << '\n';
  return out.str();
}

std::vector<Marker> markers_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "onset_sample,stimulus_index,is_target")
    throw Error(Errc::MalformedFile, "markers.csv header mismatch");
  std::vector<Marker> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string a, b, c;
    if (!std::getline(row, a, ',') || !std::getline(row, b, ',') || !std::getline(row, c))
      throw Error(Errc::MalformedFile, "markers.csv row: " + line);
    try {
      out.push_back(Marker{std::stoull(a), std::stoull(b), c == "1" || c == "true"});
    } catch (const std::exception&) {
      throw Error(Errc::MalformedFile, "markers.csv row: " + line);
    }
  }
  return out;
}

void write_recording(const std::filesystem::path& dir, const EegRecording& rec) {
  std::filesystem::create_directories(dir);
  RecordingHeader h{rec.layout.names, rec.rate_hz_sampling, rec.n_samples(), rec.start_time_ns};
  write_file(dir / "header.json", header_to_json(h));

  std::vector<double> frames(rec.n_samples() * rec.n_channels());
  for (std::size_t s = 0; s < rec.n_samples(); ++s)
    for (std::size_t c = 0; c < rec.n_channels(); ++c)
      frames[s * rec.n_channels() + c] = rec.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s));
  write_file(dir / "samples.f32le", encode_f32le(frames));
  write_file(dir / "markers.csv", markers_to_csv(rec.markers));
}

EegRecording read_recording(const std::filesystem::path& dir) {
  require_file(dir / "header.json", "simulate");
  require_file(dir / "samples.f32le", "simulate");
  require_file(dir / "markers.csv", "simulate");
  const auto h = read_header(dir / "header.json");
  const auto frames = decode_f32le(read_file(dir / "samples.f32le"));
  const std::size_t n_ch = h.channel_names.size();
  if (frames.size() != n_ch * h.n_samples)
    throw Error(Errc::MalformedFile, "samples.f32le size does not match header");

  EegRecording rec;
  rec.layout = ChannelLayout::emotiv14();
  if (rec.layout.names != h.channel_names) {
    rec.layout.names = h.channel_names;
    rec.layout.erp_weights.assign(n_ch, 1.0);
  }
  rec.rate_hz_sampling = h.rate_hz_sampling;
  rec.start_time_ns = h.start_time_ns;
  rec.samples.resize(static_cast<Eigen::Index>(n_ch), static_cast<Eigen::Index>(h.n_samples));
  for (std::size_t s = 0; s < h.n_samples; ++s)
    for (std::size_t c = 0; c < n_ch; ++c)
      rec.samples(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(s)) = frames[s * n_ch + c];
  rec.markers = markers_from_csv(read_file(dir / "markers.csv"));
  for (const auto& m : rec.markers) {
    if (m.onset_sample >= h.n_samples) throw Error(Errc::MalformedFile, "marker beyond recording end");
  }
  return rec;
}

} // namespace annot::io
