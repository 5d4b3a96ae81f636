#include "annot/dsp.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/recording_io.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <filesystem>

namespace annot::dsp {

using nlohmann::ordered_json;

std::size_t EpochSet::n_targets() const {
  return static_cast<std::size_t>(std::count_if(epochs.begin(), epochs.end(),
                                                [](const Epoch& e) { return e.label.value_or(false); }));
}

EpochSet extract_epochs(const EegRecording& rec, EpochWindow window) {
  if (rec.markers.empty()) throw Error(Errc::NoMarkers, "recording carries no stimulus markers");
  const auto pre = static_cast<std::size_t>(std::llround(window.pre_seconds * rec.rate_hz_sampling));
  const auto post = static_cast<std::size_t>(std::llround(window.post_seconds * rec.rate_hz_sampling));
  const auto length = static_cast<Eigen::Index>(pre + post);

  EpochSet set;
  set.rate_hz_sampling = rec.rate_hz_sampling;
  set.channel_names = rec.layout.names;
  set.epochs.reserve(rec.markers.size());
  std::vector<bool> seen;
  for (const auto& m : rec.markers) {
    if (m.stimulus_index >= seen.size()) seen.resize(m.stimulus_index + 1, false);
    if (seen[m.stimulus_index]) continue;
    seen[m.stimulus_index] = true;
    if (m.onset_sample < pre || m.onset_sample + post > rec.n_samples()) {
      set.dropped.push_back(m.stimulus_index);
      continue;
    }
    Epoch e;
    e.stimulus_index = m.stimulus_index;
    e.onset_offset = pre;
    e.label = m.is_target;
    e.samples = rec.samples.middleCols(static_cast<Eigen::Index>(m.onset_sample - pre), length);
    set.epochs.push_back(std::move(e));
  }
  return set;
}

Epoch baseline_correct(const Epoch& epoch) {
  if (epoch.onset_offset == 0) throw Error(Errc::EmptyBaseline, "epoch has no pre-stimulus samples");
  Epoch out = epoch;
  const auto pre = static_cast<Eigen::Index>(epoch.onset_offset);
  const Eigen::VectorXd means = epoch.samples.leftCols(pre).rowwise().mean();
  out.samples.colwise() -= means;
  return out;
}

EpochSet baseline_correct(const EpochSet& set) {
  EpochSet out = set;
  for (auto& e : out.epochs) e = baseline_correct(e);
  return out;
}

void write_epochs(const std::string& dir, const EpochSet& set) {
  std::filesystem::create_directories(dir);
  const std::size_t n_ch = set.channel_names.size();
  const std::size_t window = set.epochs.empty() ? 0 : static_cast<std::size_t>(set.epochs.front().samples.cols());
  ordered_json j;
  j["version"] = 1;
  j["rate_hz_sampling"] = set.rate_hz_sampling;
  j["channel_names"] = set.channel_names;
  j["n_epochs"] = set.epochs.size();
  j["window_samples"] = window;
  j["onset_offset"] = set.epochs.empty() ? 0 : set.epochs.front().onset_offset;
  j["layout"] = "epoch,channel,sample";
  auto& arr = j["epochs"] = ordered_json::array();
  std::vector<double> flat;
  flat.reserve(set.epochs.size() * n_ch * window);
  for (const auto& e : set.epochs) {
    ordered_json item;
    item["stimulus_index"] = e.stimulus_index;
    item["label"] = e.label ? ordered_json(*e.label ? 1 : 0) : ordered_json(nullptr);
    arr.push_back(std::move(item));
    for (Eigen::Index c = 0; c < e.samples.rows(); ++c)
      for (Eigen::Index s = 0; s < e.samples.cols(); ++s) flat.push_back(e.samples(c, s));
  }
  j["dropped"] = set.dropped;
  write_file(std::filesystem::path(dir) / "epochs.json", j.dump(1) + "\n");
  write_file(std::filesystem::path(dir) / "epochs.f32le", io::encode_f32le(flat));
}

EpochSet read_epochs(const std::string& dir) {
  const std::filesystem::path base(dir);
  io::require_file(base / "epochs.json", "preprocess");
  io::require_file(base / "epochs.f32le", "preprocess");
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(base / "epochs.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("epochs.json: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != 1) throw Error(Errc::SchemaVersionMismatch, "epochs.json version must be 1");
  const auto flat = io::decode_f32le(read_file(base / "epochs.f32le"));
  try {
    EpochSet set;
    set.rate_hz_sampling = j.at("rate_hz_sampling").get<double>();
    set.channel_names = j.at("channel_names").get<std::vector<std::string>>();
    set.dropped = j.at("dropped").get<std::vector<std::size_t>>();
    const auto window = j.at("window_samples").get<std::size_t>();
    const auto offset = j.at("onset_offset").get<std::size_t>();
    const std::size_t n_ch = set.channel_names.size();
    const auto& arr = j.at("epochs");
    if (flat.size() != arr.size() * n_ch * window) throw Error(Errc::MalformedFile, "epochs.f32le size mismatch");
    std::size_t pos = 0;
    for (const auto& item : arr) {
      Epoch e;
      e.stimulus_index = item.at("stimulus_index").get<std::size_t>();
      e.onset_offset = offset;
      if (!item.at("label").is_null()) e.label = item.at("label").get<int>() != 0;
      e.samples.resize(static_cast<Eigen::Index>(n_ch), static_cast<Eigen::Index>(window));
      for (Eigen::Index c = 0; c < e.samples.rows(); ++c)
        for (Eigen::Index s = 0; s < e.samples.cols(); ++s) e.samples(c, s) = flat[pos++];
      set.epochs.push_back(std::move(e));
    }
    return set;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("epochs.json: ") + e.what());
  }
}

} // namespace annot::dsp
