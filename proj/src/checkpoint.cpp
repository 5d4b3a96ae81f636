#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/net.hpp"
#include "annot/recording_io.hpp"

#include <json.hpp>

#include <iomanip>
#include <sstream>

namespace annot::net {

using nlohmann::ordered_json;

namespace {

ordered_json config_json(const ModelConfig& c) {
  ordered_json j;
  j["n_channels"] = c.n_channels;
  j["n_samples"] = c.n_samples;
  j["temporal_filters"] = c.temporal_filters;
  j["temporal_kernel"] = c.temporal_kernel;
  j["depth_multiplier"] = c.depth_multiplier;
  j["separable_kernel"] = c.separable_kernel;
  j["pool1"] = c.pool1;
  j["pool2"] = c.pool2;
  j["dropout_p"] = c.dropout_p;
  j["elu_alpha"] = c.elu_alpha;
  j["n_classes"] = c.n_classes;
  return j;
}

ModelConfig config_from(const ordered_json& j) {
  ModelConfig c;
  c.n_channels = j.at("n_channels").get<std::size_t>();
  c.n_samples = j.at("n_samples").get<std::size_t>();
  c.temporal_filters = j.at("temporal_filters").get<std::size_t>();
  c.temporal_kernel = j.at("temporal_kernel").get<std::size_t>();
  c.depth_multiplier = j.at("depth_multiplier").get<std::size_t>();
  c.separable_kernel = j.at("separable_kernel").get<std::size_t>();
  c.pool1 = j.at("pool1").get<std::size_t>();
  c.pool2 = j.at("pool2").get<std::size_t>();
  c.dropout_p = j.at("dropout_p").get<double>();
  c.elu_alpha = j.at("elu_alpha").get<double>();
  c.n_classes = j.at("n_classes").get<std::size_t>();
  return c;
}

} // namespace

std::string model_config_to_json(const ModelConfig& config) { return config_json(config).dump(); }

void save_model(const std::filesystem::path& dir, const P300Model& model) {
  ordered_json j;
  j["version"] = 1;
  j["config"] = config_json(model.config);
  j["rng_state"] = model.rng_state;
  auto& manifest = j["parameters"] = ordered_json::array();
  std::vector<double> flat;
  for (const auto& p : model.params) {
    ordered_json e;
    e["name"] = p.name;
    e["shape"] = p.shape;
    e["offset"] = flat.size();
    e["count"] = p.data.size();
    manifest.push_back(std::move(e));
    flat.insert(flat.end(), p.data.begin(), p.data.end());
  }
  write_file(dir / "model.json", j.dump(1) + "\n");
  write_file(dir / "params.f32le", io::encode_f32le(flat));
}

P300Model load_model(const std::filesystem::path& dir) {
  io::require_file(dir / "model.json", "train");
  io::require_file(dir / "params.f32le", "train");
  ordered_json j;
  try {
    j = ordered_json::parse(read_file(dir / "model.json"));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("model.json: ") + e.what());
  }
  if (!j.contains("version") || j["version"] != 1) throw Error(Errc::SchemaVersionMismatch, "model.json version must be 1");
  const auto flat = io::decode_f32le(read_file(dir / "params.f32le"));
  try {
    P300Model model = init_model(config_from(j.at("config")), 0);
    model.rng_state = j.at("rng_state").get<std::uint64_t>();
    const auto& manifest = j.at("parameters");
    if (manifest.size() != model.params.size()) throw Error(Errc::MalformedFile, "parameter manifest size mismatch");
    for (std::size_t p = 0; p < model.params.size(); ++p) {
      const auto& e = manifest[p];
      auto& t = model.params[p];
      const auto offset = e.at("offset").get<std::size_t>();
      const auto count = e.at("count").get<std::size_t>();
      if (e.at("name").get<std::string>() != t.name || count != t.data.size() || offset + count > flat.size())
        throw Error(Errc::MalformedFile, "parameter " + t.name + " does not match the configured architecture");
      std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
                flat.begin() + static_cast<std::ptrdiff_t>(offset + count), t.data.begin());
    }
    return model;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("model.json: ") + e.what());
  }
}

std::string history_to_csv(const TrainHistory& history) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss,val_f1\n" << std::setprecision(10);
  for (const auto& e : history.epochs) out << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_f1 << '\n';
  return out.str();
}

} // namespace annot::net
