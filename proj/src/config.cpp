#include "annot/config.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"

#include <set>
#include <type_traits>

namespace annot {

using nlohmann::json;
using nlohmann::ordered_json;

namespace {

// Each config struct lists its fields once; the same list drives reading and
// writing.

template <class V> void fields(V& v, rsvp::TargetRatio& c) {
  v("targets", c.targets);
  v("nontargets", c.nontargets);
}

template <class V> void fields(V& v, rsvp::PlanConfig& c) {
  v("rate_hz", c.rate_hz);
  v("block_size", c.block_size);
  v("fixation_seconds", c.fixation_seconds);
  v.nested("target_ratio", c.target_ratio);
  v("use_all_items", c.use_all_items);
}

template <class V> void fields(V& v, eval::SessionSpec& c) {
  v("target_class", c.target_class);
  v("n_targets", c.n_targets);
  v("n_nontargets", c.n_nontargets);
  v("n_categories", c.n_categories);
  v("id_prefix", c.id_prefix);
  v.nested("plan", c.plan);
}

template <class V> void fields(V& v, sim::SimConfig& c) {
  v("rate_hz_sampling", c.rate_hz_sampling);
  v("noise_rms_uv", c.noise_rms_uv);
  v("erp_amp_uv", c.erp_amp_uv);
  v("erp_peak_ms", c.erp_peak_ms);
  v("erp_width_ms", c.erp_width_ms);
  v("latency_jitter_ms", c.latency_jitter_ms);
  v("std_evoked_amp_uv", c.std_evoked_amp_uv);
  v("blink_rate_hz", c.blink_rate_hz);
  v("blink_amp_uv", c.blink_amp_uv);
  v("quantization_uv", c.quantization_uv);
  v("tail_seconds", c.tail_seconds);
}

template <class V> void fields(V& v, dsp::BandpassConfig& c) {
  v("lo_hz", c.lo_hz);
  v("hi_hz", c.hi_hz);
  v("order", c.order);
}

template <class V> void fields(V& v, dsp::IcaConfig& c) {
  v("n_components", c.n_components);
  v("tolerance", c.tolerance);
  v("max_iterations", c.max_iterations);
  v("decimate", c.decimate);
}

template <class V> void fields(V& v, dsp::ArtifactRule& c) {
  v("kurtosis_threshold", c.kurtosis_threshold);
  v("frontal_fraction", c.frontal_fraction);
  v("frontal", c.frontal);
}

template <class V> void fields(V& v, dsp::EpochWindow& c) {
  v("pre_seconds", c.pre_seconds);
  v("post_seconds", c.post_seconds);
}

template <class V> void fields(V& v, dsp::PreprocessConfig& c) {
  v("notch_hz", c.notch_hz);
  v("notch_order", c.notch_order);
  v.nested("bandpass", c.bandpass);
  v("ica", c.ica);
  v.nested("ica_config", c.ica_config);
  v("ica_shrink_on_failure", c.ica_shrink_on_failure);
  v.nested("artifact_rule", c.artifact_rule);
  v.nested("window", c.window);
  v("baseline", c.baseline);
}

template <class V> void fields(V& v, net::ModelConfig& c) {
  v("n_channels", c.n_channels);
  v("n_samples", c.n_samples);
  v("temporal_filters", c.temporal_filters);
  v("temporal_kernel", c.temporal_kernel);
  v("depth_multiplier", c.depth_multiplier);
  v("separable_kernel", c.separable_kernel);
  v("pool1", c.pool1);
  v("pool2", c.pool2);
  v("dropout_p", c.dropout_p);
  v("elu_alpha", c.elu_alpha);
  v("n_classes", c.n_classes);
}

template <class V> void fields(V& v, net::TrainConfig& c) {
  v("lr", c.lr);
  v("beta1", c.beta1);
  v("beta2", c.beta2);
  v("eps", c.eps);
  v("batch_size", c.batch_size);
  v("max_epochs", c.max_epochs);
  v("early_stop_patience", c.early_stop_patience);
  v("class_weighting", c.class_weighting);
}

template <class V> void fields(V& v, eval::ClassifierConfig& c) {
  v.nested("model", c.model);
  v.nested("train", c.train);
  v("validation_fraction", c.validation_fraction);
}

template <class V> void fields(V& v, refine::RefineConfig& c) {
  v("pca_components", c.pca_components);
  v("tsne_perplexity", c.tsne_perplexity);
  v("tsne_out_dims", c.tsne_out_dims);
  v("tsne_iters", c.tsne_iters);
  v("tsne_learning_rate", c.tsne_learning_rate);
  v("kmeans_k", c.kmeans_k);
  v("kmeans_restarts", c.kmeans_restarts);
  v("min_separation", c.min_separation);
  v("density_in_embedding", c.density_in_embedding);
}

template <class V> void fields(V& v, refine::SyntheticFeatureConfig& c) {
  v("dimension", c.dimension);
  v("centre_spread", c.centre_spread);
  v("target_spread", c.target_spread);
  v("nontarget_spread", c.nontarget_spread);
  v("target_offset", c.target_offset);
}

template <class V> void fields(V& v, FeatureSource& c) {
  v("path", c.path);
  v.nested("synthetic", c.synthetic);
}

template <class V> void fields(V& v, EvaluateConfig& c) { v("folds", c.folds); }

template <class V> void fields(V& v, SweepSection& c) {
  v("rates", c.rates);
  v("repetitions", c.repetitions);
  v("n_targets", c.n_targets);
  v("n_nontargets", c.n_nontargets);
}

template <class V> void fields(V& v, ServeConfig& c) {
  v("host", c.host);
  v("port", c.port);
  v("image_root", c.image_root);
}

template <class V> void fields(V& v, PipelineConfig& c) {
  v("seed", c.seed);
  v("out_dir", c.out_dir);
  v.nested("session", c.session);
  v.nested("sim", c.sim);
  v.nested("preprocess", c.preprocess);
  v.nested("classifier", c.classifier);
  v.nested("refine", c.refine);
  v.nested("features", c.features);
  v.nested("evaluate", c.evaluate);
  v.nested("sweep", c.sweep);
  v.nested("serve", c.serve);
}

struct Writer {
  ordered_json& out;

  template <class T> void operator()(const char* key, const T& value) { out[key] = value; }
  template <class T> void nested(const char* key, T& value) {
    ordered_json sub = ordered_json::object();
    Writer w{sub};
    fields(w, value);
    out[key] = std::move(sub);
  }
};

struct Reader {
  const json& in;
  std::string where;
  std::set<std::string> seen{};

  [[noreturn]] void bad(const std::string& key, const std::string& why) const {
    throw Error(Errc::BadConfig, "config key '" + where + key + "': " + why);
  }

  template <class T> void read(const std::string& key, const json& j, T& value) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!j.is_boolean()) bad(key, "expected true/false");
      value = j.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!j.is_number_integer()) bad(key, "expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (j.is_number_integer() && !j.is_number_unsigned()) bad(key, "must not be negative");
      }
      value = j.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!j.is_number()) bad(key, "expected a number");
      value = j.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!j.is_string()) bad(key, "expected a string");
      value = j.get<std::string>();
    } else {
      // vectors
      if (!j.is_array()) bad(key, "expected an array");
      T out;
      for (const auto& e : j) {
        typename T::value_type item{};
        read(key + "[]", e, item);
        out.push_back(std::move(item));
      }
      value = std::move(out);
    }
  }

  template <class T> void operator()(const char* key, T& value) {
    seen.insert(key);
    if (auto it = in.find(key); it != in.end()) read(key, *it, value);
  }

  template <class T> void nested(const char* key, T& value) {
    seen.insert(key);
    auto it = in.find(key);
    if (it == in.end()) return;
    if (!it->is_object()) bad(key, "expected an object");
    Reader r{*it, where + key + "."};
    fields(r, value);
    r.finish();
  }

  void finish() const {
    for (const auto& [k, _] : in.items())
      if (!seen.count(k)) bad(k, "unknown key");
  }
};

} // namespace

PipelineConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(Errc::BadConfig, std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw Error(Errc::BadConfig, "config must be a JSON object");
  if (!j.contains("version")) throw Error(Errc::BadConfig, "config lacks a version field");
  if (!j["version"].is_number_integer() || j["version"].get<long>() != kConfigVersion)
    throw Error(Errc::SchemaVersionMismatch, "config version " + j["version"].dump() + ", expected " +
                                                 std::to_string(kConfigVersion));

  PipelineConfig cfg;
  cfg.base_dir = base_dir;
  Reader r{j, ""};
  r.seen.insert("version");
  fields(r, cfg);
  r.finish();

  if (!cfg.features.path.empty() && !std::filesystem::exists(resolve(cfg, cfg.features.path)))
    throw Error(Errc::MissingInput, "features file " + resolve(cfg, cfg.features.path).string() + " does not exist");
  if (!cfg.serve.image_root.empty() && !std::filesystem::is_directory(resolve(cfg, cfg.serve.image_root)))
    throw Error(Errc::MissingInput, "image root " + resolve(cfg, cfg.serve.image_root).string() + " does not exist");
  if (cfg.serve.port < 0 || cfg.serve.port > 65535) throw Error(Errc::BadConfig, "serve.port out of range");
  return cfg;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw Error(Errc::MissingInput, "config file " + path.string() + " does not exist");
  return config_from_json(read_file(path), path.parent_path().empty() ? "." : path.parent_path());
}

ordered_json config_to_json(const PipelineConfig& cfg) {
  ordered_json out;
  out["version"] = kConfigVersion;
  auto copy = cfg;
  Writer w{out};
  fields(w, copy);
  return out;
}

std::string config_fingerprint(const PipelineConfig& cfg) {
  // Where a run is written does not change what it computes.
  auto j = config_to_json(cfg);
  j.erase("out_dir");
  return sha256_hex(j.dump());
}

std::filesystem::path resolve(const PipelineConfig& cfg, const std::string& path) {
  std::filesystem::path p(path);
  return p.is_absolute() ? p : (cfg.base_dir / p).lexically_normal();
}

} // namespace annot
