#pragma once

#include "annot/experiments.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace annot {

struct FeatureSource {
  // features.csv to ingest; empty = generate synthetic features.
  std::string path;
  refine::SyntheticFeatureConfig synthetic{};
};

struct EvaluateConfig {
  std::size_t folds{5};
};

struct SweepSection {
  std::vector<double> rates{4.0, 10.0};
  std::size_t repetitions{5};
  std::size_t n_targets{100};
  std::size_t n_nontargets{1150};
};

struct ServeConfig {
  std::string host{"127.0.0.1"};
  int port{8080};
  // Directory of <image_id>.<ext> files; empty = placeholder images.
  std::string image_root;
};

struct PipelineConfig {
  std::uint64_t seed{0};
  eval::SessionSpec session{};
  sim::SimConfig sim{};
  dsp::PreprocessConfig preprocess{};
  eval::ClassifierConfig classifier{};
  refine::RefineConfig refine{};
  FeatureSource features{};
  EvaluateConfig evaluate{};
  SweepSection sweep{};
  ServeConfig serve{};
  std::string out_dir{"run"};
  // Directory relative paths in the file are resolved against.
  std::filesystem::path base_dir{"."};
};

inline constexpr int kConfigVersion = 1;

// Strict: unknown keys and wrong types are BadConfig, a wrong version is
// SchemaVersionMismatch, a features path that does not exist is MissingInput.
PipelineConfig config_from_json(const std::string& text, const std::filesystem::path& base_dir = ".");
PipelineConfig load_config(const std::filesystem::path& path);

// Canonical form; every field, fixed key order.
nlohmann::ordered_json config_to_json(const PipelineConfig& cfg);

// SHA-256 of the canonical form.
std::string config_fingerprint(const PipelineConfig& cfg);

std::filesystem::path resolve(const PipelineConfig& cfg, const std::string& path);

} // namespace annot
