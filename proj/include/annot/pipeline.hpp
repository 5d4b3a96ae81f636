#pragma once

#include "annot/config.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace annot::pipeline {

enum class Command { Plan, Simulate, Preprocess, Train, Predict, Refine, Evaluate, Sweep, Serve, RunAll };

std::optional<Command> parse_command(const std::string& name);
std::string command_name(Command cmd);

// Fixed file layout of one run directory.
struct RunLayout {
  std::filesystem::path out;

  std::filesystem::path plan(const std::string& session) const { return out / session / "plan.json"; }
  std::filesystem::path recording(const std::string& session) const { return out / session / "recording"; }
  std::filesystem::path epochs(const std::string& session) const { return out / session / "epochs"; }
  std::filesystem::path preprocess_report(const std::string& session) const {
    return out / session / "preprocess_report.json";
  }
  std::filesystem::path model() const { return out / "model"; }
  std::filesystem::path predictions() const { return out / "predictions.csv"; }
  std::filesystem::path features() const { return out / "features.csv"; }
  std::filesystem::path refinement_report() const { return out / "refinement_report.json"; }
  std::filesystem::path annotations() const { return out / "annotations.csv"; }
  std::filesystem::path metrics() const { return out / "metrics.json"; }
  std::filesystem::path report() const { return out / "report.csv"; }
  std::filesystem::path sweep_dir() const { return out / "sweep"; }
  std::filesystem::path manifest(Command cmd) const { return out / "manifests" / (command_name(cmd) + ".json"); }
};

inline const std::vector<std::string> kSessions{"train", "test"};

RunLayout layout_for(const PipelineConfig& cfg);

// Each stage reads its declared inputs (MissingInput names the producing
// command when one is absent), writes its declared outputs and a manifest.
void cmd_plan(const PipelineConfig& cfg);
void cmd_simulate(const PipelineConfig& cfg);
void cmd_preprocess(const PipelineConfig& cfg);
void cmd_train(const PipelineConfig& cfg);
void cmd_predict(const PipelineConfig& cfg);
void cmd_refine(const PipelineConfig& cfg);
void cmd_evaluate(const PipelineConfig& cfg);
void cmd_sweep(const PipelineConfig& cfg);
// plan -> simulate -> preprocess -> train -> predict -> refine -> evaluate.
void cmd_run_all(const PipelineConfig& cfg);

// Dispatch for every command except serve.
void run(Command cmd, const PipelineConfig& cfg);

// predictions.csv: "stimulus_index,image_id,score,label".
struct PredictionRow {
  std::size_t stimulus_index{0};
  std::string image_id;
  double score{0.0};
  bool label{false};
};
std::string predictions_to_csv(const std::vector<PredictionRow>& rows);
std::vector<PredictionRow> predictions_from_csv(const std::string& text);

} // namespace annot::pipeline
