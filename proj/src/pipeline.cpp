#include "annot/pipeline.hpp"

#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/recording_io.hpp"

#include <json.hpp>

#include <cstdio>
#include <set>
#include <sstream>

namespace annot::pipeline {

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr const char* kTool = "annotate 1.0.0";

const std::vector<std::pair<Command, std::string>>& command_names() {
  static const std::vector<std::pair<Command, std::string>> names{
      {Command::Plan, "plan"},         {Command::Simulate, "simulate"}, {Command::Preprocess, "preprocess"},
      {Command::Train, "train"},       {Command::Predict, "predict"},   {Command::Refine, "refine"},
      {Command::Evaluate, "evaluate"}, {Command::Sweep, "sweep"},       {Command::Serve, "serve"},
      {Command::RunAll, "run-all"}};
  return names;
}

ordered_json canonical_config(const PipelineConfig& cfg) {
  auto j = config_to_json(cfg);
  j.erase("out_dir");
  return j;
}

// Files under a directory, sorted, or the path itself.
std::vector<fs::path> expand(const fs::path& p) {
  std::vector<fs::path> out;
  if (fs::is_directory(p)) {
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file()) out.push_back(e.path());
    std::sort(out.begin(), out.end());
  } else {
    out.push_back(p);
  }
  return out;
}

ordered_json hash_list(const RunLayout& run, const std::vector<fs::path>& paths) {
  ordered_json list = ordered_json::array();
  for (const auto& p : paths)
    for (const auto& f : expand(p)) {
      ordered_json e;
      e["path"] = fs::relative(f, run.out).generic_string();
      e["sha256"] = sha256_file(f);
      list.push_back(std::move(e));
    }
  return list;
}

void write_manifest(const PipelineConfig& cfg, Command cmd, const std::vector<fs::path>& inputs,
                    const std::vector<fs::path>& outputs) {
  const auto run = layout_for(cfg);
  ordered_json j;
  j["version"] = 1;
  j["tool"] = kTool;
  j["command"] = command_name(cmd);
  j["config_fingerprint"] = config_fingerprint(cfg);
  j["config"] = canonical_config(cfg);
  j["inputs"] = hash_list(run, inputs);
  j["outputs"] = hash_list(run, outputs);
  write_file(run.manifest(cmd), j.dump(1) + "\n");
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& session, const std::string& stage) {
  return derive_seed(cfg.seed, session + "/" + stage);
}

rsvp::SequencePlan load_plan(const fs::path& p) {
  io::require_file(p, "plan");
  return rsvp::plan_from_json(read_file(p));
}

dsp::EpochSet load_epochs(const fs::path& dir) {
  io::require_file(dir / "epochs.json", "preprocess");
  io::require_file(dir / "epochs.f32le", "preprocess");
  return dsp::read_epochs(dir.string());
}

ordered_json counts_json(const eval::ConfusionCounts& c) {
  const auto m = eval::metrics(c);
  ordered_json j;
  j["tp"] = c.tp;
  j["fp"] = c.fp;
  j["tn"] = c.tn;
  j["fn"] = c.fn;
  j["precision"] = m.precision;
  j["recall"] = m.recall;
  j["f1"] = m.f1;
  j["degenerate"] = m.degenerate;
  return j;
}

ordered_json summary_json(const eval::Summary& s) {
  ordered_json j;
  j["mean"] = s.mean;
  j["std"] = s.std;
  return j;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string counts_csv(const eval::ConfusionCounts& c) {
  const auto m = eval::metrics(c);
  return std::to_string(c.tp) + "," + std::to_string(c.fp) + "," + std::to_string(c.tn) + "," +
         std::to_string(c.fn) + "," + fmt(m.precision) + "," + fmt(m.recall) + "," + fmt(m.f1);
}

refine::FeatureTable load_or_make_features(const PipelineConfig& cfg, const rsvp::SequencePlan& plan,
                                           std::vector<fs::path>& inputs, std::vector<fs::path>& outputs) {
  const auto run = layout_for(cfg);
  if (!cfg.features.path.empty()) {
    const auto p = resolve(cfg, cfg.features.path);
    io::require_file(p, "an external feature extractor");
    inputs.push_back(p);
    return refine::features_from_csv(read_file(p));
  }
  std::vector<std::string> ids;
  for (const auto& s : plan.stimuli) ids.push_back(s.image_id);
  std::sort(ids.begin(), ids.end());
  auto fc = cfg.features.synthetic;
  fc.seed = derive_seed(cfg.seed, "features");
  auto table = refine::synthetic_features(ids, cfg.session.target_class, fc);
  write_file(run.features(), refine::features_to_csv(table));
  outputs.push_back(run.features());
  return table;
}

std::vector<net::Prediction> to_predictions(const std::vector<PredictionRow>& rows) {
  std::vector<net::Prediction> out;
  for (const auto& r : rows) out.push_back({r.stimulus_index, r.score, r.label});
  return out;
}

} // namespace

std::optional<Command> parse_command(const std::string& name) {
  for (const auto& [cmd, n] : command_names())
    if (n == name) return cmd;
  return std::nullopt;
}

std::string command_name(Command cmd) {
  for (const auto& [c, n] : command_names())
    if (c == cmd) return n;
  return "?";
}

RunLayout layout_for(const PipelineConfig& cfg) { return RunLayout{resolve(cfg, cfg.out_dir)}; }

// ---------------------------------------------------------------------------

void cmd_plan(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  const auto ids = eval::make_image_ids(cfg.session);
  std::vector<fs::path> outputs;
  // Both sessions show the same images in independent orders.
  for (const auto& session : kSessions) {
    auto pc = cfg.session.plan;
    pc.seed = stage_seed(cfg, session, "plan");
    const auto plan = rsvp::generate_plan(ids.targets, ids.nontargets, pc);
    write_file(run.plan(session), rsvp::plan_to_json(plan));
    outputs.push_back(run.plan(session));
  }
  write_manifest(cfg, Command::Plan, {}, outputs);
}

void cmd_simulate(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  std::vector<fs::path> inputs, outputs;
  for (const auto& session : kSessions) {
    const auto plan = load_plan(run.plan(session));
    inputs.push_back(run.plan(session));
    auto sc = cfg.sim;
    sc.seed = stage_seed(cfg, session, "sim");
    const auto rec = sim::simulate_session(plan, rsvp::build_timeline(plan), sc, ChannelLayout::emotiv14());
    fs::remove_all(run.recording(session));
    io::write_recording(run.recording(session), rec);
    outputs.push_back(run.recording(session));
  }
  write_manifest(cfg, Command::Simulate, inputs, outputs);
}

void cmd_preprocess(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  std::vector<fs::path> inputs, outputs;
  for (const auto& session : kSessions) {
    const auto rec = io::read_recording(run.recording(session));
    inputs.push_back(run.recording(session));
    auto pc = cfg.preprocess;
    pc.ica_config.seed = stage_seed(cfg, session, "ica");
    const auto result = dsp::preprocess(rec, pc);
    fs::remove_all(run.epochs(session));
    dsp::write_epochs(run.epochs(session).string(), result.epochs);

    ordered_json r;
    r["version"] = 1;
    r["ica_ran"] = result.report.ica_ran;
    r["ica_converged"] = result.report.ica_converged;
    r["ica_components"] = result.report.ica_components;
    r["ica_iterations"] = result.report.ica_iterations;
    r["ica_residual"] = result.report.ica_residual;
    r["removed_components"] = result.report.removed_components;
    r["dropped_epochs"] = result.report.dropped_epochs;
    r["note"] = result.report.note;
    r["n_epochs"] = result.epochs.size();
    write_file(run.preprocess_report(session), r.dump(1) + "\n");
    outputs.push_back(run.epochs(session));
    outputs.push_back(run.preprocess_report(session));
  }
  write_manifest(cfg, Command::Preprocess, inputs, outputs);
}

void cmd_train(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  const auto epochs = load_epochs(run.epochs("train"));
  const auto fit = eval::fit_classifier(epochs, cfg.classifier, stage_seed(cfg, "train", "fit"));
  fs::remove_all(run.model());
  net::save_model(run.model(), fit.model);
  write_file(run.model() / "history.csv", net::history_to_csv(fit.history));
  write_manifest(cfg, Command::Train, {run.epochs("train")}, {run.model()});
}

void cmd_predict(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  const auto model = net::load_model(run.model());
  const auto epochs = load_epochs(run.epochs("test"));
  const auto plan = load_plan(run.plan("test"));
  std::vector<PredictionRow> rows;
  for (const auto& p : net::predict(model, epochs)) {
    if (p.stimulus_index >= plan.stimuli.size())
      throw Error(Errc::ShapeMismatch, "epoch refers to a stimulus outside the test plan");
    rows.push_back({p.stimulus_index, plan.stimuli[p.stimulus_index].image_id, p.score, p.label});
  }
  write_file(run.predictions(), predictions_to_csv(rows));
  write_manifest(cfg, Command::Predict, {run.model(), run.epochs("test"), run.plan("test")}, {run.predictions()});
}

void cmd_refine(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  io::require_file(run.predictions(), "predict");
  const auto rows = predictions_from_csv(read_file(run.predictions()));
  const auto plan = load_plan(run.plan("test"));
  std::vector<fs::path> inputs{run.predictions(), run.plan("test")}, outputs;
  const auto features = load_or_make_features(cfg, plan, inputs, outputs);

  std::vector<std::string> predicted;
  for (const auto& r : rows)
    if (r.label) predicted.push_back(r.image_id);
  auto rc = cfg.refine;
  rc.seed = derive_seed(cfg.seed, "refine");
  const auto result = refine::refine(predicted, features, rc);
  write_file(run.refinement_report(), refine::refinement_report_json(result, rc));

  const std::set<std::string> kept(result.kept.begin(), result.kept.end());
  std::string csv = "image_id,score,label_before,label_after\n";
  for (const auto& r : rows)
    csv += r.image_id + "," + fmt(r.score) + "," + (r.label ? "1" : "0") + "," +
           (r.label && kept.count(r.image_id) ? "1" : "0") + "\n";
  write_file(run.annotations(), csv);
  outputs.push_back(run.refinement_report());
  outputs.push_back(run.annotations());
  write_manifest(cfg, Command::Refine, inputs, outputs);
}

void cmd_evaluate(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  io::require_file(run.predictions(), "predict");
  io::require_file(run.refinement_report(), "refine");
  const auto test_plan = load_plan(run.plan("test"));
  const auto train_plan = load_plan(run.plan("train"));
  const auto train_epochs = load_epochs(run.epochs("train"));
  const auto preds = to_predictions(predictions_from_csv(read_file(run.predictions())));

  ordered_json report;
  try {
    report = ordered_json::parse(read_file(run.refinement_report()));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::MalformedFile, std::string("refinement_report.json: ") + e.what());
  }
  if (report.value("version", 0) != 1) throw Error(Errc::SchemaVersionMismatch, "refinement_report.json version must be 1");
  refine::RefinementResult refined;
  refined.kept = report.at("kept").get<std::vector<std::string>>();
  refined.removed = report.at("removed").get<std::vector<std::string>>();

  std::vector<fs::path> inputs{run.plan("test"), run.plan("train"), run.epochs("train"), run.predictions(),
                               run.refinement_report()};
  refine::FeatureTable features;
  if (!cfg.features.path.empty()) {
    const auto p = resolve(cfg, cfg.features.path);
    io::require_file(p, "an external feature extractor");
    features = refine::features_from_csv(read_file(p));
    inputs.push_back(p);
  } else {
    io::require_file(run.features(), "refine");
    features = refine::features_from_csv(read_file(run.features()));
    inputs.push_back(run.features());
  }

  // Held-out session: ground truth from the test plan.
  eval::ConfusionCounts before, after;
  for (const auto& p : preds) {
    const bool truth = test_plan.stimuli.at(p.stimulus_index).is_target;
    if (truth)
      ++(p.label ? before.tp : before.fn);
    else
      ++(p.label ? before.fp : before.tn);
  }
  after = eval::refined_counts(test_plan, preds, refined);

  auto rc = cfg.refine;
  eval::RefineContext ctx{&train_plan, &features, rc};
  const auto cv = eval::kfold_evaluate(train_epochs, cfg.evaluate.folds, cfg.classifier, ctx,
                                       derive_seed(cfg.seed, "kfold"));

  ordered_json m;
  m["version"] = 1;
  m["config_fingerprint"] = config_fingerprint(cfg);
  ordered_json h;
  h["n"] = preds.size();
  h["n_targets"] = before.tp + before.fn;
  h["before"] = counts_json(before);
  h["after"] = counts_json(after);
  h["refinement_pass_through"] = report.at("flags").at("pass_through");
  h["refinement_no_cluster_structure"] = report.at("flags").at("no_cluster_structure");
  h["removed"] = refined.removed.size();
  m["holdout"] = h;

  ordered_json k;
  k["k"] = cfg.evaluate.folds;
  auto& folds = k["folds"] = ordered_json::array();
  for (const auto& f : cv.folds) {
    ordered_json fj;
    fj["fold"] = f.fold;
    fj["n"] = f.n_test;
    fj["n_targets"] = f.n_test_targets;
    fj["before"] = counts_json(f.before);
    fj["after"] = counts_json(f.after);
    folds.push_back(std::move(fj));
  }
  k["mean_std"] = {{"before", {{"precision", summary_json(cv.precision_before)},
                               {"recall", summary_json(cv.recall_before)},
                               {"f1", summary_json(cv.f1_before)}}},
                   {"after", {{"precision", summary_json(cv.precision_after)},
                              {"recall", summary_json(cv.recall_after)},
                              {"f1", summary_json(cv.f1_after)}}}};
  k["pooled"] = {{"before", counts_json(cv.pooled_before)}, {"after", counts_json(cv.pooled_after)}};
  k["refinement_pass_through"] = cv.refinement ? cv.refinement->pass_through : true;
  m["kfold"] = k;
  write_file(run.metrics(), m.dump(1) + "\n");

  std::string csv =
      "scope,fold,n,n_targets,tp_before,fp_before,tn_before,fn_before,precision_before,recall_before,f1_before,"
      "tp_after,fp_after,tn_after,fn_after,precision_after,recall_after,f1_after\n";
  csv += "holdout,," + std::to_string(preds.size()) + "," + std::to_string(before.tp + before.fn) + "," +
         counts_csv(before) + "," + counts_csv(after) + "\n";
  for (const auto& f : cv.folds)
    csv += "kfold," + std::to_string(f.fold) + "," + std::to_string(f.n_test) + "," +
           std::to_string(f.n_test_targets) + "," + counts_csv(f.before) + "," + counts_csv(f.after) + "\n";
  write_file(run.report(), csv);
  write_manifest(cfg, Command::Evaluate, inputs, {run.metrics(), run.report()});
}

void cmd_sweep(const PipelineConfig& cfg) {
  const auto run = layout_for(cfg);
  eval::SweepConfig sc;
  sc.session = cfg.session;
  sc.session.n_targets = cfg.sweep.n_targets;
  sc.session.n_nontargets = cfg.sweep.n_nontargets;
  sc.sim = cfg.sim;
  sc.preprocess = cfg.preprocess;
  sc.classifier = cfg.classifier;
  sc.repetitions = cfg.sweep.repetitions;
  sc.seed = derive_seed(cfg.seed, "sweep");
  const auto result = eval::rate_sweep(cfg.sweep.rates, sc);

  ordered_json m;
  m["version"] = 1;
  m["config_fingerprint"] = config_fingerprint(cfg);
  auto& rates = m["rates"] = ordered_json::array();
  std::string csv = "rate_hz,repetition,f1\n";
  for (const auto& p : result.points) {
    rates.push_back({{"rate_hz", p.rate_hz}, {"f1", p.f1}, {"mean_f1", p.mean_f1}});
    for (std::size_t r = 0; r < p.f1.size(); ++r) csv += fmt(p.rate_hz) + "," + std::to_string(r) + "," + fmt(p.f1[r]) + "\n";
  }
  m["spearman_neg_rate_f1"] = result.trend ? ordered_json(*result.trend) : ordered_json(nullptr);
  write_file(run.sweep_dir() / "metrics.json", m.dump(1) + "\n");
  write_file(run.sweep_dir() / "report.csv", csv);
  write_manifest(cfg, Command::Sweep, {}, {run.sweep_dir() / "metrics.json", run.sweep_dir() / "report.csv"});
}

void cmd_run_all(const PipelineConfig& cfg) {
  cmd_plan(cfg);
  cmd_simulate(cfg);
  cmd_preprocess(cfg);
  cmd_train(cfg);
  cmd_predict(cfg);
  cmd_refine(cfg);
  cmd_evaluate(cfg);
}

void run(Command cmd, const PipelineConfig& cfg) {
  switch (cmd) {
    case Command::Plan: return cmd_plan(cfg);
    case Command::Simulate: return cmd_simulate(cfg);
    case Command::Preprocess: return cmd_preprocess(cfg);
    case Command::Train: return cmd_train(cfg);
    case Command::Predict: return cmd_predict(cfg);
    case Command::Refine: return cmd_refine(cfg);
    case Command::Evaluate: return cmd_evaluate(cfg);
    case Command::Sweep: return cmd_sweep(cfg);
    case Command::RunAll: return cmd_run_all(cfg);
    case Command::Serve: break;
  }
  throw Error(Errc::BadConfig, "serve is not a batch command");
}

// ---------------------------------------------------------------------------

std::string predictions_to_csv(const std::vector<PredictionRow>& rows) {
  std::string out = "stimulus_index,image_id,score,label\n";
  for (const auto& r : rows)
    out += std::to_string(r.stimulus_index) + "," + r.image_id + "," + fmt(r.score) + "," + (r.label ? "1" : "0") + "\n";
  return out;
}

std::vector<PredictionRow> predictions_from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "stimulus_index,image_id,score,label")
    throw Error(Errc::MalformedFile, "predictions.csv: unexpected header");
  std::vector<PredictionRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string idx, id, score, label;
    if (!std::getline(ls, idx, ',') || !std::getline(ls, id, ',') || !std::getline(ls, score, ',') ||
        !std::getline(ls, label))
      throw Error(Errc::MalformedFile, "predictions.csv: bad row '" + line + "'");
    try {
      rows.push_back({std::stoul(idx), id, std::stod(score), label == "1"});
    } catch (const std::exception&) {
      throw Error(Errc::MalformedFile, "predictions.csv: bad row '" + line + "'");
    }
  }
  return rows;
}

} // namespace annot::pipeline
