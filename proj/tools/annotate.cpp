// annotate: command-line entry point for the EEG image-annotation pipeline.
#include "annot/bridge.hpp"
#include "annot/error.hpp"
#include "annot/hash.hpp"
#include "annot/pipeline.hpp"
#include "annot/recording_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

using namespace annot;

namespace {

int serve(const PipelineConfig& cfg) {
  const auto run = pipeline::layout_for(cfg);
  std::map<std::string, rsvp::SequencePlan> plans;
  for (const auto& session : pipeline::kSessions) {
    io::require_file(run.plan(session), "plan");
    plans[session] = rsvp::plan_from_json(read_file(run.plan(session)));
  }
  bridge::ServerConfig sc;
  sc.host = cfg.serve.host;
  sc.port = cfg.serve.port;
  if (!cfg.serve.image_root.empty()) {
    sc.image_root = resolve(cfg, cfg.serve.image_root);
    for (const auto& [name, plan] : plans) bridge::require_images(plan, sc.image_root);
  }
  bridge::Server server(plans, sc);
  std::cout << "serving plans 'train' and 'test' on http://" << cfg.serve.host << ":" << cfg.serve.port
            << (sc.image_root.empty() ? " (placeholder images)" : "") << std::endl;
  server.listen_blocking();
  return 0;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"EEG-based image annotation pipeline"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
  std::optional<int> port;

  const std::vector<std::pair<std::string, std::string>> commands{
      {"plan", "generate the RSVP sequences for the train and test sessions"},
      {"simulate", "simulate EEG recordings for both sessions"},
      {"preprocess", "filter, remove artifacts and cut epochs"},
      {"train", "train the P300 classifier on the train session"},
      {"predict", "classify the test-session epochs"},
      {"refine", "remove false positives by feature clustering"},
      {"evaluate", "score held-out and cross-validated predictions"},
      {"sweep", "presentation-rate experiment"},
      {"serve", "run the presenter bridge HTTP service"},
      {"run-all", "plan through evaluate in one go"}};
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON config file")->required();
    sub->add_option("--seed", seed, "override the global seed");
    sub->add_option("--out", out, "override the run directory");
    if (name == "serve") sub->add_option("--port", port, "override the listening port");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  const std::string name = app.get_subcommands().front()->get_name();
  try {
    auto cfg = load_config(config_path);
    if (seed) cfg.seed = *seed;
    if (out) {
      cfg.out_dir = std::filesystem::absolute(*out).string();
    }
    if (port) cfg.serve.port = *port;
    const auto cmd = pipeline::parse_command(name);
    if (*cmd == pipeline::Command::Serve) return serve(cfg);
    pipeline::run(*cmd, cfg);
    std::cout << name << ": wrote " << pipeline::layout_for(cfg).out.string() << std::endl;
    return 0;
  } catch (const Error& e) {
    std::cerr << "annotate " << name << ": " << errc_name(e.code()) << ": " << e.what() << std::endl;
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    std::cerr << "annotate " << name << ": " << e.what() << std::endl;
    return 4;
  }
}
