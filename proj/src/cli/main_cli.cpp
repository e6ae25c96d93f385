#include "gemmgan/cli/commands.hpp"
#include "gemmgan/core/error.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <iostream>

namespace gemmgan::cli {

namespace fs = std::filesystem;
using Json = nlohmann::json;

namespace {

struct CommonOptions {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string workdir;
  std::vector<std::string> overrides;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonOptions& common, bool config_required = true) {
  auto* opt = sub->add_option("-c,--config", common.config, "run config JSON");
  if (config_required) opt->required();
  sub->add_option("--seed", common.seed, "master seed");
  sub->add_option("--workdir", common.workdir, "workdir (overrides config and $GEMMGAN_WORKDIR)");
  sub->add_option("--set", common.overrides, "section.key=value override (repeatable)");
  sub->add_flag("-q,--quiet", common.quiet, "no progress output");
}

// file < environment < --set < dedicated flags
RunConfig build_config(const CommonOptions& common, const std::vector<std::string>& flag_overrides) {
  const fs::path path = common.config;
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read config " + path.string());
  Json doc;
  try {
    doc = Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, "config " + path.string() + " is not valid JSON: " + e.what());
  }
  for (const auto& o : common.overrides) apply_override(doc, o);
  for (const auto& o : flag_overrides) apply_override(doc, o);
  if (common.seed) doc["seed"] = *common.seed;

  RunConfig config = run_config_from_json(doc);
  resolve_relative_paths(config, path.parent_path());
  const bool workdir_set = std::any_of(common.overrides.begin(), common.overrides.end(),
                                       [](const std::string& o) { return o.rfind("paths.workdir=", 0) == 0; });
  if (!common.workdir.empty()) {
    config.paths.workdir = common.workdir;
  } else if (const char* env = std::getenv(kWorkdirEnv); env && *env && !workdir_set) {
    config.paths.workdir = env;
  }
  config.validate();
  return config;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Multimodal-conditioned gene expression GAN toolkit", "gemmgan-cli"};
  app.require_subcommand(1);

  CommonOptions common;
  std::vector<std::string> flag_overrides;

  SyntheticArgs synth;
  auto* make_synth = app.add_subcommand("make-synthetic", "write a synthetic cohort and its config.json");
  make_synth->add_option("--out", synth.out, "output directory")->required();
  make_synth->add_option("--cases", synth.cases, "number of cases")->check(CLI::PositiveNumber);
  make_synth->add_option("--genes", synth.genes, "number of genes")->check(CLI::PositiveNumber);
  make_synth->add_option("--classes", synth.classes, "number of disease classes")->check(CLI::PositiveNumber);
  make_synth->add_option("--slide-size", synth.slide_size, "slide side in pixels")->check(CLI::PositiveNumber);
  make_synth->add_option("--seed", synth.seed, "generator seed");
  make_synth->add_flag("-q,--quiet", common.quiet, "no progress output");

  auto* preprocess = app.add_subcommand("preprocess", "tile slides, normalise expression, split cases");
  add_common(preprocess, common);

  auto* embed = app.add_subcommand("embed", "compute frozen-encoder embeddings");
  add_common(embed, common);

  TrainArgs train_args;
  std::string resume, kind, variant;
  std::int64_t max_steps = 0;
  auto* train = app.add_subcommand("train", "train the model or a baseline");
  add_common(train, common);
  train->add_option("--run-name", train_args.run_name, "run directory name under runs/");
  train->add_option("--resume", resume, "checkpoint to continue from");
  train->add_option("--kind", kind, "gemm_gan | vanilla_wgan_gp | cond_wgan_gp | cvae");
  train->add_option("--variant", variant, "fusion variant");
  train->add_option("--max-steps", max_steps, "total optimisation steps")->check(CLI::PositiveNumber);

  std::string checkpoint, out, split = "test";
  auto* generate = app.add_subcommand("generate", "sample expression profiles from a checkpoint");
  add_common(generate, common);
  generate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  generate->add_option("--out", out, "output TSV")->required();
  generate->add_option("--split", split, "cases to condition on")->check(CLI::IsMember({"train", "test"}));

  int n_runs = 0;
  bool plots = false;
  auto* evaluate = app.add_subcommand("evaluate", "score a checkpoint against the test split");
  add_common(evaluate, common);
  evaluate->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  evaluate->add_option("--out", out, "report path (default: next to the checkpoint's run)");
  evaluate->add_option("--n-runs", n_runs, "generation runs")->check(CLI::PositiveNumber);
  evaluate->add_flag("--plots", plots, "write plots next to the report");

  auto* ablate = app.add_subcommand("ablate", "train and evaluate all fusion variants");
  add_common(ablate, common);
  ablate->add_option("--max-steps", max_steps, "steps per variant")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  CommandIo io{common.quiet ? nullptr : &std::cout};
  try {
    if (make_synth->parsed()) {
      cmd_make_synthetic(synth, io);
      return kExitOk;
    }

    if (!kind.empty()) flag_overrides.push_back("model.kind=\"" + kind + "\"");
    if (!variant.empty()) flag_overrides.push_back("model.variant=\"" + variant + "\"");
    if (max_steps > 0) flag_overrides.push_back("model.max_steps=" + std::to_string(max_steps));
    if (n_runs > 0) flag_overrides.push_back("eval.n_runs=" + std::to_string(n_runs));
    if (plots) flag_overrides.push_back("eval.plots=true");
    const RunConfig config = build_config(common, flag_overrides);

    fs::create_directories(config.workdir());
    WorkdirLock lock(config.workdir());

    if (preprocess->parsed()) {
      const auto r = cmd_preprocess(config, io);
      if (io.log) *io.log << "preprocess: " << r.cases << " cases, " << r.tiles << " tiles\n";
    } else if (embed->parsed()) {
      cmd_embed(config, io);
    } else if (train->parsed()) {
      if (!resume.empty()) train_args.resume = resume;
      const auto r = cmd_train(config, train_args, io);
      if (io.log) *io.log << "train: " << r.steps << " steps -> " << r.final_checkpoint.string() << "\n";
    } else if (generate->parsed()) {
      cmd_generate(config, checkpoint, out, split == "train" ? SplitPart::kTrain : SplitPart::kTest, io);
    } else if (evaluate->parsed()) {
      fs::path report_path = out;
      if (report_path.empty()) report_path = fs::path(checkpoint).parent_path() / "eval_report.json";
      cmd_evaluate(config, checkpoint, report_path, io);
      if (io.log) *io.log << "evaluate: report -> " << report_path.string() << "\n";
    } else if (ablate->parsed()) {
      cmd_ablate(config, io);
    }
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return exit_code_for(e);
  }
}

}  // namespace gemmgan::cli
