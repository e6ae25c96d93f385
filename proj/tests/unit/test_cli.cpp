#include "gemmgan/cli/commands.hpp"
#include "gemmgan/cli/config.hpp"
#include "gemmgan/core/error.hpp"
#include "gemmgan/gan/checkpoint.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>

namespace gemmgan::cli {
namespace {

namespace fs = std::filesystem;
using testing::read_bytes;
using testing::TempDir;

int run(std::vector<std::string> args) {
  args.insert(args.begin(), "gemmgan-cli");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

std::size_t count_lines(const fs::path& p) {
  std::ifstream in(p);
  std::size_t n = 0;
  for (std::string line; std::getline(in, line);) n += !line.empty();
  return n;
}

// One small cohort, preprocessed and embedded, shared by the suite.
class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new TempDir("cli");
    SyntheticArgs args;
    args.out = dir_->path() / "cohort";
    args.cases = 100;
    args.genes = 6;
    args.slide_size = 32;
    args.seed = 5;
    cmd_make_synthetic(args);
    config_ = new RunConfig(load_run_config(args.out / "config.json"));
    config_->model.max_steps = 4;
    config_->model.batch_size = 16;
    config_->model.critic_steps = 2;
    config_->train.checkpoint_every = 2;
    config_->eval.n_runs = 2;
    config_->eval.detectability_classifiers = {{eval::ClassifierKind::kLogisticRegression, {}}};
    config_->eval.utility_classifiers = {{eval::ClassifierKind::kLogisticRegression, {}}};
    cmd_preprocess(*config_);
    cmd_embed(*config_);
  }
  static void TearDownTestSuite() {
    delete config_;
    delete dir_;
  }

  static RunConfig with_workdir(const std::string& name) {
    RunConfig c = *config_;
    c.paths.workdir = (dir_->path() / name).string();
    return c;
  }

  static TempDir* dir_;
  static RunConfig* config_;
};

TempDir* Pipeline::dir_ = nullptr;
RunConfig* Pipeline::config_ = nullptr;

// ---------------------------------------------------------------- config

TEST(Config, RoundTripAndUnknownKeys) {
  RunConfig c;
  c.seed = 17;
  c.model.fusion.variant = fusion::FusionVariant::kMeanImage;
  c.eval.top_k_genes = 50;
  const auto j = to_json(c);
  EXPECT_EQ(to_json(run_config_from_json(nlohmann::json::parse(j.dump()))).dump(), j.dump());

  auto bad = nlohmann::json::parse(j.dump());
  bad["model"]["lerning_rate"] = 1;
  try {
    run_config_from_json(bad);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kConfigError);
    EXPECT_NE(std::string(e.what()).find("lerning_rate"), std::string::npos);
  }
  auto section = nlohmann::json::parse(j.dump());
  section["extras"] = nlohmann::json::object();
  EXPECT_THROW(run_config_from_json(section), Error);
}

TEST(Config, Overrides) {
  nlohmann::json doc = to_json(RunConfig{});
  apply_override(doc, "model.d=64");
  apply_override(doc, "eval.task=primary_site");
  apply_override(doc, "seed=9");
  const auto c = run_config_from_json(doc);
  EXPECT_EQ(c.model.fusion.dim, 64);
  EXPECT_EQ(c.eval.task, "primary_site");
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.model_config().seed, 9u);
  EXPECT_THROW(apply_override(doc, "no_equals_sign"), Error);
  apply_override(doc, "model.heads=3");
  EXPECT_THROW(run_config_from_json(doc).validate(), Error);
}

TEST(Config, RelativePathsFollowTheFile) {
  TempDir dir("cfg");
  fs::create_directories(dir / "sub");
  RunConfig c;
  c.paths.slides = "slides";
  c.paths.expression = "/abs/expr.tsv";
  c.paths.metadata = "../meta.jsonl";
  c.paths.workdir = "work";
  {
    std::ofstream out(dir / "sub" / "config.json");
    out << to_json(c).dump();
  }
  const auto loaded = load_run_config(dir / "sub" / "config.json");
  EXPECT_EQ(fs::path(loaded.paths.slides), dir / "sub" / "slides");
  EXPECT_EQ(loaded.paths.expression, "/abs/expr.tsv");
  EXPECT_EQ(fs::path(loaded.paths.metadata), (dir / "meta.jsonl").lexically_normal());
  EXPECT_THROW(load_run_config(dir / "absent.json"), Error);
}

// ---------------------------------------------------------------- lock and exit codes

TEST(Lock, ExclusiveAndStaleTakeover) {
  TempDir dir("lock");
  {
    WorkdirLock held(dir.path());
    EXPECT_TRUE(fs::exists(Layout{dir.path()}.lock()));
    EXPECT_THROW(WorkdirLock(dir.path()), Error);
  }
  EXPECT_FALSE(fs::exists(Layout{dir.path()}.lock()));
  {
    std::ofstream stale(Layout{dir.path()}.lock());
    stale << 2147483000 << "\n";
  }
  EXPECT_NO_THROW(WorkdirLock{dir.path()});
}

TEST(ExitCodes, Mapping) {
  EXPECT_EQ(exit_code_for(Error(ErrorCode::kNonFiniteLoss, "x")), kExitTraining);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::kConfigError, "x")), kExitUsage);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::kUnknownVariant, "x")), kExitUsage);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::kHeadsDontDivide, "x")), kExitUsage);
  EXPECT_EQ(exit_code_for(Error(ErrorCode::kIoError, "x")), kExitData);
  EXPECT_EQ(exit_code_for(std::runtime_error("x")), kExitData);
}

TEST(ExitCodes, CommandLine) {
  TempDir dir("argv");
  EXPECT_EQ(run({"--help"}), 0);
  EXPECT_EQ(run({"frobnicate"}), 1);
  EXPECT_EQ(run({"train"}), 1);  // --config is required
  EXPECT_EQ(run({"preprocess", "-c", (dir / "missing.json").string()}), 1);
  ASSERT_EQ(run({"make-synthetic", "--out", (dir / "c").string(), "--cases", "12", "--genes", "4", "--slide-size",
                 "32", "-q"}),
            0);
  const std::string cfg = (dir / "c" / "config.json").string();
  EXPECT_EQ(run({"preprocess", "-c", cfg, "--set", "model.variant=attention_only", "-q"}), 1);
  EXPECT_EQ(run({"preprocess", "-c", cfg, "--set", "model.heads=5", "-q"}), 1);
  EXPECT_EQ(run({"preprocess", "-c", cfg, "--set", "paths.slides=/nonexistent", "-q"}), 2);
  EXPECT_EQ(run({"preprocess", "-c", cfg, "--workdir", (dir / "w").string(), "-q"}), 0);
  EXPECT_TRUE(fs::exists(Layout{dir / "w"}.split()));
  EXPECT_FALSE(fs::exists(Layout{dir / "w"}.lock()));
}

TEST(ExitCodes, EnvironmentWorkdir) {
  TempDir dir("env");
  ASSERT_EQ(run({"make-synthetic", "--out", (dir / "c").string(), "--cases", "12", "--genes", "4", "--slide-size",
                 "32", "-q"}),
            0);
  ::setenv(kWorkdirEnv, (dir / "from_env").c_str(), 1);
  const int code = run({"preprocess", "-c", (dir / "c" / "config.json").string(), "-q"});
  ::unsetenv(kWorkdirEnv);
  EXPECT_EQ(code, 0);
  EXPECT_TRUE(fs::exists(Layout{dir / "from_env"}.split()));
}

// ---------------------------------------------------------------- pipeline

TEST_F(Pipeline, SyntheticCohortIsComplete) {
  const fs::path cohort = dir_->path() / "cohort";
  EXPECT_TRUE(fs::exists(cohort / "config.json"));
  EXPECT_TRUE(fs::exists(cohort / "expression.tsv"));
  EXPECT_EQ(count_lines(cohort / "clinical.jsonl"), 100u);
  std::size_t slides = 0;
  for (const auto& e : fs::directory_iterator(cohort / "slides")) slides += e.path().extension() == ".png";
  EXPECT_EQ(slides, 100u);
  EXPECT_NO_THROW(config_->validate());
}

TEST_F(Pipeline, PreprocessIsIdempotent) {
  const Layout layout{config_->workdir()};
  const auto manifest = read_bytes(layout.tile_manifest());
  const auto expr = read_bytes(layout.expression());
  const auto split = read_bytes(layout.split());
  const auto result = cmd_preprocess(*config_);
  EXPECT_EQ(result.cases, 100u);
  EXPECT_EQ(result.failed_slides, 0u);
  EXPECT_TRUE(read_bytes(layout.tile_manifest()) == manifest);
  EXPECT_TRUE(read_bytes(layout.expression()) == expr);
  EXPECT_TRUE(read_bytes(layout.split()) == split);
}

TEST_F(Pipeline, PreprocessMissingInputs) {
  RunConfig c = with_workdir("missing");
  c.paths.slides = (dir_->path() / "nowhere").string();
  try {
    cmd_preprocess(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kIoError);
    EXPECT_NE(std::string(e.what()).find("nowhere"), std::string::npos);
  }
  EXPECT_THROW(cmd_train(with_workdir("empty")), Error);
}

TEST_F(Pipeline, CorporaShareVocabularyAndSplit) {
  const auto corpora = load_corpora(*config_);
  EXPECT_EQ(corpora.train.size() + corpora.test.size(), 100);
  EXPECT_EQ(corpora.test.size(), 20);
  EXPECT_EQ(corpora.train.disease_types, corpora.test.disease_types);
  EXPECT_EQ(corpora.train.genes(), 6);
  for (const auto& c : corpora.test.cases) {
    EXPECT_GT(c.patch_features.rows(), 0);
    EXPECT_GT(c.token_features.rows(), 1);
  }
}

TEST_F(Pipeline, TrainWritesTraceAndCheckpoints) {
  const auto result = cmd_train(*config_, {"trace"});
  EXPECT_EQ(result.steps, 4);
  EXPECT_EQ(count_lines(result.run_dir / "loss_trace.jsonl"), 4u);
  EXPECT_TRUE(fs::exists(result.run_dir / "checkpoints" / "step_00000002.ckpt"));
  EXPECT_TRUE(fs::exists(result.run_dir / "train_report.json"));
  EXPECT_EQ(gan::read_checkpoint(result.final_checkpoint).metadata.at("step"), 4);
  EXPECT_EQ(default_run_name(config_->model), "gemm_gan-full");
}

TEST_F(Pipeline, ResumeMatchesUninterruptedRun) {
  const auto straight = cmd_train(*config_, {"straight"});
  RunConfig half = *config_;
  half.model.max_steps = 2;
  const auto first = cmd_train(half, {"resumed"});
  const auto resumed = cmd_train(*config_, {"resumed", first.final_checkpoint});
  EXPECT_EQ(resumed.steps, 4);
  EXPECT_EQ(count_lines(resumed.run_dir / "loss_trace.jsonl"), 4u);
  const auto a = gan::read_checkpoint(resumed.final_checkpoint), b = gan::read_checkpoint(straight.final_checkpoint);
  ASSERT_EQ(a.tensors.size(), b.tensors.size());
  for (std::size_t i = 0; i < a.tensors.size(); ++i) {
    EXPECT_EQ(a.tensors[i].first, b.tensors[i].first);
    EXPECT_TRUE(a.tensors[i].second == b.tensors[i].second) << a.tensors[i].first;
  }
  EXPECT_TRUE(read_bytes(resumed.run_dir / "loss_trace.jsonl") == read_bytes(straight.run_dir / "loss_trace.jsonl"));

  RunConfig other = *config_;
  other.model.kind = gan::ModelKind::kCvae;
  EXPECT_THROW(cmd_train(other, {"wrong", straight.final_checkpoint}), Error);
}

TEST_F(Pipeline, GenerateAndEvaluate) {
  const auto trained = cmd_train(*config_, {"eval"});
  const fs::path out = dir_->path() / "gen" / "profiles.tsv";
  cmd_generate(*config_, trained.final_checkpoint, out);
  EXPECT_EQ(count_lines(out), 1u + 20u * 2u);

  const fs::path report_path = dir_->path() / "eval" / "report.json";
  const auto report = cmd_evaluate(*config_, trained.final_checkpoint, report_path);
  EXPECT_TRUE(fs::exists(report_path));
  for (const auto& m : report.metrics) {
    EXPECT_FALSE(m.failed()) << m.name << ": " << m.status;
    EXPECT_EQ(m.per_run.size(), 2u) << m.name;
  }
  const auto first = read_bytes(report_path);
  cmd_evaluate(*config_, trained.final_checkpoint, report_path);
  EXPECT_TRUE(read_bytes(report_path) == first);
  EXPECT_THROW(cmd_evaluate(*config_, dir_->path() / "no.ckpt", report_path), Error);
}

}  // namespace
}  // namespace gemmgan::cli
