#pragma once

#include "gemmgan/eval/evaluation.hpp"
#include "gemmgan/gan/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gemmgan::cli {

inline constexpr const char* kWorkdirEnv = "GEMMGAN_WORKDIR";

struct PathsConfig {
  std::string slides;      // directory of <slide_id>.png
  std::string expression;  // samples x genes TSV
  std::string metadata;    // clinical JSONL
  std::string workdir = "work";
};

struct PreprocessConfig {
  int tile_size = 256;
  double min_tissue = 0.2;
  double max_missing = 0.9;
  double test_fraction = 0.2;
  bool log1p = false;
  int thumbnail_max_side = 2048;
};

struct TrainLoopConfig {
  std::int64_t checkpoint_every = 500;
  std::int64_t log_every = 100;
};

struct EvalConfig {
  int t = 10;
  int n_runs = 10;
  std::string task = "disease_type";
  std::vector<eval::ClassifierSpec> detectability_classifiers{{eval::ClassifierKind::kLogisticRegression, {}},
                                                              {eval::ClassifierKind::kMlp, {}}};
  std::vector<eval::ClassifierSpec> utility_classifiers{{eval::ClassifierKind::kRandomForest, {}},
                                                        {eval::ClassifierKind::kMlp, {}},
                                                        {eval::ClassifierKind::kLogisticRegression, {}}};
  std::optional<Index> top_k_genes;
  bool plots = false;
};

struct RunConfig {
  PathsConfig paths;
  PreprocessConfig preprocess;
  gan::TrainConfig model;
  TrainLoopConfig train;
  EvalConfig eval;
  std::uint64_t seed = 0;

  // Model config with the run seed applied.
  gan::TrainConfig model_config() const;
  eval::EvalOptions eval_options() const;
  std::filesystem::path workdir() const { return paths.workdir; }
  void validate() const;  // throws kConfigError
};

// Sections: paths, preprocess, model, train, eval, seed. Unknown keys anywhere are errors.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const RunConfig& config);

// Relative paths are taken against base.
void resolve_relative_paths(RunConfig& config, const std::filesystem::path& base);

// Relative paths in the file resolve against its directory.
RunConfig load_run_config(const std::filesystem::path& path);

// "section.key=value"; value is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

}  // namespace gemmgan::cli
