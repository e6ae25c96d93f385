#pragma once

#include "gemmgan/eval/classifiers.hpp"
#include "gemmgan/eval/metrics.hpp"
#include "gemmgan/gan/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace gemmgan::eval {

struct Scores {
  double accuracy = 0.0;
  double f1 = 0.0;
};

// Real (0) vs generated (1): balance by subsampling the larger set, stratified
// 70/30 split, fit on train, accuracy and F1 of the generated class on test.
Scores detectability(const Matrix& real, const Matrix& generated, const ClassifierSpec& spec, std::uint64_t seed);

struct UtilityScores : Scores {
  std::vector<int> absent_classes;  // test classes never seen in the generated labels
};

// Fit on generated profiles with their conditioning labels, score on real
// labelled profiles; F1 macro-averaged.
UtilityScores utility(const Matrix& generated, const std::vector<int>& generated_labels, const Matrix& real_test,
                      const std::vector<int>& test_labels, int n_classes, const ClassifierSpec& spec,
                      std::uint64_t seed);

struct MetricResult {
  std::string name;
  std::vector<double> per_run;
  double mean = 0.0;
  double std = 0.0;  // population
  std::string status = "ok";

  bool failed() const { return status.rfind("failed", 0) == 0; }
  static MetricResult from_runs(std::string name, std::vector<double> runs);
};

enum class UtilityTask { kDiseaseType, kPrimarySite };

struct EvalOptions {
  int n_runs = 10;
  int t = kDefaultNeighbor;
  std::uint64_t seed = 0;
  UtilityTask task = UtilityTask::kDiseaseType;
  std::vector<ClassifierSpec> detectability_classifiers{{ClassifierKind::kLogisticRegression, {}},
                                                        {ClassifierKind::kMlp, {}}};
  std::vector<ClassifierSpec> utility_classifiers{{ClassifierKind::kRandomForest, {}},
                                                  {ClassifierKind::kMlp, {}},
                                                  {ClassifierKind::kLogisticRegression, {}}};
  std::optional<Index> top_k_genes;  // correlation on the highest-variance genes only
};

struct EvalReport {
  std::vector<MetricResult> metrics;
  std::string config_hash;
  nlohmann::ordered_json seeds;
  std::string model_checkpoint_ref;
  nlohmann::ordered_json effective_config;

  const MetricResult* find(const std::string& name) const;
  nlohmann::ordered_json to_json() const;
};

// Generated profiles for each run, scored against the real test profiles.
// A failing metric is recorded as failed; the others are still computed.
EvalReport evaluate_runs(const std::vector<Matrix>& runs, const gan::TrainingCorpus& test, const EvalOptions& options);

// sample_profiles(n_runs) on the test corpus, then evaluate_runs.
EvalReport evaluate_all(gan::Model& model, const gan::TrainingCorpus& test, const EvalOptions& options);

// 16 hex digits of FNV-1a over the compact JSON dump.
std::string config_hash(const nlohmann::ordered_json& config);

// Metric-mean bar chart and real | generated correlation heatmaps (PNG).
void write_plots(const std::filesystem::path& dir, const EvalReport& report, const Matrix& real,
                 const Matrix& generated);

}  // namespace gemmgan::eval
