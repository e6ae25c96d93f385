#pragma once

#include "gemmgan/cli/config.hpp"
#include "gemmgan/data/split.hpp"
#include "gemmgan/eval/evaluation.hpp"
#include "gemmgan/gan/model.hpp"

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace gemmgan::cli {

// Workdir layout.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path preprocess() const { return root / "preprocess"; }
  std::filesystem::path tile_manifest() const { return preprocess() / "tiles.ndjson"; }
  std::filesystem::path expression() const { return preprocess() / "expression_z.tsv"; }
  std::filesystem::path zscore_stats() const { return preprocess() / "zscore_stats.json"; }
  std::filesystem::path summaries() const { return preprocess() / "summaries.jsonl"; }
  std::filesystem::path split() const { return preprocess() / "split.json"; }
  std::filesystem::path preprocess_report() const { return preprocess() / "preprocess_report.json"; }
  std::filesystem::path embeddings() const { return root / "embeddings"; }
  std::filesystem::path embedding_index() const { return embeddings() / "index.json"; }
  std::filesystem::path runs() const { return root / "runs"; }
  std::filesystem::path lock() const { return root / ".gemmgan.lock"; }
};

// Exclusive hold on a workdir for one command; a lock left by a dead process is taken over.
class WorkdirLock {
 public:
  explicit WorkdirLock(const std::filesystem::path& workdir);
  ~WorkdirLock();
  WorkdirLock(const WorkdirLock&) = delete;
  WorkdirLock& operator=(const WorkdirLock&) = delete;

 private:
  std::filesystem::path path_;
};

struct CommandIo {
  std::ostream* log = nullptr;  // progress summary; null for silence
};

struct SyntheticArgs {
  std::filesystem::path out;
  int cases = 200;
  int genes = 16;
  int classes = 2;
  int slide_size = 64;
  std::uint64_t seed = 0;
};

// Writes the cohort plus a matching config.json (toy-scale model settings).
void cmd_make_synthetic(const SyntheticArgs& args, const CommandIo& io = {});

struct PreprocessResult {
  std::size_t slides = 0;
  std::size_t failed_slides = 0;
  std::size_t tiles = 0;
  std::size_t cases = 0;
};
PreprocessResult cmd_preprocess(const RunConfig& config, const CommandIo& io = {});

// Frozen-encoder features of every case's tiles and summary into the embedding store.
std::size_t cmd_embed(const RunConfig& config, const CommandIo& io = {});

struct TrainArgs {
  std::string run_name;                         // default: derived from kind and variant
  std::optional<std::filesystem::path> resume;  // checkpoint to continue from
};
struct TrainResult {
  std::filesystem::path run_dir;
  std::filesystem::path final_checkpoint;
  std::int64_t steps = 0;
  bool stopped_early = false;
};
TrainResult cmd_train(const RunConfig& config, const TrainArgs& args = {}, const CommandIo& io = {});

std::string default_run_name(const gan::TrainConfig& config);

enum class SplitPart { kTrain, kTest };

// "{case_id}_run{r}" rows for each of n_runs generation runs.
std::filesystem::path cmd_generate(const RunConfig& config, const std::filesystem::path& checkpoint,
                                   const std::filesystem::path& out, SplitPart part = SplitPart::kTest,
                                   const CommandIo& io = {});

eval::EvalReport cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                              const std::filesystem::path& out, const CommandIo& io = {});

struct AblationRow {
  std::string variant;
  std::string status = "ok";
  std::vector<double> values;  // one per ablation column
};
struct AblationTable {
  std::vector<std::string> columns;
  std::vector<AblationRow> rows;
};

// Column headers and the report metric behind each.
const std::vector<std::pair<std::string, std::string>>& ablation_columns();

// Trains and evaluates all six fusion variants; writes ablation/ablation_table.{tsv,json}.
AblationTable cmd_ablate(const RunConfig& config, const CommandIo& io = {});

// Train/test corpora assembled from the preprocessed and embedded artifacts,
// sharing one label vocabulary.
struct Corpora {
  gan::TrainingCorpus train;
  gan::TrainingCorpus test;
};
Corpora load_corpora(const RunConfig& config, const CommandIo& io = {});

// Parses argv and runs one command; returns the process exit code.
int run_cli(int argc, char** argv);

enum ExitCode { kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitTraining = 3 };
int exit_code_for(const std::exception& e);

}  // namespace gemmgan::cli
