#include "gemmgan/cli/commands.hpp"

#include "gemmgan/core/error.hpp"
#include "gemmgan/data/clinical.hpp"
#include "gemmgan/data/expression.hpp"
#include "gemmgan/data/image.hpp"
#include "gemmgan/data/synthetic.hpp"
#include "gemmgan/data/tissue.hpp"
#include "gemmgan/encoders/embedding_store.hpp"
#include "gemmgan/encoders/encoders.hpp"
#include "gemmgan/gan/checkpoint.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fcntl.h>
#include <fstream>
#include <iterator>
#include <map>
#include <set>
#include <signal.h>
#include <sstream>
#include <unistd.h>

namespace gemmgan::cli {
namespace {

namespace fs = std::filesystem;
using OJson = nlohmann::ordered_json;

void log_line(const CommandIo& io, const std::string& text) {
  if (io.log != nullptr) *io.log << text << '\n' << std::flush;
}

void require_file(const std::string& path, const char* what) {
  if (path.empty()) throw Error(ErrorCode::kIoError, std::string(what) + " path is not set");
  if (!fs::exists(path)) throw Error(ErrorCode::kIoError, std::string(what) + " not found: " + path);
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out << text;
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  fs::rename(tmp, path);
}

void write_json(const fs::path& path, const OJson& j) { write_text(path, j.dump(2) + "\n"); }

nlohmann::json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kIoError, path.string() + ": " + e.what());
  }
}

std::string read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

std::vector<std::string> sorted_unique(std::vector<std::string> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

int index_of(const std::vector<std::string>& vocab, const std::string& label) {
  auto it = std::find(vocab.begin(), vocab.end(), label);
  return it == vocab.end() ? -1 : static_cast<int>(it - vocab.begin());
}

struct CaseSummary {
  std::string case_id;
  std::string summary;
  std::string disease_type;
  std::string primary_site;
};

std::vector<CaseSummary> read_summaries(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "missing preprocessing output " + path.string() + " (run preprocess)");
  std::vector<CaseSummary> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    out.push_back({j.at("case_id"), j.at("summary"), j.at("disease_type"), j.at("primary_site")});
  }
  return out;
}

std::vector<fs::path> slide_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error(ErrorCode::kIoError, "slides directory not found: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::uint32_t file_crc(const fs::path& path) {
  const std::string bytes = read_bytes(path);
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

std::string checkpoint_ref(const RunConfig& config, const fs::path& checkpoint) {
  std::error_code ec;
  fs::path rel = fs::relative(fs::absolute(checkpoint), fs::absolute(config.workdir()), ec);
  if (ec || rel.empty() || *rel.begin() == "..") rel = checkpoint;
  char crc[16];
  std::snprintf(crc, sizeof(crc), "%08x", file_crc(checkpoint));
  return rel.generic_string() + "#crc32=" + crc;
}

}  // namespace

// ---------------------------------------------------------------- lock

WorkdirLock::WorkdirLock(const fs::path& workdir) : path_(Layout{workdir}.lock()) {
  fs::create_directories(workdir);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      const auto written = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (written != static_cast<ssize_t>(pid.size())) throw Error(ErrorCode::kIoError, "cannot write " + path_.string());
      return;
    }
    if (errno != EEXIST) throw Error(ErrorCode::kIoError, "cannot create lock " + path_.string());
    long owner = 0;
    std::ifstream(path_) >> owner;
    if (owner > 0 && (::kill(static_cast<pid_t>(owner), 0) == 0 || errno != ESRCH)) {
      throw Error(ErrorCode::kConfigError,
                  "workdir " + workdir.string() + " is in use by process " + std::to_string(owner));
    }
    fs::remove(path_);
  }
  throw Error(ErrorCode::kConfigError, "could not acquire " + path_.string());
}

WorkdirLock::~WorkdirLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

// ---------------------------------------------------------------- make-synthetic

void cmd_make_synthetic(const SyntheticArgs& args, const CommandIo& io) {
  if (args.out.empty()) throw Error(ErrorCode::kConfigError, "--out is required");
  data::SyntheticOptions options;
  options.slide_size = args.slide_size;
  const auto ds = data::make_synthetic_dataset(args.cases, args.genes, args.classes, args.seed, options);
  data::write_synthetic_dataset(args.out, ds);

  RunConfig config;
  // relative to config.json
  config.paths.slides = "slides";
  config.paths.expression = "expression.tsv";
  config.paths.metadata = "clinical.jsonl";
  config.paths.workdir = "work";
  config.preprocess.tile_size = std::max(1, args.slide_size / 4);
  config.model.fusion.dim = 32;
  config.model.d_noise = 32;
  config.model.n_patches = 8;
  config.model.max_tokens = 32;

  config.seed = args.seed;
  write_json(args.out / "config.json", to_json(config));
  log_line(io, "make-synthetic: " + std::to_string(args.cases) + " cases, " + std::to_string(args.genes) +
                   " genes, " + std::to_string(args.classes) + " classes -> " + args.out.string());
}

// ---------------------------------------------------------------- preprocess

PreprocessResult cmd_preprocess(const RunConfig& config, const CommandIo& io) {
  require_file(config.paths.slides, "slides directory");
  require_file(config.paths.expression, "expression table");
  require_file(config.paths.metadata, "clinical metadata");
  const Layout layout{config.workdir()};
  fs::create_directories(layout.preprocess());
  const auto& pp = config.preprocess;

  auto records = data::read_clinical_jsonl(config.paths.metadata);
  std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.case_id < b.case_id; });
  std::vector<std::string> case_ids;
  for (const auto& r : records) case_ids.push_back(r.case_id);

  PreprocessResult result;
  std::vector<data::Tile> tiles;
  std::set<std::string> cases_with_tiles;
  OJson failures = OJson::array();
  const auto files = slide_files(config.paths.slides);
  for (const auto& file : files) {
    ++result.slides;
    const std::string slide_id = file.stem().string();
    try {
      data::SlideImage slide{slide_id, data::read_png(file), std::nullopt};
      const auto mask = data::segment_tissue(slide, pp.thumbnail_max_side);
      const auto slide_tiles = data::extract_tiles(slide, mask, pp.tile_size, pp.min_tissue);
      if (slide_tiles.empty()) throw Error(ErrorCode::kNoTiles, "no tile passes the tissue threshold");
      tiles.insert(tiles.end(), slide_tiles.begin(), slide_tiles.end());
      const auto c = data::match_case(slide_id, case_ids);
      if (!c.empty()) cases_with_tiles.insert(c);
    } catch (const std::exception& e) {
      ++result.failed_slides;
      failures.push_back({{"slide", slide_id}, {"error", e.what()}});
      log_line(io, "preprocess: skipping slide " + slide_id + ": " + e.what());
    }
  }
  if (result.slides == 0) throw Error(ErrorCode::kNoTiles, "no slides in " + config.paths.slides);
  if (2 * result.failed_slides > result.slides) {
    throw Error(ErrorCode::kNoTiles, std::to_string(result.failed_slides) + " of " + std::to_string(result.slides) +
                                         " slides failed preprocessing");
  }
  result.tiles = tiles.size();
  data::write_tile_manifest(layout.tile_manifest(), tiles);

  const auto filtered = data::filter_genes(data::read_expression_tsv(config.paths.expression), pp.max_missing);
  std::set<std::string> cases_with_expression;
  for (const auto& s : filtered.sample_ids) {
    const auto c = data::match_case(s, case_ids);
    if (!c.empty()) cases_with_expression.insert(c);
  }
  std::vector<std::string> eligible;
  for (const auto& c : case_ids) {
    if (cases_with_tiles.contains(c) && cases_with_expression.contains(c)) eligible.push_back(c);
  }
  result.cases = eligible.size();
  const auto split = data::make_split(eligible, pp.test_fraction, config.seed);
  const auto z = data::zscore_fit_transform(filtered, split, pp.log1p);
  data::write_expression_tsv(layout.expression(), z.matrix);
  data::write_zscore_stats(layout.zscore_stats(), z.stats);
  data::write_split(layout.split(), split);

  std::string summaries;
  for (const auto& r : records) {
    OJson j;
    j["case_id"] = r.case_id;
    j["summary"] = data::serialize_clinical_summary(r);
    j["disease_type"] = r.disease_type;
    j["primary_site"] = r.primary_site;
    summaries += j.dump() + "\n";
  }
  write_text(layout.summaries(), summaries);

  OJson report;
  report["slides"] = result.slides;
  report["failed_slides"] = failures;
  report["tiles"] = result.tiles;
  report["genes_kept"] = filtered.genes();
  report["cases"] = result.cases;
  report["train_cases"] = split.train_ids.size();
  report["test_cases"] = split.test_ids.size();
  report["effective_config"] = to_json(config);
  write_json(layout.preprocess_report(), report);
  log_line(io, "preprocess: " + std::to_string(result.slides - result.failed_slides) + "/" +
                   std::to_string(result.slides) + " slides, " + std::to_string(result.tiles) + " tiles, " +
                   std::to_string(filtered.genes()) + " genes, " + std::to_string(result.cases) + " cases");
  return result;
}

// ---------------------------------------------------------------- embed

std::size_t cmd_embed(const RunConfig& config, const CommandIo& io) {
  const Layout layout{config.workdir()};
  require_file(layout.tile_manifest().string(), "tile manifest (run preprocess)");
  require_file(config.paths.slides, "slides directory");
  const auto image_encoder = encoders::make_image_encoder(config.model.image_encoder);
  const auto text_encoder = encoders::make_text_encoder(config.model.text_encoder);
  const encoders::EmbeddingStore store(layout.embeddings());

  const auto summaries = read_summaries(layout.summaries());
  std::vector<std::string> case_ids;
  for (const auto& s : summaries) case_ids.push_back(s.case_id);
  std::map<std::string, std::vector<data::Tile>> tiles_by_slide;
  for (const auto& t : data::read_tile_manifest(layout.tile_manifest())) tiles_by_slide[t.slide_id].push_back(t);
  std::map<std::string, std::vector<std::string>> slides_by_case;
  for (const auto& [slide_id, tiles] : tiles_by_slide) {
    const auto c = data::match_case(slide_id, case_ids);
    if (!c.empty()) slides_by_case[c].push_back(slide_id);
  }

  OJson cases = OJson::object();
  std::size_t computed = 0;
  const std::string text_tag = text_encoder->name() + "-m" + std::to_string(config.model.max_tokens);
  for (const auto& s : summaries) {
    auto it = slides_by_case.find(s.case_id);
    if (it == slides_by_case.end()) continue;
    std::string content;
    std::vector<fs::path> paths;
    for (const auto& slide_id : it->second) {
      paths.push_back(fs::path(config.paths.slides) / (slide_id + ".png"));
      content += read_bytes(paths.back());
      for (const auto& t : tiles_by_slide[slide_id]) {
        content += "|" + std::to_string(t.origin_x) + "," + std::to_string(t.origin_y) + "," + std::to_string(t.size);
      }
    }
    const auto patch_key = encoders::content_key(
        image_encoder->name(), {reinterpret_cast<const std::uint8_t*>(content.data()), content.size()});
    if (!store.contains(patch_key)) {
      std::vector<data::RgbImage> crops;
      for (std::size_t k = 0; k < it->second.size(); ++k) {
        const auto image = data::read_png(paths[k]);
        for (const auto& t : tiles_by_slide[it->second[k]]) crops.push_back(image.crop(t.origin_x, t.origin_y, t.size, t.size));
      }
      store.save(patch_key, to_float(encoders::encode_native(*image_encoder, crops)), image_encoder->name());
      ++computed;
    }
    const auto token_key =
        encoders::content_key(text_tag, {reinterpret_cast<const std::uint8_t*>(s.summary.data()), s.summary.size()});
    if (!store.contains(token_key)) {
      store.save(token_key, to_float(text_encoder->encode(s.summary, config.model.max_tokens)), text_encoder->name());
      ++computed;
    }
    cases[s.case_id] = {{"patches", patch_key}, {"tokens", token_key}};
  }
  OJson index;
  index["image_encoder"] = image_encoder->name();
  index["text_encoder"] = text_encoder->name();
  index["max_tokens"] = config.model.max_tokens;
  index["cases"] = cases;
  index["effective_config"] = to_json(config);
  write_json(layout.embedding_index(), index);
  log_line(io, "embed: " + std::to_string(cases.size()) + " cases, " + std::to_string(computed) + " entries computed");
  return cases.size();
}

// ---------------------------------------------------------------- corpora

Corpora load_corpora(const RunConfig& config, const CommandIo& io) {
  const Layout layout{config.workdir()};
  require_file(layout.split().string(), "split file (run preprocess)");
  require_file(layout.embedding_index().string(), "embedding index (run embed)");
  const auto split = data::read_split(layout.split());
  const auto expression = data::read_expression_tsv(layout.expression());
  const auto summaries = read_summaries(layout.summaries());
  const auto index = read_json(layout.embedding_index());
  if (index.at("image_encoder").get<std::string>() != config.model.image_encoder ||
      index.at("text_encoder").get<std::string>() != config.model.text_encoder ||
      index.at("max_tokens").get<Index>() != config.model.max_tokens) {
    throw Error(ErrorCode::kEncoderFailure, "embeddings were computed with different encoder settings; re-run embed");
  }
  const encoders::EmbeddingStore store(layout.embeddings());

  std::map<std::string, const CaseSummary*> summary_of;
  for (const auto& s : summaries) summary_of[s.case_id] = &s;
  std::vector<std::string> all_cases = split.train_ids;
  all_cases.insert(all_cases.end(), split.test_ids.begin(), split.test_ids.end());
  std::map<std::string, Index> row_of;
  for (Index i = 0; i < expression.samples(); ++i) {
    const auto c = data::match_case(expression.sample_ids[static_cast<std::size_t>(i)], all_cases);
    if (!c.empty() && !row_of.contains(c)) row_of[c] = i;
  }

  std::vector<std::string> diseases, sites;
  for (const auto& c : all_cases) {
    if (auto it = summary_of.find(c); it != summary_of.end()) {
      if (!it->second->disease_type.empty()) diseases.push_back(it->second->disease_type);
      if (!it->second->primary_site.empty()) sites.push_back(it->second->primary_site);
    }
  }
  diseases = sorted_unique(diseases);
  sites = sorted_unique(sites);

  auto build = [&](const std::vector<std::string>& ids) {
    gan::TrainingCorpus corpus;
    corpus.gene_ids = expression.gene_ids;
    corpus.disease_types = diseases;
    corpus.primary_sites = sites;
    for (const auto& id : ids) {
      const auto& cases = index.at("cases");
      if (!cases.contains(id) || !row_of.contains(id)) {
        log_line(io, "skipping case " + id + ": missing embeddings or expression");
        continue;
      }
      gan::CaseFeatures f;
      f.case_id = id;
      f.patch_features = to_double(store.load(cases.at(id).at("patches").get<std::string>()));
      f.token_features = to_double(store.load(cases.at(id).at("tokens").get<std::string>()));
      f.expression = expression.values.row(row_of.at(id));
      if (auto it = summary_of.find(id); it != summary_of.end()) {
        f.disease = index_of(diseases, it->second->disease_type);
        f.site = index_of(sites, it->second->primary_site);
      }
      corpus.cases.push_back(std::move(f));
    }
    return corpus;
  };
  Corpora out{build(split.train_ids), build(split.test_ids)};
  if (out.train.cases.empty()) throw Error(ErrorCode::kTooFewCases, "no usable training cases");
  return out;
}

// ---------------------------------------------------------------- train

std::string default_run_name(const gan::TrainConfig& config) {
  if (config.kind == gan::ModelKind::kGemmGan) {
    return "gemm_gan-" + std::string(fusion::variant_name(config.fusion.variant));
  }
  return std::string(gan::kind_name(config.kind));
}

TrainResult cmd_train(const RunConfig& config, const TrainArgs& args, const CommandIo& io) {
  const Layout layout{config.workdir()};
  auto corpora = load_corpora(config, io);
  const gan::TrainConfig model_config = config.model_config();
  TrainResult result;
  result.run_dir = layout.runs() / (args.run_name.empty() ? default_run_name(model_config) : args.run_name);
  fs::create_directories(result.run_dir / "checkpoints");

  std::unique_ptr<gan::Model> model;
  if (args.resume) {
    require_file(args.resume->string(), "checkpoint");
    model = gan::load_checkpoint(*args.resume);
    if (model->kind() != model_config.kind) {
      throw Error(ErrorCode::kConfigError, "checkpoint kind differs from model.kind");
    }
  } else {
    gan::ModelShape shape = gan::ModelShape::of(corpora.train);
    model = gan::make_model(model_config, shape);
  }

  gan::TrainingCorpus validation;
  if (model_config.early_stopping_patience > 0) {
    const std::size_t n_val = std::max<std::size_t>(1, corpora.train.cases.size() / 10);
    validation = corpora.train;
    validation.cases.assign(corpora.train.cases.end() - static_cast<std::ptrdiff_t>(n_val), corpora.train.cases.end());
    corpora.train.cases.resize(corpora.train.cases.size() - n_val);
  }

  // Loss trace: on resume keep the rows up to the restored step.
  const fs::path trace_path = result.run_dir / "loss_trace.jsonl";
  std::string kept;
  if (args.resume && fs::exists(trace_path)) {
    std::ifstream in(trace_path);
    std::string line;
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      if (nlohmann::json::parse(line).at("step").get<std::int64_t>() <= model->step()) kept += line + "\n";
    }
  }
  std::ofstream trace(trace_path, std::ios::trunc);
  if (!trace) throw Error(ErrorCode::kIoError, "cannot write " + trace_path.string());
  trace << kept;

  const OJson effective = to_json(config);
  const OJson extra = {{"effective_config", effective}};
  const std::int64_t start = model->step();
  gan::TrainingOptions options;
  options.max_steps = model_config.max_steps;
  options.validation = validation.cases.empty() ? nullptr : &validation;
  options.on_step = [&](std::int64_t step, const gan::StepLosses& losses) {
    OJson row;
    row["step"] = step;
    for (const auto& [k, v] : losses.values) row[k] = v;
    trace << row.dump() << '\n';
    trace.flush();
    if (step % config.train.checkpoint_every == 0) {
      char name[32];
      std::snprintf(name, sizeof(name), "step_%08lld.ckpt", static_cast<long long>(step));
      gan::save_checkpoint(*model, result.run_dir / "checkpoints" / name, extra);
    }
    if (step % config.train.log_every == 0 || step == model_config.max_steps) {
      std::string text = "train: step " + std::to_string(step) + "/" + std::to_string(model_config.max_steps);
      for (const auto& [k, v] : losses.values) text += " " + k + "=" + format_number(v);
      log_line(io, text);
    }
  };
  const auto summary = gan::train(*model, corpora.train, options);
  trace.close();

  result.final_checkpoint = result.run_dir / "final.ckpt";
  gan::save_checkpoint(*model, result.final_checkpoint, extra);
  result.steps = model->step();
  result.stopped_early = summary.stopped_early;
  OJson report;
  report["kind"] = gan::kind_name(model_config.kind);
  report["variant"] = fusion::variant_name(model_config.fusion.variant);
  report["start_step"] = start;
  report["steps"] = result.steps;
  report["stopped_early"] = result.stopped_early;
  report["train_cases"] = corpora.train.cases.size();
  report["final_checkpoint"] = result.final_checkpoint.filename().string();
  report["effective_config"] = effective;
  write_json(result.run_dir / "train_report.json", report);
  log_line(io, "train: wrote " + result.final_checkpoint.string());
  return result;
}

// ---------------------------------------------------------------- generate / evaluate

fs::path cmd_generate(const RunConfig& config, const fs::path& checkpoint, const fs::path& out, SplitPart part,
                      const CommandIo& io) {
  require_file(checkpoint.string(), "checkpoint");
  auto model = gan::load_checkpoint(checkpoint);
  const auto corpora = load_corpora(config, io);
  const auto& corpus = part == SplitPart::kTest ? corpora.test : corpora.train;
  const auto runs = gan::sample_profiles(*model, corpus, config.eval.n_runs, config.seed);
  std::vector<std::string> ids;
  Matrix values(static_cast<Index>(runs.size()) * corpus.size(), corpus.genes());
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (Index i = 0; i < corpus.size(); ++i) {
      ids.push_back(corpus.cases[static_cast<std::size_t>(i)].case_id + "_run" + std::to_string(r));
      values.row(static_cast<Index>(r) * corpus.size() + i) = runs[r].row(i);
    }
  }
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  data::write_expression_tsv(out, ids, corpus.gene_ids, values);
  OJson meta;
  meta["checkpoint"] = checkpoint_ref(config, checkpoint);
  meta["part"] = part == SplitPart::kTest ? "test" : "train";
  meta["n_runs"] = runs.size();
  meta["effective_config"] = to_json(config);
  auto meta_path = out;
  meta_path += ".json";
  write_json(meta_path, meta);
  log_line(io, "generate: " + std::to_string(ids.size()) + " profiles -> " + out.string());
  return out;
}

eval::EvalReport cmd_evaluate(const RunConfig& config, const fs::path& checkpoint, const fs::path& out,
                              const CommandIo& io) {
  require_file(checkpoint.string(), "checkpoint");
  auto model = gan::load_checkpoint(checkpoint);
  const auto corpora = load_corpora(config, io);
  const auto options = config.eval_options();
  const auto runs = gan::sample_profiles(*model, corpora.test, options.n_runs, options.seed);
  auto report = eval::evaluate_runs(runs, corpora.test, options);
  report.seeds["train_seed"] = model->config().seed;
  report.effective_config = to_json(config);
  report.config_hash = eval::config_hash(report.effective_config);
  report.model_checkpoint_ref = checkpoint_ref(config, checkpoint);
  write_json(out, report.to_json());
  if (config.eval.plots && corpora.test.size() >= 2) {
    eval::write_plots(out.parent_path() / "plots", report, corpora.test.expression(), runs.front());
  }
  std::string text = "evaluate:";
  for (const auto& m : report.metrics) {
    text += " " + m.name + "=" + (m.failed() ? std::string("failed") : format_number(m.mean));
  }
  log_line(io, text);
  return report;
}

// ---------------------------------------------------------------- ablate

const std::vector<std::pair<std::string, std::string>>& ablation_columns() {
  static const std::vector<std::pair<std::string, std::string>> columns = {
      {"Prec.", "precision"},
      {"Recall", "recall"},
      {"C. MSE", "correlation_mse"},
      {"LR Acc.", "detectability_logistic_regression_accuracy"},
      {"LR F1", "detectability_logistic_regression_f1"},
      {"RF Acc.", "utility_random_forest_accuracy"},
      {"RF F1", "utility_random_forest_f1"},
  };
  return columns;
}

AblationTable cmd_ablate(const RunConfig& config, const CommandIo& io) {
  const Layout layout{config.workdir()};
  const fs::path dir = layout.root / "ablation";
  AblationTable table;
  for (const auto& [header, metric] : ablation_columns()) table.columns.push_back(header);

  for (auto variant : fusion::all_variants()) {
    AblationRow row;
    row.variant = std::string(fusion::variant_name(variant));
    try {
      RunConfig c = config;
      c.model.kind = gan::ModelKind::kGemmGan;
      c.model.fusion.variant = variant;
      const auto trained = cmd_train(c, {"ablation-" + row.variant, std::nullopt}, io);
      const auto report = cmd_evaluate(c, trained.final_checkpoint, dir / row.variant / "eval_report.json", io);
      for (const auto& [header, metric] : ablation_columns()) {
        const auto* m = report.find(metric);
        if (m == nullptr || m->failed()) {
          throw Error(ErrorCode::kInvalidArgument, "metric " + metric + " " + (m ? m->status : "missing"));
        }
        row.values.push_back(m->mean);
      }
    } catch (const std::exception& e) {
      row.status = std::string("failed: ") + e.what();
      row.values.clear();
      log_line(io, "ablate: variant " + row.variant + " " + row.status);
    }
    table.rows.push_back(std::move(row));
  }

  std::string tsv = "variant";
  for (const auto& c : table.columns) tsv += "\t" + c;
  tsv += "\tstatus\n";
  OJson rows = OJson::array();
  for (const auto& row : table.rows) {
    tsv += row.variant;
    OJson values = OJson::object();
    for (std::size_t k = 0; k < table.columns.size(); ++k) {
      if (row.values.empty()) {
        tsv += "\t";
        values[table.columns[k]] = nullptr;
      } else {
        tsv += "\t" + format_number(row.values[k]);
        values[table.columns[k]] = row.values[k];
      }
    }
    tsv += "\t" + row.status + "\n";
    rows.push_back({{"variant", row.variant}, {"status", row.status}, {"values", values}});
  }
  write_text(dir / "ablation_table.tsv", tsv);
  OJson j;
  j["columns"] = table.columns;
  j["rows"] = rows;
  j["effective_config"] = to_json(config);
  write_json(dir / "ablation_table.json", j);
  log_line(io, "ablate: wrote " + (dir / "ablation_table.tsv").string());
  return table;
}

int exit_code_for(const std::exception& e) {
  if (const auto* err = dynamic_cast<const Error*>(&e)) {
    switch (err->code()) {
      case ErrorCode::kNonFiniteLoss: return kExitTraining;
      case ErrorCode::kConfigError:
      case ErrorCode::kUnknownVariant:
      case ErrorCode::kHeadsDontDivide: return kExitUsage;
      default: return kExitData;
    }
  }
  return kExitData;
}

}  // namespace gemmgan::cli
