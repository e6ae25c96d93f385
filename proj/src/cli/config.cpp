#include "gemmgan/cli/config.hpp"

#include "gemmgan/core/error.hpp"

#include <fstream>
#include <functional>
#include <map>
#include <set>

namespace gemmgan::cli {
namespace {

using Json = nlohmann::json;
using Setter = std::function<void(const Json&)>;

void apply_section(const Json& j, const std::string& section, const std::map<std::string, Setter>& setters) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, section + " must be an object");
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::kConfigError, "unknown key " + section + "." + key);
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfigError, section + "." + key + ": " + e.what());
    }
  }
}

eval::ClassifierSpec classifier_from_json(const Json& j) {
  eval::ClassifierSpec spec;
  if (j.is_string()) {
    spec.kind = eval::parse_classifier(j.get<std::string>());
    return spec;
  }
  apply_section(j, "eval.classifier",
                {{"kind", [&](const Json& v) { spec.kind = eval::parse_classifier(v.get<std::string>()); }},
                 {"hyperparameters", [&](const Json& v) {
                    for (const auto& [k, x] : v.items()) spec.hyperparameters[k] = x.get<double>();
                  }}});
  return spec;
}

nlohmann::ordered_json classifier_to_json(const eval::ClassifierSpec& spec) {
  nlohmann::ordered_json j;
  j["kind"] = eval::classifier_name(spec.kind);
  nlohmann::ordered_json hp = nlohmann::ordered_json::object();
  for (const auto& [k, v] : spec.hyperparameters) hp[k] = v;
  j["hyperparameters"] = hp;
  return j;
}

std::vector<eval::ClassifierSpec> classifiers_from_json(const Json& j) {
  if (!j.is_array()) throw Error(ErrorCode::kConfigError, "classifier lists must be arrays");
  std::vector<eval::ClassifierSpec> out;
  for (const auto& item : j) out.push_back(classifier_from_json(item));
  return out;
}

}  // namespace

gan::TrainConfig RunConfig::model_config() const {
  gan::TrainConfig c = model;
  c.seed = seed;
  return c;
}

eval::EvalOptions RunConfig::eval_options() const {
  eval::EvalOptions o;
  o.n_runs = eval.n_runs;
  o.t = eval.t;
  o.seed = seed;
  o.task = eval.task == "primary_site" ? eval::UtilityTask::kPrimarySite : eval::UtilityTask::kDiseaseType;
  o.detectability_classifiers = eval.detectability_classifiers;
  o.utility_classifiers = eval.utility_classifiers;
  o.top_k_genes = eval.top_k_genes;
  return o;
}

void RunConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfigError, what);
  };
  need(!paths.workdir.empty(), "paths.workdir must be set");
  need(preprocess.tile_size > 0, "preprocess.tile_size must be positive");
  need(preprocess.min_tissue >= 0.0 && preprocess.min_tissue < 1.0, "preprocess.min_tissue must be in [0, 1)");
  need(preprocess.max_missing >= 0.0 && preprocess.max_missing <= 1.0, "preprocess.max_missing must be in [0, 1]");
  need(preprocess.test_fraction > 0.0 && preprocess.test_fraction < 1.0, "preprocess.test_fraction must be in (0, 1)");
  need(preprocess.thumbnail_max_side > 0, "preprocess.thumbnail_max_side must be positive");
  need(train.checkpoint_every > 0 && train.log_every > 0, "train intervals must be positive");
  need(eval.t >= 1, "eval.t must be >= 1");
  need(eval.n_runs >= 1, "eval.n_runs must be >= 1");
  need(eval.task == "disease_type" || eval.task == "primary_site", "eval.task must be disease_type or primary_site");
  need(!eval.top_k_genes || *eval.top_k_genes > 0, "eval.top_k_genes must be positive");
  for (const auto& spec : eval.utility_classifiers) {
    (void)eval::make_classifier(spec, 0);
  }
  for (const auto& spec : eval.detectability_classifiers) {
    (void)eval::make_classifier(spec, 0);
  }
  model_config().validate();
}

RunConfig run_config_from_json(const Json& j) {
  RunConfig c;
  apply_section(
      j, "config",
      {{"paths",
        [&](const Json& v) {
          apply_section(v, "paths",
                        {{"slides", [&](const Json& x) { c.paths.slides = x.get<std::string>(); }},
                         {"expression", [&](const Json& x) { c.paths.expression = x.get<std::string>(); }},
                         {"metadata", [&](const Json& x) { c.paths.metadata = x.get<std::string>(); }},
                         {"workdir", [&](const Json& x) { c.paths.workdir = x.get<std::string>(); }}});
        }},
       {"preprocess",
        [&](const Json& v) {
          auto& p = c.preprocess;
          apply_section(v, "preprocess",
                        {{"tile_size", [&](const Json& x) { p.tile_size = x.get<int>(); }},
                         {"min_tissue", [&](const Json& x) { p.min_tissue = x.get<double>(); }},
                         {"max_missing", [&](const Json& x) { p.max_missing = x.get<double>(); }},
                         {"test_fraction", [&](const Json& x) { p.test_fraction = x.get<double>(); }},
                         {"log1p", [&](const Json& x) { p.log1p = x.get<bool>(); }},
                         {"thumbnail_max_side", [&](const Json& x) { p.thumbnail_max_side = x.get<int>(); }}});
        }},
       {"model", [&](const Json& v) { c.model = gan::train_config_from_json(v, c.model); }},
       {"train",
        [&](const Json& v) {
          apply_section(v, "train",
                        {{"checkpoint_every", [&](const Json& x) { c.train.checkpoint_every = x.get<std::int64_t>(); }},
                         {"log_every", [&](const Json& x) { c.train.log_every = x.get<std::int64_t>(); }}});
        }},
       {"eval",
        [&](const Json& v) {
          auto& e = c.eval;
          apply_section(
              v, "eval",
              {{"t", [&](const Json& x) { e.t = x.get<int>(); }},
               {"n_runs", [&](const Json& x) { e.n_runs = x.get<int>(); }},
               {"task", [&](const Json& x) { e.task = x.get<std::string>(); }},
               {"detectability_classifiers", [&](const Json& x) { e.detectability_classifiers = classifiers_from_json(x); }},
               {"utility_classifiers", [&](const Json& x) { e.utility_classifiers = classifiers_from_json(x); }},
               {"top_k_genes",
                [&](const Json& x) {
                  if (x.is_null()) {
                    e.top_k_genes.reset();
                  } else {
                    e.top_k_genes = x.get<Index>();
                  }
                }},
               {"plots", [&](const Json& x) { e.plots = x.get<bool>(); }}});
        }},
       {"seed", [&](const Json& v) { c.seed = v.get<std::uint64_t>(); }}});
  c.validate();
  return c;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["paths"] = {{"slides", c.paths.slides},
                {"expression", c.paths.expression},
                {"metadata", c.paths.metadata},
                {"workdir", c.paths.workdir}};
  nlohmann::ordered_json p;
  p["tile_size"] = c.preprocess.tile_size;
  p["min_tissue"] = c.preprocess.min_tissue;
  p["max_missing"] = c.preprocess.max_missing;
  p["test_fraction"] = c.preprocess.test_fraction;
  p["log1p"] = c.preprocess.log1p;
  p["thumbnail_max_side"] = c.preprocess.thumbnail_max_side;
  j["preprocess"] = p;
  j["model"] = gan::to_json(c.model);
  j["train"] = {{"checkpoint_every", c.train.checkpoint_every}, {"log_every", c.train.log_every}};
  nlohmann::ordered_json e;
  e["t"] = c.eval.t;
  e["n_runs"] = c.eval.n_runs;
  e["task"] = c.eval.task;
  e["detectability_classifiers"] = nlohmann::ordered_json::array();
  for (const auto& s : c.eval.detectability_classifiers) e["detectability_classifiers"].push_back(classifier_to_json(s));
  e["utility_classifiers"] = nlohmann::ordered_json::array();
  for (const auto& s : c.eval.utility_classifiers) e["utility_classifiers"].push_back(classifier_to_json(s));
  if (c.eval.top_k_genes) {
    e["top_k_genes"] = *c.eval.top_k_genes;
  } else {
    e["top_k_genes"] = nullptr;
  }
  e["plots"] = c.eval.plots;
  j["eval"] = e;
  j["seed"] = c.seed;
  return j;
}

void resolve_relative_paths(RunConfig& config, const std::filesystem::path& base) {
  for (std::string* p : {&config.paths.slides, &config.paths.expression, &config.paths.metadata,
                         &config.paths.workdir}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kConfigError, "cannot read config " + path.string());
  try {
    auto config = run_config_from_json(Json::parse(in));
    resolve_relative_paths(config, path.parent_path());
    return config;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::kConfigError, "config " + path.string() + " is not valid JSON: " + e.what());
  }
}

void apply_override(Json& doc, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw Error(ErrorCode::kConfigError, "override '" + assignment + "' is not of the form key=value");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  Json value;
  try {
    value = Json::parse(text);
  } catch (const nlohmann::json::parse_error&) {
    value = text;
  }
  Json* node = &doc;
  std::size_t start = 0;
  while (true) {
    const auto dot = key.find('.', start);
    const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
    if (part.empty()) throw Error(ErrorCode::kConfigError, "override key '" + key + "' has an empty component");
    if (!node->is_object()) *node = Json::object();
    if (dot == std::string::npos) {
      (*node)[part] = value;
      break;
    }
    node = &(*node)[part];
    start = dot + 1;
  }
}

}  // namespace gemmgan::cli
