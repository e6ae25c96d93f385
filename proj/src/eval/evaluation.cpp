#include "gemmgan/eval/evaluation.hpp"

#include "gemmgan/core/error.hpp"
#include "gemmgan/data/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <numeric>
#include <set>

namespace gemmgan::eval {
namespace {

constexpr std::uint64_t kDetectStream = 0xde7e;
constexpr std::uint64_t kUtilityStream = 0x0711;
constexpr Index kMinDetectSamples = 20;

std::vector<Index> shuffled(Index n, Rng& rng) {
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (Index i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<Index> pick(0, i);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
  }
  return order;
}

std::string describe(const std::exception& e) { return std::string("failed: ") + e.what(); }

}  // namespace

Scores detectability(const Matrix& real, const Matrix& generated, const ClassifierSpec& spec, std::uint64_t seed) {
  if (real.rows() < kMinDetectSamples || generated.rows() < kMinDetectSamples) {
    throw Error(ErrorCode::kTooFewSamples, "detectability needs at least 20 real and 20 generated samples");
  }
  if (real.cols() != generated.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "real and generated profiles have different gene counts");
  }
  Rng rng = derive_rng(seed, {kDetectStream});
  const Index n = std::min(real.rows(), generated.rows());
  auto real_pick = shuffled(real.rows(), rng);
  auto gen_pick = shuffled(generated.rows(), rng);
  real_pick.resize(static_cast<std::size_t>(n));
  gen_pick.resize(static_cast<std::size_t>(n));
  // Stratified 70/30: the same number of test rows from each class.
  const Index n_test = static_cast<Index>(std::llround(0.3 * static_cast<double>(n)));
  const Index n_train = n - n_test;

  Matrix x_train(2 * n_train, real.cols()), x_test(2 * n_test, real.cols());
  std::vector<int> y_train, y_test;
  for (Index i = 0; i < n_train; ++i) {
    x_train.row(2 * i) = real.row(real_pick[static_cast<std::size_t>(i)]);
    x_train.row(2 * i + 1) = generated.row(gen_pick[static_cast<std::size_t>(i)]);
    y_train.push_back(0);
    y_train.push_back(1);
  }
  for (Index i = 0; i < n_test; ++i) {
    x_test.row(2 * i) = real.row(real_pick[static_cast<std::size_t>(n_train + i)]);
    x_test.row(2 * i + 1) = generated.row(gen_pick[static_cast<std::size_t>(n_train + i)]);
    y_test.push_back(0);
    y_test.push_back(1);
  }
  auto clf = make_classifier(spec, seed);
  clf->fit(x_train, y_train, 2);
  const auto pred = clf->predict(x_test);
  return {accuracy(y_test, pred), binary_f1(y_test, pred, 1)};
}

UtilityScores utility(const Matrix& generated, const std::vector<int>& generated_labels, const Matrix& real_test,
                      const std::vector<int>& test_labels, int n_classes, const ClassifierSpec& spec,
                      std::uint64_t seed) {
  auto labelled = [&](const std::vector<int>& labels, Index rows) {
    if (labels.size() != static_cast<std::size_t>(rows) || rows == 0) return false;
    return std::all_of(labels.begin(), labels.end(), [&](int l) { return l >= 0 && l < n_classes; });
  };
  if (!labelled(generated_labels, generated.rows()) || !labelled(test_labels, real_test.rows())) {
    throw Error(ErrorCode::kMissingLabels, "utility needs a valid label for every generated and test sample");
  }
  if (generated.cols() != real_test.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "real and generated profiles have different gene counts");
  }
  const std::set<int> seen(generated_labels.begin(), generated_labels.end());
  UtilityScores out;
  for (int c : std::set<int>(test_labels.begin(), test_labels.end())) {
    if (!seen.contains(c)) out.absent_classes.push_back(c);
  }
  std::vector<int> pred;
  if (seen.size() == 1) {
    pred.assign(test_labels.size(), *seen.begin());
  } else {
    // Compact the seen labels so the classifier only models classes it has data for.
    std::vector<int> to_compact(static_cast<std::size_t>(n_classes), -1), to_label;
    for (int c : seen) {
      to_compact[static_cast<std::size_t>(c)] = static_cast<int>(to_label.size());
      to_label.push_back(c);
    }
    std::vector<int> y;
    for (int l : generated_labels) y.push_back(to_compact[static_cast<std::size_t>(l)]);
    auto clf = make_classifier(spec, seed);
    clf->fit(generated, y, static_cast<int>(to_label.size()));
    for (int p : clf->predict(real_test)) pred.push_back(to_label[static_cast<std::size_t>(p)]);
  }
  out.accuracy = accuracy(test_labels, pred);
  out.f1 = macro_f1(test_labels, pred);
  return out;
}

MetricResult MetricResult::from_runs(std::string name, std::vector<double> runs) {
  MetricResult m;
  m.name = std::move(name);
  m.per_run = std::move(runs);
  if (!m.per_run.empty()) {
    m.mean = std::accumulate(m.per_run.begin(), m.per_run.end(), 0.0) / static_cast<double>(m.per_run.size());
    double ss = 0.0;
    for (double v : m.per_run) ss += (v - m.mean) * (v - m.mean);
    m.std = std::sqrt(ss / static_cast<double>(m.per_run.size()));
  }
  return m;
}

const MetricResult* EvalReport::find(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return &m;
  }
  return nullptr;
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  for (const auto& m : metrics) {
    nlohmann::ordered_json entry;
    if (m.failed()) {
      entry["mean"] = nullptr;
      entry["std"] = nullptr;
      entry["per_run"] = nlohmann::ordered_json::array();
    } else {
      entry["mean"] = m.mean;
      entry["std"] = m.std;
      entry["per_run"] = m.per_run;
    }
    entry["status"] = m.status;
    j[m.name] = entry;
  }
  j["config_hash"] = config_hash;
  j["seeds"] = seeds;
  j["model_checkpoint_ref"] = model_checkpoint_ref;
  j["effective_config"] = effective_config;
  return j;
}

std::string config_hash(const nlohmann::ordered_json& config) {
  const std::string text = config.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

EvalReport evaluate_runs(const std::vector<Matrix>& runs, const gan::TrainingCorpus& test, const EvalOptions& options) {
  EvalReport report;
  const Matrix real = test.expression();
  const bool by_disease = options.task == UtilityTask::kDiseaseType;
  const std::vector<int> labels = by_disease ? test.disease_labels() : test.site_labels();
  const int n_classes = static_cast<int>(by_disease ? test.disease_types.size() : test.primary_sites.size());

  // Each metric family computes all runs or fails as a whole.
  auto run_metric = [&](std::vector<std::string> names,
                        const std::function<std::vector<double>(const Matrix&, int run)>& per_run) {
    std::vector<std::vector<double>> values(names.size());
    std::string status = "ok";
    try {
      for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto v = per_run(runs[r], static_cast<int>(r));
        for (std::size_t k = 0; k < names.size(); ++k) values[k].push_back(v[k]);
      }
    } catch (const std::exception& e) {
      status = describe(e);
    }
    for (std::size_t k = 0; k < names.size(); ++k) {
      auto m = MetricResult::from_runs(names[k], status == "ok" ? values[k] : std::vector<double>{});
      m.status = status;
      report.metrics.push_back(std::move(m));
    }
  };

  run_metric({"precision", "recall"}, [&](const Matrix& gen, int) {
    const auto pr = precision_recall(real, gen, options.t);
    return std::vector<double>{pr.precision, pr.recall};
  });

  Index constant_real = 0, constant_gen = 0;
  run_metric({"correlation_mse"}, [&](const Matrix& gen, int) {
    CorrelationDiagnostics diag;
    double v;
    if (options.top_k_genes) {
      const auto genes = top_variance_genes(real, *options.top_k_genes);
      v = correlation_mse(real, gen, std::span<const Index>(genes), 512, &diag);
    } else {
      v = correlation_mse(real, gen, std::nullopt, 512, &diag);
    }
    constant_real = std::max(constant_real, diag.constant_genes_real);
    constant_gen = std::max(constant_gen, diag.constant_genes_generated);
    return std::vector<double>{v};
  });
  if (constant_real + constant_gen > 0) {
    auto& m = report.metrics.back();
    if (!m.failed()) {
      m.status = "ok; constant genes assigned zero correlation (real: " + std::to_string(constant_real) +
                 ", generated: " + std::to_string(constant_gen) + ")";
    }
  }

  for (std::size_t c = 0; c < options.detectability_classifiers.size(); ++c) {
    const auto& spec = options.detectability_classifiers[c];
    const std::string prefix = "detectability_" + std::string(classifier_name(spec.kind));
    run_metric({prefix + "_accuracy", prefix + "_f1"}, [&](const Matrix& gen, int r) {
      const auto s = detectability(real, gen, spec,
                                   derive_rng(options.seed, {kDetectStream, static_cast<std::uint64_t>(r), c})());
      return std::vector<double>{s.accuracy, s.f1};
    });
  }

  for (std::size_t c = 0; c < options.utility_classifiers.size(); ++c) {
    const auto& spec = options.utility_classifiers[c];
    const std::string prefix = "utility_" + std::string(classifier_name(spec.kind));
    std::set<int> absent;
    run_metric({prefix + "_accuracy", prefix + "_f1"}, [&](const Matrix& gen, int r) {
      const auto s = utility(gen, labels, real, labels, n_classes, spec,
                             derive_rng(options.seed, {kUtilityStream, static_cast<std::uint64_t>(r), c})());
      absent.insert(s.absent_classes.begin(), s.absent_classes.end());
      return std::vector<double>{s.accuracy, s.f1};
    });
    if (!absent.empty()) {
      std::string note = "ok; ClassAbsentInTrain:";
      for (int a : absent) note += " " + (by_disease ? test.disease_types : test.primary_sites)[static_cast<std::size_t>(a)];
      for (auto it = report.metrics.end() - 2; it != report.metrics.end(); ++it) {
        if (!it->failed()) it->status = note;
      }
    }
  }

  report.seeds["eval_seed"] = options.seed;
  report.seeds["n_runs"] = runs.size();
  return report;
}

EvalReport evaluate_all(gan::Model& model, const gan::TrainingCorpus& test, const EvalOptions& options) {
  const auto runs = gan::sample_profiles(model, test, options.n_runs, options.seed);
  EvalReport report = evaluate_runs(runs, test, options);
  report.seeds["train_seed"] = model.config().seed;
  return report;
}

void write_plots(const std::filesystem::path& dir, const EvalReport& report, const Matrix& real,
                 const Matrix& generated) {
  std::filesystem::create_directories(dir);
  // Bar chart: one column per metric, height = mean clamped to [0, 1].
  const int bar_w = 24, gap = 8, height = 200;
  const int n = static_cast<int>(report.metrics.size());
  data::RgbImage bars(std::max(1, n * (bar_w + gap) + gap), height, 255);
  for (int i = 0; i < n; ++i) {
    const auto& m = report.metrics[static_cast<std::size_t>(i)];
    if (m.failed()) continue;
    const int h = static_cast<int>(std::lround(std::clamp(m.mean, 0.0, 1.0) * (height - 10)));
    for (int y = height - h; y < height; ++y) {
      for (int x = gap + i * (bar_w + gap); x < gap + i * (bar_w + gap) + bar_w; ++x) {
        auto* px = bars.at(x, y);
        px[0] = 40;
        px[1] = 90;
        px[2] = 170;
      }
    }
  }
  data::write_png(dir / "metric_means.png", bars);

  // Heatmaps: red for positive, blue for negative correlation.
  const Matrix cr = correlation_matrix(real), cg = correlation_matrix(generated);
  const int g = static_cast<int>(cr.rows());
  const int cell = std::max(1, 256 / std::max(1, g));
  data::RgbImage heat(2 * g * cell + cell, g * cell, 255);
  auto paint = [&](const Matrix& c, int x0) {
    for (int i = 0; i < g; ++i) {
      for (int j = 0; j < g; ++j) {
        const double v = std::clamp(c(i, j), -1.0, 1.0);
        const auto hi = static_cast<std::uint8_t>(255);
        const auto lo = static_cast<std::uint8_t>(std::lround(255 * (1.0 - std::abs(v))));
        for (int dy = 0; dy < cell; ++dy) {
          for (int dx = 0; dx < cell; ++dx) {
            auto* px = heat.at(x0 + j * cell + dx, i * cell + dy);
            px[0] = v >= 0 ? hi : lo;
            px[1] = lo;
            px[2] = v >= 0 ? lo : hi;
          }
        }
      }
    }
  };
  paint(cr, 0);
  paint(cg, g * cell + cell);
  data::write_png(dir / "correlation_heatmaps.png", heat);
}

}  // namespace gemmgan::eval
