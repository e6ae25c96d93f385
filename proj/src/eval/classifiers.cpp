#include "gemmgan/eval/classifiers.hpp"

#include "gemmgan/core/error.hpp"

#include <ceres/ceres.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

namespace gemmgan::eval {
namespace {

void check_fit_inputs(const Matrix& x, const std::vector<int>& y, int n_classes) {
  if (x.rows() == 0 || static_cast<std::size_t>(x.rows()) != y.size()) {
    throw Error(ErrorCode::kInvalidArgument, "classifier needs one label per row and at least one row");
  }
  if (n_classes < 2) throw Error(ErrorCode::kInvalidArgument, "classifier needs at least two classes");
  for (int label : y) {
    if (label < 0 || label >= n_classes) throw Error(ErrorCode::kInvalidArgument, "label out of range");
  }
}

void softmax_rows(Matrix& logits) {
  for (Index r = 0; r < logits.rows(); ++r) {
    const double top = logits.row(r).maxCoeff();
    logits.row(r) = (logits.row(r).array() - top).exp().matrix();
    logits.row(r) /= logits.row(r).sum();
  }
}

double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

class LogisticObjective : public ceres::FirstOrderFunction {
 public:
  LogisticObjective(const Matrix& x, const std::vector<int>& y, int outputs, double c)
      : x_(x), y_(y), outputs_(outputs), c_(c) {}

  int NumParameters() const override { return static_cast<int>((x_.cols() + 1) * outputs_); }

  bool Evaluate(const double* params, double* cost, double* gradient) const override {
    const Index f = x_.cols(), k = outputs_;
    Eigen::Map<const Matrix> w(params, f, k);
    Eigen::Map<const RowVector> b(params + f * k, k);
    Matrix z = x_ * w;
    z.rowwise() += b;
    double loss = 0.0;
    Matrix dz(z.rows(), k);
    if (k == 1) {
      for (Index i = 0; i < z.rows(); ++i) {
        const double yi = y_[static_cast<std::size_t>(i)];
        loss += softplus(z(i, 0)) - yi * z(i, 0);
        dz(i, 0) = sigmoid(z(i, 0)) - yi;
      }
    } else {
      for (Index i = 0; i < z.rows(); ++i) {
        const double top = z.row(i).maxCoeff();
        const double lse = top + std::log((z.row(i).array() - top).exp().sum());
        const int yi = y_[static_cast<std::size_t>(i)];
        loss += lse - z(i, yi);
        dz.row(i) = (z.row(i).array() - lse).exp().matrix();
        dz(i, yi) -= 1.0;
      }
    }
    *cost = 0.5 * w.squaredNorm() + c_ * loss;
    if (gradient != nullptr) {
      Eigen::Map<Matrix> gw(gradient, f, k);
      Eigen::Map<RowVector> gb(gradient + f * k, k);
      gw = w + c_ * (x_.transpose() * dz);
      gb = c_ * dz.colwise().sum();
    }
    return std::isfinite(*cost);
  }

 private:
  const Matrix& x_;
  const std::vector<int>& y_;
  int outputs_;
  double c_;
};

}  // namespace

std::string_view classifier_name(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::kLogisticRegression: return "logistic_regression";
    case ClassifierKind::kMlp: return "mlp_classifier";
    case ClassifierKind::kRandomForest: return "random_forest";
  }
  return "unknown";
}

ClassifierKind parse_classifier(std::string_view name) {
  for (auto k : {ClassifierKind::kLogisticRegression, ClassifierKind::kMlp, ClassifierKind::kRandomForest}) {
    if (classifier_name(k) == name) return k;
  }
  throw Error(ErrorCode::kConfigError, "unknown classifier '" + std::string(name) + "'");
}

double ClassifierSpec::get(const std::string& key, double fallback) const {
  auto it = hyperparameters.find(key);
  return it == hyperparameters.end() ? fallback : it->second;
}

std::vector<int> Classifier::predict(const Matrix& x) const {
  const Matrix p = predict_proba(x);
  std::vector<int> out(static_cast<std::size_t>(p.rows()));
  for (Index r = 0; r < p.rows(); ++r) {
    Index best = 0;
    for (Index c = 1; c < p.cols(); ++c) {
      if (p(r, c) > p(r, best)) best = c;
    }
    out[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return out;
}

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  const std::map<ClassifierKind, std::set<std::string>> allowed = {
      {ClassifierKind::kLogisticRegression, {"C", "max_iter"}},
      {ClassifierKind::kMlp, {"hidden", "learning_rate", "epochs", "alpha", "batch_size"}},
      {ClassifierKind::kRandomForest, {"trees", "max_depth", "min_samples_split"}},
  };
  for (const auto& [key, value] : spec.hyperparameters) {
    if (!allowed.at(spec.kind).contains(key)) {
      throw Error(ErrorCode::kConfigError,
                  "unknown hyperparameter '" + key + "' for " + std::string(classifier_name(spec.kind)));
    }
  }
  switch (spec.kind) {
    case ClassifierKind::kLogisticRegression:
      return std::make_unique<LogisticRegression>(spec.get("C", 1.0), static_cast<int>(spec.get("max_iter", 1000)));
    case ClassifierKind::kMlp:
      return std::make_unique<MlpClassifier>(seed, static_cast<Index>(spec.get("hidden", 128)),
                                             spec.get("learning_rate", 1e-3), static_cast<int>(spec.get("epochs", 200)),
                                             spec.get("alpha", 1e-4), static_cast<Index>(spec.get("batch_size", 200)));
    case ClassifierKind::kRandomForest:
      return std::make_unique<RandomForest>(seed, static_cast<int>(spec.get("trees", 200)),
                                            static_cast<int>(spec.get("max_depth", 0)),
                                            static_cast<int>(spec.get("min_samples_split", 2)));
  }
  throw Error(ErrorCode::kConfigError, "unknown classifier kind");
}

// ---------------------------------------------------------------- logistic regression

void LogisticRegression::fit(const Matrix& x, const std::vector<int>& y, int n_classes) {
  check_fit_inputs(x, y, n_classes);
  n_classes_ = n_classes;
  const int outputs = n_classes == 2 ? 1 : n_classes;
  std::vector<double> params(static_cast<std::size_t>((x.cols() + 1) * outputs), 0.0);

  ceres::GradientProblemSolver::Options options;
  options.line_search_direction_type = ceres::LBFGS;
  options.max_num_iterations = max_iter_;
  options.function_tolerance = 1e-12;
  options.gradient_tolerance = 1e-8;
  options.parameter_tolerance = 1e-12;
  options.logging_type = ceres::SILENT;
  options.minimizer_progress_to_stdout = false;
  ceres::GradientProblem problem(new LogisticObjective(x, y, outputs, c_));
  ceres::GradientProblemSolver::Summary summary;
  ceres::Solve(options, problem, params.data(), &summary);

  weights_ = Eigen::Map<const Matrix>(params.data(), x.cols(), outputs);
  intercept_ = Eigen::Map<const RowVector>(params.data() + x.cols() * outputs, outputs);
}

Matrix LogisticRegression::predict_proba(const Matrix& x) const {
  if (n_classes_ == 0) throw Error(ErrorCode::kInvalidArgument, "classifier is not fitted");
  if (x.cols() != weights_.rows()) throw Error(ErrorCode::kDimensionMismatch, "feature count differs from fit");
  Matrix z = x * weights_;
  z.rowwise() += intercept_;
  if (n_classes_ == 2) {
    Matrix p(x.rows(), 2);
    for (Index i = 0; i < x.rows(); ++i) {
      p(i, 1) = sigmoid(z(i, 0));
      p(i, 0) = 1.0 - p(i, 1);
    }
    return p;
  }
  softmax_rows(z);
  return z;
}

// ---------------------------------------------------------------- MLP

void MlpClassifier::fit(const Matrix& x, const std::vector<int>& y, int n_classes) {
  check_fit_inputs(x, y, n_classes);
  n_classes_ = n_classes;
  const Index f = x.cols(), h = hidden_, k = n_classes;
  Rng rng = derive_rng(seed_, {0x3170});
  auto glorot = [&](Index in, Index out, Matrix& w, RowVector& b) {
    std::uniform_real_distribution<double> uni(-std::sqrt(6.0 / static_cast<double>(in + out)),
                                               std::sqrt(6.0 / static_cast<double>(in + out)));
    w.resize(in, out);
    b.resize(out);
    for (Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
    for (Index i = 0; i < b.size(); ++i) b(i) = uni(rng);
  };
  glorot(f, h, w1_, b1_);
  glorot(h, k, w2_, b2_);

  struct Moments {
    Matrix m, v;
  };
  auto zeros_like = [](const auto& a) { return Moments{Matrix::Zero(a.rows(), a.cols()), Matrix::Zero(a.rows(), a.cols())}; };
  Moments mw1 = zeros_like(w1_), mb1 = zeros_like(b1_), mw2 = zeros_like(w2_), mb2 = zeros_like(b2_);
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  auto adam = [&](auto& param, const Matrix& grad, Moments& mom, double bc1, double bc2) {
    mom.m = beta1 * mom.m + (1.0 - beta1) * grad;
    mom.v = beta2 * mom.v + (1.0 - beta2) * grad.cwiseAbs2();
    param.array() -= lr_ * (mom.m.array() / bc1) / ((mom.v.array() / bc2).sqrt() + eps);
  };

  const Index n = x.rows();
  const Index batch = std::max<Index>(1, std::min(batch_size_, n));
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  for (int epoch = 0; epoch < epochs_; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (Index b0 = 0; b0 < n; b0 += batch) {
      const Index bn = std::min(batch, n - b0);
      Matrix xb(bn, f);
      Matrix target = Matrix::Zero(bn, k);
      for (Index i = 0; i < bn; ++i) {
        const Index row = order[static_cast<std::size_t>(b0 + i)];
        xb.row(i) = x.row(row);
        target(i, y[static_cast<std::size_t>(row)]) = 1.0;
      }
      Matrix pre = xb * w1_;
      pre.rowwise() += b1_;
      const Matrix hidden = pre.cwiseMax(0.0);
      Matrix prob = hidden * w2_;
      prob.rowwise() += b2_;
      softmax_rows(prob);
      const Matrix dlogits = (prob - target) / static_cast<double>(bn);
      const Matrix gw2 = hidden.transpose() * dlogits + (alpha_ / static_cast<double>(bn)) * w2_;
      const Matrix gb2 = dlogits.colwise().sum();
      const Matrix dh = (pre.array() > 0.0).select(dlogits * w2_.transpose(), 0.0);
      const Matrix gw1 = xb.transpose() * dh + (alpha_ / static_cast<double>(bn)) * w1_;
      const Matrix gb1 = dh.colwise().sum();
      ++t;
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
      adam(w1_, gw1, mw1, bc1, bc2);
      adam(b1_, gb1, mb1, bc1, bc2);
      adam(w2_, gw2, mw2, bc1, bc2);
      adam(b2_, gb2, mb2, bc1, bc2);
    }
  }
}

Matrix MlpClassifier::predict_proba(const Matrix& x) const {
  if (n_classes_ == 0) throw Error(ErrorCode::kInvalidArgument, "classifier is not fitted");
  if (x.cols() != w1_.rows()) throw Error(ErrorCode::kDimensionMismatch, "feature count differs from fit");
  Matrix pre = x * w1_;
  pre.rowwise() += b1_;
  Matrix out = pre.cwiseMax(0.0) * w2_;
  out.rowwise() += b2_;
  softmax_rows(out);
  return out;
}

// ---------------------------------------------------------------- random forest

namespace {

struct SplitChoice {
  int feature = -1;
  double threshold = 0.0;
  double impurity = std::numeric_limits<double>::infinity();
};

double gini_from_counts(const std::vector<double>& counts, double total) {
  if (total <= 0.0) return 0.0;
  double s = 0.0;
  for (double c : counts) s += c * c;
  return 1.0 - s / (total * total);
}

}  // namespace

void RandomForest::fit(const Matrix& x, const std::vector<int>& y, int n_classes) {
  check_fit_inputs(x, y, n_classes);
  if (trees_ <= 0) throw Error(ErrorCode::kInvalidArgument, "forest needs at least one tree");
  n_classes_ = n_classes;
  forest_.clear();
  const Index n = x.rows(), f = x.cols();
  const int max_features = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(f))));

  for (int t = 0; t < trees_; ++t) {
    Rng rng = derive_rng(seed_, {0xf04e, static_cast<std::uint64_t>(t)});
    std::uniform_int_distribution<Index> pick(0, n - 1);
    std::vector<Index> sample(static_cast<std::size_t>(n));
    for (auto& s : sample) s = pick(rng);

    Tree tree;
    struct Pending {
      int node;
      std::vector<Index> rows;
      int depth;
    };
    std::vector<Pending> stack;
    tree.emplace_back();
    stack.push_back({0, std::move(sample), 0});
    std::vector<int> features(static_cast<std::size_t>(f));
    std::vector<std::pair<double, int>> sorted;

    while (!stack.empty()) {
      Pending p = std::move(stack.back());
      stack.pop_back();
      std::vector<double> counts(static_cast<std::size_t>(n_classes), 0.0);
      for (auto r : p.rows) counts[static_cast<std::size_t>(y[static_cast<std::size_t>(r)])] += 1.0;
      const double total = static_cast<double>(p.rows.size());
      const bool pure = std::count_if(counts.begin(), counts.end(), [](double c) { return c > 0.0; }) <= 1;
      const bool depth_capped = max_depth_ > 0 && p.depth >= max_depth_;

      SplitChoice best;
      if (!pure && !depth_capped && static_cast<int>(p.rows.size()) >= min_samples_split_) {
        std::iota(features.begin(), features.end(), 0);
        int evaluated = 0;
        for (Index i = 0; i < f && evaluated < max_features; ++i) {
          std::uniform_int_distribution<Index> swap_with(i, f - 1);
          std::swap(features[static_cast<std::size_t>(i)], features[static_cast<std::size_t>(swap_with(rng))]);
          const int feat = features[static_cast<std::size_t>(i)];
          sorted.clear();
          for (auto r : p.rows) sorted.emplace_back(x(r, feat), y[static_cast<std::size_t>(r)]);
          std::sort(sorted.begin(), sorted.end());
          if (sorted.front().first == sorted.back().first) continue;
          ++evaluated;
          std::vector<double> left(static_cast<std::size_t>(n_classes), 0.0);
          for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
            left[static_cast<std::size_t>(sorted[j].second)] += 1.0;
            if (sorted[j].first == sorted[j + 1].first) continue;
            std::vector<double> right(static_cast<std::size_t>(n_classes));
            for (int c = 0; c < n_classes; ++c) {
              right[static_cast<std::size_t>(c)] = counts[static_cast<std::size_t>(c)] - left[static_cast<std::size_t>(c)];
            }
            const double nl = static_cast<double>(j + 1), nr = total - nl;
            const double impurity = (nl * gini_from_counts(left, nl) + nr * gini_from_counts(right, nr)) / total;
            if (impurity < best.impurity) {
              double threshold = 0.5 * (sorted[j].first + sorted[j + 1].first);
              if (threshold >= sorted[j + 1].first) threshold = sorted[j].first;
              best = {feat, threshold, impurity};
            }
          }
        }
      }

      if (best.feature < 0) {
        auto& node = tree[static_cast<std::size_t>(p.node)];
        node.distribution.resize(static_cast<std::size_t>(n_classes));
        for (int c = 0; c < n_classes; ++c) {
          node.distribution[static_cast<std::size_t>(c)] = counts[static_cast<std::size_t>(c)] / total;
        }
        continue;
      }
      std::vector<Index> left_rows, right_rows;
      for (auto r : p.rows) (x(r, best.feature) <= best.threshold ? left_rows : right_rows).push_back(r);
      const int left_id = static_cast<int>(tree.size());
      tree.emplace_back();
      tree.emplace_back();
      auto& node = tree[static_cast<std::size_t>(p.node)];
      node.feature = best.feature;
      node.threshold = best.threshold;
      node.left = left_id;
      node.right = left_id + 1;
      stack.push_back({left_id + 1, std::move(right_rows), p.depth + 1});
      stack.push_back({left_id, std::move(left_rows), p.depth + 1});
    }
    forest_.push_back(std::move(tree));
  }
}

Matrix RandomForest::predict_proba(const Matrix& x) const {
  if (forest_.empty()) throw Error(ErrorCode::kInvalidArgument, "classifier is not fitted");
  Matrix p = Matrix::Zero(x.rows(), n_classes_);
  for (const auto& tree : forest_) {
    for (Index r = 0; r < x.rows(); ++r) {
      int id = 0;
      while (tree[static_cast<std::size_t>(id)].feature >= 0) {
        const auto& node = tree[static_cast<std::size_t>(id)];
        id = x(r, node.feature) <= node.threshold ? node.left : node.right;
      }
      const auto& dist = tree[static_cast<std::size_t>(id)].distribution;
      for (int c = 0; c < n_classes_; ++c) p(r, c) += dist[static_cast<std::size_t>(c)];
    }
  }
  return p / static_cast<double>(forest_.size());
}

// ---------------------------------------------------------------- scores

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted) {
  if (truth.size() != predicted.size() || truth.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "accuracy needs equally sized, non-empty label vectors");
  }
  std::size_t hits = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hits += truth[i] == predicted[i];
  return static_cast<double>(hits) / static_cast<double>(truth.size());
}

double binary_f1(const std::vector<int>& truth, const std::vector<int>& predicted, int positive) {
  if (truth.size() != predicted.size()) throw Error(ErrorCode::kInvalidArgument, "label vectors differ in size");
  double tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const bool t = truth[i] == positive, p = predicted[i] == positive;
    tp += t && p;
    fp += !t && p;
    fn += t && !p;
  }
  const double denom = 2 * tp + fp + fn;
  return denom > 0 ? 2 * tp / denom : 0.0;
}

double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted) {
  std::set<int> labels(truth.begin(), truth.end());
  labels.insert(predicted.begin(), predicted.end());
  if (labels.empty()) throw Error(ErrorCode::kInvalidArgument, "macro_f1 needs labels");
  double sum = 0.0;
  for (int c : labels) sum += binary_f1(truth, predicted, c);
  return sum / static_cast<double>(labels.size());
}

}  // namespace gemmgan::eval
