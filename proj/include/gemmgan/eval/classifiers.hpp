#pragma once

#include "gemmgan/core/types.hpp"

#include <map>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

namespace gemmgan::eval {

enum class ClassifierKind { kLogisticRegression, kMlp, kRandomForest };

std::string_view classifier_name(ClassifierKind kind);
ClassifierKind parse_classifier(std::string_view name);  // throws kConfigError

// Hyperparameter keys: logistic_regression {C, max_iter}; mlp_classifier
// {hidden, learning_rate, epochs, alpha, batch_size}; random_forest {trees,
// max_depth (0 = unlimited), min_samples_split}.
struct ClassifierSpec {
  ClassifierKind kind = ClassifierKind::kLogisticRegression;
  std::map<std::string, double> hyperparameters;

  double get(const std::string& key, double fallback) const;
};

class Classifier {
 public:
  virtual ~Classifier() = default;
  // Labels in [0, n_classes).
  virtual void fit(const Matrix& x, const std::vector<int>& y, int n_classes) = 0;
  // n x n_classes class probabilities.
  virtual Matrix predict_proba(const Matrix& x) const = 0;
  // Most probable class, lowest index on ties.
  std::vector<int> predict(const Matrix& x) const;
};

std::unique_ptr<Classifier> make_classifier(const ClassifierSpec& spec, std::uint64_t seed);

// L2-regularized (0.5 ||W||^2 + C * sum of log-losses, intercept unpenalized)
// logistic regression fit with L-BFGS: sigmoid for two classes, softmax otherwise.
class LogisticRegression : public Classifier {
 public:
  explicit LogisticRegression(double c = 1.0, int max_iter = 1000) : c_(c), max_iter_(max_iter) {}
  void fit(const Matrix& x, const std::vector<int>& y, int n_classes) override;
  Matrix predict_proba(const Matrix& x) const override;

  const Matrix& weights() const { return weights_; }  // features x outputs
  const RowVector& intercept() const { return intercept_; }

 private:
  double c_;
  int max_iter_;
  int n_classes_ = 0;
  Matrix weights_;
  RowVector intercept_;
};

// One ReLU hidden layer, softmax output, Adam on shuffled minibatches with an
// L2 penalty alpha / 2 * ||W||^2 / n.
class MlpClassifier : public Classifier {
 public:
  MlpClassifier(std::uint64_t seed, Index hidden = 128, double learning_rate = 1e-3, int epochs = 200,
                double alpha = 1e-4, Index batch_size = 200)
      : seed_(seed), hidden_(hidden), lr_(learning_rate), epochs_(epochs), alpha_(alpha), batch_size_(batch_size) {}
  void fit(const Matrix& x, const std::vector<int>& y, int n_classes) override;
  Matrix predict_proba(const Matrix& x) const override;

 private:
  std::uint64_t seed_;
  Index hidden_;
  double lr_;
  int epochs_;
  double alpha_;
  Index batch_size_;
  int n_classes_ = 0;
  Matrix w1_, w2_;
  RowVector b1_, b2_;
};

// Bootstrap forest of Gini trees, sqrt(features) candidates per split.
class RandomForest : public Classifier {
 public:
  RandomForest(std::uint64_t seed, int trees = 200, int max_depth = 0, int min_samples_split = 2)
      : seed_(seed), trees_(trees), max_depth_(max_depth), min_samples_split_(min_samples_split) {}
  void fit(const Matrix& x, const std::vector<int>& y, int n_classes) override;
  Matrix predict_proba(const Matrix& x) const override;

  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    std::vector<double> distribution;
  };
  using Tree = std::vector<Node>;

 private:
  std::uint64_t seed_;
  int trees_;
  int max_depth_;
  int min_samples_split_;
  int n_classes_ = 0;
  std::vector<Tree> forest_;
};

double accuracy(const std::vector<int>& truth, const std::vector<int>& predicted);
// F1 of `positive` as the positive class; 0 when it is never predicted nor present.
double binary_f1(const std::vector<int>& truth, const std::vector<int>& predicted, int positive = 1);
// Unweighted mean of per-class F1 over classes present in truth or predictions.
double macro_f1(const std::vector<int>& truth, const std::vector<int>& predicted);

}  // namespace gemmgan::eval
