#pragma once

#include "gemmgan/fusion/fusion.hpp"
#include "gemmgan/gan/networks.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace gemmgan::gan {

enum class ModelKind { kGemmGan, kVanillaWganGp, kCondWganGp, kCvae };

std::string_view kind_name(ModelKind kind);
ModelKind parse_kind(std::string_view name);  // throws kConfigError

struct TrainConfig {
  ModelKind kind = ModelKind::kGemmGan;
  fusion::FusionConfig fusion;
  Index d_noise = 256;
  Index hidden = 256;
  Index n_patches = 256;
  Index max_tokens = 256;
  Index batch_size = 64;
  double gp_weight = 10.0;
  int critic_steps = 5;
  double lr_generator = 1e-4;
  double lr_critic = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  Index cvae_latent = 256;
  double cvae_lr = 1e-3;
  std::int64_t max_steps = 2000;
  std::uint64_t seed = 0;
  int early_stopping_patience = 0;  // evaluations without improvement; 0 disables
  int validation_interval = 100;
  std::string image_encoder = "stub-image";
  std::string text_encoder = "stub-text";

  void validate() const;  // throws kConfigError
};

// "model" section of a run config (seed lives outside). Unknown keys are rejected.
nlohmann::ordered_json to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig base = {});

// One case, with frozen-encoder outputs in native width.
struct CaseFeatures {
  std::string case_id;
  Matrix patch_features;  // tiles x native image dim
  Matrix token_features;  // tokens x native text dim, row 0 = CLS
  RowVector expression;   // g z-scored values
  int disease = -1;
  int site = -1;
};

struct TrainingCorpus {
  std::vector<CaseFeatures> cases;
  std::vector<std::string> gene_ids;
  std::vector<std::string> disease_types;
  std::vector<std::string> primary_sites;

  Index size() const { return static_cast<Index>(cases.size()); }
  Index genes() const { return static_cast<Index>(gene_ids.size()); }
  bool has_labels() const;
  Matrix expression() const;
  std::vector<int> disease_labels() const;
  std::vector<int> site_labels() const;
};

// Widths and label vocabularies a model is built for.
struct ModelShape {
  Index genes = 0;
  std::vector<std::string> disease_types;
  std::vector<std::string> primary_sites;

  static ModelShape of(const TrainingCorpus& corpus);
  Index one_hot_width() const {
    return static_cast<Index>(disease_types.size() + primary_sites.size());
  }
};

struct StepLosses {
  std::vector<std::pair<std::string, double>> values;
  double at(std::string_view name) const;
};

struct NamedTensor {
  std::string name;
  Matrix* value;
};

class Model {
 public:
  Model(TrainConfig config, ModelShape shape) : config_(std::move(config)), shape_(std::move(shape)) {}
  virtual ~Model() = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  // One optimization step; randomness derives from (seed, step) only.
  virtual StepLosses train_step(const TrainingCorpus& corpus) = 0;
  // Held-out objective used for early stopping (lower is better).
  virtual double validation_loss(const TrainingCorpus& corpus, Rng& rng) = 0;
  // One generated profile per case of `corpus`, in evaluation mode.
  virtual Matrix sample(const TrainingCorpus& corpus, Rng& rng) = 0;

  virtual nn::ParameterList parameters() = 0;
  virtual std::vector<std::pair<std::string, nn::Adam*>> optimizers() = 0;
  // Parameters no optimizer may touch.
  virtual nn::ParameterList frozen_parameters() { return {}; }

  ModelKind kind() const { return config_.kind; }
  const TrainConfig& config() const { return config_; }
  const ModelShape& shape() const { return shape_; }
  std::int64_t step() const { return step_; }
  void set_step(std::int64_t s) { step_ = s; }

  // Parameters, then each optimizer's first and second moments.
  std::vector<NamedTensor> state_tensors();

 protected:
  TrainConfig config_;
  ModelShape shape_;
  std::int64_t step_ = 0;
};

std::unique_ptr<Model> make_model(const TrainConfig& config, const ModelShape& shape);

// Full GeMM-GAN: separate conditioning networks for the generator (theta_G)
// and the critic (theta_D) over the same inputs.
class GemmGan : public Model {
 public:
  GemmGan(const TrainConfig& config, const ModelShape& shape);

  StepLosses train_step(const TrainingCorpus& corpus) override;
  double validation_loss(const TrainingCorpus& corpus, Rng& rng) override;
  Matrix sample(const TrainingCorpus& corpus, Rng& rng) override;
  nn::ParameterList parameters() override;
  std::vector<std::pair<std::string, nn::Adam*>> optimizers() override;

  nn::ParameterList generator_side();
  nn::ParameterList critic_side();

  // Conditioning inputs for `cases`, with N patches drawn per case.
  fusion::ConditioningBatch make_batch(const TrainingCorpus& corpus, const std::vector<Index>& cases, Rng& rng) const;

  fusion::ConditioningNetwork gen_conditioning;
  fusion::ConditioningNetwork critic_conditioning;
  Generator generator;
  Critic critic;
  nn::Adam adam_generator;
  nn::Adam adam_critic;
};

// Vanilla (no condition) or categorical (one-hot disease type + primary site) WGAN-GP.
class WganGp : public Model {
 public:
  WganGp(const TrainConfig& config, const ModelShape& shape);

  StepLosses train_step(const TrainingCorpus& corpus) override;
  double validation_loss(const TrainingCorpus& corpus, Rng& rng) override;
  Matrix sample(const TrainingCorpus& corpus, Rng& rng) override;
  nn::ParameterList parameters() override;
  std::vector<std::pair<std::string, nn::Adam*>> optimizers() override;

  Matrix condition(const TrainingCorpus& corpus, const std::vector<Index>& cases) const;

  Generator generator;
  Critic critic;
  nn::Adam adam_generator;
  nn::Adam adam_critic;
};

// Conditional VAE on the same one-hot condition; the decoder mirrors the generator.
class Cvae : public Model {
 public:
  Cvae(const TrainConfig& config, const ModelShape& shape);

  StepLosses train_step(const TrainingCorpus& corpus) override;
  double validation_loss(const TrainingCorpus& corpus, Rng& rng) override;
  Matrix sample(const TrainingCorpus& corpus, Rng& rng) override;
  nn::ParameterList parameters() override;
  std::vector<std::pair<std::string, nn::Adam*>> optimizers() override;

  nn::Mlp encoder;  // (g + c) -> hidden -> hidden, ReLU after the last layer
  nn::Linear mu_head;
  nn::Linear logvar_head;
  Generator decoder;
  nn::Adam adam;

 private:
  nn::Var loss(nn::Tape& tape, const TrainingCorpus& corpus, const std::vector<Index>& cases, Rng& rng,
               nn::Var* recon_out, nn::Var* kl_out);
};

// One-hot disease type followed by one-hot primary site.
Matrix one_hot_condition(const TrainingCorpus& corpus, const ModelShape& shape, const std::vector<Index>& cases);

struct TrainingOptions {
  std::int64_t max_steps = 0;                  // absolute step count to reach
  const TrainingCorpus* validation = nullptr;  // early stopping only
  std::function<void(std::int64_t step, const StepLosses&)> on_step;
};

struct TrainingSummary {
  std::int64_t steps_run = 0;
  bool stopped_early = false;
};

TrainingSummary train(Model& model, const TrainingCorpus& corpus, const TrainingOptions& options);

// n_runs generated matrices, run r drawn from (seed, r) alone.
std::vector<Matrix> sample_profiles(Model& model, const TrainingCorpus& corpus, int n_runs, std::uint64_t seed);

}  // namespace gemmgan::gan
