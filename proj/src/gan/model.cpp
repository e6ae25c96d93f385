#include "gemmgan/gan/model.hpp"

#include "gemmgan/core/error.hpp"
#include "gemmgan/encoders/encoders.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <sstream>

namespace gemmgan::gan {
namespace {

using nn::Tape;
using nn::Var;

constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kTrainStream = 0x7a11;
constexpr std::uint64_t kValidationStream = 0x7a1d;
constexpr std::uint64_t kSampleStream = 0x5a3e;

std::vector<Index> draw_batch(Index n_cases, Index batch_size, Rng& rng) {
  if (n_cases <= 0) throw Error(ErrorCode::kInvalidArgument, "training corpus is empty");
  return encoders::sample_patch_indices(n_cases, std::min(n_cases, batch_size), rng);
}

std::vector<Index> range(Index begin, Index end) {
  std::vector<Index> out;
  for (Index i = begin; i < end; ++i) out.push_back(i);
  return out;
}

Matrix expression_rows(const TrainingCorpus& corpus, const std::vector<Index>& cases) {
  Matrix out(static_cast<Index>(cases.size()), corpus.genes());
  for (std::size_t i = 0; i < cases.size(); ++i) {
    out.row(static_cast<Index>(i)) = corpus.cases[static_cast<std::size_t>(cases[i])].expression;
  }
  return out;
}

Vector uniform_vector(Index n, Rng& rng) {
  std::uniform_real_distribution<double> uni(0.0, 1.0);
  Vector v(n);
  for (Index i = 0; i < n; ++i) v(i) = uni(rng);
  return v;
}

void check_corpus(const TrainingCorpus& corpus, const ModelShape& shape) {
  if (corpus.genes() != shape.genes) {
    throw Error(ErrorCode::kDimensionMismatch, "corpus has " + std::to_string(corpus.genes()) +
                                                   " genes, model expects " + std::to_string(shape.genes));
  }
  for (const auto& c : corpus.cases) {
    if (c.expression.size() != shape.genes) {
      throw Error(ErrorCode::kDimensionMismatch, "case " + c.case_id + " has a profile of the wrong width");
    }
  }
}

void require_labels(const TrainingCorpus& corpus, std::string_view what) {
  if (!corpus.has_labels()) {
    throw Error(ErrorCode::kMissingLabels, std::string(what) + " needs disease_type and primary_site labels");
  }
}

void check_finite(std::int64_t step, const char* phase, std::initializer_list<std::pair<const char*, double>> values) {
  bool ok = true;
  for (const auto& [name, v] : values) ok = ok && std::isfinite(v);
  if (ok) return;
  std::ostringstream msg;
  msg << "step " << step << " (" << phase << "):";
  for (const auto& [name, v] : values) msg << ' ' << name << '=' << v;
  throw Error(ErrorCode::kNonFiniteLoss, msg.str());
}

double scalar(const Var& v) { return v.value()(0, 0); }

nn::ParameterList concat_lists(std::initializer_list<nn::ParameterList> lists) {
  nn::ParameterList out;
  for (const auto& l : lists) out.insert(out.end(), l.begin(), l.end());
  return out;
}

template <typename Net>
nn::ParameterList collected(Net& net) {
  nn::ParameterList out;
  net.collect(out);
  return out;
}

}  // namespace

std::string_view kind_name(ModelKind kind) {
  switch (kind) {
    case ModelKind::kGemmGan: return "gemm_gan";
    case ModelKind::kVanillaWganGp: return "vanilla_wgan_gp";
    case ModelKind::kCondWganGp: return "cond_wgan_gp";
    case ModelKind::kCvae: return "cvae";
  }
  return "unknown";
}

ModelKind parse_kind(std::string_view name) {
  for (auto k : {ModelKind::kGemmGan, ModelKind::kVanillaWganGp, ModelKind::kCondWganGp, ModelKind::kCvae}) {
    if (kind_name(k) == name) return k;
  }
  throw Error(ErrorCode::kConfigError, "unknown model kind '" + std::string(name) + "'");
}

void TrainConfig::validate() const {
  auto need = [](bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::kConfigError, what);
  };
  need(fusion.dim > 0, "model.d must be positive");
  need(fusion.heads > 0, "model.heads must be positive");
  need(fusion.dim % fusion.heads == 0, "model.d must be divisible by model.heads");
  need(fusion.depth > 0, "model.depth must be positive");
  need(fusion.ffn_multiplier > 0, "model.ffn_multiplier must be positive");
  need(fusion.dropout >= 0.0 && fusion.dropout < 1.0, "model.dropout must be in [0, 1)");
  need(d_noise > 0 && hidden > 0 && n_patches > 0 && max_tokens > 1 && batch_size > 0,
       "model widths and counts must be positive");
  need(gp_weight > 0.0, "model.gp_weight must be positive");
  need(critic_steps > 0, "model.critic_steps must be positive");
  need(lr_generator > 0.0 && lr_critic > 0.0 && cvae_lr > 0.0, "learning rates must be positive");
  need(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "Adam betas must be in [0, 1)");
  need(cvae_latent > 0, "model.cvae_latent must be positive");
  need(max_steps > 0, "model.max_steps must be positive");
  need(early_stopping_patience >= 0, "model.early_stopping_patience must be non-negative");
  need(validation_interval > 0, "model.validation_interval must be positive");
}

nlohmann::ordered_json to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["kind"] = kind_name(c.kind);
  j["variant"] = fusion::variant_name(c.fusion.variant);
  j["d"] = c.fusion.dim;
  j["heads"] = c.fusion.heads;
  j["depth"] = c.fusion.depth;
  j["ffn_multiplier"] = c.fusion.ffn_multiplier;
  j["dropout"] = c.fusion.dropout;
  j["d_noise"] = c.d_noise;
  j["hidden"] = c.hidden;
  j["n_patches"] = c.n_patches;
  j["max_tokens"] = c.max_tokens;
  j["batch_size"] = c.batch_size;
  j["gp_weight"] = c.gp_weight;
  j["critic_steps"] = c.critic_steps;
  j["lr_generator"] = c.lr_generator;
  j["lr_critic"] = c.lr_critic;
  j["beta1"] = c.beta1;
  j["beta2"] = c.beta2;
  j["cvae_latent"] = c.cvae_latent;
  j["cvae_lr"] = c.cvae_lr;
  j["max_steps"] = c.max_steps;
  j["early_stopping_patience"] = c.early_stopping_patience;
  j["validation_interval"] = c.validation_interval;
  j["image_encoder"] = c.image_encoder;
  j["text_encoder"] = c.text_encoder;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j, TrainConfig c) {
  if (!j.is_object()) throw Error(ErrorCode::kConfigError, "model section must be an object");
  using Setter = std::function<void(const nlohmann::json&)>;
  const std::map<std::string, Setter> setters = {
      {"kind", [&](const auto& v) { c.kind = parse_kind(v.template get<std::string>()); }},
      {"variant", [&](const auto& v) { c.fusion.variant = fusion::parse_variant(v.template get<std::string>()); }},
      {"d", [&](const auto& v) { c.fusion.dim = v.template get<Index>(); }},
      {"heads", [&](const auto& v) { c.fusion.heads = v.template get<int>(); }},
      {"depth", [&](const auto& v) { c.fusion.depth = v.template get<int>(); }},
      {"ffn_multiplier", [&](const auto& v) { c.fusion.ffn_multiplier = v.template get<int>(); }},
      {"dropout", [&](const auto& v) { c.fusion.dropout = v.template get<double>(); }},
      {"d_noise", [&](const auto& v) { c.d_noise = v.template get<Index>(); }},
      {"hidden", [&](const auto& v) { c.hidden = v.template get<Index>(); }},
      {"n_patches", [&](const auto& v) { c.n_patches = v.template get<Index>(); }},
      {"max_tokens", [&](const auto& v) { c.max_tokens = v.template get<Index>(); }},
      {"batch_size", [&](const auto& v) { c.batch_size = v.template get<Index>(); }},
      {"gp_weight", [&](const auto& v) { c.gp_weight = v.template get<double>(); }},
      {"critic_steps", [&](const auto& v) { c.critic_steps = v.template get<int>(); }},
      {"lr_generator", [&](const auto& v) { c.lr_generator = v.template get<double>(); }},
      {"lr_critic", [&](const auto& v) { c.lr_critic = v.template get<double>(); }},
      {"beta1", [&](const auto& v) { c.beta1 = v.template get<double>(); }},
      {"beta2", [&](const auto& v) { c.beta2 = v.template get<double>(); }},
      {"cvae_latent", [&](const auto& v) { c.cvae_latent = v.template get<Index>(); }},
      {"cvae_lr", [&](const auto& v) { c.cvae_lr = v.template get<double>(); }},
      {"max_steps", [&](const auto& v) { c.max_steps = v.template get<std::int64_t>(); }},
      {"early_stopping_patience", [&](const auto& v) { c.early_stopping_patience = v.template get<int>(); }},
      {"validation_interval", [&](const auto& v) { c.validation_interval = v.template get<int>(); }},
      {"image_encoder", [&](const auto& v) { c.image_encoder = v.template get<std::string>(); }},
      {"text_encoder", [&](const auto& v) { c.text_encoder = v.template get<std::string>(); }},
  };
  for (const auto& [key, value] : j.items()) {
    auto it = setters.find(key);
    if (it == setters.end()) throw Error(ErrorCode::kConfigError, "unknown key model." + key);
    try {
      it->second(value);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::kConfigError, "model." + key + ": " + e.what());
    }
  }
  return c;
}

bool TrainingCorpus::has_labels() const {
  if (disease_types.empty() || primary_sites.empty()) return false;
  for (const auto& c : cases) {
    if (c.disease < 0 || c.site < 0) return false;
  }
  return true;
}

Matrix TrainingCorpus::expression() const { return expression_rows(*this, range(0, size())); }

std::vector<int> TrainingCorpus::disease_labels() const {
  std::vector<int> out;
  for (const auto& c : cases) out.push_back(c.disease);
  return out;
}

std::vector<int> TrainingCorpus::site_labels() const {
  std::vector<int> out;
  for (const auto& c : cases) out.push_back(c.site);
  return out;
}

ModelShape ModelShape::of(const TrainingCorpus& corpus) {
  return {corpus.genes(), corpus.disease_types, corpus.primary_sites};
}

double StepLosses::at(std::string_view name) const {
  for (const auto& [k, v] : values) {
    if (k == name) return v;
  }
  throw Error(ErrorCode::kInvalidArgument, "no loss named '" + std::string(name) + "'");
}

std::vector<NamedTensor> Model::state_tensors() {
  std::vector<NamedTensor> out;
  const auto params = parameters();
  for (auto* p : params) out.push_back({p->name, &p->value});
  for (auto& [opt_name, adam] : optimizers()) {
    const auto& ps = adam->params();
    for (std::size_t i = 0; i < ps.size(); ++i) {
      out.push_back({"adam." + opt_name + ".m." + ps[i]->name, &adam->first_moments()[i]});
      out.push_back({"adam." + opt_name + ".v." + ps[i]->name, &adam->second_moments()[i]});
    }
  }
  return out;
}

Matrix one_hot_condition(const TrainingCorpus& corpus, const ModelShape& shape, const std::vector<Index>& cases) {
  const Index n_disease = static_cast<Index>(shape.disease_types.size());
  Matrix out = Matrix::Zero(static_cast<Index>(cases.size()), shape.one_hot_width());
  auto find = [](const std::vector<std::string>& vocab, const std::string& label) -> Index {
    for (std::size_t i = 0; i < vocab.size(); ++i) {
      if (vocab[i] == label) return static_cast<Index>(i);
    }
    return -1;
  };
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& c = corpus.cases[static_cast<std::size_t>(cases[i])];
    if (c.disease >= 0) {
      const Index k = find(shape.disease_types, corpus.disease_types[static_cast<std::size_t>(c.disease)]);
      if (k >= 0) out(static_cast<Index>(i), k) = 1.0;
    }
    if (c.site >= 0) {
      const Index k = find(shape.primary_sites, corpus.primary_sites[static_cast<std::size_t>(c.site)]);
      if (k >= 0) out(static_cast<Index>(i), n_disease + k) = 1.0;
    }
  }
  return out;
}

// ---------------------------------------------------------------- GemmGan

GemmGan::GemmGan(const TrainConfig& config, const ModelShape& shape) : Model(config, shape) {
  config_.validate();
  auto image_encoder = encoders::make_image_encoder(config_.image_encoder);
  auto text_encoder = encoders::make_text_encoder(config_.text_encoder);
  Rng r1 = derive_rng(config_.seed, {kInitStream, 1});
  Rng r2 = derive_rng(config_.seed, {kInitStream, 2});
  Rng r3 = derive_rng(config_.seed, {kInitStream, 3});
  Rng r4 = derive_rng(config_.seed, {kInitStream, 4});
  gen_conditioning = fusion::ConditioningNetwork("gen_cond", config_.fusion, image_encoder, text_encoder, r1);
  critic_conditioning = fusion::ConditioningNetwork("critic_cond", config_.fusion, image_encoder, text_encoder, r2);
  generator = Generator("generator", config_.d_noise, config_.fusion.dim, config_.hidden, shape_.genes, r3);
  critic = Critic("critic", shape_.genes, config_.fusion.dim, config_.hidden, r4);
  adam_generator = nn::Adam(generator_side(), {config_.lr_generator, config_.beta1, config_.beta2, 1e-8});
  adam_critic = nn::Adam(critic_side(), {config_.lr_critic, config_.beta1, config_.beta2, 1e-8});
}

nn::ParameterList GemmGan::generator_side() {
  return concat_lists({collected(gen_conditioning), collected(generator)});
}

nn::ParameterList GemmGan::critic_side() { return concat_lists({collected(critic_conditioning), collected(critic)}); }

nn::ParameterList GemmGan::parameters() { return concat_lists({generator_side(), critic_side()}); }

std::vector<std::pair<std::string, nn::Adam*>> GemmGan::optimizers() {
  return {{"generator", &adam_generator}, {"critic", &adam_critic}};
}

fusion::ConditioningBatch GemmGan::make_batch(const TrainingCorpus& corpus, const std::vector<Index>& cases,
                                              Rng& rng) const {
  const Index image_dim = gen_conditioning.image.native_dim();
  const Index text_dim = gen_conditioning.text.native_dim();
  fusion::ConditioningBatch batch;
  std::vector<Index> patch_lengths, token_lengths;
  Index patch_rows = 0, token_rows = 0;
  for (auto i : cases) {
    const auto& c = corpus.cases[static_cast<std::size_t>(i)];
    if (c.patch_features.rows() == 0) throw Error(ErrorCode::kNoTiles, "case " + c.case_id + " has no tiles");
    if (c.token_features.rows() == 0) {
      throw Error(ErrorCode::kInvalidArgument, "case " + c.case_id + " has no text tokens");
    }
    if (c.patch_features.cols() != image_dim || c.token_features.cols() != text_dim) {
      throw Error(ErrorCode::kDimensionMismatch, "case " + c.case_id + " features do not match the encoders");
    }
    patch_lengths.push_back(config_.n_patches);
    token_lengths.push_back(std::min(c.token_features.rows(), config_.max_tokens));
    patch_rows += patch_lengths.back();
    token_rows += token_lengths.back();
  }
  batch.patches = Segments::from_lengths(patch_lengths);
  batch.tokens = Segments::from_lengths(token_lengths);
  batch.patch_features.resize(patch_rows, image_dim);
  batch.token_features.resize(token_rows, text_dim);
  for (std::size_t b = 0; b < cases.size(); ++b) {
    const auto& c = corpus.cases[static_cast<std::size_t>(cases[b])];
    const auto picks = encoders::sample_patch_indices(c.patch_features.rows(), config_.n_patches, rng);
    const Index p0 = batch.patches.begin(static_cast<Index>(b));
    for (std::size_t k = 0; k < picks.size(); ++k) {
      batch.patch_features.row(p0 + static_cast<Index>(k)) = c.patch_features.row(picks[k]);
    }
    const Index t0 = batch.tokens.begin(static_cast<Index>(b));
    const Index m = batch.tokens.length(static_cast<Index>(b));
    batch.token_features.middleRows(t0, m) = c.token_features.topRows(m);
  }
  return batch;
}

StepLosses GemmGan::train_step(const TrainingCorpus& corpus) {
  check_corpus(corpus, shape_);
  const auto step = static_cast<std::uint64_t>(step_);
  double critic_sum = 0.0, gp_sum = 0.0, w_sum = 0.0;
  for (int c = 0; c < config_.critic_steps; ++c) {
    Rng rng = derive_rng(config_.seed, {kTrainStream, step, static_cast<std::uint64_t>(c)});
    const auto cases = draw_batch(corpus.size(), config_.batch_size, rng);
    const auto batch = make_batch(corpus, cases, rng);
    const Index n = static_cast<Index>(cases.size());
    const nn::Dropout drop{config_.fusion.dropout, &rng};

    Matrix fake;
    {
      Tape gen_tape(false);
      Var e_g = gen_conditioning.forward(gen_tape, batch, drop);
      Var z = gen_tape.constant(standard_normal(n, config_.d_noise, rng));
      fake = generator.forward(gen_tape, z, e_g).value();
    }
    const Matrix real = expression_rows(corpus, cases);

    Tape tape;
    Var e_d = critic_conditioning.forward(tape, batch, drop);
    Var d_real = critic.forward(tape, tape.constant(real), e_d);
    Var d_fake = critic.forward(tape, tape.constant(fake), e_d);
    const Vector eps = uniform_vector(n, rng);
    Var gp = gradient_penalty(tape, critic, real, fake, e_d.value(), eps);
    Var w = nn::sub(nn::mean(d_real), nn::mean(d_fake));
    Var loss = nn::add(nn::scale(w, -1.0), nn::scale(gp, config_.gp_weight));
    check_finite(step_, "critic", {{"critic_loss", scalar(loss)}, {"gp", scalar(gp)}, {"wasserstein", scalar(w)}});
    adam_critic.zero_grad();
    tape.backward(loss);
    adam_critic.step();
    critic_sum += scalar(loss);
    gp_sum += scalar(gp);
    w_sum += scalar(w);
  }

  Rng rng = derive_rng(config_.seed, {kTrainStream, step, static_cast<std::uint64_t>(config_.critic_steps)});
  const auto cases = draw_batch(corpus.size(), config_.batch_size, rng);
  const auto batch = make_batch(corpus, cases, rng);
  const nn::Dropout drop{config_.fusion.dropout, &rng};
  Tape tape;
  tape.freeze(critic_side());
  Var e_g = gen_conditioning.forward(tape, batch, drop);
  Var e_d = critic_conditioning.forward(tape, batch, drop);
  Var z = tape.constant(standard_normal(static_cast<Index>(cases.size()), config_.d_noise, rng));
  Var fake = generator.forward(tape, z, e_g);
  Var gen_loss = nn::scale(nn::mean(critic.forward(tape, fake, e_d)), -1.0);
  check_finite(step_, "generator", {{"gen_loss", scalar(gen_loss)}});
  adam_generator.zero_grad();
  tape.backward(gen_loss);
  adam_generator.step();

  ++step_;
  const double k = config_.critic_steps;
  return {{{"critic_loss", critic_sum / k}, {"gen_loss", scalar(gen_loss)}, {"gp", gp_sum / k},
           {"wasserstein", w_sum / k}}};
}

double GemmGan::validation_loss(const TrainingCorpus& corpus, Rng& rng) {
  check_corpus(corpus, shape_);
  double real_sum = 0.0, fake_sum = 0.0;
  for (Index b0 = 0; b0 < corpus.size(); b0 += config_.batch_size) {
    const auto cases = range(b0, std::min(corpus.size(), b0 + config_.batch_size));
    const auto batch = make_batch(corpus, cases, rng);
    const Matrix e_g = gen_conditioning.evaluate(batch);
    const Matrix e_d = critic_conditioning.evaluate(batch);
    const Matrix fake = generate(generator, standard_normal(e_g.rows(), config_.d_noise, rng), e_g);
    real_sum += critic_score(critic, expression_rows(corpus, cases), e_d).sum();
    fake_sum += critic_score(critic, fake, e_d).sum();
  }
  return (real_sum - fake_sum) / static_cast<double>(corpus.size());
}

Matrix GemmGan::sample(const TrainingCorpus& corpus, Rng& rng) {
  Matrix out(corpus.size(), shape_.genes);
  for (Index b0 = 0; b0 < corpus.size(); b0 += config_.batch_size) {
    const auto cases = range(b0, std::min(corpus.size(), b0 + config_.batch_size));
    const auto batch = make_batch(corpus, cases, rng);
    const Matrix e_g = gen_conditioning.evaluate(batch);
    out.middleRows(b0, e_g.rows()) =
        generate(generator, standard_normal(e_g.rows(), config_.d_noise, rng), e_g);
  }
  return out;
}

// ---------------------------------------------------------------- WganGp

WganGp::WganGp(const TrainConfig& config, const ModelShape& shape) : Model(config, shape) {
  config_.validate();
  const bool conditional = config_.kind == ModelKind::kCondWganGp;
  if (conditional && shape_.one_hot_width() == 0) {
    throw Error(ErrorCode::kMissingLabels, "cond_wgan_gp needs disease_type and primary_site vocabularies");
  }
  const Index d_cond = conditional ? shape_.one_hot_width() : 0;
  Rng r3 = derive_rng(config_.seed, {kInitStream, 3});
  Rng r4 = derive_rng(config_.seed, {kInitStream, 4});
  generator = Generator("generator", config_.d_noise, d_cond, config_.hidden, shape_.genes, r3);
  critic = Critic("critic", shape_.genes, d_cond, config_.hidden, r4);
  adam_generator = nn::Adam(collected(generator), {config_.lr_generator, config_.beta1, config_.beta2, 1e-8});
  adam_critic = nn::Adam(collected(critic), {config_.lr_critic, config_.beta1, config_.beta2, 1e-8});
}

nn::ParameterList WganGp::parameters() { return concat_lists({collected(generator), collected(critic)}); }

std::vector<std::pair<std::string, nn::Adam*>> WganGp::optimizers() {
  return {{"generator", &adam_generator}, {"critic", &adam_critic}};
}

Matrix WganGp::condition(const TrainingCorpus& corpus, const std::vector<Index>& cases) const {
  if (config_.kind != ModelKind::kCondWganGp) return Matrix(static_cast<Index>(cases.size()), 0);
  return one_hot_condition(corpus, shape_, cases);
}

StepLosses WganGp::train_step(const TrainingCorpus& corpus) {
  check_corpus(corpus, shape_);
  if (config_.kind == ModelKind::kCondWganGp) require_labels(corpus, "cond_wgan_gp");
  const auto step = static_cast<std::uint64_t>(step_);
  auto cond_var = [](Tape& tape, const Matrix& cond) { return cond.cols() > 0 ? tape.constant(cond) : Var(); };
  double critic_sum = 0.0, gp_sum = 0.0, w_sum = 0.0;
  for (int c = 0; c < config_.critic_steps; ++c) {
    Rng rng = derive_rng(config_.seed, {kTrainStream, step, static_cast<std::uint64_t>(c)});
    const auto cases = draw_batch(corpus.size(), config_.batch_size, rng);
    const Index n = static_cast<Index>(cases.size());
    const Matrix cond = condition(corpus, cases);
    const Matrix fake = generate(generator, standard_normal(n, config_.d_noise, rng), cond);
    const Matrix real = expression_rows(corpus, cases);

    Tape tape;
    Var e = cond_var(tape, cond);
    Var d_real = critic.forward(tape, tape.constant(real), e);
    Var d_fake = critic.forward(tape, tape.constant(fake), e);
    const Vector eps = uniform_vector(n, rng);
    Var gp = gradient_penalty(tape, critic, real, fake, cond, eps);
    Var w = nn::sub(nn::mean(d_real), nn::mean(d_fake));
    Var loss = nn::add(nn::scale(w, -1.0), nn::scale(gp, config_.gp_weight));
    check_finite(step_, "critic", {{"critic_loss", scalar(loss)}, {"gp", scalar(gp)}, {"wasserstein", scalar(w)}});
    adam_critic.zero_grad();
    tape.backward(loss);
    adam_critic.step();
    critic_sum += scalar(loss);
    gp_sum += scalar(gp);
    w_sum += scalar(w);
  }

  Rng rng = derive_rng(config_.seed, {kTrainStream, step, static_cast<std::uint64_t>(config_.critic_steps)});
  const auto cases = draw_batch(corpus.size(), config_.batch_size, rng);
  const Matrix cond = condition(corpus, cases);
  Tape tape;
  tape.freeze(collected(critic));
  Var e = cond_var(tape, cond);
  Var z = tape.constant(standard_normal(static_cast<Index>(cases.size()), config_.d_noise, rng));
  Var gen_loss = nn::scale(nn::mean(critic.forward(tape, generator.forward(tape, z, e), e)), -1.0);
  check_finite(step_, "generator", {{"gen_loss", scalar(gen_loss)}});
  adam_generator.zero_grad();
  tape.backward(gen_loss);
  adam_generator.step();

  ++step_;
  const double k = config_.critic_steps;
  return {{{"critic_loss", critic_sum / k}, {"gen_loss", scalar(gen_loss)}, {"gp", gp_sum / k},
           {"wasserstein", w_sum / k}}};
}

double WganGp::validation_loss(const TrainingCorpus& corpus, Rng& rng) {
  check_corpus(corpus, shape_);
  const auto cases = range(0, corpus.size());
  const Matrix cond = condition(corpus, cases);
  const Matrix fake = generate(generator, standard_normal(corpus.size(), config_.d_noise, rng), cond);
  return (critic_score(critic, corpus.expression(), cond).sum() - critic_score(critic, fake, cond).sum()) /
         static_cast<double>(corpus.size());
}

Matrix WganGp::sample(const TrainingCorpus& corpus, Rng& rng) {
  const Matrix cond = condition(corpus, range(0, corpus.size()));
  return generate(generator, standard_normal(corpus.size(), config_.d_noise, rng), cond);
}

// ---------------------------------------------------------------- Cvae

Cvae::Cvae(const TrainConfig& config, const ModelShape& shape) : Model(config, shape) {
  config_.validate();
  if (shape_.one_hot_width() == 0) {
    throw Error(ErrorCode::kMissingLabels, "cvae needs disease_type and primary_site vocabularies");
  }
  const Index c = shape_.one_hot_width();
  Rng r1 = derive_rng(config_.seed, {kInitStream, 5});
  Rng r2 = derive_rng(config_.seed, {kInitStream, 6});
  encoder = nn::Mlp("cvae.encoder", {shape_.genes + c, config_.hidden, config_.hidden}, nn::Activation::kRelu, r1);
  mu_head = nn::Linear("cvae.mu", config_.hidden, config_.cvae_latent, r1);
  logvar_head = nn::Linear("cvae.logvar", config_.hidden, config_.cvae_latent, r1);
  decoder = Generator("cvae.decoder", config_.cvae_latent, c, config_.hidden, shape_.genes, r2);
  adam = nn::Adam(parameters(), {config_.cvae_lr, 0.9, 0.999, 1e-8});
}

nn::ParameterList Cvae::parameters() {
  nn::ParameterList out;
  encoder.collect(out);
  mu_head.collect(out);
  logvar_head.collect(out);
  decoder.collect(out);
  return out;
}

std::vector<std::pair<std::string, nn::Adam*>> Cvae::optimizers() { return {{"cvae", &adam}}; }

Var Cvae::loss(Tape& tape, const TrainingCorpus& corpus, const std::vector<Index>& cases, Rng& rng,
               Var* recon_out, Var* kl_out) {
  const Matrix real = expression_rows(corpus, cases);
  const Matrix cond = one_hot_condition(corpus, shape_, cases);
  Matrix joined(real.rows(), real.cols() + cond.cols());
  joined << real, cond;
  Var h = nn::relu(encoder.forward(tape, tape.constant(joined)));
  Var mu = mu_head.forward(tape, h);
  Var logvar = logvar_head.forward(tape, h);
  Var noise = tape.constant(standard_normal(real.rows(), config_.cvae_latent, rng));
  Var z = nn::add(mu, nn::hadamard(nn::exp(nn::scale(logvar, 0.5)), noise));
  Var recon = decoder.forward(tape, z, tape.constant(cond));
  // Squared error summed over genes, averaged over the batch.
  Var rec = nn::scale(nn::mean(nn::square(nn::sub(recon, tape.constant(real)))), static_cast<double>(real.cols()));
  Var kl = nn::mean(gaussian_kl(mu, logvar));
  *recon_out = rec;
  *kl_out = kl;
  return nn::add(rec, kl);
}

StepLosses Cvae::train_step(const TrainingCorpus& corpus) {
  check_corpus(corpus, shape_);
  require_labels(corpus, "cvae");
  Rng rng = derive_rng(config_.seed, {kTrainStream, static_cast<std::uint64_t>(step_), 0});
  const auto cases = draw_batch(corpus.size(), config_.batch_size, rng);
  Tape tape;
  Var rec, kl;
  Var total = loss(tape, corpus, cases, rng, &rec, &kl);
  check_finite(step_, "cvae", {{"loss", scalar(total)}, {"reconstruction", scalar(rec)}, {"kl", scalar(kl)}});
  adam.zero_grad();
  tape.backward(total);
  adam.step();
  ++step_;
  return {{{"loss", scalar(total)}, {"reconstruction", scalar(rec)}, {"kl", scalar(kl)}}};
}

double Cvae::validation_loss(const TrainingCorpus& corpus, Rng& rng) {
  check_corpus(corpus, shape_);
  require_labels(corpus, "cvae");
  Tape tape(false);
  Var rec, kl;
  return scalar(loss(tape, corpus, range(0, corpus.size()), rng, &rec, &kl));
}

Matrix Cvae::sample(const TrainingCorpus& corpus, Rng& rng) {
  const Matrix cond = one_hot_condition(corpus, shape_, range(0, corpus.size()));
  return generate(decoder, standard_normal(corpus.size(), config_.cvae_latent, rng), cond);
}

// ---------------------------------------------------------------- loop

std::unique_ptr<Model> make_model(const TrainConfig& config, const ModelShape& shape) {
  if (shape.genes <= 0) throw Error(ErrorCode::kInvalidArgument, "model needs at least one gene");
  switch (config.kind) {
    case ModelKind::kGemmGan: return std::make_unique<GemmGan>(config, shape);
    case ModelKind::kVanillaWganGp:
    case ModelKind::kCondWganGp: return std::make_unique<WganGp>(config, shape);
    case ModelKind::kCvae: return std::make_unique<Cvae>(config, shape);
  }
  throw Error(ErrorCode::kConfigError, "unknown model kind");
}

TrainingSummary train(Model& model, const TrainingCorpus& corpus, const TrainingOptions& options) {
  TrainingSummary summary;
  const auto& config = model.config();
  const bool early = config.early_stopping_patience > 0 && options.validation != nullptr &&
                     options.validation->size() > 0;
  double best = std::numeric_limits<double>::infinity();
  int stale = 0;
  while (model.step() < options.max_steps) {
    const StepLosses losses = model.train_step(corpus);
    ++summary.steps_run;
    if (options.on_step) options.on_step(model.step(), losses);
    if (early && model.step() % config.validation_interval == 0) {
      Rng rng = derive_rng(config.seed, {kValidationStream, static_cast<std::uint64_t>(model.step())});
      const double v = model.validation_loss(*options.validation, rng);
      if (v < best) {
        best = v;
        stale = 0;
      } else if (++stale >= config.early_stopping_patience) {
        summary.stopped_early = true;
        break;
      }
    }
  }
  return summary;
}

std::vector<Matrix> sample_profiles(Model& model, const TrainingCorpus& corpus, int n_runs, std::uint64_t seed) {
  if (n_runs <= 0) throw Error(ErrorCode::kInvalidArgument, "n_runs must be positive");
  std::vector<Matrix> runs;
  for (int r = 0; r < n_runs; ++r) {
    Rng rng = derive_rng(seed, {kSampleStream, static_cast<std::uint64_t>(r)});
    runs.push_back(model.sample(corpus, rng));
  }
  return runs;
}

}  // namespace gemmgan::gan
