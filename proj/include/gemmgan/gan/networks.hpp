#pragma once

#include "gemmgan/nn/modules.hpp"

#include <string>

namespace gemmgan::gan {

// (d_noise + d_cond) -> hidden -> hidden -> g, ReLU hidden layers, linear output.
class Generator {
 public:
  Generator() = default;
  Generator(const std::string& name, Index d_noise, Index d_cond, Index hidden, Index genes, Rng& rng);

  // cond may be an invalid Var when d_cond = 0.
  nn::Var forward(nn::Tape& tape, const nn::Var& noise, const nn::Var& cond);
  void collect(nn::ParameterList& out) { mlp.collect(out); }

  Index d_noise() const { return d_noise_; }
  Index d_cond() const { return d_cond_; }
  Index genes() const { return mlp.out_dim(); }

  nn::Mlp mlp;

 private:
  Index d_noise_ = 0;
  Index d_cond_ = 0;
};

// (g + d_cond) -> hidden -> hidden -> 1, LeakyReLU(0.2) hidden layers, unbounded output.
class Critic {
 public:
  Critic() = default;
  Critic(const std::string& name, Index genes, Index d_cond, Index hidden, Rng& rng, double slope = 0.2);

  nn::Var forward(nn::Tape& tape, const nn::Var& x, const nn::Var& cond);
  void collect(nn::ParameterList& out) { mlp.collect(out); }

  Index genes() const { return genes_; }
  Index d_cond() const { return d_cond_; }

  nn::Mlp mlp;

 private:
  Index genes_ = 0;
  Index d_cond_ = 0;
};

Matrix generate(Generator& gen, const Matrix& noise, const Matrix& cond);

// One score per row.
Vector critic_score(Critic& critic, const Matrix& x, const Matrix& cond);

// d D([x ; cond]) / d x, row per sample.
Matrix critic_input_gradient(Critic& critic, const Matrix& x, const Matrix& cond);

// Interpolates x_hat = eps * real + (1 - eps) * fake on the expression
// columns only and returns mean_b (||grad_x_hat D||_2 - 1)^2. The result is
// differentiable with respect to the critic weights.
nn::Var gradient_penalty(nn::Tape& tape, Critic& critic, const Matrix& real, const Matrix& fake,
                         const Matrix& cond, const Vector& eps);
double gradient_penalty(Critic& critic, const Matrix& real, const Matrix& fake, const Matrix& cond,
                        const Vector& eps);

// Per-row KL(N(mu, exp(logvar)) || N(0, I)), summed over latent dimensions.
Vector gaussian_kl(const Matrix& mu, const Matrix& logvar);
nn::Var gaussian_kl(const nn::Var& mu, const nn::Var& logvar);

}  // namespace gemmgan::gan
