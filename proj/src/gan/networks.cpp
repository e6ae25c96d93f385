#include "gemmgan/gan/networks.hpp"

#include "gemmgan/core/error.hpp"

namespace gemmgan::gan {
namespace {

using nn::Tape;
using nn::Var;

void check_rows(Index a, Index b, const char* what) {
  if (a != b) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": batch sizes differ (" + std::to_string(a) + " vs " + std::to_string(b) + ")");
  }
}

void check_cols(Index got, Index want, const char* what) {
  if (got != want) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(what) + ": expected width " + std::to_string(want) + ", got " + std::to_string(got));
  }
}

Var concat(Tape& tape, const Var& left, const Var& right) {
  if (!right.valid() || right.cols() == 0) return left;
  (void)tape;
  return nn::hstack(left, right);
}

Matrix concat(const Matrix& left, const Matrix& right) {
  if (right.cols() == 0) return left;
  Matrix out(left.rows(), left.cols() + right.cols());
  out << left, right;
  return out;
}

}  // namespace

Generator::Generator(const std::string& name, Index d_noise, Index d_cond, Index hidden, Index genes, Rng& rng)
    : mlp(name, {d_noise + d_cond, hidden, hidden, genes}, nn::Activation::kRelu, rng),
      d_noise_(d_noise),
      d_cond_(d_cond) {}

Var Generator::forward(Tape& tape, const Var& noise, const Var& cond) {
  check_cols(noise.cols(), d_noise_, "generate(noise)");
  const Index cond_cols = cond.valid() ? cond.cols() : 0;
  check_cols(cond_cols, d_cond_, "generate(cond)");
  if (cond_cols > 0) check_rows(noise.rows(), cond.rows(), "generate");
  return mlp.forward(tape, concat(tape, noise, cond));
}

Critic::Critic(const std::string& name, Index genes, Index d_cond, Index hidden, Rng& rng, double slope)
    : mlp(name, {genes + d_cond, hidden, hidden, 1}, nn::Activation::kLeakyRelu, rng, slope),
      genes_(genes),
      d_cond_(d_cond) {}

Var Critic::forward(Tape& tape, const Var& x, const Var& cond) {
  check_cols(x.cols(), genes_, "critic_score(x)");
  const Index cond_cols = cond.valid() ? cond.cols() : 0;
  check_cols(cond_cols, d_cond_, "critic_score(cond)");
  if (cond_cols > 0) check_rows(x.rows(), cond.rows(), "critic_score");
  return mlp.forward(tape, concat(tape, x, cond));
}

Matrix generate(Generator& gen, const Matrix& noise, const Matrix& cond) {
  Tape tape(false);
  Var c = cond.cols() > 0 ? tape.constant(cond) : Var();
  return gen.forward(tape, tape.constant(noise), c).value();
}

Vector critic_score(Critic& critic, const Matrix& x, const Matrix& cond) {
  Tape tape(false);
  Var c = cond.cols() > 0 ? tape.constant(cond) : Var();
  return critic.forward(tape, tape.constant(x), c).value().col(0);
}

Matrix critic_input_gradient(Critic& critic, const Matrix& x, const Matrix& cond) {
  check_cols(x.cols(), critic.genes(), "critic_input_gradient(x)");
  check_cols(cond.cols(), critic.d_cond(), "critic_input_gradient(cond)");
  if (cond.cols() > 0) check_rows(x.rows(), cond.rows(), "critic_input_gradient");
  Tape tape(false);
  return critic.mlp.input_gradient(tape, concat(x, cond), critic.genes()).value();
}

Var gradient_penalty(Tape& tape, Critic& critic, const Matrix& real, const Matrix& fake, const Matrix& cond,
                     const Vector& eps) {
  check_rows(real.rows(), fake.rows(), "gradient_penalty");
  check_rows(real.rows(), eps.size(), "gradient_penalty(eps)");
  check_cols(real.cols(), critic.genes(), "gradient_penalty(real)");
  check_cols(fake.cols(), critic.genes(), "gradient_penalty(fake)");
  check_cols(cond.cols(), critic.d_cond(), "gradient_penalty(cond)");
  if (cond.cols() > 0) check_rows(real.rows(), cond.rows(), "gradient_penalty(cond)");
  Matrix mixed = real;
  for (Index r = 0; r < real.rows(); ++r) {
    mixed.row(r) = eps(r) * real.row(r) + (1.0 - eps(r)) * fake.row(r);
  }
  Var grad = critic.mlp.input_gradient(tape, concat(mixed, cond), critic.genes());
  return nn::mean(nn::square(nn::add_scalar(nn::row_norm(grad), -1.0)));
}

double gradient_penalty(Critic& critic, const Matrix& real, const Matrix& fake, const Matrix& cond,
                        const Vector& eps) {
  Tape tape(false);
  return gradient_penalty(tape, critic, real, fake, cond, eps).value()(0, 0);
}

Vector gaussian_kl(const Matrix& mu, const Matrix& logvar) {
  check_rows(mu.rows(), logvar.rows(), "gaussian_kl");
  check_cols(logvar.cols(), mu.cols(), "gaussian_kl");
  return 0.5 * (mu.array().square() + logvar.array().exp() - 1.0 - logvar.array()).rowwise().sum().matrix();
}

Var gaussian_kl(const Var& mu, const Var& logvar) {
  check_rows(mu.rows(), logvar.rows(), "gaussian_kl");
  check_cols(logvar.cols(), mu.cols(), "gaussian_kl");
  Var terms = nn::sub(nn::add(nn::square(mu), nn::exp(logvar)), nn::add_scalar(logvar, 1.0));
  Tape& tape = mu.tape();
  Var ones = tape.constant(Matrix::Constant(mu.cols(), 1, 0.5));
  return nn::matmul(terms, ones);
}

}  // namespace gemmgan::gan
