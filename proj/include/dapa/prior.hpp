#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "dapa/nn.hpp"
#include "dapa/rng.hpp"
#include "dapa/tensor.hpp"

namespace dapa::prior {

struct PriorConfig {
  int pose_dim = 48;
  int latent_dim = 8;
  std::vector<int> hidden = {128, 128};
  double beta_kl = 0.005;
  double lr = 1e-3;
  int steps = 3000;
  int batch = 64;
  std::uint64_t seed = 1;
};

// VAE over flat body-pose vectors. The encoder emits [mu | log sigma]; the
// decoder output is squashed through pi*tanh so any latent, including
// perturbed ones far outside the training shell, decodes to a valid
// axis-angle range.
struct PriorParams {
  MLPParams encoder;  // pose_dim -> 2*latent_dim
  MLPParams decoder;  // latent_dim -> pose_dim
  int latent_dim = 0;

  static PriorParams make(const PriorConfig& cfg, Rng& rng);
  int pose_dim() const { return encoder.input_dim(); }
  void validate() const;
};

struct PosteriorParams {
  Tensor mu;     // {d}
  Tensor sigma;  // {d} standard deviations
};

PosteriorParams encode(const PriorParams& prior, const Tensor& pose);

// Reparameterized draw z = mu + sigma * n, n ~ N(0, I).
Tensor sample_posterior(const PosteriorParams& post, Rng& rng);

Tensor decode(const PriorParams& prior, const Tensor& z);

// Tape twin of decode for gradient flow through synthetic targets.
Var decode(Tape& tape, const MLPVars& dec_vars, const PriorParams& prior,
           Var z);

double kl_divergence(const PosteriorParams& post);

struct PriorTrainReport {
  std::vector<double> loss_history;
  double final_loss = 0.0;
};

// Adam on mean squared reconstruction + beta_kl * KL against N(0, I).
// Throws NumericalError when the loss leaves the finite range.
std::pair<PriorParams, PriorTrainReport> train_prior(
    const std::vector<Tensor>& corpus, const PriorConfig& cfg);

}  // namespace dapa::prior
