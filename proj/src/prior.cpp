#include "dapa/prior.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace dapa::prior {

namespace {
// Substream purposes for training draws; keyed with the step index so a
// resumed run replays the identical stream.
enum : std::uint64_t { kBatchDraw = 1, kNoiseDraw = 2 };
}  // namespace

PriorParams PriorParams::make(const PriorConfig& cfg, Rng& rng) {
  PriorParams p;
  std::vector<int> enc_dims = {cfg.pose_dim};
  enc_dims.insert(enc_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  enc_dims.push_back(2 * cfg.latent_dim);
  std::vector<int> dec_dims = {cfg.latent_dim};
  dec_dims.insert(dec_dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dec_dims.push_back(cfg.pose_dim);
  p.encoder = MLPParams::make(enc_dims, rng);
  p.decoder = MLPParams::make(dec_dims, rng);
  p.latent_dim = cfg.latent_dim;
  p.validate();
  return p;
}

void PriorParams::validate() const {
  encoder.validate();
  decoder.validate();
  if (latent_dim <= 0)
    throw ContractError("PriorParams: latent_dim must be positive");
  if (encoder.output_dim() != 2 * latent_dim)
    throw DimensionError("PriorParams: encoder must emit 2*latent_dim values");
  if (decoder.input_dim() != latent_dim)
    throw DimensionError("PriorParams: decoder must consume latent_dim values");
  if (decoder.output_dim() != encoder.input_dim())
    throw DimensionError("PriorParams: decoder output != encoder input");
}

PosteriorParams encode(const PriorParams& prior, const Tensor& pose) {
  if (pose.rank() != 1 || pose.size() != prior.pose_dim())
    throw DimensionError("encode: pose must be a {" +
                         std::to_string(prior.pose_dim()) + "} vector, got " +
                         pose.shape_str());
  const Tensor out = forward_mlp(prior.encoder, pose);
  const int d = prior.latent_dim;
  PosteriorParams post;
  post.mu = Tensor::zeros({d});
  post.sigma = Tensor::zeros({d});
  for (int i = 0; i < d; ++i) {
    post.mu[i] = out[i];
    post.sigma[i] = std::exp(out[d + i]);
  }
  if (!all_finite(post.mu.values) || !all_finite(post.sigma.values))
    throw NumericalError("encode: non-finite posterior");
  return post;
}

Tensor sample_posterior(const PosteriorParams& post, Rng& rng) {
  if (!post.mu.same_shape(post.sigma))
    throw DimensionError("sample_posterior: mu/sigma shape mismatch");
  Tensor z = post.mu;
  for (int i = 0; i < z.size(); ++i) z[i] += post.sigma[i] * rng.normal();
  return z;
}

Tensor decode(const PriorParams& prior, const Tensor& z) {
  if (z.rank() != 1 || z.size() != prior.latent_dim)
    throw DimensionError("decode: latent must be a {" +
                         std::to_string(prior.latent_dim) + "} vector");
  Tensor pose = forward_mlp(prior.decoder, z);
  for (double& x : pose.values) x = std::numbers::pi * std::tanh(x);
  return pose;
}

Var decode(Tape& tape, const MLPVars& dec_vars, const PriorParams& prior,
           Var z) {
  Var raw = forward_mlp(tape, dec_vars, prior.decoder, z);
  return tape.scale(tape.tanh_(raw), std::numbers::pi);
}

double kl_divergence(const PosteriorParams& post) {
  double acc = 0.0;
  for (int i = 0; i < post.mu.size(); ++i) {
    const double s = post.sigma[i], m = post.mu[i];
    if (!(s > 0.0)) throw ContractError("kl_divergence: sigma must be > 0");
    acc += s * s + m * m - 1.0 - 2.0 * std::log(s);
  }
  return 0.5 * acc;
}

std::pair<PriorParams, PriorTrainReport> train_prior(
    const std::vector<Tensor>& corpus, const PriorConfig& cfg) {
  if (corpus.empty()) throw ContractError("train_prior: empty corpus");
  for (const Tensor& t : corpus)
    if (t.rank() != 1 || t.size() != cfg.pose_dim)
      throw DimensionError("train_prior: corpus pose has shape " +
                           t.shape_str() + ", expected {" +
                           std::to_string(cfg.pose_dim) + "}");

  Rng rng(cfg.seed);
  PriorParams prior = PriorParams::make(cfg, rng);
  std::vector<Tensor*> enc_t = prior.encoder.tensors();
  std::vector<Tensor*> dec_t = prior.decoder.tensors();
  std::vector<Tensor*> all = enc_t;
  all.insert(all.end(), dec_t.begin(), dec_t.end());
  AdamState adam = AdamState::make(cfg.lr, total_size(all));

  const int d = cfg.latent_dim;
  const int b = std::min<int>(cfg.batch, int(corpus.size()));
  PriorTrainReport report;
  report.loss_history.reserve(size_t(cfg.steps));

  for (int step = 0; step < cfg.steps; ++step) {
    Rng batch_rng = rng.substream(kBatchDraw, std::uint64_t(step));
    Rng noise_rng = rng.substream(kNoiseDraw, std::uint64_t(step));
    Tensor batch = Tensor::zeros({b, cfg.pose_dim});
    for (int r = 0; r < b; ++r) {
      const auto idx = batch_rng.uniform_index(corpus.size());
      const Tensor& pose = corpus[idx];
      for (int c = 0; c < cfg.pose_dim; ++c) batch.at(r, c) = pose[c];
    }
    Tensor noise = Tensor::zeros({b, d});
    for (double& x : noise.values) x = noise_rng.normal();

    Tape tape;
    MLPVars enc = make_leaves(tape, prior.encoder);
    MLPVars dec = make_leaves(tape, prior.decoder);
    Var x = tape.leaf(batch);
    Var eo = forward_mlp(tape, enc, prior.encoder, x);
    Var mu = tape.slice_cols(eo, 0, d);
    Var lsig = tape.slice_cols(eo, d, d);
    Var sig = tape.exp_(lsig);
    Var z = tape.add(mu, tape.mul(sig, tape.leaf(noise)));
    Var recon = decode(tape, dec, prior, z);
    Var lrec = tape.mse(recon, x);
    Var kl_terms = tape.add(tape.add(tape.mul(sig, sig), tape.mul(mu, mu)),
                            tape.add_scalar(tape.scale(lsig, -2.0), -1.0));
    Var kl = tape.scale(tape.sum(kl_terms), 0.5 / double(b));
    Var loss = tape.add(lrec, tape.scale(kl, cfg.beta_kl));

    const double value = tape.scalar_value(loss);
    if (!std::isfinite(value))
      throw NumericalError("train_prior: loss diverged at step " +
                           std::to_string(step));
    report.loss_history.push_back(value);

    tape.backward(loss);
    std::vector<double> grads;
    grads.reserve(size_t(adam.m.size()));
    append_grads(tape, enc, grads);
    append_grads(tape, dec, grads);
    std::vector<double> flat = flatten(all);
    if (!adam_step(adam, flat, grads))
      throw NumericalError("train_prior: non-finite gradient at step " +
                           std::to_string(step));
    unflatten(flat, all);
  }
  report.final_loss =
      report.loss_history.empty() ? 0.0 : report.loss_history.back();
  return {std::move(prior), std::move(report)};
}

}  // namespace dapa::prior
