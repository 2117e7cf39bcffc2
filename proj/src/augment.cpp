#include "dapa/augment.hpp"

#include <cmath>
#include <json.hpp>

namespace dapa::aug {

namespace {

double norm(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.values) acc += x * x;
  return std::sqrt(acc);
}

}  // namespace

void AugmentConfig::validate() const {
  if (s < 0.0) throw ContractError("augment noise scale must be nonnegative");
  if (shape_std < 0.0) throw ContractError("shape std must be nonnegative");
  switch (mode) {
    case Mode::dapa:
    case Mode::zero_perturb:
    case Mode::random_pose:
      break;
    default:
      throw ContractError("invalid augment mode");
  }
}

std::string to_string(AugmentConfig::Mode mode) {
  switch (mode) {
    case AugmentConfig::Mode::dapa:
      return "dapa";
    case AugmentConfig::Mode::zero_perturb:
      return "zero_perturb";
    case AugmentConfig::Mode::random_pose:
      return "random_pose";
  }
  throw ContractError("invalid augment mode");
}

AugmentConfig::Mode mode_from_string(const std::string& s) {
  if (s == "dapa") return AugmentConfig::Mode::dapa;
  if (s == "zero_perturb" || s == "zero-perturb")
    return AugmentConfig::Mode::zero_perturb;
  if (s == "random_pose" || s == "random-pose")
    return AugmentConfig::Mode::random_pose;
  throw ConfigError("unknown augment mode \"" + s + "\"");
}

Tensor apply_perturbation(const Tensor& z, double s, const Tensor& eps) {
  if (s < 0.0) throw ContractError("perturbation scale must be nonnegative");
  if (!z.same_shape(eps))
    throw DimensionError("perturbation noise shape mismatch");
  Tensor out = z;
  for (int i = 0; i < out.size(); ++i) out[i] = z[i] * (1.0 + s * eps[i]);
  return out;
}

std::pair<Tensor, Tensor> perturb_latent(const Tensor& z, double s, Rng& rng) {
  Tensor eps = Tensor::zeros(z.shape);
  for (double& e : eps.values) e = rng.uniform01();
  return {apply_perturbation(z, s, eps), std::move(eps)};
}

std::pair<Tensor, Provenance> dapa_augment(const prior::PriorParams& prior,
                                           const Tensor& theta_reg,
                                           const AugmentConfig& cfg, Rng& rng) {
  cfg.validate();
  prior.validate();

  const auto attempt = [&]() -> std::pair<Tensor, Provenance> {
    Provenance prov;
    prov.mode = cfg.mode;
    Tensor z_tilde;
    if (cfg.mode == AugmentConfig::Mode::random_pose) {
      z_tilde = Tensor::zeros({prior.latent_dim});
      for (double& v : z_tilde.values) v = rng.normal();
    } else {
      if (!all_finite(theta_reg.values))
        throw NumericalError("regressed pose is not finite");
      const prior::PosteriorParams post = prior::encode(prior, theta_reg);
      Tensor z = cfg.use_posterior_mean ? post.mu
                                        : prior::sample_posterior(post, rng);
      const double s = cfg.mode == AugmentConfig::Mode::zero_perturb ? 0.0
                                                                     : cfg.s;
      auto [zt, eps] = perturb_latent(z, s, rng);
      prov.z = std::move(z);
      prov.eps = std::move(eps);
      z_tilde = std::move(zt);
    }
    Tensor theta = prior::decode(prior, z_tilde);
    if (!all_finite(theta.values) || !all_finite(z_tilde.values))
      throw NumericalError("augmentation produced non-finite values");
    prov.z_tilde = std::move(z_tilde);
    return {std::move(theta), std::move(prov)};
  };

  try {
    return attempt();
  } catch (const NumericalError&) {
    // one fresh resample, then give up
  }
  try {
    return attempt();
  } catch (const NumericalError&) {
    throw NumericalError(
        "dapa_augment: non-finite intermediates persisted after resampling");
  }
}

SyntheticSample make_synthetic_example(const body::KinematicTree& tree,
                                       const Tensor& theta_syn,
                                       const RegressionContext& ctx,
                                       const AugmentConfig& cfg, Rng& rng,
                                       Provenance prov) {
  if (theta_syn.size() != tree.pose_dims())
    throw DimensionError("synthetic pose dimension does not match tree");
  SyntheticSample out;
  out.body_pose = theta_syn;
  out.orient = ctx.orient;
  out.camera = ctx.camera;
  if (cfg.sample_shape) {
    out.beta = Tensor::zeros({tree.shape_dims()});
    for (double& b : out.beta.values) b = cfg.shape_std * rng.normal();
  } else {
    out.beta = ctx.beta;
  }
  const body::BodyState state =
      body::forward_kinematics(tree, out.body_pose, out.orient, out.beta);
  out.joints3d = state.joints;
  out.joints2d = cam::project(out.joints3d, out.camera);
  out.obs = Observation::from_keypoints(out.joints2d,
                                        Tensor::full({tree.joints}, 1.0));
  out.provenance = std::move(prov);
  return out;
}

void append_provenance_jsonl(std::ostream& os, const Provenance& prov) {
  nlohmann::json j;
  j["id"] = prov.source_id;
  j["mode"] = to_string(prov.mode);
  j["z_norm"] = norm(prov.z);
  j["z_tilde_norm"] = norm(prov.z_tilde);
  os << j.dump() << "\n";
}

}  // namespace dapa::aug
