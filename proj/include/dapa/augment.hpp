#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <utility>

#include "dapa/body.hpp"
#include "dapa/camera.hpp"
#include "dapa/obs.hpp"
#include "dapa/prior.hpp"
#include "dapa/rng.hpp"

namespace dapa::aug {

struct AugmentConfig {
  enum class Mode { dapa, zero_perturb, random_pose };

  Mode mode = Mode::dapa;
  double s = 0.5;  // latent noise scale; 0.1 is the low-shift preset
  bool use_posterior_mean = false;  // skip posterior sampling, embed at mu
  bool sample_shape = false;  // draw beta fresh instead of inheriting it
  double shape_std = 0.2;

  void validate() const;
};

std::string to_string(AugmentConfig::Mode mode);
AugmentConfig::Mode mode_from_string(const std::string& s);

struct Provenance {
  int source_id = -1;
  AugmentConfig::Mode mode = AugmentConfig::Mode::dapa;
  Tensor z{{0}, {}};        // posterior draw; empty in random_pose mode
  Tensor z_tilde{{0}, {}};  // latent actually decoded
  Tensor eps{{0}, {}};      // uniform noise; empty in random_pose mode
};

// Core of the augmentation: z_tilde_i = z_i * (1 + s * eps_i). Since
// 1 + s*eps >= 1, every component keeps its sign and gains magnitude.
Tensor apply_perturbation(const Tensor& z, double s, const Tensor& eps);

// Draws eps ~ U[0,1]^d fresh and applies it. Returns (z_tilde, eps).
std::pair<Tensor, Tensor> perturb_latent(const Tensor& z, double s, Rng& rng);

// Produces a synthetic pose from the regressor's current estimate:
//   dapa         encode, sample the posterior, perturb outward, decode
//   zero_perturb same pipeline with s forced to 0
//   random_pose  decode z ~ N(0, I), ignoring theta_reg entirely
// A non-finite intermediate is resampled once, then reported as an error.
std::pair<Tensor, Provenance> dapa_augment(const prior::PriorParams& prior,
                                           const Tensor& theta_reg,
                                           const AugmentConfig& cfg, Rng& rng);

// Detached regressor outputs the synthetic sample inherits.
struct RegressionContext {
  Tensor beta;    // {S}
  Tensor orient;  // {3}
  cam::WeakPerspective camera;
};

struct SyntheticSample {
  Tensor body_pose;
  Tensor orient;
  Tensor beta;
  cam::WeakPerspective camera;
  Tensor joints3d;  // {J,3}
  Tensor joints2d;  // {J,2}, equals project(joints3d, camera) exactly
  Observation obs;  // noise-free keypoints of joints2d, confidence 1
  Provenance provenance;
};

// Runs FK and projection so that every stored target is reproducible from
// the stored parameters. rng is only consumed when cfg.sample_shape is set.
SyntheticSample make_synthetic_example(const body::KinematicTree& tree,
                                       const Tensor& theta_syn,
                                       const RegressionContext& ctx,
                                       const AugmentConfig& cfg, Rng& rng,
                                       Provenance prov = {});

// One diagnostics line: {"id":..,"mode":..,"z_norm":..,"z_tilde_norm":..}
void append_provenance_jsonl(std::ostream& os, const Provenance& prov);

}  // namespace dapa::aug
