#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "dapa/augment.hpp"
#include "dapa/body.hpp"
#include "dapa/objective.hpp"
#include "dapa/prior.hpp"
#include "dapa/regressor.hpp"

namespace dapa::train {

enum class Phase { pretrain, adapt };

enum class AdaptMode {
  ft2d,         // 2D reprojection finetuning only
  dapa,         // full latent-perturbation augmentation
  zero_perturb, // augmentation with s forced to 0
  random_pose,  // synthetics drawn from the prior, ignoring predictions
  real_only,    // alias of ft2d, kept as an explicit ablation name
  syn_only,     // drops the real 2D term, keeps the synthetic stream
};

std::string to_string(AdaptMode mode);
AdaptMode adapt_mode_from_string(const std::string& s);

struct TrainConfig {
  Phase phase = Phase::pretrain;
  AdaptMode mode = AdaptMode::dapa;
  int steps = 800;
  int batch = 32;
  double lr = 1e-3;
  obj::LossWeights weights;
  aug::AugmentConfig augment;
  int eval_interval = 0;  // 0 disables in-loop evaluation
  std::uint64_t seed = 0;

  void validate() const;
};

struct StepLog {
  long step = 0;
  double loss_total = 0.0;
  double loss_real = 0.0;
  double loss_syn_2d = 0.0;
  double loss_syn_3d = 0.0;
  double loss_syn_theta = 0.0;
  double loss_syn_beta = 0.0;
  double mean_latent_norm = 0.0;  // nan when the step had no augmentation
  double eval_mpjpe = 0.0;        // nan when not evaluated this step
  int real_count = 0;
  int syn_count = 0;
};

struct History {
  std::vector<StepLog> steps;
  void write_csv(std::ostream& os) const;
  void write_csv(const std::filesystem::path& path) const;
};

// Mutable training state threaded through pretrain/adapt and captured by
// checkpoints. Streams are derived per (purpose, step), so the base RNG
// state never advances and resumption replays draws exactly.
struct SessionState {
  reg::RegressorParams params;
  AdamState adam;
  std::array<std::uint64_t, 4> rng_state{};
  long step = 0;
};

SessionState make_session(reg::RegressorParams params, const TrainConfig& cfg);

// Full-supervision pretraining on a labeled source dataset. Runs steps
// [state.step, cfg.steps); a fresh session runs them all.
History pretrain(SessionState& state, const data::Dataset& source,
                 const body::KinematicTree& tree, const TrainConfig& cfg);

// Weak 2D adaptation on target with optional synthetic augmentation per
// cfg.mode. eval_set supplies in-loop MPJPE snapshots when eval_interval > 0.
History adapt(SessionState& state, const data::Dataset& target,
              const prior::PriorParams& prior, const body::KinematicTree& tree,
              const TrainConfig& cfg, const data::Dataset* eval_set = nullptr);

struct EvalSummary {
  double mpjpe = 0.0;     // natural units
  double pa_mpjpe = 0.0;
  double pck = 0.0;       // fraction of keypoints within alpha * torso
  double alpha = 0.2;
  int count = 0;
  std::vector<double> per_sample_mpjpe;
};

EvalSummary evaluate(const reg::RegressorParams& params,
                     const data::Dataset& ds, const body::KinematicTree& tree,
                     double alpha = 0.2);

// ---- persistence ----

struct Checkpoint {
  int version = 1;
  std::string tree_fingerprint;
  std::string prior_ref;
  std::string config_json;
  reg::RegressorParams params;
  AdamState adam;
  std::array<std::uint64_t, 4> rng_state{};
  long step = 0;
};

Checkpoint make_checkpoint(const SessionState& state,
                           std::string tree_fingerprint, std::string prior_ref,
                           std::string config_json);
SessionState session_from(const Checkpoint& ckpt);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dapa::train
