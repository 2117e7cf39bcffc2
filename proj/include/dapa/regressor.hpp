#pragma once

#include <cmath>
#include <vector>

#include "dapa/camera.hpp"
#include "dapa/datagen.hpp"
#include "dapa/nn.hpp"
#include "dapa/obs.hpp"

namespace dapa::reg {

// Flat parameter vector shared by the refiner, its initialization, and the
// checkpoints: [body_pose | orient | beta | cam(raw_scale, tx, ty)]. The
// camera slot stores the softplus preimage, so any raw value the network
// emits maps to a positive scale.
struct ParamLayout {
  int pose = 0;
  int pose_len = 0;
  int orient = 0;
  int beta = 0;
  int beta_len = 0;
  int cam = 0;
  int total = 0;

  static ParamLayout make(int joints, int shape_dims);
};

struct RegressorConfig {
  int obs_dim = 51;  // 17 keypoints x (x, y, conf)
  int joints = 17;
  int shape_dims = 10;
  std::vector<int> hidden = {256, 256};
  int iterations = 3;

  ParamLayout layout() const { return ParamLayout::make(joints, shape_dims); }
  void validate() const;
};

struct RegressorParams {
  RegressorConfig cfg;
  MLPParams mlp;       // [obs; params] -> param delta
  Tensor mean_params;  // {layout.total} iteration-0 estimate, raw space

  static RegressorParams make(const RegressorConfig& cfg, Rng& rng);
  void validate() const;
  std::vector<Tensor*> trainable() { return mlp.tensors(); }
  std::vector<const Tensor*> trainable() const { return mlp.tensors(); }
};

struct RegressorOutput {
  Tensor body_pose;  // {3(J-1)}
  Tensor orient;     // {3}
  Tensor beta;       // {K}
  cam::WeakPerspective camera;
  std::vector<Tensor> trace;  // raw estimates p_0 .. p_T
};

inline double softplus_inv(double y) {
  if (!(y > 0.0)) throw ContractError("softplus_inv: argument must be > 0");
  return y > 30.0 ? y : std::log(std::expm1(y));
}

Tensor pack_params(const data::BodyParams& p, const ParamLayout& lay);
RegressorOutput unpack_params(const Tensor& raw, const RegressorConfig& cfg);

// Elementwise ground-truth mean over a labeled dataset, taken in natural
// units; only the camera scale is then pushed through softplus_inv.
Tensor init_mean_params(const data::Dataset& source, const RegressorConfig& cfg);

RegressorOutput regress(const RegressorParams& params, const Observation& obs);

// ---- tape twins ----

// obs_rows {B, obs_dim} -> raw estimates {B, total}. Batching the refinement
// across the MLP keeps the per-step cost in a few large matmuls.
Var regress_rows(Tape& tape, const MLPVars& vars, const RegressorParams& params,
                 const Tensor& obs_rows);

struct RegressVars {
  Var raw;        // {total}
  Var body_pose;  // {3(J-1)}
  Var orient;     // {3}
  Var beta;       // {K}
  Var cam_scale;  // {1}, positive
  Var cam_trans;  // {2}
};

RegressVars unpack_row(Tape& tape, Var raw_rows, int row,
                       const RegressorConfig& cfg);

RegressVars regress(Tape& tape, const MLPVars& vars,
                    const RegressorParams& params, const Observation& obs);

}  // namespace dapa::reg
