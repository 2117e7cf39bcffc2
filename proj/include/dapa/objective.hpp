#pragma once

#include <vector>

#include "dapa/augment.hpp"
#include "dapa/tape.hpp"
#include "dapa/tensor.hpp"

namespace dapa::obj {

struct LossWeights {
  double lambda_2d = 5.0;
  double lambda_3d = 5.0;
  double lambda_theta = 1.0;
  double lambda_beta = 0.001;
  // Confidence weighting of the real 2D term; off treats every visible
  // keypoint equally.
  bool conf_weighting = true;

  void validate() const;
};

struct SynTerms {
  double j2d = 0.0;
  double j3d = 0.0;
  double theta = 0.0;
  double beta = 0.0;
  double total = 0.0;
};

struct LossReport {
  double total = 0.0;
  double real_2d = 0.0;
  double syn_2d = 0.0;
  double syn_3d = 0.0;
  double syn_theta = 0.0;
  double syn_beta = 0.0;
  int real_count = 0;
  int syn_count = 0;
};

// Confidence-weighted reprojection error:
//   lambda_2d * sum_i conf_i * |d_i|^2 / sum_i conf_i.
// A sample whose keypoints are all missing contributes nothing.
double loss_real(const Tensor& j_reg, const Tensor& j_gt, const Tensor& conf,
                 const LossWeights& w);

struct SynPrediction {
  Tensor joints2d;   // {K,2}
  Tensor joints3d;   // {K,3}
  Tensor body_pose;  // {3(J-1)}
  Tensor beta;
};

// Full-supervision loss against a synthesized target: 2D and pelvis-aligned
// 3D keypoints as per-element MSE, pose as mean squared Frobenius distance
// between per-joint rotation matrices (orient excluded), shape as MSE.
SynTerms loss_syn(const SynPrediction& pred, const aug::SyntheticSample& target,
                  const LossWeights& w);

struct RealPair {
  Tensor j_reg;  // {K,2}
  Tensor j_gt;   // {K,2}
  Tensor conf;   // {K}
};

struct SynPair {
  SynPrediction pred;
  aug::SyntheticSample target;
};

// Batch means of the two streams; an empty batch contributes zero, so the
// single-stream ablations fall out for free.
LossReport total_loss(const std::vector<RealPair>& real_batch,
                      const std::vector<SynPair>& syn_batch,
                      const LossWeights& w);

// ---- tape twins ----

Var loss_real(Tape& tape, Var j2d, const Tensor& j_gt, const Tensor& conf,
              const LossWeights& w);

struct SynTermVars {
  Var j2d;
  Var j3d;
  Var theta;
  Var beta;
  Var total;
};

SynTermVars loss_syn(Tape& tape, Var j2d, Var j3d, Var body_pose, Var beta,
                     const aug::SyntheticSample& target, const LossWeights& w);

}  // namespace dapa::obj
