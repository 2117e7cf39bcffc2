#include "dapa/objective.hpp"

namespace dapa::obj {

namespace {

double mse_n(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw DimensionError("loss: shape mismatch");
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    acc += d * d;
  }
  return acc / double(a.size());
}

// Missing keypoints stay masked out even when soft weighting is off.
double weight_of(double conf, bool soft) {
  return soft ? conf : (conf > 0.0 ? 1.0 : 0.0);
}

Tensor aligned(const Tensor& x) {
  Tensor out = x;
  const int n = x.shape[0];
  for (int i = 0; i < n; ++i)
    for (int c = 0; c < 3; ++c) out.at(i, c) = x.at(i, c) - x.at(0, c);
  return out;
}

double rotdist(const Tensor& theta_a, const Tensor& theta_b) {
  if (theta_a.size() != theta_b.size() || theta_a.size() % 3 != 0)
    throw DimensionError("rotdist: pose vectors must match, length 3k");
  const int n = theta_a.size() / 3;
  double acc = 0.0;
  for (int j = 0; j < n; ++j) {
    double ra[9], rb[9];
    kern::rodrigues(theta_a.values.data() + 3 * j, ra);
    kern::rodrigues(theta_b.values.data() + 3 * j, rb);
    for (int k = 0; k < 9; ++k) {
      const double d = ra[k] - rb[k];
      acc += d * d;
    }
  }
  return acc / double(n);
}

}  // namespace

void LossWeights::validate() const {
  if (lambda_2d < 0 || lambda_3d < 0 || lambda_theta < 0 || lambda_beta < 0)
    throw ContractError("LossWeights: weights must be nonnegative");
}

double loss_real(const Tensor& j_reg, const Tensor& j_gt, const Tensor& conf,
                 const LossWeights& w) {
  if (!j_reg.same_shape(j_gt) || j_reg.rank() != 2 || j_reg.shape[1] != 2 ||
      conf.size() != j_reg.shape[0])
    throw DimensionError("loss_real: shapes do not match");
  double num = 0.0, den = 0.0;
  for (int i = 0; i < conf.size(); ++i) {
    const double c = weight_of(conf[i], w.conf_weighting);
    const double dx = j_reg.at(i, 0) - j_gt.at(i, 0);
    const double dy = j_reg.at(i, 1) - j_gt.at(i, 1);
    num += c * (dx * dx + dy * dy);
    den += c;
  }
  return den > 0.0 ? w.lambda_2d * num / den : 0.0;
}

SynTerms loss_syn(const SynPrediction& pred, const aug::SyntheticSample& target,
                  const LossWeights& w) {
  SynTerms t;
  t.j2d = w.lambda_2d * mse_n(pred.joints2d, target.joints2d);
  t.j3d = w.lambda_3d * mse_n(aligned(pred.joints3d), aligned(target.joints3d));
  t.theta = w.lambda_theta * rotdist(pred.body_pose, target.body_pose);
  t.beta = w.lambda_beta * mse_n(pred.beta, target.beta);
  t.total = t.j2d + t.j3d + t.theta + t.beta;
  return t;
}

LossReport total_loss(const std::vector<RealPair>& real_batch,
                      const std::vector<SynPair>& syn_batch,
                      const LossWeights& w) {
  w.validate();
  LossReport rep;
  rep.real_count = int(real_batch.size());
  rep.syn_count = int(syn_batch.size());
  for (const auto& p : real_batch)
    rep.real_2d += loss_real(p.j_reg, p.j_gt, p.conf, w);
  if (!real_batch.empty()) rep.real_2d /= double(real_batch.size());
  for (const auto& p : syn_batch) {
    const SynTerms t = loss_syn(p.pred, p.target, w);
    rep.syn_2d += t.j2d;
    rep.syn_3d += t.j3d;
    rep.syn_theta += t.theta;
    rep.syn_beta += t.beta;
  }
  if (!syn_batch.empty()) {
    const double inv = 1.0 / double(syn_batch.size());
    rep.syn_2d *= inv;
    rep.syn_3d *= inv;
    rep.syn_theta *= inv;
    rep.syn_beta *= inv;
  }
  rep.total = rep.real_2d + rep.syn_2d + rep.syn_3d + rep.syn_theta +
              rep.syn_beta;
  return rep;
}

Var loss_real(Tape& tape, Var j2d, const Tensor& j_gt, const Tensor& conf,
              const LossWeights& w) {
  const Tensor& v = tape.value(j2d);
  if (!v.same_shape(j_gt) || conf.size() != v.shape[0])
    throw DimensionError("loss_real: shapes do not match");
  const int k = conf.size();
  Tensor weights = Tensor::zeros({k, 2});
  double den = 0.0;
  for (int i = 0; i < k; ++i) {
    const double c = weight_of(conf[i], w.conf_weighting);
    weights.at(i, 0) = c;
    weights.at(i, 1) = c;
    den += c;
  }
  if (den <= 0.0) return tape.leaf(Tensor::scalar(0.0));
  const Var d = tape.sub(j2d, tape.leaf(j_gt));
  const Var sq = tape.mul(d, d);
  return tape.scale(tape.sum(tape.mul(sq, tape.leaf(weights))),
                    w.lambda_2d / den);
}

SynTermVars loss_syn(Tape& tape, Var j2d, Var j3d, Var body_pose, Var beta,
                     const aug::SyntheticSample& target, const LossWeights& w) {
  SynTermVars t;
  t.j2d = tape.scale(tape.mse(j2d, tape.leaf(target.joints2d)), w.lambda_2d);

  const Var ap = tape.sub_rowvec(j3d, tape.slice_row(j3d, 0));
  t.j3d = tape.scale(tape.mse(ap, tape.leaf(aligned(target.joints3d))),
                     w.lambda_3d);

  const int n = tape.value(body_pose).size() / 3;
  if (target.body_pose.size() != 3 * n)
    throw DimensionError("loss_syn: pose dims do not match");
  Var acc{};
  for (int j = 0; j < n; ++j) {
    Tensor rt = Tensor::zeros({3, 3});
    kern::rodrigues(target.body_pose.values.data() + 3 * j, rt.values.data());
    const Var diff = tape.sub(tape.rodrigues(tape.subvec(body_pose, 3 * j, 3)),
                              tape.leaf(rt));
    const Var f = tape.sum(tape.mul(diff, diff));
    acc = j == 0 ? f : tape.add(acc, f);
  }
  t.theta = tape.scale(acc, w.lambda_theta / double(n));

  t.beta = tape.scale(tape.mse(beta, tape.leaf(target.beta)), w.lambda_beta);

  t.total = tape.add(tape.add(t.j2d, t.j3d), tape.add(t.theta, t.beta));
  return t;
}

}  // namespace dapa::obj
