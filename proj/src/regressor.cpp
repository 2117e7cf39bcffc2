#include "dapa/regressor.hpp"

#include <algorithm>

namespace dapa::reg {

ParamLayout ParamLayout::make(int joints, int shape_dims) {
  ParamLayout lay;
  lay.pose = 0;
  lay.pose_len = 3 * (joints - 1);
  lay.orient = lay.pose_len;
  lay.beta = lay.orient + 3;
  lay.beta_len = shape_dims;
  lay.cam = lay.beta + shape_dims;
  lay.total = lay.cam + 3;
  return lay;
}

void RegressorConfig::validate() const {
  if (obs_dim < 1) throw ContractError("RegressorConfig: obs_dim must be >= 1");
  if (joints < 2) throw ContractError("RegressorConfig: need at least 2 joints");
  if (shape_dims < 1)
    throw ContractError("RegressorConfig: shape_dims must be >= 1");
  if (iterations < 1)
    throw ContractError("RegressorConfig: iterations must be >= 1");
  if (hidden.empty()) throw ContractError("RegressorConfig: hidden empty");
}

RegressorParams RegressorParams::make(const RegressorConfig& cfg, Rng& rng) {
  cfg.validate();
  const ParamLayout lay = cfg.layout();
  std::vector<int> dims;
  dims.push_back(cfg.obs_dim + lay.total);
  dims.insert(dims.end(), cfg.hidden.begin(), cfg.hidden.end());
  dims.push_back(lay.total);
  RegressorParams p;
  p.cfg = cfg;
  p.mlp = MLPParams::make(dims, rng);
  // Until init_mean_params runs, start from the rest pose under an identity
  // camera (raw scale solving softplus(raw) = 1).
  p.mean_params = Tensor::zeros({lay.total});
  p.mean_params[lay.cam] = softplus_inv(1.0);
  return p;
}

void RegressorParams::validate() const {
  cfg.validate();
  mlp.validate();
  const ParamLayout lay = cfg.layout();
  if (mlp.input_dim() != cfg.obs_dim + lay.total ||
      mlp.output_dim() != lay.total)
    throw DimensionError("RegressorParams: MLP dims do not match layout");
  if (mean_params.size() != lay.total)
    throw DimensionError("RegressorParams: mean_params size mismatch");
  if (!all_finite(mean_params.values))
    throw NumericalError("RegressorParams: non-finite mean_params");
}

Tensor pack_params(const data::BodyParams& p, const ParamLayout& lay) {
  if (p.body_pose.size() != lay.pose_len || p.orient.size() != 3 ||
      p.beta.size() != lay.beta_len)
    throw DimensionError("pack_params: field sizes do not match layout");
  Tensor raw = Tensor::zeros({lay.total});
  std::copy(p.body_pose.values.begin(), p.body_pose.values.end(),
            raw.values.begin() + lay.pose);
  std::copy(p.orient.values.begin(), p.orient.values.end(),
            raw.values.begin() + lay.orient);
  std::copy(p.beta.values.begin(), p.beta.values.end(),
            raw.values.begin() + lay.beta);
  raw[lay.cam] = softplus_inv(p.camera.scale);
  raw[lay.cam + 1] = p.camera.tx;
  raw[lay.cam + 2] = p.camera.ty;
  return raw;
}

RegressorOutput unpack_params(const Tensor& raw, const RegressorConfig& cfg) {
  const ParamLayout lay = cfg.layout();
  if (raw.size() != lay.total)
    throw DimensionError("unpack_params: raw size does not match layout");
  RegressorOutput out;
  auto seg = [&](int off, int len) {
    Tensor t = Tensor::zeros({len});
    std::copy(raw.values.begin() + off, raw.values.begin() + off + len,
              t.values.begin());
    return t;
  };
  out.body_pose = seg(lay.pose, lay.pose_len);
  out.orient = seg(lay.orient, 3);
  out.beta = seg(lay.beta, lay.beta_len);
  out.camera.scale = kern::softplus(raw[lay.cam]);
  out.camera.tx = raw[lay.cam + 1];
  out.camera.ty = raw[lay.cam + 2];
  return out;
}

Tensor init_mean_params(const data::Dataset& source,
                        const RegressorConfig& cfg) {
  if (source.samples.empty())
    throw ContractError("init_mean_params: empty dataset");
  const ParamLayout lay = cfg.layout();
  Tensor acc = Tensor::zeros({lay.total});
  for (const auto& s : source.samples) {
    const data::BodyParams& p = s.train_labels().params;
    if (p.body_pose.size() != lay.pose_len || p.beta.size() != lay.beta_len)
      throw DimensionError("init_mean_params: sample params mismatch layout");
    for (int i = 0; i < lay.pose_len; ++i) acc[lay.pose + i] += p.body_pose[i];
    for (int i = 0; i < 3; ++i) acc[lay.orient + i] += p.orient[i];
    for (int i = 0; i < lay.beta_len; ++i) acc[lay.beta + i] += p.beta[i];
    acc[lay.cam] += p.camera.scale;
    acc[lay.cam + 1] += p.camera.tx;
    acc[lay.cam + 2] += p.camera.ty;
  }
  const double inv = 1.0 / double(source.samples.size());
  for (double& v : acc.values) v *= inv;
  acc[lay.cam] = softplus_inv(acc[lay.cam]);
  return acc;
}

RegressorOutput regress(const RegressorParams& params, const Observation& obs) {
  if (obs.dim() != params.cfg.obs_dim)
    throw DimensionError("regress: observation dim does not match config");
  const ParamLayout lay = params.cfg.layout();
  Tensor p = params.mean_params;
  std::vector<Tensor> trace;
  trace.reserve(size_t(params.cfg.iterations) + 1);
  trace.push_back(p);
  Tensor x = Tensor::zeros({params.cfg.obs_dim + lay.total});
  std::copy(obs.values.values.begin(), obs.values.values.end(),
            x.values.begin());
  for (int t = 0; t < params.cfg.iterations; ++t) {
    std::copy(p.values.begin(), p.values.end(),
              x.values.begin() + params.cfg.obs_dim);
    const Tensor delta = forward_mlp(params.mlp, x);
    for (int i = 0; i < lay.total; ++i) p[i] += delta[i];
    trace.push_back(p);
  }
  RegressorOutput out = unpack_params(p, params.cfg);
  out.trace = std::move(trace);
  return out;
}

Var regress_rows(Tape& tape, const MLPVars& vars,
                 const RegressorParams& params, const Tensor& obs_rows) {
  if (obs_rows.rank() != 2 || obs_rows.shape[1] != params.cfg.obs_dim)
    throw DimensionError("regress_rows: obs_rows must be {B, obs_dim}");
  const int b = obs_rows.shape[0];
  const ParamLayout lay = params.cfg.layout();
  Tensor p0 = Tensor::zeros({b, lay.total});
  for (int r = 0; r < b; ++r)
    std::copy(params.mean_params.values.begin(),
              params.mean_params.values.end(),
              p0.values.begin() + size_t(r) * lay.total);
  const Var ox = tape.leaf(obs_rows);
  Var p = tape.leaf(std::move(p0));
  for (int t = 0; t < params.cfg.iterations; ++t)
    p = tape.add(p, forward_mlp(tape, vars, params.mlp,
                                tape.concat_cols(ox, p)));
  return p;
}

RegressVars unpack_row(Tape& tape, Var raw_rows, int row,
                       const RegressorConfig& cfg) {
  const ParamLayout lay = cfg.layout();
  RegressVars out;
  out.raw = tape.slice_row(raw_rows, row);
  out.body_pose = tape.subvec(out.raw, lay.pose, lay.pose_len);
  out.orient = tape.subvec(out.raw, lay.orient, 3);
  out.beta = tape.subvec(out.raw, lay.beta, lay.beta_len);
  out.cam_scale = tape.softplus(tape.subvec(out.raw, lay.cam, 1));
  out.cam_trans = tape.subvec(out.raw, lay.cam + 1, 2);
  return out;
}

RegressVars regress(Tape& tape, const MLPVars& vars,
                    const RegressorParams& params, const Observation& obs) {
  if (obs.dim() != params.cfg.obs_dim)
    throw DimensionError("regress: observation dim does not match config");
  Tensor row = obs.values;
  row.shape = {1, row.size()};
  return unpack_row(tape, regress_rows(tape, vars, params, row), 0,
                    params.cfg);
}

}  // namespace dapa::reg
