#include "dapa/trainer.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <limits>
#include <sstream>

#include "dapa/metrics.hpp"

namespace dapa::train {

namespace {

constexpr std::uint64_t kBatchDraw = 11;
constexpr std::uint64_t kAugmentDraw = 12;

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double vec_norm(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.values) acc += x * x;
  return std::sqrt(acc);
}

Rng base_rng(const SessionState& state) {
  Rng r(0);
  r.set_state(state.rng_state);
  return r;
}

std::vector<int> draw_batch(const Rng& base, long step, int batch, size_t n) {
  Rng r = base.substream(kBatchDraw, std::uint64_t(step));
  std::vector<int> idx(static_cast<size_t>(batch));
  for (int& i : idx) i = int(r.uniform_index(n));
  return idx;
}

Tensor obs_rows_for(const std::vector<const Observation*>& obs, int obs_dim) {
  Tensor rows = Tensor::zeros({int(obs.size()), obs_dim});
  for (size_t r = 0; r < obs.size(); ++r) {
    if (obs[r]->dim() != obs_dim)
      throw DimensionError("trainer: observation dim does not match regressor");
    std::copy(obs[r]->values.values.begin(), obs[r]->values.values.end(),
              rows.values.begin() + r * size_t(obs_dim));
  }
  return rows;
}

struct SampleVars {
  reg::RegressVars rv;
  Var joints3d;
  Var joints2d;
};

SampleVars forward_sample(Tape& tape, Var raw_rows, int row,
                          const body::KinematicTree& tree,
                          const reg::RegressorConfig& cfg) {
  SampleVars s;
  s.rv = reg::unpack_row(tape, raw_rows, row, cfg);
  const body::FkVars fk = body::forward_kinematics(
      tape, tree, s.rv.body_pose, s.rv.orient, s.rv.beta,
      tape.leaf(Tensor::zeros({3})));
  s.joints3d = fk.joints;
  s.joints2d = cam::project(tape, s.joints3d, s.rv.cam_scale, s.rv.cam_trans);
  return s;
}

aug::SyntheticSample target_from_gt(const data::GroundTruth& gt) {
  aug::SyntheticSample t;
  t.body_pose = gt.params.body_pose;
  t.orient = gt.params.orient;
  t.beta = gt.params.beta;
  t.camera = gt.params.camera;
  t.joints3d = gt.joints3d;
  t.joints2d = gt.joints2d;
  return t;
}

void apply_adam(SessionState& state, Tape& tape, const MLPVars& vars,
                Var loss, long step) {
  const double value = tape.scalar_value(loss);
  if (!std::isfinite(value))
    throw NumericalError("training diverged at step " + std::to_string(step));
  tape.backward(loss);
  std::vector<double> grads;
  append_grads(tape, vars, grads);
  std::vector<Tensor*> ptrs = state.params.trainable();
  std::vector<double> flat =
      flatten(std::vector<const Tensor*>(ptrs.begin(), ptrs.end()));
  if (!adam_step(state.adam, flat, grads))
    throw NumericalError("non-finite gradients at step " +
                         std::to_string(step));
  unflatten(flat, ptrs);
}

bool uses_real(AdaptMode m) { return m != AdaptMode::syn_only; }

bool uses_syn(AdaptMode m) {
  return m == AdaptMode::dapa || m == AdaptMode::zero_perturb ||
         m == AdaptMode::random_pose || m == AdaptMode::syn_only;
}

aug::AugmentConfig::Mode augment_mode(AdaptMode m) {
  switch (m) {
    case AdaptMode::zero_perturb:
      return aug::AugmentConfig::Mode::zero_perturb;
    case AdaptMode::random_pose:
      return aug::AugmentConfig::Mode::random_pose;
    default:
      return aug::AugmentConfig::Mode::dapa;
  }
}

}  // namespace

std::string to_string(AdaptMode mode) {
  switch (mode) {
    case AdaptMode::ft2d: return "ft2d";
    case AdaptMode::dapa: return "dapa";
    case AdaptMode::zero_perturb: return "zero_perturb";
    case AdaptMode::random_pose: return "random_pose";
    case AdaptMode::real_only: return "real_only";
    case AdaptMode::syn_only: return "syn_only";
  }
  throw ContractError("invalid adapt mode");
}

AdaptMode adapt_mode_from_string(const std::string& s) {
  if (s == "ft2d") return AdaptMode::ft2d;
  if (s == "dapa") return AdaptMode::dapa;
  if (s == "zero_perturb" || s == "zero-perturb") return AdaptMode::zero_perturb;
  if (s == "random_pose" || s == "random-pose") return AdaptMode::random_pose;
  if (s == "real_only" || s == "real-only") return AdaptMode::real_only;
  if (s == "syn_only" || s == "syn-only") return AdaptMode::syn_only;
  throw ConfigError("unknown adapt mode \"" + s + "\"");
}

void TrainConfig::validate() const {
  if (steps < 0) throw ContractError("TrainConfig: steps must be >= 0");
  if (batch < 1) throw ContractError("TrainConfig: batch must be >= 1");
  if (!(lr > 0.0)) throw ContractError("TrainConfig: lr must be > 0");
  if (eval_interval < 0)
    throw ContractError("TrainConfig: eval_interval must be >= 0");
  weights.validate();
  augment.validate();
}

void History::write_csv(std::ostream& os) const {
  os << "step,loss_total,loss_real,loss_syn_2d,loss_syn_3d,loss_syn_theta,"
        "loss_syn_beta,mean_latent_norm,eval_mpjpe,real_count,syn_count\n";
  std::ostringstream line;
  line.precision(17);
  auto cell = [&](double v) {
    line << ",";
    if (std::isfinite(v)) line << v;
  };
  for (const StepLog& s : steps) {
    line.str("");
    line << s.step;
    cell(s.loss_total);
    cell(s.loss_real);
    cell(s.loss_syn_2d);
    cell(s.loss_syn_3d);
    cell(s.loss_syn_theta);
    cell(s.loss_syn_beta);
    cell(s.mean_latent_norm);
    cell(s.eval_mpjpe);
    line << "," << s.real_count << "," << s.syn_count;
    os << line.str() << "\n";
  }
}

void History::write_csv(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw ContractError("cannot open " + path.string() + " for write");
  write_csv(f);
}

SessionState make_session(reg::RegressorParams params, const TrainConfig& cfg) {
  cfg.validate();
  params.validate();
  SessionState st;
  st.adam = AdamState::make(cfg.lr, total_size(params.trainable()));
  st.params = std::move(params);
  st.rng_state = Rng(cfg.seed).state();
  st.step = 0;
  return st;
}

History pretrain(SessionState& state, const data::Dataset& source,
                 const body::KinematicTree& tree, const TrainConfig& cfg) {
  cfg.validate();
  state.params.validate();
  if (source.samples.empty())
    throw ContractError("pretrain: empty source dataset");
  const Rng base = base_rng(state);
  const reg::RegressorConfig& rcfg = state.params.cfg;
  History hist;
  for (; state.step < cfg.steps; ++state.step) {
    const std::vector<int> idx =
        draw_batch(base, state.step, cfg.batch, source.samples.size());
    std::vector<const Observation*> obs;
    for (int i : idx) obs.push_back(&source.samples[size_t(i)].obs);
    const Tensor rows = obs_rows_for(obs, rcfg.obs_dim);

    Tape tape;
    const MLPVars vars = make_leaves(tape, state.params.mlp);
    const Var raw_rows = reg::regress_rows(tape, vars, state.params, rows);

    StepLog log;
    log.step = state.step;
    log.real_count = cfg.batch;
    log.syn_count = 0;
    log.mean_latent_norm = kNan;
    log.eval_mpjpe = kNan;
    Var loss{};
    for (int r = 0; r < cfg.batch; ++r) {
      const SampleVars s = forward_sample(tape, raw_rows, r, tree, rcfg);
      const aug::SyntheticSample target =
          target_from_gt(source.samples[size_t(idx[size_t(r)])].train_labels());
      const obj::SynTermVars terms =
          obj::loss_syn(tape, s.joints2d, s.joints3d, s.rv.body_pose,
                        s.rv.beta, target, cfg.weights);
      loss = r == 0 ? terms.total : tape.add(loss, terms.total);
      log.loss_syn_2d += tape.scalar_value(terms.j2d);
      log.loss_syn_3d += tape.scalar_value(terms.j3d);
      log.loss_syn_theta += tape.scalar_value(terms.theta);
      log.loss_syn_beta += tape.scalar_value(terms.beta);
    }
    loss = tape.scale(loss, 1.0 / cfg.batch);
    log.loss_syn_2d /= cfg.batch;
    log.loss_syn_3d /= cfg.batch;
    log.loss_syn_theta /= cfg.batch;
    log.loss_syn_beta /= cfg.batch;
    log.loss_total = tape.scalar_value(loss);
    apply_adam(state, tape, vars, loss, state.step);
    hist.steps.push_back(log);
  }
  return hist;
}

History adapt(SessionState& state, const data::Dataset& target,
              const prior::PriorParams& prior, const body::KinematicTree& tree,
              const TrainConfig& cfg, const data::Dataset* eval_set) {
  cfg.validate();
  state.params.validate();
  prior.validate();
  if (target.samples.empty()) throw ContractError("adapt: empty target dataset");
  const reg::RegressorConfig& rcfg = state.params.cfg;
  const bool with_syn = uses_syn(cfg.mode);
  if (with_syn && rcfg.obs_dim != 3 * tree.joints)
    throw ConfigError(
        "adapt: synthetic augmentation needs the keypoint observation model");
  if (with_syn && prior.pose_dim() != tree.pose_dims())
    throw DimensionError("adapt: prior pose dim does not match tree");
  aug::AugmentConfig acfg = cfg.augment;
  acfg.mode = augment_mode(cfg.mode);

  const Rng base = base_rng(state);
  History hist;
  for (; state.step < cfg.steps; ++state.step) {
    const std::vector<int> idx =
        draw_batch(base, state.step, cfg.batch, target.samples.size());
    std::vector<const Observation*> obs;
    for (int i : idx) obs.push_back(&target.samples[size_t(i)].obs);
    const Tensor rows = obs_rows_for(obs, rcfg.obs_dim);

    Tape tape;
    const MLPVars vars = make_leaves(tape, state.params.mlp);
    const Var raw_rows = reg::regress_rows(tape, vars, state.params, rows);

    StepLog log;
    log.step = state.step;
    log.real_count = cfg.batch;
    log.syn_count = 0;
    log.mean_latent_norm = kNan;
    log.eval_mpjpe = kNan;

    Var real_loss{};
    std::vector<SampleVars> fwd;
    fwd.reserve(size_t(cfg.batch));
    for (int r = 0; r < cfg.batch; ++r)
      fwd.push_back(forward_sample(tape, raw_rows, r, tree, rcfg));
    if (uses_real(cfg.mode)) {
      for (int r = 0; r < cfg.batch; ++r) {
        const data::Sample& s = target.samples[size_t(idx[size_t(r)])];
        const Var lr =
            obj::loss_real(tape, fwd[size_t(r)].joints2d, s.kp2d, s.conf,
                           cfg.weights);
        real_loss = r == 0 ? lr : tape.add(real_loss, lr);
      }
      real_loss = tape.scale(real_loss, 1.0 / cfg.batch);
      log.loss_real = tape.scalar_value(real_loss);
    }

    Var syn_loss{};
    if (with_syn) {
      // Synthesize one sample per real prediction, from detached numeric
      // copies of the current estimates; one-to-one real:synthetic mixing.
      std::vector<aug::SyntheticSample> syn;
      syn.reserve(size_t(cfg.batch));
      double latent_acc = 0.0;
      for (int r = 0; r < cfg.batch; ++r) {
        Rng srng = base.substream(kAugmentDraw, std::uint64_t(state.step),
                                  std::uint64_t(r));
        const reg::RegressVars& rv = fwd[size_t(r)].rv;
        const Tensor theta_reg = tape.value(rv.body_pose);
        aug::RegressionContext ctx;
        ctx.beta = tape.value(rv.beta);
        ctx.orient = tape.value(rv.orient);
        ctx.camera = {tape.value(rv.cam_scale)[0],
                      tape.value(rv.cam_trans)[0],
                      tape.value(rv.cam_trans)[1]};
        auto [theta_syn, prov] = aug::dapa_augment(prior, theta_reg, acfg,
                                                   srng);
        prov.source_id = target.samples[size_t(idx[size_t(r)])].id;
        latent_acc += vec_norm(prov.z_tilde);
        syn.push_back(aug::make_synthetic_example(tree, theta_syn, ctx, acfg,
                                                  srng, std::move(prov)));
      }
      log.syn_count = int(syn.size());
      log.mean_latent_norm = latent_acc / double(syn.size());

      std::vector<const Observation*> syn_obs;
      for (const auto& s : syn) syn_obs.push_back(&s.obs);
      const Var syn_raw = reg::regress_rows(tape, vars, state.params,
                                            obs_rows_for(syn_obs,
                                                         rcfg.obs_dim));
      for (int r = 0; r < cfg.batch; ++r) {
        const SampleVars s = forward_sample(tape, syn_raw, r, tree, rcfg);
        const obj::SynTermVars terms =
            obj::loss_syn(tape, s.joints2d, s.joints3d, s.rv.body_pose,
                          s.rv.beta, syn[size_t(r)], cfg.weights);
        syn_loss = r == 0 ? terms.total : tape.add(syn_loss, terms.total);
        log.loss_syn_2d += tape.scalar_value(terms.j2d);
        log.loss_syn_3d += tape.scalar_value(terms.j3d);
        log.loss_syn_theta += tape.scalar_value(terms.theta);
        log.loss_syn_beta += tape.scalar_value(terms.beta);
      }
      syn_loss = tape.scale(syn_loss, 1.0 / cfg.batch);
      log.loss_syn_2d /= cfg.batch;
      log.loss_syn_3d /= cfg.batch;
      log.loss_syn_theta /= cfg.batch;
      log.loss_syn_beta /= cfg.batch;
    }

    Var loss;
    if (real_loss.valid() && syn_loss.valid())
      loss = tape.add(real_loss, syn_loss);
    else
      loss = real_loss.valid() ? real_loss : syn_loss;
    log.loss_total = tape.scalar_value(loss);
    apply_adam(state, tape, vars, loss, state.step);

    if (cfg.eval_interval > 0 && eval_set &&
        (state.step + 1) % cfg.eval_interval == 0)
      log.eval_mpjpe = evaluate(state.params, *eval_set, tree).mpjpe;
    hist.steps.push_back(log);
  }
  return hist;
}

EvalSummary evaluate(const reg::RegressorParams& params,
                     const data::Dataset& ds, const body::KinematicTree& tree,
                     double alpha) {
  params.validate();
  EvalSummary sum;
  sum.alpha = alpha;
  const int neck = tree.index_of("neck");
  const int pelvis = 0;
  double pck_acc = 0.0;
  int pck_n = 0;
  const std::vector<int> visible(size_t(tree.joints), 1);
  for (const auto& s : ds.samples) {
    const data::GroundTruth& gt = s.eval_labels();
    const reg::RegressorOutput out = reg::regress(params, s.obs);
    const Tensor pred = body::forward_kinematics(tree, out.body_pose,
                                                 out.orient, out.beta).joints;
    const double e = metrics::mpjpe(pred, gt.joints3d);
    sum.mpjpe += e;
    sum.pa_mpjpe += metrics::pa_error(pred, gt.joints3d);
    sum.per_sample_mpjpe.push_back(e);
    const Tensor pred2d = cam::project(pred, out.camera);
    const double torso = metrics::torso_length(gt.joints2d, pelvis, neck);
    if (const auto frac =
            metrics::pck(pred2d, gt.joints2d, alpha, torso, visible)) {
      pck_acc += *frac;
      ++pck_n;
    }
  }
  sum.count = int(ds.samples.size());
  if (sum.count > 0) {
    sum.mpjpe /= sum.count;
    sum.pa_mpjpe /= sum.count;
  }
  sum.pck = pck_n > 0 ? pck_acc / pck_n : 0.0;
  return sum;
}

// ---- persistence ----

namespace {

constexpr char kMagic[8] = {'D', 'A', 'P', 'A', 'C', 'K', 'P', 'T'};

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(char((v >> (8 * i)) & 0xff));
}

void put_section(std::string& out, const std::string& payload) {
  put_u64(out, payload.size());
  out += payload;
  put_u64(out, fnv1a(payload));
}

std::string doubles_payload(const std::vector<double>& v) {
  std::string s(v.size() * sizeof(double), '\0');
  std::memcpy(s.data(), v.data(), s.size());
  return s;
}

struct Reader {
  const std::string& buf;
  size_t pos = 0;
  std::uint64_t u64() {
    if (pos + 8 > buf.size())
      throw SchemaError("checkpoint truncated at byte " + std::to_string(pos));
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i)
      v |= std::uint64_t(static_cast<unsigned char>(buf[pos + size_t(i)]))
           << (8 * i);
    pos += 8;
    return v;
  }
  std::string section() {
    const std::uint64_t len = u64();
    if (pos + len + 8 > buf.size())
      throw SchemaError("checkpoint section overruns the file");
    std::string payload = buf.substr(pos, len);
    pos += len;
    const std::uint64_t want = u64();
    if (fnv1a(payload) != want)
      throw SchemaError("checkpoint section checksum mismatch");
    return payload;
  }
};

std::vector<double> doubles_from(const std::string& payload,
                                 const std::string& name) {
  if (payload.size() % sizeof(double) != 0)
    throw SchemaError("checkpoint array " + name + " has a partial element");
  std::vector<double> v(payload.size() / sizeof(double));
  std::memcpy(v.data(), payload.data(), payload.size());
  return v;
}

}  // namespace

Checkpoint make_checkpoint(const SessionState& state,
                           std::string tree_fingerprint, std::string prior_ref,
                           std::string config_json) {
  Checkpoint c;
  c.tree_fingerprint = std::move(tree_fingerprint);
  c.prior_ref = std::move(prior_ref);
  c.config_json = std::move(config_json);
  c.params = state.params;
  c.adam = state.adam;
  c.rng_state = state.rng_state;
  c.step = state.step;
  return c;
}

SessionState session_from(const Checkpoint& ckpt) {
  SessionState st;
  st.params = ckpt.params;
  st.params.validate();
  st.adam = ckpt.adam;
  st.rng_state = ckpt.rng_state;
  st.step = ckpt.step;
  return st;
}

void save_checkpoint(const std::filesystem::path& path,
                     const Checkpoint& ckpt) {
  nlohmann::json head;
  head["version"] = ckpt.version;
  head["tree_fingerprint"] = ckpt.tree_fingerprint;
  head["prior_ref"] = ckpt.prior_ref;
  head["config_json"] = ckpt.config_json;
  head["step"] = ckpt.step;
  head["rng_state"] = ckpt.rng_state;
  head["regressor"] = {{"obs_dim", ckpt.params.cfg.obs_dim},
                       {"joints", ckpt.params.cfg.joints},
                       {"shape_dims", ckpt.params.cfg.shape_dims},
                       {"hidden", ckpt.params.cfg.hidden},
                       {"iterations", ckpt.params.cfg.iterations}};
  head["adam"] = {{"lr", ckpt.adam.lr},
                  {"beta1", ckpt.adam.beta1},
                  {"beta2", ckpt.adam.beta2},
                  {"eps", ckpt.adam.eps},
                  {"step", ckpt.adam.step}};

  std::vector<std::pair<std::string, std::vector<double>>> arrays;
  const auto tensor_list = ckpt.params.trainable();
  for (size_t i = 0; i < tensor_list.size(); ++i)
    arrays.emplace_back("param." + std::to_string(i), tensor_list[i]->values);
  arrays.emplace_back("mean_params", ckpt.params.mean_params.values);
  arrays.emplace_back("adam.m", ckpt.adam.m);
  arrays.emplace_back("adam.v", ckpt.adam.v);

  nlohmann::json manifest = nlohmann::json::array();
  for (size_t i = 0; i < arrays.size(); ++i) {
    nlohmann::json e;
    e["name"] = arrays[i].first;
    if (i < tensor_list.size())
      e["shape"] = tensor_list[i]->shape;
    else if (arrays[i].first == "mean_params")
      e["shape"] = ckpt.params.mean_params.shape;
    else
      e["shape"] = std::vector<int>{int(arrays[i].second.size())};
    manifest.push_back(e);
  }
  head["tensors"] = manifest;

  std::string out(kMagic, sizeof(kMagic));
  put_u64(out, 1 + arrays.size());
  put_section(out, head.dump());
  for (const auto& [name, vals] : arrays)
    put_section(out, doubles_payload(vals));

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw ContractError("cannot open " + path.string() + " for write");
  f.write(out.data(), std::streamsize(out.size()));
  if (!f) throw ContractError("short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f)
    throw MissingPrerequisiteError("checkpoint not found: " + path.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  const std::string buf = ss.str();
  if (buf.size() < sizeof(kMagic) ||
      std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
    throw SchemaError("not a checkpoint file: " + path.string());

  Reader rd{buf, sizeof(kMagic)};
  const std::uint64_t n_sections = rd.u64();
  if (n_sections < 1) throw SchemaError("checkpoint has no sections");

  nlohmann::json head;
  try {
    head = nlohmann::json::parse(rd.section());
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header is not valid JSON: ") +
                      e.what());
  }

  Checkpoint c;
  try {
    c.version = head.at("version").get<int>();
    if (c.version != 1)
      throw SchemaError("unsupported checkpoint version " +
                        std::to_string(c.version));
    c.tree_fingerprint = head.at("tree_fingerprint").get<std::string>();
    c.prior_ref = head.at("prior_ref").get<std::string>();
    c.config_json = head.at("config_json").get<std::string>();
    c.step = head.at("step").get<long>();
    const auto rs = head.at("rng_state");
    if (!rs.is_array() || rs.size() != 4)
      throw SchemaError("checkpoint rng_state must have 4 words");
    for (int i = 0; i < 4; ++i)
      c.rng_state[size_t(i)] = rs[size_t(i)].get<std::uint64_t>();

    const auto& rj = head.at("regressor");
    c.params.cfg.obs_dim = rj.at("obs_dim").get<int>();
    c.params.cfg.joints = rj.at("joints").get<int>();
    c.params.cfg.shape_dims = rj.at("shape_dims").get<int>();
    c.params.cfg.hidden = rj.at("hidden").get<std::vector<int>>();
    c.params.cfg.iterations = rj.at("iterations").get<int>();

    const auto& aj = head.at("adam");
    c.adam.lr = aj.at("lr").get<double>();
    c.adam.beta1 = aj.at("beta1").get<double>();
    c.adam.beta2 = aj.at("beta2").get<double>();
    c.adam.eps = aj.at("eps").get<double>();
    c.adam.step = aj.at("step").get<long>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint header field error: ") +
                      e.what());
  }

  std::vector<std::pair<std::string, Tensor>> arrays;
  try {
    const auto& manifest = head.at("tensors");
    if (!manifest.is_array() || manifest.size() + 1 != n_sections)
      throw SchemaError("checkpoint manifest does not match section count");
    for (size_t i = 0; i < manifest.size(); ++i) {
      const std::string name = manifest[i].at("name").get<std::string>();
      const auto shape = manifest[i].at("shape").get<std::vector<int>>();
      const std::vector<double> vals = doubles_from(rd.section(), name);
      if (int(vals.size()) != Tensor::count(shape))
        throw SchemaError("checkpoint array " + name +
                          " does not match its declared shape");
      arrays.emplace_back(name, Tensor(shape, vals));
    }
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("checkpoint manifest error: ") + e.what());
  }
  if (rd.pos != buf.size())
    throw SchemaError("checkpoint has trailing bytes");

  // Rebuild the MLP with the standard activation convention, then overwrite
  // every tensor from the stored arrays.
  {
    Rng scratch(0);
    std::vector<int> dims;
    dims.push_back(c.params.cfg.obs_dim + c.params.cfg.layout().total);
    dims.insert(dims.end(), c.params.cfg.hidden.begin(),
                c.params.cfg.hidden.end());
    dims.push_back(c.params.cfg.layout().total);
    c.params.mlp = MLPParams::make(dims, scratch);
  }
  const auto tensor_list = c.params.trainable();
  if (arrays.size() != tensor_list.size() + 3)
    throw SchemaError("checkpoint tensor count mismatch");
  for (size_t i = 0; i < tensor_list.size(); ++i) {
    if (!(arrays[i].second.shape == tensor_list[i]->shape))
      throw SchemaError("checkpoint tensor " + arrays[i].first +
                        " has the wrong shape");
    *tensor_list[i] = arrays[i].second;
  }
  c.params.mean_params = arrays[tensor_list.size()].second;
  c.adam.m = arrays[tensor_list.size() + 1].second.values;
  c.adam.v = arrays[tensor_list.size() + 2].second.values;
  if (c.adam.m.size() != c.adam.v.size() ||
      int(c.adam.m.size()) != total_size(c.params.trainable()))
    throw SchemaError("checkpoint optimizer state size mismatch");
  c.params.validate();
  return c;
}

}  // namespace dapa::train
