#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

#include "dapa/metrics.hpp"
#include "dapa/trainer.hpp"
#include "test_util.hpp"

using namespace dapa;
using namespace dapa::train;

namespace {

std::vector<double> flat_params(const reg::RegressorParams& p) {
  return flatten(p.trainable());
}

bool same_params(const reg::RegressorParams& a, const reg::RegressorParams& b) {
  const auto fa = flat_params(a), fb = flat_params(b);
  return fa.size() == fb.size() &&
         std::memcmp(fa.data(), fb.data(), fa.size() * sizeof(double)) == 0 &&
         std::memcmp(a.mean_params.values.data(), b.mean_params.values.data(),
                     a.mean_params.values.size() * sizeof(double)) == 0;
}

struct Lab {
  body::KinematicTree tree = body::KinematicTree::human17();
  data::Dataset source;
  data::Dataset target;
  prior::PriorParams prior;
  reg::RegressorParams pretrained;

  Lab() {
    source = data::sample_domain(data::default_source_spec(tree, 500, 301),
                                 tree);
    target = data::sample_domain(data::default_target_spec(tree, 160, 302),
                                 tree);

    prior::PriorConfig pc;
    pc.latent_dim = 8;
    pc.hidden = {64, 64};
    pc.steps = 500;
    pc.seed = 303;
    std::vector<Tensor> corpus;
    for (const auto& s : source.samples)
      corpus.push_back(s.train_labels().params.body_pose);
    prior = prior::train_prior(corpus, pc).first;

    reg::RegressorConfig rc;
    rc.hidden = {64, 64};
    Rng rng(304);
    reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
    params.mean_params = reg::init_mean_params(source, rc);
    TrainConfig cfg;
    cfg.phase = Phase::pretrain;
    cfg.steps = 900;
    cfg.lr = 3e-3;
    cfg.seed = 305;
    SessionState st = make_session(std::move(params), cfg);
    pretrain(st, source, tree, cfg);
    pretrained = st.params;
  }
};

const Lab& lab() {
  static Lab l;
  return l;
}

TrainConfig adapt_config(AdaptMode mode, int steps, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.phase = Phase::adapt;
  cfg.mode = mode;
  cfg.steps = steps;
  cfg.lr = 3e-4;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("config guards and mode names") {
  TrainConfig cfg;
  cfg.batch = 0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.lr = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  cfg = TrainConfig{};
  cfg.steps = -1;
  CHECK_THROWS_AS(cfg.validate(), ContractError);

  for (AdaptMode m : {AdaptMode::ft2d, AdaptMode::dapa, AdaptMode::zero_perturb,
                      AdaptMode::random_pose, AdaptMode::real_only,
                      AdaptMode::syn_only})
    CHECK(adapt_mode_from_string(to_string(m)) == m);
  CHECK(adapt_mode_from_string("zero-perturb") == AdaptMode::zero_perturb);
  CHECK_THROWS_AS((void)adapt_mode_from_string("sgd"), ConfigError);
}

TEST_CASE("pretrain with zero steps changes nothing") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.hidden = {32};
  Rng rng(310);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  const reg::RegressorParams before = params;
  TrainConfig cfg;
  cfg.steps = 0;
  SessionState st = make_session(std::move(params), cfg);
  const History h = pretrain(st, l.source, l.tree, cfg);
  CHECK(h.steps.empty());
  CHECK(same_params(st.params, before));
}

TEST_CASE("pretrain drives the loss down") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.hidden = {64, 64};
  Rng rng(311);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  params.mean_params = reg::init_mean_params(l.source, rc);
  TrainConfig cfg;
  cfg.steps = 240;
  cfg.lr = 3e-3;
  cfg.seed = 312;
  SessionState st = make_session(std::move(params), cfg);
  const History h = pretrain(st, l.source, l.tree, cfg);
  REQUIRE(int(h.steps.size()) == 240);
  double head = 0.0, tail = 0.0;
  for (int i = 0; i < 50; ++i) {
    head += h.steps[size_t(i)].loss_total;
    tail += h.steps[h.steps.size() - 1 - size_t(i)].loss_total;
  }
  CHECK(tail < head);
  for (const auto& s : h.steps) {
    CHECK(std::isfinite(s.loss_total));
    CHECK(s.real_count == 32);
    CHECK(s.syn_count == 0);
  }
}

TEST_CASE("pretraining halves the mean-params source error") {
  // A pose-diverse supervised corpus: a constant predictor cannot cover the
  // cluster spread, while the regressor separates clusters within a few
  // hundred steps. The near-unimodal default source makes the constant
  // predictor abnormally strong and turns the same comparison into a slow
  // memorization grind, so the corpus here mixes all stock clusters evenly.
  const auto tree = body::KinematicTree::human17();
  data::DomainSpec spec = data::default_source_spec(tree, 300, 311);
  spec.clusters = data::default_clusters(tree);
  for (auto& c : spec.clusters) c.weight = 1.0 / double(spec.clusters.size());
  const data::Dataset corpus = data::sample_domain(spec, tree);

  reg::RegressorConfig rc;
  rc.hidden = {64, 64};
  Rng rng(313);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  params.mean_params = reg::init_mean_params(corpus, rc);

  // constant predictor: zero network emitting the dataset mean
  reg::RegressorParams mean_stub = params;
  for (Tensor* t : mean_stub.trainable()) *t = Tensor::zeros(t->shape);

  TrainConfig cfg;
  cfg.phase = Phase::pretrain;
  cfg.steps = 1200;
  cfg.lr = 3e-3;
  cfg.seed = 314;
  SessionState st = make_session(std::move(params), cfg);
  pretrain(st, corpus, tree, cfg);

  const EvalSummary base = evaluate(mean_stub, corpus, tree);
  const EvalSummary tuned = evaluate(st.params, corpus, tree);
  CAPTURE(base.mpjpe);
  CAPTURE(tuned.mpjpe);
  CHECK(tuned.mpjpe <= 0.5 * base.mpjpe);
}

TEST_CASE("evaluate: ground-truth stub scores zero, repeats are identical") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.hidden = {32};
  const reg::ParamLayout lay = rc.layout();
  for (int i : {0, 7}) {
    data::Dataset one;
    one.samples.push_back(l.source.samples[size_t(i)]);
    Rng rng(314);
    reg::RegressorParams stub = reg::RegressorParams::make(rc, rng);
    for (Tensor* t : stub.trainable()) *t = Tensor::zeros(t->shape);
    stub.mean_params =
        reg::pack_params(one.samples[0].train_labels().params, lay);
    const EvalSummary s = evaluate(stub, one, l.tree);
    CHECK(s.mpjpe <= 1e-9);
    CHECK(s.pck == 1.0);
  }

  const EvalSummary a = evaluate(l.pretrained, l.target, l.tree);
  const EvalSummary b = evaluate(l.pretrained, l.target, l.tree);
  CHECK(a.mpjpe == b.mpjpe);
  CHECK(a.pa_mpjpe == b.pa_mpjpe);
  CHECK(a.pck == b.pck);
  CHECK(a.count == 160);
}

TEST_CASE("evaluate: constant predictor matches the closed form") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.hidden = {32};
  Rng rng(315);
  reg::RegressorParams stub = reg::RegressorParams::make(rc, rng);
  for (Tensor* t : stub.trainable()) *t = Tensor::zeros(t->shape);
  stub.mean_params = reg::init_mean_params(l.source, rc);

  const reg::RegressorOutput out = reg::unpack_params(stub.mean_params, rc);
  const Tensor fixed = body::forward_kinematics(l.tree, out.body_pose,
                                                out.orient, out.beta).joints;
  double want = 0.0;
  for (const auto& s : l.source.samples)
    want += metrics::mpjpe(fixed, s.eval_labels().joints3d);
  want /= double(l.source.samples.size());

  const EvalSummary got = evaluate(stub, l.source, l.tree);
  CHECK(got.mpjpe == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("ft2d and real_only are the same procedure") {
  const Lab& l = lab();
  SessionState a = make_session(l.pretrained,
                                adapt_config(AdaptMode::ft2d, 30, 320));
  const History ha = adapt(a, l.target, l.prior, l.tree,
                           adapt_config(AdaptMode::ft2d, 30, 320));
  SessionState b = make_session(l.pretrained,
                                adapt_config(AdaptMode::real_only, 30, 320));
  const History hb = adapt(b, l.target, l.prior, l.tree,
                           adapt_config(AdaptMode::real_only, 30, 320));
  CHECK(same_params(a.params, b.params));
  REQUIRE(ha.steps.size() == hb.steps.size());
  for (size_t i = 0; i < ha.steps.size(); ++i) {
    CHECK(ha.steps[i].loss_total == hb.steps[i].loss_total);
    CHECK(ha.steps[i].syn_count == 0);
  }
}

TEST_CASE("dapa adaptation mixes one synthetic per real sample") {
  const Lab& l = lab();
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 12, 321);
  SessionState st = make_session(l.pretrained, cfg);
  const History h = adapt(st, l.target, l.prior, l.tree, cfg);
  REQUIRE(int(h.steps.size()) == 12);
  for (const auto& s : h.steps) {
    CHECK(s.real_count == 32);
    CHECK(s.syn_count == 32);
    CHECK(std::isfinite(s.loss_total));
    CHECK(std::isfinite(s.mean_latent_norm));
    CHECK(s.mean_latent_norm > 0.0);
    CHECK(s.loss_syn_2d >= 0.0);
  }
}

TEST_CASE("adaptation is deterministic given the seed") {
  const Lab& l = lab();
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 20, 322);
  SessionState a = make_session(l.pretrained, cfg);
  const History ha = adapt(a, l.target, l.prior, l.tree, cfg);
  SessionState b = make_session(l.pretrained, cfg);
  const History hb = adapt(b, l.target, l.prior, l.tree, cfg);
  CHECK(same_params(a.params, b.params));
  CHECK(ha.steps.back().loss_total == hb.steps.back().loss_total);
}

TEST_CASE("checkpoint round trip is byte-identical on disk") {
  const Lab& l = lab();
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 8, 323);
  SessionState st = make_session(l.pretrained, cfg);
  adapt(st, l.target, l.prior, l.tree, cfg);
  const Checkpoint c1 = make_checkpoint(st, "human17", "prior-default",
                                        "{\"note\":\"test\"}");
  const char* p1 = "/tmp/dapa_test_ckpt_a.bin";
  const char* p2 = "/tmp/dapa_test_ckpt_b.bin";
  save_checkpoint(p1, c1);
  const Checkpoint c2 = load_checkpoint(p1);
  CHECK(c2.step == c1.step);
  CHECK(c2.tree_fingerprint == c1.tree_fingerprint);
  CHECK(c2.prior_ref == c1.prior_ref);
  CHECK(c2.config_json == c1.config_json);
  CHECK(c2.rng_state == c1.rng_state);
  CHECK(same_params(c2.params, c1.params));
  CHECK(c2.adam.m == c1.adam.m);
  CHECK(c2.adam.v == c1.adam.v);
  CHECK(c2.adam.step == c1.adam.step);
  save_checkpoint(p2, c2);

  auto slurp = [](const char* p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  const std::string b1 = slurp(p1), b2 = slurp(p2);
  CHECK(b1.size() > 0);
  CHECK(b1 == b2);
  std::remove(p1);
  std::remove(p2);
}

TEST_CASE("resuming mid-run reproduces the uninterrupted run bit for bit") {
  const Lab& l = lab();
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 24, 324);

  SessionState straight = make_session(l.pretrained, cfg);
  adapt(straight, l.target, l.prior, l.tree, cfg);

  TrainConfig half = cfg;
  half.steps = 11;
  SessionState st = make_session(l.pretrained, cfg);
  adapt(st, l.target, l.prior, l.tree, half);
  const char* path = "/tmp/dapa_test_ckpt_resume.bin";
  save_checkpoint(path, make_checkpoint(st, "human17", "p", "{}"));
  SessionState resumed = session_from(load_checkpoint(path));
  std::remove(path);
  CHECK(resumed.step == 11);
  adapt(resumed, l.target, l.prior, l.tree, cfg);

  CHECK(straight.step == resumed.step);
  CHECK(same_params(straight.params, resumed.params));
  CHECK(straight.adam.m == resumed.adam.m);
  CHECK(straight.adam.v == resumed.adam.v);
}

TEST_CASE("checkpoint corruption and absence are distinct failures") {
  const Lab& l = lab();
  CHECK_THROWS_AS((void)load_checkpoint("/tmp/dapa_test_ckpt_missing.bin"),
                  MissingPrerequisiteError);

  const TrainConfig cfg = adapt_config(AdaptMode::ft2d, 2, 325);
  SessionState st = make_session(l.pretrained, cfg);
  adapt(st, l.target, l.prior, l.tree, cfg);
  const char* path = "/tmp/dapa_test_ckpt_bad.bin";
  save_checkpoint(path, make_checkpoint(st, "t", "p", "{}"));

  auto slurp = [&]() {
    std::ifstream f(path, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
  };
  auto spit = [&](const std::string& s) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f.write(s.data(), std::streamsize(s.size()));
  };
  const std::string good = slurp();

  spit(good.substr(0, good.size() / 2));
  CHECK_THROWS_AS((void)load_checkpoint(path), SchemaError);

  std::string flipped = good;
  flipped[flipped.size() - 9] ^= 0x40;  // inside the last payload
  spit(flipped);
  CHECK_THROWS_AS((void)load_checkpoint(path), SchemaError);

  std::string wrong_magic = good;
  wrong_magic[0] = 'X';
  spit(wrong_magic);
  CHECK_THROWS_AS((void)load_checkpoint(path), SchemaError);
  std::remove(path);
}

TEST_CASE("hidden target labels cannot influence adaptation") {
  const Lab& l = lab();
  data::Dataset poisoned = l.target;
  for (auto& s : poisoned.samples) {
    data::GroundTruth& gt = s.mutable_labels();
    gt.joints3d = Tensor::full(gt.joints3d.shape, 77.7);
    gt.joints2d = Tensor::full(gt.joints2d.shape, -55.5);
    gt.params.body_pose = Tensor::full(gt.params.body_pose.shape, 3.3);
  }
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 15, 326);
  SessionState clean = make_session(l.pretrained, cfg);
  const History hc = adapt(clean, l.target, l.prior, l.tree, cfg);
  SessionState dirty = make_session(l.pretrained, cfg);
  const History hd = adapt(dirty, poisoned, l.prior, l.tree, cfg);
  CHECK(same_params(clean.params, dirty.params));
  for (size_t i = 0; i < hc.steps.size(); ++i)
    CHECK(hc.steps[i].loss_total == hd.steps[i].loss_total);
}

TEST_CASE("synthetic stream gradients never reach the real forward pass") {
  const Lab& l = lab();
  const reg::RegressorConfig& rc = l.pretrained.cfg;
  Tape tape;
  const MLPVars vars = make_leaves(tape, l.pretrained.mlp);
  Tensor rows = Tensor::zeros({2, rc.obs_dim});
  for (int r = 0; r < 2; ++r)
    std::copy(l.target.samples[size_t(r)].obs.values.values.begin(),
              l.target.samples[size_t(r)].obs.values.values.end(),
              rows.values.begin() + size_t(r) * rc.obs_dim);
  const Var raw_rows = reg::regress_rows(tape, vars, l.pretrained, rows);

  Rng srng(327);
  aug::AugmentConfig acfg;
  Var syn_loss{};
  std::vector<reg::RegressVars> real_side;
  for (int r = 0; r < 2; ++r) {
    const reg::RegressVars rv = reg::unpack_row(tape, raw_rows, r, rc);
    real_side.push_back(rv);
    aug::RegressionContext ctx{tape.value(rv.beta), tape.value(rv.orient),
                               {tape.value(rv.cam_scale)[0],
                                tape.value(rv.cam_trans)[0],
                                tape.value(rv.cam_trans)[1]}};
    auto [theta_syn, prov] =
        aug::dapa_augment(l.prior, tape.value(rv.body_pose), acfg, srng);
    const aug::SyntheticSample syn = aug::make_synthetic_example(
        l.tree, theta_syn, ctx, acfg, srng, std::move(prov));
    Tensor srow = syn.obs.values;
    srow.shape = {1, srow.size()};
    const Var sraw = reg::regress_rows(tape, vars, l.pretrained, srow);
    const reg::RegressVars sv = reg::unpack_row(tape, sraw, 0, rc);
    const body::FkVars fk = body::forward_kinematics(
        tape, l.tree, sv.body_pose, sv.orient, sv.beta,
        tape.leaf(Tensor::zeros({3})));
    const Var j2d = cam::project(tape, fk.joints, sv.cam_scale, sv.cam_trans);
    const obj::SynTermVars terms = obj::loss_syn(
        tape, j2d, fk.joints, sv.body_pose, sv.beta, syn, obj::LossWeights{});
    syn_loss = r == 0 ? terms.total : tape.add(syn_loss, terms.total);
  }
  tape.backward(syn_loss);
  // the real pass fed the augmenter by value only; its nodes stay untouched
  for (const auto& rv : real_side) {
    for (double g : tape.grad(rv.body_pose).values) CHECK(g == 0.0);
    for (double g : tape.grad(rv.cam_scale).values) CHECK(g == 0.0);
  }
  bool any = false;
  for (size_t i = 0; i < vars.weights.size(); ++i)
    for (double g : tape.grad(vars.weights[i]).values)
      if (g != 0.0) any = true;
  CHECK(any);  // while the shared network itself does learn from synthetics
}

TEST_CASE("divergent loss aborts without clobbering parameters") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.hidden = {32};
  Rng rng(328);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  for (Tensor* t : params.trainable()) *t = Tensor::zeros(t->shape);
  params.mean_params = reg::init_mean_params(l.source, rc);
  params.mean_params[rc.layout().cam] = 1e200;  // scale explodes quadratically
  const reg::RegressorParams before = params;

  const TrainConfig cfg = adapt_config(AdaptMode::ft2d, 5, 329);
  SessionState st = make_session(std::move(params), cfg);
  CHECK_THROWS_AS(adapt(st, l.target, l.prior, l.tree, cfg), NumericalError);
  CHECK(same_params(st.params, before));
}

TEST_CASE("augmented modes need the keypoint observation model") {
  const Lab& l = lab();
  reg::RegressorConfig rc;
  rc.obs_dim = 40;
  rc.hidden = {16};
  Rng rng(330);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  const TrainConfig cfg = adapt_config(AdaptMode::dapa, 3, 331);
  SessionState st = make_session(std::move(params), cfg);
  CHECK_THROWS_AS(adapt(st, l.target, l.prior, l.tree, cfg), ConfigError);
}

TEST_CASE("in-loop evaluation lands on the configured cadence") {
  const Lab& l = lab();
  TrainConfig cfg = adapt_config(AdaptMode::ft2d, 9, 332);
  cfg.eval_interval = 4;
  SessionState st = make_session(l.pretrained, cfg);
  const History h = adapt(st, l.target, l.prior, l.tree, cfg, &l.target);
  REQUIRE(int(h.steps.size()) == 9);
  for (const auto& s : h.steps) {
    const bool due = (s.step + 1) % 4 == 0;
    CHECK(std::isfinite(s.eval_mpjpe) == due);
  }
}

TEST_CASE("history csv layout") {
  History h;
  StepLog s;
  s.step = 3;
  s.loss_total = 1.5;
  s.loss_real = 0.5;
  s.loss_syn_2d = 0.25;
  s.loss_syn_3d = 0.25;
  s.loss_syn_theta = 0.375;
  s.loss_syn_beta = 0.125;
  s.mean_latent_norm = std::numeric_limits<double>::quiet_NaN();
  s.eval_mpjpe = std::numeric_limits<double>::quiet_NaN();
  s.real_count = 32;
  s.syn_count = 0;
  h.steps.push_back(s);
  std::ostringstream os;
  h.write_csv(os);
  std::istringstream is(os.str());
  std::string header, row;
  std::getline(is, header);
  std::getline(is, row);
  CHECK(header ==
        "step,loss_total,loss_real,loss_syn_2d,loss_syn_3d,loss_syn_theta,"
        "loss_syn_beta,mean_latent_norm,eval_mpjpe,real_count,syn_count");
  CHECK(row == "3,1.5,0.5,0.25,0.25,0.375,0.125,,,32,0");
}

}  // TEST_SUITE
