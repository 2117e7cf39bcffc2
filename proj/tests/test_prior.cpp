#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numbers>

#include "dapa/prior.hpp"
#include "test_util.hpp"

using namespace dapa;
using namespace dapa::prior;
using testutil::Builder;
using testutil::fd_max_rel_err;
using testutil::random_tensor;

namespace {

constexpr double kPi = std::numbers::pi;

PriorConfig small_config() {
  PriorConfig cfg;
  cfg.pose_dim = 12;
  cfg.latent_dim = 4;
  cfg.hidden = {64, 64};
  cfg.steps = 1200;
  cfg.batch = 32;
  cfg.seed = 7;
  return cfg;
}

// Three clusters whose magnitude grows as their frequency drops, mirroring
// the rare-poses-live-far-out structure the latent space should pick up.
struct Corpus {
  std::vector<Tensor> poses;
  std::vector<int> cluster;  // 0 dominant .. 2 rare
};

std::vector<Tensor> cluster_means(std::uint64_t seed) {
  Rng rng(seed);
  std::vector<Tensor> means;
  const double mags[3] = {0.4, 1.0, 2.0};
  for (int c = 0; c < 3; ++c) {
    Tensor m = random_tensor({12}, rng);
    double norm = 0.0;
    for (double x : m.values) norm += x * x;
    norm = std::sqrt(norm);
    for (double& x : m.values) x *= mags[c] / norm;
    means.push_back(std::move(m));
  }
  return means;
}

Corpus make_corpus(int n, std::uint64_t seed,
                   const std::vector<Tensor>& means) {
  Rng rng(seed);
  Corpus corpus;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform01();
    const int c = u < 0.7 ? 0 : (u < 0.9 ? 1 : 2);
    Tensor pose = means[size_t(c)];
    for (double& x : pose.values) x += 0.05 * rng.normal();
    corpus.poses.push_back(std::move(pose));
    corpus.cluster.push_back(c);
  }
  return corpus;
}

struct TrainedFixture {
  PriorParams prior;
  PriorTrainReport report;
  Corpus held;
  Tensor mean_pose;
};

const TrainedFixture& trained() {
  static const TrainedFixture fixture = [] {
    const std::vector<Tensor> means = cluster_means(10);
    const Corpus train = make_corpus(600, 11, means);
    TrainedFixture f{.prior = {},
                     .report = {},
                     .held = make_corpus(150, 12, means),
                     .mean_pose = Tensor::zeros({12})};
    std::tie(f.prior, f.report) = train_prior(train.poses, small_config());
    for (const Tensor& p : train.poses)
      for (int i = 0; i < 12; ++i) f.mean_pose[i] += p[i];
    for (double& x : f.mean_pose.values) x /= double(train.poses.size());
    return f;
  }();
  return fixture;
}

double mae(const Tensor& a, const Tensor& b) {
  double acc = 0.0;
  for (int i = 0; i < a.size(); ++i) acc += std::fabs(a[i] - b[i]);
  return acc / a.size();
}

}  // namespace

TEST_SUITE("pose_prior") {

TEST_CASE("encode: zero-weight encoder returns its bias as mu, sigma = 1") {
  PriorParams p;
  MLPParams::Layer enc;
  enc.weight = Tensor::zeros({6, 4});
  enc.bias = Tensor::vec({0.3, -0.7, 0.0, 0.0});  // [mu | log sigma]
  p.encoder.layers.push_back(enc);
  MLPParams::Layer dec;
  dec.weight = Tensor::zeros({2, 6});
  dec.bias = Tensor::zeros({6});
  p.decoder.layers.push_back(dec);
  p.latent_dim = 2;
  p.validate();

  Rng rng(71);
  const PosteriorParams post = encode(p, random_tensor({6}, rng));
  CHECK(post.mu[0] == 0.3);
  CHECK(post.mu[1] == -0.7);
  CHECK(post.sigma[0] == 1.0);
  CHECK(post.sigma[1] == 1.0);
}

TEST_CASE("encode: sigma strictly positive for random weights and inputs") {
  Rng rng(72);
  PriorConfig cfg = small_config();
  const PriorParams p = PriorParams::make(cfg, rng);
  for (int trial = 0; trial < 10; ++trial) {
    const PosteriorParams post = encode(p, random_tensor({12}, rng, 2.0));
    for (double s : post.sigma.values) CHECK(s > 0.0);
  }
}

TEST_CASE("encode: rejects wrong pose dimension") {
  Rng rng(73);
  const PriorParams p = PriorParams::make(small_config(), rng);
  CHECK_THROWS_AS((void)encode(p, Tensor::zeros({5})), DimensionError);
}

TEST_CASE("sample_posterior: zero sigma collapses to mu") {
  PosteriorParams post{Tensor::vec({1.5, -0.25}), Tensor::zeros({2})};
  Rng rng(74);
  const Tensor z = sample_posterior(post, rng);
  CHECK(z[0] == 1.5);
  CHECK(z[1] == -0.25);
}

TEST_CASE("sample_posterior: empirical mean within 4 standard errors") {
  const Tensor mu = Tensor::vec({1.0, -2.0, 0.5});
  const Tensor sigma = Tensor::vec({0.5, 1.5, 0.1});
  PosteriorParams post{mu, sigma};
  Rng rng(75);
  const int n = 100000;
  double acc[3] = {0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const Tensor z = sample_posterior(post, rng);
    for (int c = 0; c < 3; ++c) acc[c] += z[c];
  }
  for (int c = 0; c < 3; ++c) {
    const double se = sigma[c] / std::sqrt(double(n));
    CHECK(std::fabs(acc[c] / n - mu[c]) <= 4.0 * se);
  }
}

TEST_CASE("sample_posterior: fixed seed reproduces the draw") {
  PosteriorParams post{Tensor::vec({0.1, 0.2}), Tensor::vec({1.0, 2.0})};
  Rng a(99), b(99);
  const Tensor za = sample_posterior(post, a);
  const Tensor zb = sample_posterior(post, b);
  CHECK(std::memcmp(za.values.data(), zb.values.data(), 2 * sizeof(double)) ==
        0);
}

TEST_CASE("decode: zero decoder emits the canonical pose, outputs bounded") {
  PriorParams p;
  MLPParams::Layer enc;
  enc.weight = Tensor::zeros({6, 4});
  enc.bias = Tensor::zeros({4});
  p.encoder.layers.push_back(enc);
  MLPParams::Layer dec;
  dec.weight = Tensor::zeros({2, 6});
  dec.bias = Tensor::zeros({6});
  p.decoder.layers.push_back(dec);
  p.latent_dim = 2;
  const Tensor pose = decode(p, Tensor::vec({3.0, -4.0}));
  for (double x : pose.values) CHECK(x == 0.0);

  Rng rng(76);
  const PriorParams q = PriorParams::make(small_config(), rng);
  for (int trial = 0; trial < 10; ++trial) {
    const Tensor out = decode(q, random_tensor({4}, rng, 5.0));
    for (double x : out.values) {
      CHECK(x > -kPi);
      CHECK(x < kPi);
    }
  }
}

TEST_CASE("decode: tape twin matches the numeric path") {
  Rng rng(77);
  const PriorParams p = PriorParams::make(small_config(), rng);
  const Tensor z = random_tensor({4}, rng);
  const Tensor numeric = decode(p, z);
  Tape tape;
  MLPVars dec = make_leaves(tape, p.decoder);
  Var out = decode(tape, dec, p, tape.leaf(z));
  for (int i = 0; i < numeric.size(); ++i)
    CHECK(tape.value(out)[i] == doctest::Approx(numeric[i]).epsilon(1e-12));
}

TEST_CASE("kl_divergence: matches hand arithmetic and stays nonnegative") {
  PosteriorParams unit{Tensor::vec({0.0}), Tensor::vec({1.0})};
  CHECK(kl_divergence(unit) == 0.0);

  PosteriorParams post{Tensor::vec({0.3}), Tensor::vec({0.7})};
  const double want =
      0.5 * (0.7 * 0.7 + 0.3 * 0.3 - 1.0 - 2.0 * std::log(0.7));
  CHECK(kl_divergence(post) == doctest::Approx(want).epsilon(1e-15));

  Rng rng(78);
  for (int trial = 0; trial < 30; ++trial) {
    Tensor mu = random_tensor({8}, rng);
    Tensor sigma = random_tensor({8}, rng);
    for (double& s : sigma.values) s = std::exp(s);
    CHECK(kl_divergence({mu, sigma}) >= 0.0);
  }
}

TEST_CASE("reparameterization: gradient w.r.t. mu matches finite differences") {
  Rng rng(79);
  const PriorParams p = PriorParams::make(small_config(), rng);
  const Tensor sigma = Tensor::vec({0.5, 0.3, 0.8, 0.2});
  std::vector<Tensor> shifts;  // sigma * n_k, common random numbers
  for (int k = 0; k < 6; ++k) {
    Tensor s = Tensor::zeros({4});
    for (int i = 0; i < 4; ++i) s[i] = sigma[i] * rng.normal();
    shifts.push_back(std::move(s));
  }
  Tensor probe = random_tensor({12}, rng);

  Builder expected_decode = [&](Tape& t, const std::vector<Var>& in) {
    MLPVars dec = make_leaves(t, p.decoder);
    Var acc = t.leaf(Tensor::scalar(0.0));
    for (const Tensor& s : shifts) {
      Var z = t.add(in[0], t.leaf(s));
      Var pose = decode(t, dec, p, z);
      acc = t.add(acc, t.sum(t.mul(pose, t.leaf(probe))));
    }
    return t.scale(acc, 1.0 / double(shifts.size()));
  };
  CHECK(fd_max_rel_err(expected_decode, {Tensor::vec({0.1, -0.2, 0.3, 0.0})}) <=
        1e-4);
}

TEST_CASE("train_prior: loss drops and the history is finite") {
  const TrainedFixture& f = trained();
  REQUIRE(f.report.loss_history.size() == 1200);
  const double first = f.report.loss_history.front();
  const double last = f.report.loss_history.back();
  CHECK(std::isfinite(first));
  CHECK(std::isfinite(last));
  CHECK(last < first);
}

TEST_CASE("train_prior: reconstruction beats the mean-pose baseline 2x") {
  const TrainedFixture& f = trained();
  double recon_err = 0.0, baseline_err = 0.0;
  for (const Tensor& pose : f.held.poses) {
    const Tensor recon = decode(f.prior, encode(f.prior, pose).mu);
    recon_err += mae(recon, pose);
    baseline_err += mae(f.mean_pose, pose);
  }
  recon_err /= double(f.held.poses.size());
  baseline_err /= double(f.held.poses.size());
  CHECK(recon_err <= 0.5 * baseline_err);
}

TEST_CASE("train_prior: encode(decode(z)) stays near z on average") {
  const TrainedFixture& f = trained();
  Rng rng(80);
  std::vector<Tensor> zs;
  for (int i = 0; i < 64; ++i) zs.push_back(random_tensor({4}, rng));
  double roundtrip = 0.0, baseline = 0.0;
  int pairs = 0;
  for (size_t i = 0; i < zs.size(); ++i) {
    const Tensor mu = encode(f.prior, decode(f.prior, zs[i])).mu;
    double d2 = 0.0;
    for (int c = 0; c < 4; ++c) d2 += (mu[c] - zs[i][c]) * (mu[c] - zs[i][c]);
    roundtrip += std::sqrt(d2);
    for (size_t j = i + 1; j < zs.size(); ++j) {
      double b2 = 0.0;
      for (int c = 0; c < 4; ++c)
        b2 += (zs[i][c] - zs[j][c]) * (zs[i][c] - zs[j][c]);
      baseline += std::sqrt(b2);
      ++pairs;
    }
  }
  roundtrip /= double(zs.size());
  baseline /= double(pairs);
  CHECK(roundtrip < 0.7 * baseline);
}

TEST_CASE("train_prior: rare high-magnitude poses embed farther out") {
  const TrainedFixture& f = trained();
  double rare = 0.0, dominant = 0.0;
  int nr = 0, nd = 0;
  for (size_t i = 0; i < f.held.poses.size(); ++i) {
    const Tensor mu = encode(f.prior, f.held.poses[i]).mu;
    double n2 = 0.0;
    for (double x : mu.values) n2 += x * x;
    const double norm = std::sqrt(n2);
    if (f.held.cluster[i] == 2) {
      rare += norm;
      ++nr;
    } else if (f.held.cluster[i] == 0) {
      dominant += norm;
      ++nd;
    }
  }
  REQUIRE(nr > 0);
  REQUIRE(nd > 0);
  CHECK(rare / nr > dominant / nd);
}

TEST_CASE("train_prior: same seed twice gives identical parameters") {
  const Corpus c = make_corpus(100, 13, cluster_means(10));
  PriorConfig cfg = small_config();
  cfg.steps = 60;
  auto [p1, r1] = train_prior(c.poses, cfg);
  auto [p2, r2] = train_prior(c.poses, cfg);
  const auto f1 = flatten(p1.encoder.tensors());
  const auto f2 = flatten(p2.encoder.tensors());
  REQUIRE(f1.size() == f2.size());
  CHECK(std::memcmp(f1.data(), f2.data(), f1.size() * sizeof(double)) == 0);
  CHECK(r1.loss_history == r2.loss_history);
}

TEST_CASE("train_prior: non-finite corpus aborts with a numerical error") {
  Corpus c = make_corpus(50, 14, cluster_means(10));
  c.poses[10][3] = std::numeric_limits<double>::infinity();
  PriorConfig cfg = small_config();
  cfg.steps = 20;
  CHECK_THROWS_AS((void)train_prior(c.poses, cfg), NumericalError);
}

TEST_CASE("train_prior: empty corpus is rejected") {
  CHECK_THROWS_AS((void)train_prior({}, small_config()), ContractError);
}

TEST_CASE("PriorParams: validate catches mismatched dimensions") {
  Rng rng(81);
  PriorParams p = PriorParams::make(small_config(), rng);
  p.latent_dim = 5;  // encoder emits 8, decoder consumes 4
  CHECK_THROWS_AS(p.validate(), DimensionError);
}

}  // TEST_SUITE
