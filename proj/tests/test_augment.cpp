#include <doctest.h>

#include <cmath>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include "dapa/augment.hpp"
#include "test_util.hpp"

using namespace dapa;
using namespace dapa::aug;
using testutil::random_tensor;

namespace {

double norm(const Tensor& t) {
  double acc = 0.0;
  for (double x : t.values) acc += x * x;
  return std::sqrt(acc);
}

bool bits_equal(const Tensor& a, const Tensor& b) {
  return a.same_shape(b) &&
         std::memcmp(a.values.data(), b.values.data(),
                     size_t(a.size()) * sizeof(double)) == 0;
}

prior::PriorParams random_prior(int pose_dim, int latent_dim,
                                std::uint64_t seed) {
  prior::PriorConfig cfg;
  cfg.pose_dim = pose_dim;
  cfg.latent_dim = latent_dim;
  cfg.hidden = {32, 32};
  Rng rng(seed);
  return prior::PriorParams::make(cfg, rng);
}

// Encoder collapsed to a constant posterior: mu = (0.4, -0.3), sigma ~ 0.
prior::PriorParams constant_posterior_prior(std::uint64_t seed) {
  prior::PriorParams p = random_prior(48, 2, seed);
  MLPParams::Layer enc;
  enc.weight = Tensor::zeros({48, 4});
  enc.bias = Tensor::vec({0.4, -0.3, -40.0, -40.0});
  p.encoder.layers = {enc};
  p.validate();
  return p;
}

}  // namespace

TEST_SUITE("augment") {

TEST_CASE("apply_perturbation: worked example and error paths") {
  const Tensor z = Tensor::vec({1.0, -2.0});
  const Tensor eps = Tensor::vec({0.2, 1.0});
  const Tensor zt = apply_perturbation(z, 0.5, eps);
  CHECK(zt[0] == 1.1);
  CHECK(zt[1] == -3.0);

  CHECK_THROWS_AS((void)apply_perturbation(z, -0.1, eps), ContractError);
  CHECK_THROWS_AS((void)apply_perturbation(z, 0.5, Tensor::vec({1.0})),
                  DimensionError);
}

TEST_CASE("perturb_latent: s = 0 is the identity, eps still drawn") {
  Rng rng(40);
  const Tensor z = random_tensor({8}, rng, 2.0);
  auto [zt, eps] = perturb_latent(z, 0.0, rng);
  CHECK(bits_equal(zt, z));
  REQUIRE(eps.size() == 8);
  for (double e : eps.values) {
    CHECK(e >= 0.0);
    CHECK(e < 1.0);
  }
}

TEST_CASE("perturb_latent: signs kept, magnitude never shrinks") {
  Rng rng(41);
  int strictly_larger = 0;
  const int n = 10000;
  for (int trial = 0; trial < n; ++trial) {
    const Tensor z = random_tensor({8}, rng, 2.0);
    auto [zt, eps] = perturb_latent(z, 0.5, rng);
    for (int i = 0; i < 8; ++i) {
      CHECK(zt[i] * z[i] >= 0.0);  // same sign (or both zero)
      CHECK(std::fabs(zt[i]) >= std::fabs(z[i]));
      CHECK(zt[i] == z[i] * (1.0 + 0.5 * eps[i]));
    }
    if (norm(zt) > norm(z)) ++strictly_larger;
  }
  CHECK(strictly_larger == n);
}

TEST_CASE("perturb_latent: mean norm grows measurably at s = 0.5") {
  Rng rng(42);
  double sum_z = 0.0, sum_zt = 0.0;
  for (int trial = 0; trial < 10000; ++trial) {
    const Tensor z = random_tensor({8}, rng, 2.0);
    auto [zt, eps] = perturb_latent(z, 0.5, rng);
    sum_z += norm(z);
    sum_zt += norm(zt);
  }
  CHECK(sum_zt > 1.1 * sum_z);
}

TEST_CASE("dapa_augment: collapsed posterior makes zero_perturb deterministic") {
  const prior::PriorParams p = constant_posterior_prior(43);
  const Tensor mu = Tensor::vec({0.4, -0.3});
  const Tensor want = prior::decode(p, mu);

  AugmentConfig cfg;
  cfg.mode = AugmentConfig::Mode::zero_perturb;
  Rng rng(44);
  const Tensor theta = random_tensor({48}, rng);
  auto [syn1, prov1] = dapa_augment(p, theta, cfg, rng);
  for (int i = 0; i < 48; ++i)
    CHECK(syn1[i] == doctest::Approx(want[i]).epsilon(1e-12));

  cfg.use_posterior_mean = true;  // now exactly decode(mu), bit for bit
  auto [syn2, prov2] = dapa_augment(p, theta, cfg, rng);
  CHECK(bits_equal(syn2, want));
  CHECK(bits_equal(prov2.z, mu));
  CHECK(bits_equal(prov2.z_tilde, mu));
}

TEST_CASE("dapa_augment: random_pose ignores the input, dapa does not") {
  const prior::PriorParams p = random_prior(48, 8, 45);
  Rng seed_rng(46);
  const Tensor theta_a = random_tensor({48}, seed_rng);
  const Tensor theta_b = random_tensor({48}, seed_rng);

  AugmentConfig cfg;
  cfg.mode = AugmentConfig::Mode::random_pose;
  Rng ra(99), rb(99);
  auto [pa, prov_a] = dapa_augment(p, theta_a, cfg, ra);
  auto [pb, prov_b] = dapa_augment(p, theta_b, cfg, rb);
  CHECK(bits_equal(pa, pb));
  CHECK(prov_a.z.size() == 0);
  CHECK(prov_a.eps.size() == 0);
  CHECK(prov_a.z_tilde.size() == 8);

  cfg.mode = AugmentConfig::Mode::dapa;
  Rng rc(99), rd(99);
  auto [pc, prov_c] = dapa_augment(p, theta_a, cfg, rc);
  auto [pd, prov_d] = dapa_augment(p, theta_b, cfg, rd);
  double max_diff = 0.0;
  for (int i = 0; i < 48; ++i)
    max_diff = std::fmax(max_diff, std::fabs(pc[i] - pd[i]));
  CHECK(max_diff > 1e-12);
}

TEST_CASE("dapa_augment: every draw keeps the latent norm from shrinking") {
  const prior::PriorParams p = random_prior(48, 8, 47);
  AugmentConfig cfg;
  Rng rng(48);
  int strict = 0;
  const int n = 1000;
  for (int i = 0; i < n; ++i) {
    const Tensor theta = random_tensor({48}, rng);
    auto [syn, prov] = dapa_augment(p, theta, cfg, rng);
    REQUIRE(prov.z.size() == 8);
    CHECK(norm(prov.z_tilde) >= norm(prov.z));
    if (norm(prov.z_tilde) > norm(prov.z)) ++strict;
    for (double e : prov.eps.values) {
      CHECK(e >= 0.0);
      CHECK(e < 1.0);
    }
  }
  CHECK(strict == n);
}

TEST_CASE("dapa_augment: non-finite input is rejected after one resample") {
  const prior::PriorParams p = random_prior(48, 8, 49);
  Tensor theta = Tensor::zeros({48});
  theta[5] = std::numeric_limits<double>::infinity();
  AugmentConfig cfg;
  Rng rng(50);
  CHECK_THROWS_AS((void)dapa_augment(p, theta, cfg, rng), NumericalError);
}

TEST_CASE("make_synthetic_example: canonical pose lands on the rest skeleton") {
  const auto tree = body::KinematicTree::human17();
  RegressionContext ctx{Tensor::zeros({10}), Tensor::zeros({3}),
                        {1.0, 0.0, 0.0}};
  AugmentConfig cfg;
  Rng rng(51);
  const SyntheticSample syn = make_synthetic_example(
      tree, Tensor::zeros({tree.pose_dims()}), ctx, cfg, rng);
  CHECK(bits_equal(syn.joints3d, tree.rest_joints()));
}

TEST_CASE("make_synthetic_example: stored targets reproduce bit-exactly") {
  const auto tree = body::KinematicTree::human17();
  Rng rng(52);
  RegressionContext ctx{random_tensor({10}, rng, 0.3),
                        random_tensor({3}, rng, 0.3),
                        {1.05, 0.02, -0.03}};
  AugmentConfig cfg;
  const Tensor theta = random_tensor({tree.pose_dims()}, rng);
  const SyntheticSample syn =
      make_synthetic_example(tree, theta, ctx, cfg, rng);

  const body::BodyState state = body::forward_kinematics(
      tree, syn.body_pose, syn.orient, syn.beta);
  CHECK(bits_equal(state.joints, syn.joints3d));
  CHECK(bits_equal(cam::project(syn.joints3d, syn.camera), syn.joints2d));
  CHECK(bits_equal(syn.obs.keypoints(), syn.joints2d));
  for (double c : syn.obs.confidences().values) CHECK(c == 1.0);
  CHECK(bits_equal(syn.beta, ctx.beta));
  CHECK(bits_equal(syn.orient, ctx.orient));
}

TEST_CASE("make_synthetic_example: optional fresh shape sampling") {
  const auto tree = body::KinematicTree::human17();
  RegressionContext ctx{Tensor::full({10}, 9.0), Tensor::zeros({3}),
                        {1.0, 0.0, 0.0}};
  AugmentConfig cfg;
  cfg.sample_shape = true;
  cfg.shape_std = 0.2;
  Rng rng(53);
  double acc = 0.0, acc2 = 0.0;
  const int n = 200;
  for (int i = 0; i < n; ++i) {
    const SyntheticSample syn = make_synthetic_example(
        tree, Tensor::zeros({tree.pose_dims()}), ctx, cfg, rng);
    CHECK(!bits_equal(syn.beta, ctx.beta));
    for (double b : syn.beta.values) {
      acc += b;
      acc2 += b * b;
    }
  }
  const double m = acc / (n * 10.0);
  const double sd = std::sqrt(acc2 / (n * 10.0) - m * m);
  CHECK(std::fabs(m) < 0.02);
  CHECK(sd > 0.15);
  CHECK(sd < 0.25);
}

TEST_CASE("make_synthetic_example: pose dimension must match the tree") {
  const auto tree = body::KinematicTree::human17();
  RegressionContext ctx{Tensor::zeros({10}), Tensor::zeros({3}),
                        {1.0, 0.0, 0.0}};
  AugmentConfig cfg;
  Rng rng(54);
  CHECK_THROWS_AS((void)make_synthetic_example(tree, Tensor::zeros({12}), ctx,
                                               cfg, rng),
                  DimensionError);
}

TEST_CASE("provenance jsonl: one parseable line with the logged norms") {
  Provenance prov;
  prov.source_id = 12;
  prov.mode = AugmentConfig::Mode::dapa;
  prov.z = Tensor::vec({3.0, 4.0});
  prov.z_tilde = Tensor::vec({6.0, 8.0});
  std::ostringstream os;
  append_provenance_jsonl(os, prov);
  const auto j = nlohmann::json::parse(os.str());
  CHECK(j["id"] == 12);
  CHECK(j["mode"] == "dapa");
  CHECK(j["z_norm"] == doctest::Approx(5.0).epsilon(1e-12));
  CHECK(j["z_tilde_norm"] == doctest::Approx(10.0).epsilon(1e-12));
}

TEST_CASE("augment config: validation and mode names") {
  AugmentConfig cfg;
  cfg.s = -0.5;
  CHECK_THROWS_AS(cfg.validate(), ContractError);
  CHECK(mode_from_string("zero-perturb") == AugmentConfig::Mode::zero_perturb);
  CHECK(mode_from_string("random_pose") == AugmentConfig::Mode::random_pose);
  CHECK_THROWS_AS((void)mode_from_string("vaporwave"), ConfigError);
  CHECK(to_string(AugmentConfig::Mode::zero_perturb) == "zero_perturb");
}

}  // TEST_SUITE
