#include "dapa/cli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "dapa/body.hpp"
#include "dapa/camera.hpp"
#include "dapa/metrics.hpp"
#include "json.hpp"

namespace dapa::cli {

namespace fs = std::filesystem;
using nlohmann::json;

// ---- small helpers ----

static std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

static std::string tree_fingerprint(const body::KinematicTree& tree) {
  std::uint64_t h = fnv1a(std::to_string(tree.joints));
  auto mix = [&h](const Tensor& t) {
    const auto* p = reinterpret_cast<const unsigned char*>(t.values.data());
    h = fnv1a({p, t.values.size() * sizeof(double)}, h);
  };
  mix(tree.rest_offsets);
  mix(tree.shape_basis);
  return "tree/" + hex64(h);
}

static std::string file_fingerprint(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(is)),
                    std::istreambuf_iterator<char>());
  return hex64(fnv1a(bytes));
}

static void check_keys(const json& obj, const std::string& where,
                       std::initializer_list<const char*> allowed) {
  if (!obj.is_object())
    throw ConfigError("config section " + where + " must be an object");
  for (const auto& item : obj.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw ConfigError("unknown config key " + where + "." + item.key());
  }
}

static std::string modality_name(Observation::Modality m) {
  return m == Observation::Modality::keypoints2d ? "keypoints2d"
                                                       : "silhouette";
}

static Observation::Modality modality_from(const std::string& s) {
  if (s == "keypoints2d") return Observation::Modality::keypoints2d;
  if (s == "silhouette") return Observation::Modality::silhouette;
  throw ConfigError("unknown observation modality: " + s);
}

static const char* act_name(Activation a) {
  return a == Activation::tanh ? "tanh" : "identity";
}

static Activation act_from(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw SchemaError("unknown activation: " + s);
}

// ---- paths ----

static fs::path or_default(const std::string& explicit_path,
                           const std::string& dir, const char* name) {
  if (!explicit_path.empty()) return fs::path(explicit_path);
  return fs::path(dir) / name;
}

fs::path Paths::source_file() const {
  return or_default(source, data_dir, "source.jsonl");
}
fs::path Paths::target_train_file() const {
  return or_default(target_train, data_dir, "target_train.jsonl");
}
fs::path Paths::target_test_file() const {
  return or_default(target_test, data_dir, "target_test.jsonl");
}
fs::path Paths::prior_file() const {
  return or_default(prior, run_dir, "prior.json");
}
fs::path Paths::pretrain_file() const {
  return or_default(pretrain_checkpoint, run_dir, "pretrain.ckpt");
}
fs::path Paths::adapt_file(train::AdaptMode mode) const {
  return fs::path(run_dir) / ("adapt_" + train::to_string(mode) + ".ckpt");
}

// ---- config ----

RunConfig RunConfig::defaults() {
  const auto tree = body::KinematicTree::human17();
  RunConfig cfg;
  cfg.source = data::default_source_spec(tree, 500, 1);
  cfg.target_train = data::default_target_spec(tree, 200, 2);
  cfg.target_test = data::default_target_spec(tree, 200, 3);
  cfg.prior.pose_dim = tree.pose_dims();
  cfg.regressor.joints = tree.joints;
  cfg.regressor.shape_dims = tree.shape_dims();
  cfg.pretrain.phase = train::Phase::pretrain;
  cfg.pretrain.lr = 1e-3;
  cfg.pretrain.seed = 11;
  cfg.adapt.phase = train::Phase::adapt;
  cfg.adapt.lr = 3e-4;
  cfg.adapt.seed = 12;
  return cfg;
}

void RunConfig::validate() const {
  source.validate();
  target_train.validate();
  target_test.validate();
  if (prior.latent_dim <= 0 || prior.pose_dim <= 0 || prior.hidden.empty() ||
      prior.steps < 0 || prior.batch <= 0 || prior.lr <= 0.0)
    throw ConfigError("invalid prior section");
  regressor.validate();
  pretrain.validate();
  adapt.validate();
  if (eval.alpha <= 0.0 || eval.alphas.empty())
    throw ConfigError("eval needs a positive alpha and a nonempty alpha grid");
  for (double a : eval.alphas)
    if (a <= 0.0) throw ConfigError("eval alphas must be positive");
  if (mesh.rings_per_bone < 2 || mesh.ring_vertices < 3)
    throw ConfigError("mesh needs rings_per_bone >= 2, ring_vertices >= 3");
  if (mesh.sample.empty()) throw ConfigError("mesh.sample must be set");
  if (threads < 1) throw ConfigError("threads must be >= 1");
  if (paths.data_dir.empty() || paths.run_dir.empty())
    throw ConfigError("paths.data_dir and paths.run_dir must be set");
}

static void read_noise(const json& j, data::NoiseParams& n) {
  check_keys(j, "noise",
             {"jitter_std", "dropout_prob", "conf_cap", "conf_floor"});
  if (j.contains("jitter_std")) j.at("jitter_std").get_to(n.jitter_std);
  if (j.contains("dropout_prob")) j.at("dropout_prob").get_to(n.dropout_prob);
  if (j.contains("conf_cap")) j.at("conf_cap").get_to(n.conf_cap);
  if (j.contains("conf_floor")) j.at("conf_floor").get_to(n.conf_floor);
}

static void read_domain(const json& j, const std::string& where,
                        data::DomainSpec& spec) {
  check_keys(j, where,
             {"count", "seed", "shape_std", "cam_scale_lo", "cam_scale_hi",
              "cam_trans_range", "orient_yaw", "orient_tilt", "obs_modality",
              "noise"});
  if (j.contains("count")) j.at("count").get_to(spec.count);
  if (j.contains("seed")) j.at("seed").get_to(spec.seed);
  if (j.contains("shape_std")) j.at("shape_std").get_to(spec.shape_std);
  if (j.contains("cam_scale_lo"))
    j.at("cam_scale_lo").get_to(spec.cam_scale_lo);
  if (j.contains("cam_scale_hi"))
    j.at("cam_scale_hi").get_to(spec.cam_scale_hi);
  if (j.contains("cam_trans_range"))
    j.at("cam_trans_range").get_to(spec.cam_trans_range);
  if (j.contains("orient_yaw")) j.at("orient_yaw").get_to(spec.orient_yaw);
  if (j.contains("orient_tilt")) j.at("orient_tilt").get_to(spec.orient_tilt);
  if (j.contains("obs_modality"))
    spec.obs_modality = modality_from(j.at("obs_modality").get<std::string>());
  if (j.contains("noise")) read_noise(j.at("noise"), spec.noise);
}

static void read_phase(const json& j, const std::string& where, bool with_mode,
                       train::TrainConfig& cfg) {
  check_keys(j, where,
             with_mode ? std::initializer_list<const char*>{
                             "mode", "steps", "batch", "lr", "eval_interval",
                             "seed"}
                       : std::initializer_list<const char*>{
                             "steps", "batch", "lr", "eval_interval", "seed"});
  if (with_mode && j.contains("mode"))
    cfg.mode = train::adapt_mode_from_string(j.at("mode").get<std::string>());
  if (j.contains("steps")) j.at("steps").get_to(cfg.steps);
  if (j.contains("batch")) j.at("batch").get_to(cfg.batch);
  if (j.contains("lr")) j.at("lr").get_to(cfg.lr);
  if (j.contains("eval_interval"))
    j.at("eval_interval").get_to(cfg.eval_interval);
  if (j.contains("seed")) j.at("seed").get_to(cfg.seed);
}

RunConfig load_run_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config file not found: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw ConfigError("config parse failed: " + std::string(e.what()));
  }

  RunConfig cfg = RunConfig::defaults();
  try {
    check_keys(j, "config",
               {"paths", "source", "target_train", "target_test", "prior",
                "regressor", "pretrain", "adapt", "augment", "weights", "eval",
                "mesh", "threads"});
    if (j.contains("paths")) {
      const json& p = j.at("paths");
      check_keys(p, "paths",
                 {"data_dir", "run_dir", "source", "target_train",
                  "target_test", "prior", "pretrain_checkpoint",
                  "eval_checkpoint", "keypoints_json"});
      auto get = [&p](const char* k, std::string& out) {
        if (p.contains(k)) p.at(k).get_to(out);
      };
      get("data_dir", cfg.paths.data_dir);
      get("run_dir", cfg.paths.run_dir);
      get("source", cfg.paths.source);
      get("target_train", cfg.paths.target_train);
      get("target_test", cfg.paths.target_test);
      get("prior", cfg.paths.prior);
      get("pretrain_checkpoint", cfg.paths.pretrain_checkpoint);
      get("eval_checkpoint", cfg.paths.eval_checkpoint);
      get("keypoints_json", cfg.paths.keypoints_json);
    }
    if (j.contains("source")) read_domain(j.at("source"), "source", cfg.source);
    if (j.contains("target_train"))
      read_domain(j.at("target_train"), "target_train", cfg.target_train);
    if (j.contains("target_test"))
      read_domain(j.at("target_test"), "target_test", cfg.target_test);
    if (j.contains("prior")) {
      const json& p = j.at("prior");
      check_keys(p, "prior",
                 {"latent_dim", "hidden", "beta_kl", "lr", "steps", "batch",
                  "seed"});
      if (p.contains("latent_dim"))
        p.at("latent_dim").get_to(cfg.prior.latent_dim);
      if (p.contains("hidden")) p.at("hidden").get_to(cfg.prior.hidden);
      if (p.contains("beta_kl")) p.at("beta_kl").get_to(cfg.prior.beta_kl);
      if (p.contains("lr")) p.at("lr").get_to(cfg.prior.lr);
      if (p.contains("steps")) p.at("steps").get_to(cfg.prior.steps);
      if (p.contains("batch")) p.at("batch").get_to(cfg.prior.batch);
      if (p.contains("seed")) p.at("seed").get_to(cfg.prior.seed);
    }
    if (j.contains("regressor")) {
      const json& r = j.at("regressor");
      check_keys(r, "regressor", {"hidden", "iterations"});
      if (r.contains("hidden")) r.at("hidden").get_to(cfg.regressor.hidden);
      if (r.contains("iterations"))
        r.at("iterations").get_to(cfg.regressor.iterations);
    }
    if (j.contains("pretrain"))
      read_phase(j.at("pretrain"), "pretrain", false, cfg.pretrain);
    if (j.contains("adapt")) read_phase(j.at("adapt"), "adapt", true, cfg.adapt);
    if (j.contains("augment")) {
      const json& a = j.at("augment");
      check_keys(a, "augment",
                 {"s", "use_posterior_mean", "sample_shape", "shape_std"});
      aug::AugmentConfig& ag = cfg.adapt.augment;
      if (a.contains("s")) a.at("s").get_to(ag.s);
      if (a.contains("use_posterior_mean"))
        a.at("use_posterior_mean").get_to(ag.use_posterior_mean);
      if (a.contains("sample_shape"))
        a.at("sample_shape").get_to(ag.sample_shape);
      if (a.contains("shape_std")) a.at("shape_std").get_to(ag.shape_std);
      cfg.pretrain.augment = ag;
    }
    if (j.contains("weights")) {
      const json& w = j.at("weights");
      check_keys(w, "weights",
                 {"lambda_2d", "lambda_3d", "lambda_theta", "lambda_beta",
                  "conf_weighting"});
      obj::LossWeights& lw = cfg.adapt.weights;
      if (w.contains("lambda_2d")) w.at("lambda_2d").get_to(lw.lambda_2d);
      if (w.contains("lambda_3d")) w.at("lambda_3d").get_to(lw.lambda_3d);
      if (w.contains("lambda_theta"))
        w.at("lambda_theta").get_to(lw.lambda_theta);
      if (w.contains("lambda_beta")) w.at("lambda_beta").get_to(lw.lambda_beta);
      if (w.contains("conf_weighting"))
        w.at("conf_weighting").get_to(lw.conf_weighting);
      cfg.pretrain.weights = lw;
    }
    if (j.contains("eval")) {
      const json& e = j.at("eval");
      check_keys(e, "eval", {"alpha", "alphas"});
      if (e.contains("alpha")) e.at("alpha").get_to(cfg.eval.alpha);
      if (e.contains("alphas")) e.at("alphas").get_to(cfg.eval.alphas);
    }
    if (j.contains("mesh")) {
      const json& m = j.at("mesh");
      check_keys(m, "mesh", {"sample", "rings_per_bone", "ring_vertices"});
      if (m.contains("sample")) m.at("sample").get_to(cfg.mesh.sample);
      if (m.contains("rings_per_bone"))
        m.at("rings_per_bone").get_to(cfg.mesh.rings_per_bone);
      if (m.contains("ring_vertices"))
        m.at("ring_vertices").get_to(cfg.mesh.ring_vertices);
    }
    if (j.contains("threads")) j.at("threads").get_to(cfg.threads);
  } catch (const json::exception& e) {
    throw ConfigError("config field error: " + std::string(e.what()));
  }
  return cfg;
}

RunConfig materialize(const std::optional<std::string>& config_path,
                      const CliOverrides& over, const std::string& command) {
  RunConfig cfg =
      config_path ? load_run_config(*config_path) : RunConfig::defaults();

  if (over.mode) cfg.adapt.mode = train::adapt_mode_from_string(*over.mode);
  if (over.seed) {
    const std::uint64_t s = *over.seed;
    if (command == "gen-data") {
      cfg.source.seed = s;
      cfg.target_train.seed = s + 1;
      cfg.target_test.seed = s + 2;
    } else if (command == "train-prior") {
      cfg.prior.seed = s;
    } else if (command == "pretrain") {
      cfg.pretrain.seed = s;
    } else if (command == "adapt") {
      cfg.adapt.seed = s;
    }
  }
  if (over.out) {
    if (command == "gen-data")
      cfg.paths.data_dir = *over.out;
    else
      cfg.paths.run_dir = *over.out;
  }

  if (const char* env = std::getenv("DAPA_LAB_THREADS")) {
    int cap = 0;
    try {
      cap = std::stoi(env);
    } catch (const std::exception&) {
      throw ConfigError("DAPA_LAB_THREADS must be an integer");
    }
    if (cap < 1) throw ConfigError("DAPA_LAB_THREADS must be >= 1");
    cfg.threads = std::min(cfg.threads, cap);
  }

  // The no-perturbation ablation runs with the noise scale pinned to zero;
  // reflect that in the effective config rather than only deep in the loop.
  if (cfg.adapt.mode == train::AdaptMode::zero_perturb) cfg.adapt.augment.s = 0.0;

  cfg.validate();
  return cfg;
}

static json domain_json(const data::DomainSpec& spec) {
  json n{{"jitter_std", spec.noise.jitter_std},
         {"dropout_prob", spec.noise.dropout_prob},
         {"conf_cap", spec.noise.conf_cap},
         {"conf_floor", spec.noise.conf_floor}};
  return json{{"count", spec.count},
              {"seed", spec.seed},
              {"shape_std", spec.shape_std},
              {"cam_scale_lo", spec.cam_scale_lo},
              {"cam_scale_hi", spec.cam_scale_hi},
              {"cam_trans_range", spec.cam_trans_range},
              {"orient_yaw", spec.orient_yaw},
              {"orient_tilt", spec.orient_tilt},
              {"obs_modality", modality_name(spec.obs_modality)},
              {"noise", n}};
}

static json phase_json(const train::TrainConfig& cfg, bool with_mode) {
  json j{{"steps", cfg.steps},
         {"batch", cfg.batch},
         {"lr", cfg.lr},
         {"eval_interval", cfg.eval_interval},
         {"seed", cfg.seed}};
  if (with_mode) j["mode"] = train::to_string(cfg.mode);
  return j;
}

std::string config_echo_json(const RunConfig& cfg, const std::string& command) {
  const aug::AugmentConfig& ag = cfg.adapt.augment;
  const obj::LossWeights& lw = cfg.adapt.weights;
  json j{
      {"command", command},
      {"threads", cfg.threads},
      {"paths",
       {{"data_dir", cfg.paths.data_dir},
        {"run_dir", cfg.paths.run_dir},
        {"source", cfg.paths.source_file().string()},
        {"target_train", cfg.paths.target_train_file().string()},
        {"target_test", cfg.paths.target_test_file().string()},
        {"prior", cfg.paths.prior_file().string()},
        {"pretrain_checkpoint", cfg.paths.pretrain_file().string()},
        {"eval_checkpoint", cfg.paths.eval_checkpoint},
        {"keypoints_json", cfg.paths.keypoints_json}}},
      {"source", domain_json(cfg.source)},
      {"target_train", domain_json(cfg.target_train)},
      {"target_test", domain_json(cfg.target_test)},
      {"prior",
       {{"latent_dim", cfg.prior.latent_dim},
        {"hidden", cfg.prior.hidden},
        {"beta_kl", cfg.prior.beta_kl},
        {"lr", cfg.prior.lr},
        {"steps", cfg.prior.steps},
        {"batch", cfg.prior.batch},
        {"seed", cfg.prior.seed}}},
      {"regressor",
       {{"hidden", cfg.regressor.hidden},
        {"iterations", cfg.regressor.iterations}}},
      {"pretrain", phase_json(cfg.pretrain, false)},
      {"adapt", phase_json(cfg.adapt, true)},
      {"augment",
       {{"s", ag.s},
        {"use_posterior_mean", ag.use_posterior_mean},
        {"sample_shape", ag.sample_shape},
        {"shape_std", ag.shape_std}}},
      {"weights",
       {{"lambda_2d", lw.lambda_2d},
        {"lambda_3d", lw.lambda_3d},
        {"lambda_theta", lw.lambda_theta},
        {"lambda_beta", lw.lambda_beta},
        {"conf_weighting", lw.conf_weighting}}},
      {"eval", {{"alpha", cfg.eval.alpha}, {"alphas", cfg.eval.alphas}}},
      {"mesh",
       {{"sample", cfg.mesh.sample},
        {"rings_per_bone", cfg.mesh.rings_per_bone},
        {"ring_vertices", cfg.mesh.ring_vertices}}}};
  return j.dump(2);
}

static void write_echo(const fs::path& dir, const std::string& tag,
                       const RunConfig& cfg, const std::string& command) {
  fs::create_directories(dir);
  const fs::path path = dir / ("config_echo_" + tag + ".json");
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << config_echo_json(cfg, command) << "\n";
}

static void guard_outputs(const std::vector<fs::path>& outputs, bool force) {
  if (force) return;
  for (const fs::path& p : outputs)
    if (fs::exists(p))
      throw ConfigError("output exists: " + p.string() +
                        " (pass --force to overwrite)");
}

static data::Dataset load_dataset(const fs::path& path,
                                  const body::KinematicTree& tree,
                                  const char* producer) {
  if (!fs::exists(path))
    throw MissingPrerequisiteError("dataset not found: " + path.string() +
                                   "; run `dapa-lab " + producer + "` first");
  return data::load_jsonl(path.string(), tree);
}

// ---- prior artifact ----

static json mlp_json(const MLPParams& mlp) {
  json layers = json::array();
  for (const auto& l : mlp.layers)
    layers.push_back(json{{"in", l.weight.shape[0]},
                          {"out", l.weight.shape[1]},
                          {"act", act_name(l.act)},
                          {"weight", l.weight.values},
                          {"bias", l.bias.values}});
  return layers;
}

static MLPParams mlp_from_json(const json& layers) {
  MLPParams mlp;
  for (const json& lj : layers) {
    MLPParams::Layer l;
    const int in = lj.at("in").get<int>();
    const int out = lj.at("out").get<int>();
    l.weight = Tensor::zeros({in, out});
    l.bias = Tensor::zeros({out});
    lj.at("weight").get_to(l.weight.values);
    lj.at("bias").get_to(l.bias.values);
    if (int(l.weight.values.size()) != in * out ||
        int(l.bias.values.size()) != out)
      throw SchemaError("prior artifact: layer value count mismatch");
    l.act = act_from(lj.at("act").get<std::string>());
    mlp.layers.push_back(std::move(l));
  }
  return mlp;
}

void save_prior(const fs::path& path, const PriorArtifact& art) {
  json j{{"type", "dapa_prior"},
         {"version", 1},
         {"config",
          {{"pose_dim", art.config.pose_dim},
           {"latent_dim", art.config.latent_dim},
           {"hidden", art.config.hidden},
           {"beta_kl", art.config.beta_kl},
           {"lr", art.config.lr},
           {"steps", art.config.steps},
           {"batch", art.config.batch},
           {"seed", art.config.seed}}},
         {"corpus_fingerprint", art.corpus_fingerprint},
         {"final_loss", art.final_loss},
         {"encoder", mlp_json(art.params.encoder)},
         {"decoder", mlp_json(art.params.decoder)}};
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os << j.dump() << "\n";
  if (!os) throw IoError("write failed for " + path.string());
}

PriorArtifact load_prior(const fs::path& path) {
  std::ifstream is(path);
  if (!is)
    throw MissingPrerequisiteError("prior artifact not found: " +
                                   path.string() +
                                   "; run `dapa-lab train-prior` first");
  PriorArtifact art;
  try {
    json j;
    is >> j;
    if (j.at("type").get<std::string>() != "dapa_prior")
      throw SchemaError("prior artifact: wrong type tag");
    if (j.at("version").get<int>() != 1)
      throw SchemaError("prior artifact: unsupported version");
    const json& c = j.at("config");
    c.at("pose_dim").get_to(art.config.pose_dim);
    c.at("latent_dim").get_to(art.config.latent_dim);
    c.at("hidden").get_to(art.config.hidden);
    c.at("beta_kl").get_to(art.config.beta_kl);
    c.at("lr").get_to(art.config.lr);
    c.at("steps").get_to(art.config.steps);
    c.at("batch").get_to(art.config.batch);
    c.at("seed").get_to(art.config.seed);
    j.at("corpus_fingerprint").get_to(art.corpus_fingerprint);
    j.at("final_loss").get_to(art.final_loss);
    art.params.encoder = mlp_from_json(j.at("encoder"));
    art.params.decoder = mlp_from_json(j.at("decoder"));
    art.params.latent_dim = art.config.latent_dim;
  } catch (const json::exception& e) {
    throw SchemaError("prior artifact parse failed: " + std::string(e.what()));
  }
  try {
    art.params.validate();
  } catch (const Error& e) {
    throw SchemaError("prior artifact invalid: " + std::string(e.what()));
  }
  if (art.params.pose_dim() != art.config.pose_dim)
    throw SchemaError("prior artifact: config/tensor pose dim mismatch");
  return art;
}

// ---- commands ----

void cmd_gen_data(const RunConfig& cfg, bool force) {
  const fs::path out = cfg.paths.data_dir;
  if (fs::exists(out) && !force)
    throw ConfigError("output directory exists: " + out.string() +
                      " (pass --force to regenerate)");
  fs::create_directories(out);

  const auto tree = body::KinematicTree::human17();
  std::optional<body::MeshTemplate> tmpl;
  const bool silhouette =
      cfg.source.obs_modality == Observation::Modality::silhouette ||
      cfg.target_train.obs_modality ==
          Observation::Modality::silhouette ||
      cfg.target_test.obs_modality == Observation::Modality::silhouette;
  if (silhouette)
    tmpl = body::build_template(tree, cfg.mesh.rings_per_bone,
                                cfg.mesh.ring_vertices);
  const body::MeshTemplate* tp = tmpl ? &*tmpl : nullptr;

  json manifest;
  auto emit = [&](const char* name, const data::DomainSpec& spec,
                  const fs::path& file) {
    const data::Dataset ds = data::sample_domain(spec, tree, tp);
    if (!file.parent_path().empty()) fs::create_directories(file.parent_path());
    data::save_jsonl(ds, file.string());
    manifest[name] = json{{"file", file.string()},
                          {"fingerprint", ds.fingerprint},
                          {"count", ds.size()},
                          {"seed", spec.seed}};
  };
  emit("source", cfg.source, cfg.paths.source_file());
  emit("target_train", cfg.target_train, cfg.paths.target_train_file());
  emit("target_test", cfg.target_test, cfg.paths.target_test_file());

  std::ofstream ms(out / "data_manifest.json");
  if (!ms) throw IoError("cannot write data manifest");
  ms << manifest.dump(2) << "\n";
  write_echo(out, "gen_data", cfg, "gen-data");
}

void cmd_train_prior(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();
  const data::Dataset src =
      load_dataset(cfg.paths.source_file(), tree, "gen-data");

  std::vector<Tensor> corpus;
  corpus.reserve(src.samples.size());
  for (const auto& s : src.samples)
    corpus.push_back(s.train_labels().params.body_pose);

  prior::PriorConfig pcfg = cfg.prior;
  pcfg.pose_dim = tree.pose_dims();

  const fs::path out = cfg.paths.prior_file();
  const fs::path run_dir = cfg.paths.run_dir;
  guard_outputs({out}, force);

  auto [params, report] = prior::train_prior(corpus, pcfg);

  fs::create_directories(run_dir);
  if (!out.parent_path().empty()) fs::create_directories(out.parent_path());
  save_prior(out, {std::move(params), pcfg, src.fingerprint,
                   report.final_loss});

  std::ofstream hs(run_dir / "history_prior.csv");
  hs << "step,loss\n";
  hs.precision(17);
  for (size_t i = 0; i < report.loss_history.size(); ++i)
    hs << i << "," << report.loss_history[i] << "\n";
  write_echo(run_dir, "train_prior", cfg, "train-prior");
}

void cmd_pretrain(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();
  const data::Dataset src =
      load_dataset(cfg.paths.source_file(), tree, "gen-data");

  reg::RegressorConfig rc = cfg.regressor;
  rc.joints = tree.joints;
  rc.shape_dims = tree.shape_dims();
  rc.obs_dim =
      src.samples.empty() ? 3 * tree.joints : src.samples[0].obs.dim();
  rc.validate();

  const fs::path ckpt_path = cfg.paths.pretrain_file();
  const fs::path run_dir = cfg.paths.run_dir;
  guard_outputs({ckpt_path}, force);

  Rng rng(cfg.pretrain.seed);
  reg::RegressorParams params = reg::RegressorParams::make(rc, rng);
  params.mean_params = reg::init_mean_params(src, rc);

  train::SessionState st = train::make_session(std::move(params), cfg.pretrain);
  const train::History history = train::pretrain(st, src, tree, cfg.pretrain);

  fs::create_directories(run_dir);
  if (!ckpt_path.parent_path().empty())
    fs::create_directories(ckpt_path.parent_path());
  train::save_checkpoint(
      ckpt_path, train::make_checkpoint(st, tree_fingerprint(tree), "",
                                        config_echo_json(cfg, "pretrain")));
  history.write_csv(run_dir / "history_pretrain.csv");
  write_echo(run_dir, "pretrain", cfg, "pretrain");
}

void cmd_adapt(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();

  const fs::path pre_path = cfg.paths.pretrain_file();
  if (!fs::exists(pre_path))
    throw MissingPrerequisiteError("pretrain checkpoint not found: " +
                                   pre_path.string() +
                                   "; run `dapa-lab pretrain` first");
  train::Checkpoint pre = train::load_checkpoint(pre_path);
  if (pre.tree_fingerprint != tree_fingerprint(tree))
    throw SchemaError("pretrain checkpoint was built for a different tree");

  const PriorArtifact prior_art = load_prior(cfg.paths.prior_file());

  data::Dataset target;
  if (!cfg.paths.keypoints_json.empty()) {
    if (!fs::exists(cfg.paths.keypoints_json))
      throw MissingPrerequisiteError("keypoint file not found: " +
                                     cfg.paths.keypoints_json);
    target = data::load_keypoint_json(cfg.paths.keypoints_json, tree);
  } else {
    target = load_dataset(cfg.paths.target_train_file(), tree, "gen-data");
  }

  std::optional<data::Dataset> eval_set;
  if (cfg.adapt.eval_interval > 0)
    eval_set = load_dataset(cfg.paths.target_test_file(), tree, "gen-data");

  const std::string mode_name = train::to_string(cfg.adapt.mode);
  const fs::path out = cfg.paths.adapt_file(cfg.adapt.mode);
  const fs::path run_dir = cfg.paths.run_dir;
  guard_outputs({out}, force);

  train::SessionState st =
      train::make_session(std::move(pre.params), cfg.adapt);
  const train::History history =
      train::adapt(st, target, prior_art.params, tree, cfg.adapt,
                   eval_set ? &*eval_set : nullptr);

  fs::create_directories(run_dir);
  train::save_checkpoint(
      out, train::make_checkpoint(st, tree_fingerprint(tree),
                                  file_fingerprint(cfg.paths.prior_file()),
                                  config_echo_json(cfg, "adapt")));
  history.write_csv(run_dir / ("history_adapt_" + mode_name + ".csv"));
  write_echo(run_dir, "adapt_" + mode_name, cfg, "adapt");
}

static fs::path resolve_eval_checkpoint(const RunConfig& cfg) {
  if (!cfg.paths.eval_checkpoint.empty()) {
    const fs::path p = cfg.paths.eval_checkpoint;
    if (!fs::exists(p))
      throw MissingPrerequisiteError("checkpoint not found: " + p.string());
    return p;
  }
  const fs::path adapted = cfg.paths.adapt_file(cfg.adapt.mode);
  if (fs::exists(adapted)) return adapted;
  const fs::path pre = cfg.paths.pretrain_file();
  if (fs::exists(pre)) return pre;
  throw MissingPrerequisiteError(
      "no checkpoint found under " + cfg.paths.run_dir +
      "; run `dapa-lab pretrain` (and optionally `dapa-lab adapt`) first");
}

static train::Checkpoint load_for_dataset(const fs::path& ckpt_path,
                                          const data::Dataset& ds,
                                          const body::KinematicTree& tree) {
  train::Checkpoint ck = train::load_checkpoint(ckpt_path);
  if (ck.tree_fingerprint != tree_fingerprint(tree))
    throw SchemaError("checkpoint was built for a different kinematic tree");
  if (!ds.samples.empty() &&
      ck.params.cfg.obs_dim != ds.samples[0].obs.dim())
    throw DimensionError(
        "checkpoint expects observation dim " +
        std::to_string(ck.params.cfg.obs_dim) + " but dataset provides " +
        std::to_string(ds.samples[0].obs.dim()));
  return ck;
}

void cmd_eval(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();
  const data::Dataset ds =
      load_dataset(cfg.paths.target_test_file(), tree, "gen-data");
  if (ds.samples.empty()) throw ContractError("eval dataset is empty");

  const fs::path ckpt_path = resolve_eval_checkpoint(cfg);
  const train::Checkpoint ck = load_for_dataset(ckpt_path, ds, tree);
  const std::string stem = ckpt_path.stem().string();
  const fs::path run_dir = cfg.paths.run_dir;
  const fs::path metrics_csv = run_dir / (stem + "_metrics.csv");
  const fs::path metrics_json = run_dir / (stem + "_metrics.json");
  const fs::path pck_csv = run_dir / (stem + "_pck.csv");
  guard_outputs({metrics_csv, metrics_json, pck_csv}, force);

  const train::EvalSummary summary =
      train::evaluate(ck.params, ds, tree, cfg.eval.alpha);

  const int pelvis = tree.index_of("pelvis");
  const int neck = tree.index_of("neck");
  std::vector<metrics::PckSample> pck_samples;
  pck_samples.reserve(ds.samples.size());
  for (const auto& s : ds.samples) {
    const reg::RegressorOutput out = reg::regress(ck.params, s.obs);
    const body::BodyState state =
        body::forward_kinematics(tree, out.body_pose, out.orient, out.beta);
    const Tensor& gt2d = s.eval_labels().joints2d;
    metrics::PckSample ps;
    ps.pred2d = cam::project(state.joints, out.camera);
    ps.gt2d = gt2d;
    ps.visibility.assign(size_t(tree.joints), 1);
    ps.torso_len = metrics::torso_length(gt2d, pelvis, neck);
    pck_samples.push_back(std::move(ps));
  }
  const metrics::PckCurve curve = metrics::pck_curve(pck_samples, cfg.eval.alphas);

  fs::create_directories(run_dir);
  {
    std::ofstream os(metrics_csv);
    if (!os) throw IoError("cannot write " + metrics_csv.string());
    os.precision(17);
    os << "mpjpe,pa_mpjpe,pck,alpha,count\n";
    os << summary.mpjpe << "," << summary.pa_mpjpe << "," << summary.pck << ","
       << summary.alpha << "," << summary.count << "\n";
  }
  {
    json j{{"checkpoint", ckpt_path.string()},
           {"mpjpe", summary.mpjpe},
           {"pa_mpjpe", summary.pa_mpjpe},
           {"pck", summary.pck},
           {"alpha", summary.alpha},
           {"count", summary.count},
           {"per_sample_mpjpe", summary.per_sample_mpjpe}};
    std::ofstream os(metrics_json);
    if (!os) throw IoError("cannot write " + metrics_json.string());
    os << j.dump(2) << "\n";
  }
  {
    std::ofstream os(pck_csv);
    if (!os) throw IoError("cannot write " + pck_csv.string());
    os.precision(17);
    metrics::write_pck_csv(os, curve);
  }
  write_echo(run_dir, "eval_" + stem, cfg, "eval");
}

void cmd_plot_pck(const RunConfig& cfg, bool force) {
  const fs::path ckpt_path = resolve_eval_checkpoint(cfg);
  const std::string stem = ckpt_path.stem().string();
  const fs::path run_dir = cfg.paths.run_dir;
  const fs::path in_csv = run_dir / (stem + "_pck.csv");
  if (!fs::exists(in_csv))
    throw MissingPrerequisiteError("pck table not found: " + in_csv.string() +
                                   "; run `dapa-lab eval` first");

  std::ifstream is(in_csv);
  std::string line;
  if (!std::getline(is, line))
    throw SchemaError(in_csv.string() + ": empty pck table");
  std::vector<std::string> headers;
  {
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) headers.push_back(cell);
  }
  if (headers.size() < 2 || headers[0] != "alpha" || headers[1] != "overall")
    throw SchemaError(in_csv.string() + ": unexpected pck table header");

  metrics::PckCurve curve;
  std::vector<std::vector<double>> group_cols(headers.size() - 2);
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    std::vector<double> row;
    while (std::getline(ss, cell, ',')) {
      try {
        row.push_back(std::stod(cell));
      } catch (const std::exception&) {
        throw SchemaError(in_csv.string() + ": non-numeric cell " + cell);
      }
    }
    if (row.size() != headers.size())
      throw SchemaError(in_csv.string() + ": ragged row");
    curve.alphas.push_back(row[0]);
    curve.overall.push_back(row[1]);
    for (size_t g = 0; g + 2 < row.size(); ++g)
      group_cols[g].push_back(row[g + 2]);
  }
  if (curve.alphas.empty())
    throw SchemaError(in_csv.string() + ": pck table has no rows");
  for (size_t g = 0; g + 2 < headers.size(); ++g)
    curve.groups[headers[g + 2]] = std::move(group_cols[g]);

  const fs::path svg_path = run_dir / (stem + "_pck.svg");
  const fs::path points_path = run_dir / (stem + "_pck_points.csv");
  guard_outputs({svg_path, points_path}, force);
  {
    std::ofstream os(svg_path);
    if (!os) throw IoError("cannot write " + svg_path.string());
    metrics::write_pck_svg(os, curve);
  }
  {
    std::ofstream os(points_path);
    if (!os) throw IoError("cannot write " + points_path.string());
    os.precision(17);
    metrics::write_pck_csv(os, curve);
  }
  write_echo(run_dir, "plot_pck_" + stem, cfg, "plot-pck");
}

void cmd_export_mesh(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();
  const body::MeshTemplate tmpl = body::build_template(
      tree, cfg.mesh.rings_per_bone, cfg.mesh.ring_vertices);
  const fs::path run_dir = cfg.paths.run_dir;

  Tensor verts;
  std::string tag;
  if (cfg.mesh.sample == "rest") {
    const body::BodyState state = body::forward_kinematics(
        tree, Tensor::zeros({tree.pose_dims()}), Tensor::zeros({3}),
        Tensor::zeros({tree.shape_dims()}));
    verts = body::lbs(tmpl, state);
    tag = "rest";
  } else {
    int id = 0;
    try {
      size_t used = 0;
      id = std::stoi(cfg.mesh.sample, &used);
      if (used != cfg.mesh.sample.size()) throw std::invalid_argument("tail");
    } catch (const std::exception&) {
      throw ConfigError("mesh.sample must be \"rest\" or a sample id, got " +
                        cfg.mesh.sample);
    }
    const data::Dataset ds =
        load_dataset(cfg.paths.target_test_file(), tree, "gen-data");
    const auto it =
        std::find_if(ds.samples.begin(), ds.samples.end(),
                     [id](const data::Sample& s) { return s.id == id; });
    if (it == ds.samples.end())
      throw ConfigError("sample id " + std::to_string(id) +
                        " not in the eval dataset");
    const train::Checkpoint ck =
        load_for_dataset(resolve_eval_checkpoint(cfg), ds, tree);
    const reg::RegressorOutput out = reg::regress(ck.params, it->obs);
    const body::BodyState state =
        body::forward_kinematics(tree, out.body_pose, out.orient, out.beta);
    verts = body::lbs(tmpl, state);
    tag = std::to_string(id);
  }

  const fs::path obj_path = run_dir / ("mesh_" + tag + ".obj");
  guard_outputs({obj_path}, force);
  fs::create_directories(run_dir);
  body::export_obj(obj_path.string(), verts, tmpl.faces);
  write_echo(run_dir, "export_mesh_" + tag, cfg, "export-mesh");
}

void cmd_latent_diag(const RunConfig& cfg, bool force) {
  const auto tree = body::KinematicTree::human17();
  const data::Dataset ds =
      load_dataset(cfg.paths.target_test_file(), tree, "gen-data");
  const fs::path ckpt_path = resolve_eval_checkpoint(cfg);
  const train::Checkpoint ck = load_for_dataset(ckpt_path, ds, tree);
  const PriorArtifact prior_art = load_prior(cfg.paths.prior_file());
  if (prior_art.params.pose_dim() != tree.pose_dims())
    throw DimensionError("prior pose dim does not match the kinematic tree");

  const std::string stem = ckpt_path.stem().string();
  const fs::path run_dir = cfg.paths.run_dir;
  const fs::path csv_path = run_dir / (stem + "_latent.csv");
  const fs::path sum_path = run_dir / (stem + "_latent_summary.json");
  guard_outputs({csv_path, sum_path}, force);

  fs::create_directories(run_dir);
  std::ofstream os(csv_path);
  if (!os) throw IoError("cannot write " + csv_path.string());
  os.precision(17);
  os << "id,mu_norm\n";
  double total = 0.0;
  for (const auto& s : ds.samples) {
    const reg::RegressorOutput out = reg::regress(ck.params, s.obs);
    const prior::PosteriorParams post =
        prior::encode(prior_art.params, out.body_pose);
    double sq = 0.0;
    for (double v : post.mu.values) sq += v * v;
    const double norm = std::sqrt(sq);
    os << s.id << "," << norm << "\n";
    total += norm;
  }
  json summary{{"checkpoint", ckpt_path.string()},
               {"count", ds.size()},
               {"mean_mu_norm",
                ds.samples.empty() ? 0.0 : total / double(ds.size())}};
  std::ofstream ss(sum_path);
  if (!ss) throw IoError("cannot write " + sum_path.string());
  ss << summary.dump(2) << "\n";
  write_echo(run_dir, "latent_diag_" + stem, cfg, "latent-diag");
}

// ---- entry point ----

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"dapa-lab: desk-scale pose domain-adaptation laboratory"};
  app.require_subcommand(1);

  std::string config_path, mode, out;
  std::uint64_t seed = 0;
  CliOverrides over;

  const std::pair<const char*, const char*> commands[] = {
      {"gen-data", "generate the synthetic source/target dataset files"},
      {"train-prior", "fit the VAE pose prior on the source poses"},
      {"pretrain", "train the regressor on fully supervised source data"},
      {"adapt", "finetune on target 2D with optional synthetic augmentation"},
      {"eval", "score a checkpoint on the held-out target split"},
      {"plot-pck", "render the PCK curve of an eval run"},
      {"export-mesh", "write a posed body mesh as OBJ"},
      {"latent-diag", "dump per-sample latent norms of predictions"}};
  std::vector<CLI::Option*> seed_opts;
  for (const auto& [name, desc] : commands) {
    CLI::App* c = app.add_subcommand(name, desc);
    c->add_option("--config", config_path, "JSON run configuration file");
    seed_opts.push_back(
        c->add_option("--seed", seed, "override the seed of this phase"));
    c->add_option("--mode", mode,
                  "adaptation mode: ft2d, dapa, zero-perturb, random-pose, "
                  "real-only, syn-only");
    c->add_option("--out", out, "output directory override");
    c->add_flag("--force", over.force, "overwrite existing outputs");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  for (CLI::Option* o : seed_opts)
    if (o->count() > 0) over.seed = seed;
  if (!mode.empty()) over.mode = mode;
  if (!out.empty()) over.out = out;

  try {
    const std::optional<std::string> cfg_path =
        config_path.empty() ? std::nullopt
                            : std::optional<std::string>(config_path);
    const RunConfig cfg = materialize(cfg_path, over, command);
    if (command == "gen-data")
      cmd_gen_data(cfg, over.force);
    else if (command == "train-prior")
      cmd_train_prior(cfg, over.force);
    else if (command == "pretrain")
      cmd_pretrain(cfg, over.force);
    else if (command == "adapt")
      cmd_adapt(cfg, over.force);
    else if (command == "eval")
      cmd_eval(cfg, over.force);
    else if (command == "plot-pck")
      cmd_plot_pck(cfg, over.force);
    else if (command == "export-mesh")
      cmd_export_mesh(cfg, over.force);
    else if (command == "latent-diag")
      cmd_latent_diag(cfg, over.force);
  } catch (const MissingPrerequisiteError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "unexpected error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace dapa::cli
