#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "dapa/datagen.hpp"
#include "dapa/prior.hpp"
#include "dapa/regressor.hpp"
#include "dapa/trainer.hpp"

namespace dapa::cli {

// Artifact locations. Empty entries fall back to conventional names inside
// data_dir / run_dir so a bare config still produces a complete layout.
struct Paths {
  std::string data_dir = "data";
  std::string run_dir = "run";
  std::string source;
  std::string target_train;
  std::string target_test;
  std::string prior;
  std::string pretrain_checkpoint;
  // Input for eval / plot-pck / export-mesh / latent-diag; empty resolves to
  // the adapt checkpoint of the configured mode, then the pretrain one.
  std::string eval_checkpoint;
  // External 2D detections; when set, adapt trains on these instead of the
  // generated target split.
  std::string keypoints_json;

  std::filesystem::path source_file() const;
  std::filesystem::path target_train_file() const;
  std::filesystem::path target_test_file() const;
  std::filesystem::path prior_file() const;
  std::filesystem::path pretrain_file() const;
  std::filesystem::path adapt_file(train::AdaptMode mode) const;
};

struct EvalConfig {
  double alpha = 0.2;  // headline PCK threshold
  std::vector<double> alphas = {0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.4, 0.5};
};

struct MeshConfig {
  std::string sample = "rest";  // "rest" or a numeric sample id
  int rings_per_bone = 3;
  int ring_vertices = 8;
};

// One JSON file drives every command; flags override individual fields.
// Unknown keys are rejected and the materialized result is echoed into the
// output directory of each run.
struct RunConfig {
  data::DomainSpec source;
  data::DomainSpec target_train;
  data::DomainSpec target_test;
  prior::PriorConfig prior;
  reg::RegressorConfig regressor;
  train::TrainConfig pretrain;
  train::TrainConfig adapt;
  EvalConfig eval;
  MeshConfig mesh;
  Paths paths;
  int threads = 1;  // additionally capped by DAPA_LAB_THREADS

  static RunConfig defaults();
  void validate() const;
};

struct CliOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  bool force = false;
};

// Strict parse of a config file over defaults(); unknown keys throw.
RunConfig load_run_config(const std::string& path);
// Full pipeline: defaults, optional file, flag overrides, env caps,
// validation. `command` decides how --seed and --out distribute.
RunConfig materialize(const std::optional<std::string>& config_path,
                      const CliOverrides& over, const std::string& command);
std::string config_echo_json(const RunConfig& cfg, const std::string& command);

// Serialized VAE prior artifact.
struct PriorArtifact {
  prior::PriorParams params;
  prior::PriorConfig config;
  std::string corpus_fingerprint;
  double final_loss = 0.0;
};

void save_prior(const std::filesystem::path& path, const PriorArtifact& art);
PriorArtifact load_prior(const std::filesystem::path& path);

void cmd_gen_data(const RunConfig& cfg, bool force);
void cmd_train_prior(const RunConfig& cfg, bool force);
void cmd_pretrain(const RunConfig& cfg, bool force);
void cmd_adapt(const RunConfig& cfg, bool force);
void cmd_eval(const RunConfig& cfg, bool force);
void cmd_plot_pck(const RunConfig& cfg, bool force);
void cmd_export_mesh(const RunConfig& cfg, bool force);
void cmd_latent_diag(const RunConfig& cfg, bool force);

// Exit codes: 0 success, 2 config or artifact-format error, 3 missing
// prerequisite, 4 numerical failure. Parse/usage problems map to 2.
int run_cli(int argc, const char* const* argv);

}  // namespace dapa::cli
