#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dapa/body.hpp"
#include "dapa/camera.hpp"
#include "dapa/obs.hpp"
#include "dapa/rng.hpp"

namespace dapa::data {

enum class Domain { source, target };
std::string to_string(Domain d);
Domain domain_from_string(const std::string& s);

struct PoseCluster {
  std::string name;
  Tensor mean;    // {pose_dim} axis-angle components
  Tensor jitter;  // {pose_dim} per-component std, radians
  double weight = 0.0;
};

// The five stock clusters with corpus mixing weights. Pose magnitude grows
// as cluster weight shrinks, so rarity and extremity coincide.
std::vector<PoseCluster> default_clusters(const body::KinematicTree& tree);
// Stock clusters reweighted for the two domains: the source is dominated by
// upright poses, the target by seated and kneeling ones.
std::vector<PoseCluster> source_mix(const body::KinematicTree& tree);
std::vector<PoseCluster> target_mix(const body::KinematicTree& tree);

struct PoseCorpus {
  std::vector<Tensor> poses;
  std::vector<int> cluster;  // index into the generating cluster list
  std::uint64_t seed = 0;
};

PoseCorpus make_pose_corpus(const std::vector<PoseCluster>& clusters, int n,
                            std::uint64_t seed);

struct NoiseParams {
  double jitter_std = 0.02;    // keypoint position noise, normalized units
  double dropout_prob = 0.05;  // chance a keypoint is dropped outright
  double conf_cap = 0.08;      // jitter magnitude at which confidence bottoms
  double conf_floor = 0.3;
  void validate() const;
};

struct DomainSpec {
  Domain domain = Domain::source;
  std::vector<PoseCluster> clusters;  // weights sum to 1
  double shape_std = 0.15;
  double cam_scale_lo = 0.9;
  double cam_scale_hi = 1.1;
  double cam_trans_range = 0.1;
  double orient_yaw = 0.4;    // about the vertical axis, +- range
  double orient_tilt = 0.15;  // about the two horizontal axes
  NoiseParams noise;
  Observation::Modality obs_modality = Observation::Modality::keypoints2d;
  int count = 0;
  std::uint64_t seed = 0;

  void validate() const;
  std::string fingerprint() const;
};

DomainSpec default_source_spec(const body::KinematicTree& tree, int n,
                               std::uint64_t seed);
DomainSpec default_target_spec(const body::KinematicTree& tree, int n,
                               std::uint64_t seed);

struct BodyParams {
  Tensor body_pose;  // {3(J-1)}
  Tensor orient;     // {3}
  Tensor beta;       // {S}
  cam::WeakPerspective camera;
};

struct GroundTruth {
  Tensor joints3d;  // {J,3}
  Tensor joints2d;  // {J,2}, exact projection of joints3d
  BodyParams params;
};

// One dataset entry. Label access is split so that adaptation code cannot
// read 3D ground truth on target-domain samples: train_labels refuses,
// eval_labels is reserved for the metrics side.
class Sample {
 public:
  int id = 0;
  Domain domain = Domain::source;
  Observation obs;
  Tensor kp2d{{0, 2}, {}};  // 2D annotation; noisy detections when generated
  Tensor conf{{0}, {}};

  bool has_labels() const { return labels_.has_value(); }
  const GroundTruth& train_labels() const;
  const GroundTruth& eval_labels() const;
  void set_labels(GroundTruth gt) { labels_ = std::move(gt); }
  GroundTruth& mutable_labels();

 private:
  std::optional<GroundTruth> labels_;
};

struct Dataset {
  std::vector<Sample> samples;
  std::string fingerprint;
  std::uint64_t seed = 0;

  int size() const { return int(samples.size()); }
  void validate() const;
};

struct ObservationDraw {
  Observation obs;
  Tensor kp2d;  // {K,2}
  Tensor conf;  // {K}
};

// Jitters keypoints, drops some, and scores confidence by jitter magnitude:
// conf = clamp(1 - |jitter| / conf_cap, conf_floor, 1).
ObservationDraw synthesize_observation(const Tensor& gt2d,
                                       const NoiseParams& noise, Rng& rng);

// Fills triangles of the projected mesh into a binary 64x64 raster over
// [-1,1]^2, row 0 at the top.
Observation silhouette_observation(
    const Tensor& vertices2d, const std::vector<std::array<int, 3>>& faces);

// Draws (pose, shape, orient, camera) per sample, runs FK and projection for
// ground truth, then synthesizes the observation. Per-sample RNG streams are
// keyed by (seed, index) so the output is order-independent. The template is
// only needed for silhouette observations.
Dataset sample_domain(const DomainSpec& spec, const body::KinematicTree& tree,
                      const body::MeshTemplate* tmpl = nullptr);

void save_jsonl(const Dataset& ds, const std::string& path);
Dataset load_jsonl(const std::string& path, const body::KinematicTree& tree);

// Ingestion of external 2D annotations:
// {"keypoint_names": [...], "people": [{"id": N, "keypoints": [[x,y,c]...]}]}
// with coordinates in [-1,1]. Produces target-domain samples with no labels.
Dataset load_keypoint_json(const std::string& path,
                           const body::KinematicTree& tree);

}  // namespace dapa::data
