#include "dapa/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <json.hpp>
#include <sstream>

namespace dapa::data {

namespace {

using nlohmann::json;

constexpr double kPi = 3.14159265358979323846;

enum StreamTag : std::uint64_t { kCorpusDraw = 1, kDomainDraw = 2 };

double wrap_angle(double x) { return std::remainder(x, 2.0 * kPi); }

struct JointPose {
  const char* joint;
  double x, y, z;
};

Tensor pose_from_entries(const body::KinematicTree& tree,
                         std::initializer_list<JointPose> entries) {
  Tensor pose = Tensor::zeros({tree.pose_dims()});
  for (const JointPose& e : entries) {
    const int j = tree.index_of(e.joint);
    pose[3 * (j - 1)] = e.x;
    pose[3 * (j - 1) + 1] = e.y;
    pose[3 * (j - 1) + 2] = e.z;
  }
  return pose;
}

PoseCluster make_cluster(const body::KinematicTree& tree, std::string name,
                         double weight, double jitter,
                         std::initializer_list<JointPose> entries) {
  PoseCluster c;
  c.name = std::move(name);
  c.mean = pose_from_entries(tree, entries);
  c.jitter = Tensor::full({tree.pose_dims()}, jitter);
  c.weight = weight;
  return c;
}

std::vector<PoseCluster> pick(
    const std::vector<PoseCluster>& all,
    std::initializer_list<std::pair<const char*, double>> selection) {
  std::vector<PoseCluster> out;
  for (const auto& [name, weight] : selection) {
    auto it = std::find_if(all.begin(), all.end(),
                           [&](const PoseCluster& c) { return c.name == name; });
    if (it == all.end()) throw ContractError("unknown cluster: " + std::string(name));
    out.push_back(*it);
    out.back().weight = weight;
  }
  return out;
}

json tensor_values(const Tensor& t) { return json(t.values); }

Tensor tensor_from_values(const json& a, std::vector<int> shape,
                          const std::string& where) {
  if (!a.is_array()) throw SchemaError(where + ": expected an array");
  std::vector<double> vals;
  vals.reserve(a.size());
  for (const auto& v : a) {
    if (!v.is_number()) throw SchemaError(where + ": expected numbers");
    vals.push_back(v.get<double>());
  }
  Tensor t(std::move(shape), std::move(vals));
  return t;
}

std::string hex64(std::uint64_t h) {
  std::ostringstream os;
  os << std::hex << h;
  return os.str();
}

json keypoint_rows(const Tensor& kp2d, const Tensor& conf) {
  json rows = json::array();
  for (int k = 0; k < kp2d.rows(); ++k)
    rows.push_back({kp2d.at(k, 0), kp2d.at(k, 1), conf[k]});
  return rows;
}

json sample_to_json(const Sample& s) {
  json j;
  j["id"] = s.id;
  j["domain"] = to_string(s.domain);
  j["obs"] = {{"modality", s.obs.modality == Observation::Modality::keypoints2d
                               ? "keypoints2d"
                               : "silhouette"},
              {"values", tensor_values(s.obs.values)}};
  j["kp2d"] = keypoint_rows(s.kp2d, s.conf);
  if (s.has_labels()) {
    const GroundTruth& gt = s.eval_labels();
    json kp3d = json::array();
    for (int k = 0; k < gt.joints3d.rows(); ++k)
      kp3d.push_back({gt.joints3d.at(k, 0), gt.joints3d.at(k, 1),
                      gt.joints3d.at(k, 2)});
    j["kp3d"] = kp3d;
    j["params"] = {{"body_pose", tensor_values(gt.params.body_pose)},
                   {"orient", tensor_values(gt.params.orient)},
                   {"beta", tensor_values(gt.params.beta)},
                   {"cam",
                    {gt.params.camera.scale, gt.params.camera.tx,
                     gt.params.camera.ty}}};
  }
  return j;
}

Sample sample_from_json(const json& j, const body::KinematicTree& tree,
                        const std::string& where) {
  for (const char* key : {"id", "domain", "obs", "kp2d"})
    if (!j.contains(key))
      throw SchemaError(where + ": missing field \"" + key + "\"");
  Sample s;
  s.id = j["id"].get<int>();
  s.domain = domain_from_string(j["domain"].get<std::string>());
  const json& obs = j["obs"];
  const std::string modality = obs.at("modality").get<std::string>();
  if (modality == "keypoints2d")
    s.obs.modality = Observation::Modality::keypoints2d;
  else if (modality == "silhouette")
    s.obs.modality = Observation::Modality::silhouette;
  else
    throw SchemaError(where + ": unknown modality \"" + modality + "\"");
  const json& ov = obs.at("values");
  s.obs.values = tensor_from_values(ov, {int(ov.size())}, where + ".obs.values");
  s.obs.validate();

  const json& kp = j["kp2d"];
  if (!kp.is_array() || int(kp.size()) != tree.joints)
    throw SchemaError(where + ".kp2d: expected " + std::to_string(tree.joints) +
                      " keypoints");
  s.kp2d = Tensor::zeros({tree.joints, 2});
  s.conf = Tensor::zeros({tree.joints});
  for (int k = 0; k < tree.joints; ++k) {
    const json& row = kp[size_t(k)];
    if (!row.is_array() || row.size() != 3)
      throw SchemaError(where + ".kp2d[" + std::to_string(k) +
                        "]: expected [x,y,c]");
    s.kp2d.at(k, 0) = row[0].get<double>();
    s.kp2d.at(k, 1) = row[1].get<double>();
    s.conf[k] = row[2].get<double>();
  }

  if (j.contains("kp3d") != j.contains("params"))
    throw SchemaError(where + ": kp3d and params must appear together");
  if (j.contains("kp3d")) {
    const json& kp3 = j["kp3d"];
    if (int(kp3.size()) != tree.joints)
      throw SchemaError(where + ".kp3d: wrong joint count");
    GroundTruth gt;
    gt.joints3d = Tensor::zeros({tree.joints, 3});
    for (int k = 0; k < tree.joints; ++k)
      for (int c = 0; c < 3; ++c)
        gt.joints3d.at(k, c) = kp3[size_t(k)][size_t(c)].get<double>();
    const json& p = j["params"];
    gt.params.body_pose = tensor_from_values(p.at("body_pose"),
                                             {tree.pose_dims()},
                                             where + ".params.body_pose");
    gt.params.orient =
        tensor_from_values(p.at("orient"), {3}, where + ".params.orient");
    gt.params.beta = tensor_from_values(p.at("beta"), {tree.shape_dims()},
                                        where + ".params.beta");
    const json& c = p.at("cam");
    if (!c.is_array() || c.size() != 3)
      throw SchemaError(where + ".params.cam: expected [scale,tx,ty]");
    gt.params.camera = {c[0].get<double>(), c[1].get<double>(),
                        c[2].get<double>()};
    // The exact projection is derived state; recomputing it preserves the
    // J = project(X, cam) invariant bit for bit.
    gt.joints2d = cam::project(gt.joints3d, gt.params.camera);
    s.set_labels(std::move(gt));
  }
  return s;
}

}  // namespace

std::string to_string(Domain d) {
  return d == Domain::source ? "source" : "target";
}

Domain domain_from_string(const std::string& s) {
  if (s == "source") return Domain::source;
  if (s == "target") return Domain::target;
  throw SchemaError("unknown domain \"" + s + "\"");
}

std::vector<PoseCluster> default_clusters(const body::KinematicTree& tree) {
  std::vector<PoseCluster> cs;
  cs.push_back(make_cluster(
      tree, "standing", 0.45, 0.08,
      {{"spine", -0.05, 0.02, 0.00},    {"chest", 0.02, -0.02, 0.00},
       {"neck", 0.05, 0.00, 0.02},      {"head", -0.03, 0.00, 0.00},
       {"l_hip", -0.05, 0.03, 0.04},    {"l_knee", 0.08, 0.00, 0.00},
       {"l_ankle", 0.02, 0.00, 0.02},   {"r_hip", -0.05, -0.03, -0.04},
       {"r_knee", 0.08, 0.00, 0.00},    {"r_ankle", 0.02, 0.00, -0.02},
       {"l_shoulder", 0.05, -0.06, -1.15}, {"l_elbow", 0.00, -0.12, -0.10},
       {"l_wrist", 0.00, -0.05, -0.05}, {"r_shoulder", 0.05, 0.06, 1.15},
       {"r_elbow", 0.00, 0.12, 0.10},   {"r_wrist", 0.00, 0.05, 0.05}}));
  cs.push_back(make_cluster(
      tree, "walking", 0.25, 0.12,
      {{"spine", -0.08, 0.14, 0.02},    {"chest", 0.03, -0.10, 0.00},
       {"neck", 0.06, 0.04, 0.00},      {"head", -0.04, -0.03, 0.00},
       {"l_hip", -0.50, 0.04, 0.05},    {"l_knee", 0.60, 0.00, 0.00},
       {"l_ankle", -0.12, 0.00, 0.02},  {"r_hip", 0.32, -0.04, -0.05},
       {"r_knee", 0.15, 0.00, 0.00},    {"r_ankle", 0.10, 0.00, -0.02},
       {"l_shoulder", 0.28, -0.08, -1.12}, {"l_elbow", 0.00, -0.40, -0.10},
       {"l_wrist", 0.00, -0.10, -0.04}, {"r_shoulder", -0.24, 0.08, 1.12},
       {"r_elbow", 0.00, 0.45, 0.10},   {"r_wrist", 0.00, 0.10, 0.04}}));
  cs.push_back(make_cluster(
      tree, "sitting", 0.15, 0.10,
      {{"spine", -0.38, 0.38, 0.12},    {"chest", -0.28, 0.20, -0.10},
       {"neck", 0.40, 0.12, 0.10},      {"head", 0.28, -0.10, -0.08},
       {"l_hip", -1.70, 0.22, 0.20},    {"l_knee", 1.60, 0.16, 0.16},
       {"l_ankle", 0.40, 0.10, 0.12},   {"r_hip", -1.70, -0.22, -0.20},
       {"r_knee", 1.60, -0.16, -0.16},  {"r_ankle", 0.40, -0.10, -0.12},
       {"l_shoulder", 0.38, -0.85, -1.02}, {"l_elbow", 0.25, -1.45, -0.22},
       {"l_wrist", 0.15, -0.48, -0.15}, {"r_shoulder", 0.38, 0.85, 1.02},
       {"r_elbow", 0.25, 1.45, 0.22},   {"r_wrist", 0.15, 0.48, 0.15}}));
  cs.push_back(make_cluster(
      tree, "kneeling", 0.10, 0.10,
      {{"spine", -0.28, 0.22, 0.14},    {"chest", -0.18, 0.16, -0.12},
       {"neck", 0.30, 0.10, 0.12},      {"head", 0.20, -0.08, -0.10},
       {"l_hip", -0.80, 0.18, 0.14},    {"l_knee", 2.35, 0.14, 0.10},
       {"l_ankle", 0.78, 0.12, 0.10},   {"r_hip", -0.80, -0.18, -0.14},
       {"r_knee", 2.35, -0.14, -0.10},  {"r_ankle", 0.78, -0.12, -0.10},
       {"l_shoulder", 0.35, -0.80, -0.92}, {"l_elbow", 0.22, -1.05, -0.25},
       {"l_wrist", 0.25, -0.38, -0.12}, {"r_shoulder", 0.35, 0.80, 0.92},
       {"r_elbow", 0.22, 1.05, 0.25},   {"r_wrist", 0.25, 0.38, 0.12}}));
  cs.push_back(make_cluster(
      tree, "lying", 0.05, 0.12,
      {{"spine", 0.85, 0.62, 0.35},     {"chest", 0.55, 0.45, 0.30},
       {"neck", 0.52, 0.25, 0.20},      {"head", 0.42, 0.20, 0.15},
       {"l_hip", -1.95, 0.30, 0.28},    {"l_knee", 2.55, 0.18, 0.15},
       {"l_ankle", 0.75, 0.15, 0.12},   {"r_hip", -1.90, -0.28, -0.25},
       {"r_knee", 2.50, -0.18, -0.15},  {"r_ankle", 0.72, -0.15, -0.12},
       {"l_shoulder", -0.85, -0.95, 1.35}, {"l_elbow", 0.40, -1.70, -0.35},
       {"l_wrist", 0.35, -0.65, -0.20}, {"r_shoulder", -0.85, 0.95, -1.35},
       {"r_elbow", 0.40, 1.70, 0.35},   {"r_wrist", 0.35, 0.65, 0.20}}));
  return cs;
}

std::vector<PoseCluster> source_mix(const body::KinematicTree& tree) {
  return pick(default_clusters(tree), {{"standing", 0.8}, {"walking", 0.2}});
}

std::vector<PoseCluster> target_mix(const body::KinematicTree& tree) {
  return pick(default_clusters(tree),
              {{"sitting", 0.45}, {"kneeling", 0.45}, {"standing", 0.1}});
}

PoseCorpus make_pose_corpus(const std::vector<PoseCluster>& clusters, int n,
                            std::uint64_t seed) {
  if (n < 1) throw ContractError("make_pose_corpus: n must be >= 1");
  if (clusters.empty()) throw ContractError("make_pose_corpus: no clusters");
  double wsum = 0.0;
  for (const PoseCluster& c : clusters) {
    if (c.weight < 0.0) throw ContractError("negative cluster weight");
    for (double j : c.jitter.values)
      if (j < 0.0) throw ContractError("negative jitter");
    wsum += c.weight;
  }
  if (std::fabs(wsum - 1.0) > 1e-9)
    throw ContractError("cluster weights must sum to 1");

  PoseCorpus corpus;
  corpus.seed = seed;
  const Rng base(seed);
  for (int i = 0; i < n; ++i) {
    Rng rng = base.substream(kCorpusDraw, std::uint64_t(i));
    const double u = rng.uniform01();
    double acc = 0.0;
    size_t c = clusters.size() - 1;
    for (size_t k = 0; k < clusters.size(); ++k) {
      acc += clusters[k].weight;
      if (u < acc) {
        c = k;
        break;
      }
    }
    Tensor pose = clusters[c].mean;
    for (int k = 0; k < pose.size(); ++k)
      pose[k] = wrap_angle(pose[k] + clusters[c].jitter[k] * rng.normal());
    corpus.poses.push_back(std::move(pose));
    corpus.cluster.push_back(int(c));
  }
  return corpus;
}

void NoiseParams::validate() const {
  if (jitter_std < 0.0 || dropout_prob < 0.0 || dropout_prob > 1.0)
    throw ContractError("invalid observation noise parameters");
  if (conf_cap <= 0.0 || conf_floor < 0.0 || conf_floor > 1.0)
    throw ContractError("invalid confidence model parameters");
}

void DomainSpec::validate() const {
  noise.validate();
  if (count < 0) throw ContractError("negative sample count");
  if (clusters.empty()) throw ContractError("domain spec has no clusters");
  double wsum = 0.0;
  for (const PoseCluster& c : clusters) wsum += c.weight;
  if (std::fabs(wsum - 1.0) > 1e-9)
    throw ContractError("domain cluster weights must sum to 1");
  if (cam_scale_lo <= 0.0 || cam_scale_hi < cam_scale_lo)
    throw ContractError("invalid camera scale range");
  if (shape_std < 0.0) throw ContractError("negative shape std");
}

std::string DomainSpec::fingerprint() const {
  json j;
  j["domain"] = data::to_string(domain);
  json cs = json::array();
  for (const PoseCluster& c : clusters)
    cs.push_back({{"name", c.name},
                  {"weight", c.weight},
                  {"mean", tensor_values(c.mean)},
                  {"jitter", tensor_values(c.jitter)}});
  j["clusters"] = cs;
  j["shape_std"] = shape_std;
  j["cam"] = {cam_scale_lo, cam_scale_hi, cam_trans_range};
  j["orient"] = {orient_yaw, orient_tilt};
  j["noise"] = {noise.jitter_std, noise.dropout_prob, noise.conf_cap,
                noise.conf_floor};
  j["modality"] = int(obs_modality);
  j["count"] = count;
  j["seed"] = seed;
  return hex64(fnv1a(j.dump()));
}

DomainSpec default_source_spec(const body::KinematicTree& tree, int n,
                               std::uint64_t seed) {
  DomainSpec spec;
  spec.domain = Domain::source;
  spec.clusters = source_mix(tree);
  spec.count = n;
  spec.seed = seed;
  return spec;
}

DomainSpec default_target_spec(const body::KinematicTree& tree, int n,
                               std::uint64_t seed) {
  DomainSpec spec;
  spec.domain = Domain::target;
  spec.clusters = target_mix(tree);
  spec.count = n;
  spec.seed = seed;
  return spec;
}

const GroundTruth& Sample::train_labels() const {
  if (domain == Domain::target)
    throw ContractError(
        "weak-supervision firewall: target-domain labels are evaluation-only");
  if (!labels_)
    throw MissingPrerequisiteError("sample carries no full supervision");
  return *labels_;
}

const GroundTruth& Sample::eval_labels() const {
  if (!labels_)
    throw MissingPrerequisiteError("sample carries no evaluation labels");
  return *labels_;
}

GroundTruth& Sample::mutable_labels() {
  if (!labels_)
    throw MissingPrerequisiteError("sample carries no evaluation labels");
  return *labels_;
}

void Dataset::validate() const {
  for (const Sample& s : samples) {
    s.obs.validate();
    if (s.kp2d.rank() != 2 || s.kp2d.cols() != 2 ||
        s.conf.size() != s.kp2d.rows())
      throw DimensionError("sample annotation shapes are inconsistent");
    if (s.kp2d.rows() != samples.front().kp2d.rows())
      throw DimensionError("inconsistent keypoint counts across samples");
  }
}

ObservationDraw synthesize_observation(const Tensor& gt2d,
                                       const NoiseParams& noise, Rng& rng) {
  noise.validate();
  if (gt2d.rank() != 2 || gt2d.cols() != 2)
    throw DimensionError("synthesize_observation: gt2d must be {K,2}");
  const int k = gt2d.rows();
  ObservationDraw draw;
  draw.kp2d = Tensor::zeros({k, 2});
  draw.conf = Tensor::zeros({k});
  for (int i = 0; i < k; ++i) {
    if (rng.uniform01() < noise.dropout_prob) continue;  // stays (0,0), conf 0
    const double jx = noise.jitter_std * rng.normal();
    const double jy = noise.jitter_std * rng.normal();
    draw.kp2d.at(i, 0) = gt2d.at(i, 0) + jx;
    draw.kp2d.at(i, 1) = gt2d.at(i, 1) + jy;
    const double raw = 1.0 - std::hypot(jx, jy) / noise.conf_cap;
    draw.conf[i] = std::fmin(std::fmax(raw, noise.conf_floor), 1.0);
  }
  draw.obs = Observation::from_keypoints(draw.kp2d, draw.conf);
  return draw;
}

Observation silhouette_observation(
    const Tensor& vertices2d, const std::vector<std::array<int, 3>>& faces) {
  if (vertices2d.rank() != 2 || vertices2d.cols() != 2)
    throw DimensionError("silhouette_observation: vertices must be {V,2}");
  const int side = Observation::kRasterSide;
  Observation obs;
  obs.modality = Observation::Modality::silhouette;
  obs.values = Tensor::zeros({side * side});

  const auto col_center = [&](int c) { return -1.0 + (c + 0.5) * 2.0 / side; };
  const auto row_center = [&](int r) { return 1.0 - (r + 0.5) * 2.0 / side; };

  for (const auto& f : faces) {
    const double x0 = vertices2d.at(f[0], 0), y0 = vertices2d.at(f[0], 1);
    const double x1 = vertices2d.at(f[1], 0), y1 = vertices2d.at(f[1], 1);
    const double x2 = vertices2d.at(f[2], 0), y2 = vertices2d.at(f[2], 1);
    const double xmin = std::min({x0, x1, x2}), xmax = std::max({x0, x1, x2});
    const double ymin = std::min({y0, y1, y2}), ymax = std::max({y0, y1, y2});
    const int c_lo = std::max(0, int(std::floor((xmin + 1.0) * side / 2.0 - 0.5)));
    const int c_hi = std::min(side - 1, int(std::ceil((xmax + 1.0) * side / 2.0)));
    const int r_lo = std::max(0, int(std::floor((1.0 - ymax) * side / 2.0 - 0.5)));
    const int r_hi = std::min(side - 1, int(std::ceil((1.0 - ymin) * side / 2.0)));
    for (int r = r_lo; r <= r_hi; ++r) {
      const double py = row_center(r);
      for (int c = c_lo; c <= c_hi; ++c) {
        const double px = col_center(c);
        const double e0 = (x1 - x0) * (py - y0) - (y1 - y0) * (px - x0);
        const double e1 = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
        const double e2 = (x0 - x2) * (py - y2) - (y0 - y2) * (px - x2);
        const bool inside = (e0 >= 0 && e1 >= 0 && e2 >= 0) ||
                            (e0 <= 0 && e1 <= 0 && e2 <= 0);
        if (inside) obs.values[r * side + c] = 1.0;
      }
    }
  }
  return obs;
}

Dataset sample_domain(const DomainSpec& spec, const body::KinematicTree& tree,
                      const body::MeshTemplate* tmpl) {
  spec.validate();
  if (spec.obs_modality == Observation::Modality::silhouette && !tmpl)
    throw MissingPrerequisiteError(
        "silhouette observations need a mesh template");
  for (const PoseCluster& c : spec.clusters)
    if (c.mean.size() != tree.pose_dims())
      throw DimensionError("cluster pose dimension does not match tree");

  Dataset ds;
  ds.seed = spec.seed;
  ds.fingerprint = spec.fingerprint();
  const Rng base(spec.seed);
  for (int i = 0; i < spec.count; ++i) {
    Rng rng = base.substream(kDomainDraw, std::uint64_t(i));

    const double u = rng.uniform01();
    double acc = 0.0;
    size_t c = spec.clusters.size() - 1;
    for (size_t k = 0; k < spec.clusters.size(); ++k) {
      acc += spec.clusters[k].weight;
      if (u < acc) {
        c = k;
        break;
      }
    }
    const PoseCluster& cluster = spec.clusters[c];
    Tensor pose = cluster.mean;
    for (int k = 0; k < pose.size(); ++k)
      pose[k] = wrap_angle(pose[k] + cluster.jitter[k] * rng.normal());

    Tensor beta = Tensor::zeros({tree.shape_dims()});
    for (double& b : beta.values) b = spec.shape_std * rng.normal();
    const Tensor orient =
        Tensor::vec({spec.orient_tilt * rng.uniform(-1.0, 1.0),
                     spec.orient_yaw * rng.uniform(-1.0, 1.0),
                     spec.orient_tilt * rng.uniform(-1.0, 1.0)});
    cam::WeakPerspective wp{rng.uniform(spec.cam_scale_lo, spec.cam_scale_hi),
                            rng.uniform(-spec.cam_trans_range,
                                        spec.cam_trans_range),
                            rng.uniform(-spec.cam_trans_range,
                                        spec.cam_trans_range)};

    const body::BodyState state =
        body::forward_kinematics(tree, pose, orient, beta);
    const Tensor j2d = cam::project(state.joints, wp);
    ObservationDraw od = synthesize_observation(j2d, spec.noise, rng);

    Sample s;
    s.id = i;
    s.domain = spec.domain;
    s.kp2d = std::move(od.kp2d);
    s.conf = std::move(od.conf);
    if (spec.obs_modality == Observation::Modality::silhouette) {
      const Tensor posed = body::lbs(*tmpl, state);
      s.obs = silhouette_observation(cam::project(posed, wp), tmpl->faces);
    } else {
      s.obs = std::move(od.obs);
    }
    s.set_labels({state.joints, j2d, {std::move(pose), orient, std::move(beta), wp}});
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

void save_jsonl(const Dataset& ds, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path);
  json header;
  header["type"] = "dataset_header";
  header["fingerprint"] = ds.fingerprint;
  header["seed"] = ds.seed;
  header["count"] = ds.size();
  os << header.dump() << "\n";
  for (const Sample& s : ds.samples) os << sample_to_json(s).dump() << "\n";
  if (!os) throw IoError("write failed for " + path);
}

Dataset load_jsonl(const std::string& path, const body::KinematicTree& tree) {
  std::ifstream is(path);
  if (!is)
    throw MissingPrerequisiteError("dataset file not found: " + path);
  std::string line;
  if (!std::getline(is, line))
    throw SchemaError(path + ": empty file, expected a dataset header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ":1: " + e.what());
  }
  if (header.value("type", "") != "dataset_header")
    throw SchemaError(path + ":1: missing dataset header");
  Dataset ds;
  ds.fingerprint = header.value("fingerprint", "");
  ds.seed = header.value("seed", std::uint64_t(0));
  const int count = header.value("count", -1);
  int lineno = 1;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw SchemaError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ds.samples.push_back(
        sample_from_json(j, tree, path + ":" + std::to_string(lineno)));
  }
  if (count >= 0 && count != ds.size())
    throw SchemaError(path + ": header count " + std::to_string(count) +
                      " does not match " + std::to_string(ds.size()) +
                      " samples");
  ds.validate();
  return ds;
}

Dataset load_keypoint_json(const std::string& path,
                           const body::KinematicTree& tree) {
  std::ifstream is(path);
  if (!is)
    throw MissingPrerequisiteError("keypoint file not found: " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::parse_error& e) {
    throw SchemaError(path + ": " + e.what());
  }
  if (!j.contains("keypoint_names") || !j["keypoint_names"].is_array())
    throw SchemaError(path + ": missing \"keypoint_names\" array");
  const json& names = j["keypoint_names"];
  if (int(names.size()) != tree.joints)
    throw SchemaError(path + ": keypoint_names has " +
                      std::to_string(names.size()) + " entries, tree has " +
                      std::to_string(tree.joints) + " joints");
  for (int k = 0; k < tree.joints; ++k)
    if (names[size_t(k)].get<std::string>() != tree.names[size_t(k)])
      throw SchemaError(path + ": keypoint_names[" + std::to_string(k) +
                        "] is \"" + names[size_t(k)].get<std::string>() +
                        "\", expected \"" + tree.names[size_t(k)] + "\"");
  if (!j.contains("people") || !j["people"].is_array())
    throw SchemaError(path + ": missing \"people\" array");

  Dataset ds;
  ds.fingerprint = hex64(fnv1a(j.dump()));
  for (size_t p = 0; p < j["people"].size(); ++p) {
    const json& person = j["people"][p];
    const std::string where = path + ": people[" + std::to_string(p) + "]";
    if (!person.contains("keypoints") || !person["keypoints"].is_array())
      throw SchemaError(where + ": missing \"keypoints\"");
    const json& kps = person["keypoints"];
    if (int(kps.size()) != tree.joints)
      throw SchemaError(where + ".keypoints: expected " +
                        std::to_string(tree.joints) + " rows");
    Sample s;
    s.id = person.value("id", int(p));
    s.domain = Domain::target;
    s.kp2d = Tensor::zeros({tree.joints, 2});
    s.conf = Tensor::zeros({tree.joints});
    for (int k = 0; k < tree.joints; ++k) {
      const json& row = kps[size_t(k)];
      const std::string field = where + ".keypoints[" + std::to_string(k) + "]";
      if (!row.is_array() || row.size() != 3)
        throw SchemaError(field + ": expected [x,y,c]");
      const double x = row[0].get<double>();
      const double y = row[1].get<double>();
      const double c = row[2].get<double>();
      if (!std::isfinite(x) || !std::isfinite(y) || x < -1.0 || x > 1.0 ||
          y < -1.0 || y > 1.0)
        throw SchemaError(field + ": coordinates must be in [-1,1]");
      if (!(c >= 0.0 && c <= 1.0))
        throw SchemaError(field + "[2]: confidence " + std::to_string(c) +
                          " outside [0,1]");
      s.kp2d.at(k, 0) = x;
      s.kp2d.at(k, 1) = y;
      s.conf[k] = c;
    }
    s.obs = Observation::from_keypoints(s.kp2d, s.conf);
    ds.samples.push_back(std::move(s));
  }
  ds.validate();
  return ds;
}

}  // namespace dapa::data
