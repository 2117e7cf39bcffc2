#include "dapa/body.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>

namespace dapa::body {

namespace {

constexpr double kPi = 3.14159265358979323846;

bool name_has(const std::string& name, std::initializer_list<const char*> keys) {
  for (const char* k : keys)
    if (name.find(k) != std::string::npos) return true;
  return false;
}

// Length sensitivities grouped by body region so every beta component moves
// an identifiable set of bones.
Tensor make_shape_basis(const std::vector<std::string>& names) {
  const int j = int(names.size());
  Tensor b = Tensor::zeros({j, 10});
  for (int i = 1; i < j; ++i) {
    const std::string& n = names[size_t(i)];
    b.at(i, 0) = 0.10;
    if (name_has(n, {"hip", "knee", "ankle", "foot"})) b.at(i, 1) = 0.10;
    if (name_has(n, {"collar", "shoulder", "elbow", "wrist", "hand"}))
      b.at(i, 2) = 0.10;
    if (name_has(n, {"spine", "chest", "neck"})) b.at(i, 3) = 0.08;
    if (name_has(n, {"neck", "head"})) b.at(i, 4) = 0.05;
    if (name_has(n, {"knee", "ankle", "foot"})) b.at(i, 5) = 0.06;
    if (name_has(n, {"elbow", "wrist", "hand"})) b.at(i, 6) = 0.06;
    if (name_has(n, {"hip", "collar", "shoulder"})) b.at(i, 7) = 0.05;
    if (name_has(n, {"spine"})) b.at(i, 8) = 0.04;
    b.at(i, 9) = 0.02;
  }
  return b;
}

double bone_scale(const KinematicTree& tree, const Tensor& beta, int j) {
  double acc = 0.0;
  for (int k = 0; k < tree.shape_dims(); ++k)
    acc += beta[k] * tree.shape_basis.at(j, k);
  return std::fmin(std::fmax(acc + 1.0, 0.2), 3.0);
}

Tensor rigid44(const double* r9, const double* x3) {
  Tensor t = Tensor::zeros({4, 4});
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) t.at(i, j) = r9[i * 3 + j];
    t.at(i, 3) = x3[i];
  }
  t.at(3, 3) = 1.0;
  return t;
}

}  // namespace

KinematicTree KinematicTree::human17() {
  KinematicTree t;
  t.names = {"pelvis",     "spine",   "chest",      "neck",    "head",
             "l_hip",      "l_knee",  "l_ankle",    "r_hip",   "r_knee",
             "r_ankle",    "l_shoulder", "l_elbow", "l_wrist", "r_shoulder",
             "r_elbow",    "r_wrist"};
  t.joints = 17;
  t.parent = {0, 0, 1, 2, 3, 0, 5, 6, 0, 8, 9, 2, 11, 12, 2, 14, 15};
  t.rest_offsets = Tensor({17, 3}, {
      0.00, 0.00, 0.00,    // pelvis
      0.00, 0.15, 0.00,    // spine
      0.00, 0.18, 0.00,    // chest
      0.00, 0.15, 0.00,    // neck
      0.00, 0.12, 0.00,    // head
      0.09, -0.05, 0.00,   // l_hip
      0.00, -0.40, 0.00,   // l_knee
      0.00, -0.42, 0.00,   // l_ankle
      -0.09, -0.05, 0.00,  // r_hip
      0.00, -0.40, 0.00,   // r_knee
      0.00, -0.42, 0.00,   // r_ankle
      0.16, 0.02, 0.00,    // l_shoulder
      0.26, 0.00, 0.00,    // l_elbow
      0.25, 0.00, 0.00,    // l_wrist
      -0.16, 0.02, 0.00,   // r_shoulder
      -0.26, 0.00, 0.00,   // r_elbow
      -0.25, 0.00, 0.00,   // r_wrist
  });
  t.shape_basis = make_shape_basis(t.names);
  t.validate();
  return t;
}

KinematicTree KinematicTree::smpl24() {
  KinematicTree t;
  t.names = {"pelvis",  "l_hip",      "r_hip",    "spine",    "l_knee",
             "r_knee",  "spine2",     "l_ankle",  "r_ankle",  "chest",
             "l_foot",  "r_foot",     "neck",     "l_collar", "r_collar",
             "head",    "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
             "l_wrist", "r_wrist",    "l_hand",   "r_hand"};
  t.joints = 24;
  t.parent = {0, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8,
              9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21};
  t.rest_offsets = Tensor({24, 3}, {
      0.00, 0.00, 0.00,    // pelvis
      0.07, -0.06, 0.00,   // l_hip
      -0.07, -0.06, 0.00,  // r_hip
      0.00, 0.11, 0.00,    // spine
      0.02, -0.38, 0.00,   // l_knee
      -0.02, -0.38, 0.00,  // r_knee
      0.00, 0.13, 0.00,    // spine2
      0.00, -0.40, 0.00,   // l_ankle
      0.00, -0.40, 0.00,   // r_ankle
      0.00, 0.13, 0.00,    // chest
      0.00, -0.06, 0.12,   // l_foot
      0.00, -0.06, 0.12,   // r_foot
      0.00, 0.14, 0.00,    // neck
      0.07, 0.08, 0.00,    // l_collar
      -0.07, 0.08, 0.00,   // r_collar
      0.00, 0.12, 0.00,    // head
      0.10, 0.02, 0.00,    // l_shoulder
      -0.10, 0.02, 0.00,   // r_shoulder
      0.26, 0.00, 0.00,    // l_elbow
      -0.26, 0.00, 0.00,   // r_elbow
      0.25, 0.00, 0.00,    // l_wrist
      -0.25, 0.00, 0.00,   // r_wrist
      0.08, 0.00, 0.00,    // l_hand
      -0.08, 0.00, 0.00,   // r_hand
  });
  t.shape_basis = make_shape_basis(t.names);
  t.validate();
  return t;
}

int KinematicTree::index_of(std::string_view name) const {
  for (int i = 0; i < joints; ++i)
    if (names[size_t(i)] == name) return i;
  throw ContractError("KinematicTree: no joint named '" + std::string(name) +
                      "'");
}

Tensor KinematicTree::rest_joints() const {
  Tensor out = Tensor::zeros({joints, 3});
  for (int j = 1; j < joints; ++j)
    for (int c = 0; c < 3; ++c)
      out.at(j, c) = out.at(parent[size_t(j)], c) + rest_offsets.at(j, c);
  return out;
}

void KinematicTree::validate() const {
  if (joints < 2 || int(parent.size()) != joints ||
      int(names.size()) != joints)
    throw ContractError("KinematicTree: inconsistent sizes");
  if (rest_offsets.shape != std::vector<int>{joints, 3})
    throw DimensionError("KinematicTree: rest_offsets must be {J,3}");
  if (shape_basis.rank() != 2 || shape_basis.shape[0] != joints)
    throw DimensionError("KinematicTree: shape_basis must be {J,K}");
  if (parent[0] != 0) throw ContractError("KinematicTree: root must be 0");
  for (int j = 1; j < joints; ++j) {
    if (parent[size_t(j)] < 0 || parent[size_t(j)] >= j)
      throw ContractError("KinematicTree: parent[j] must be < j");
    double n2 = 0.0;
    for (int c = 0; c < 3; ++c) n2 += rest_offsets.at(j, c) * rest_offsets.at(j, c);
    if (!(n2 > 0.0) || !std::isfinite(n2))
      throw ContractError("KinematicTree: zero or non-finite rest offset at " +
                          names[size_t(j)]);
  }
}

Tensor shaped_offsets(const KinematicTree& tree, const Tensor& beta) {
  if (beta.size() != tree.shape_dims())
    throw DimensionError("shaped_offsets: beta size " +
                         std::to_string(beta.size()) + " vs basis " +
                         std::to_string(tree.shape_dims()));
  Tensor out = tree.rest_offsets;
  for (int j = 0; j < tree.joints; ++j) {
    const double f = bone_scale(tree, beta, j);
    for (int c = 0; c < 3; ++c) out.at(j, c) *= f;
  }
  return out;
}

BodyState forward_kinematics(const KinematicTree& tree, const Tensor& body_pose,
                             const Tensor& orient, const Tensor& beta,
                             const Tensor& root_transl) {
  if (body_pose.size() != tree.pose_dims())
    throw DimensionError("forward_kinematics: body_pose must have " +
                         std::to_string(tree.pose_dims()) + " values, got " +
                         std::to_string(body_pose.size()));
  if (orient.size() != 3 || root_transl.size() != 3)
    throw DimensionError("forward_kinematics: orient and transl are 3-vectors");
  const int j = tree.joints;
  const size_t nj = size_t(j);
  std::vector<std::array<double, 9>> rot(nj);
  std::vector<std::array<double, 3>> pos(nj);
  kern::rodrigues(orient.values.data(), rot[0].data());
  for (int c = 0; c < 3; ++c) pos[0][size_t(c)] = root_transl[c];

  for (int i = 1; i < j; ++i) {
    const int p = tree.parent[size_t(i)];
    const double f = bone_scale(tree, beta, i);
    const double off[3] = {tree.rest_offsets.at(i, 0) * f,
                           tree.rest_offsets.at(i, 1) * f,
                           tree.rest_offsets.at(i, 2) * f};
    double rotated[3];
    kern::mat3vec(rot[size_t(p)].data(), off, rotated);
    for (int c = 0; c < 3; ++c) pos[size_t(i)][size_t(c)] = pos[size_t(p)][size_t(c)] + rotated[c];
    double local[9];
    kern::rodrigues(body_pose.values.data() + 3 * (i - 1), local);
    kern::mat3mul(rot[size_t(p)].data(), local, rot[size_t(i)].data());
  }

  BodyState state;
  state.joints = Tensor::zeros({j, 3});
  state.transforms.reserve(size_t(j));
  for (int i = 0; i < j; ++i) {
    for (int c = 0; c < 3; ++c) state.joints.at(i, c) = pos[size_t(i)][size_t(c)];
    state.transforms.push_back(rigid44(rot[size_t(i)].data(), pos[size_t(i)].data()));
  }
  return state;
}

FkVars forward_kinematics(Tape& tape, const KinematicTree& tree, Var body_pose,
                          Var orient, Var beta, Var root_transl) {
  if (tape.value(body_pose).size() != tree.pose_dims())
    throw DimensionError("forward_kinematics: tape body_pose has wrong size");
  const int j = tree.joints;
  FkVars out;
  out.local_rots.resize(size_t(j));
  out.world_rots.resize(size_t(j));
  std::vector<Var> pos(size_t(j), Var{});

  out.local_rots[0] = tape.rodrigues(orient);
  out.world_rots[0] = out.local_rots[0];
  pos[0] = root_transl;

  for (int i = 1; i < j; ++i) {
    const int p = tree.parent[size_t(i)];
    Tensor brow = Tensor::zeros({tree.shape_dims()});
    Tensor rest = Tensor::zeros({3});
    for (int k = 0; k < tree.shape_dims(); ++k) brow[k] = tree.shape_basis.at(i, k);
    for (int c = 0; c < 3; ++c) rest[c] = tree.rest_offsets.at(i, c);
    Var factor = tape.clamp(
        tape.add_scalar(tape.sum(tape.mul(beta, tape.leaf(brow))), 1.0), 0.2,
        3.0);
    Var offset = tape.mul_scalar(tape.leaf(std::move(rest)), factor);
    pos[size_t(i)] =
        tape.add(pos[size_t(p)], tape.rot_apply(out.world_rots[size_t(p)], offset));
    out.local_rots[size_t(i)] =
        tape.rodrigues(tape.subvec(body_pose, 3 * (i - 1), 3));
    out.world_rots[size_t(i)] =
        tape.rot_compose(out.world_rots[size_t(p)], out.local_rots[size_t(i)]);
  }
  out.joints = tape.stack_rows(pos);
  return out;
}

MeshTemplate build_template(const KinematicTree& tree, int rings_per_bone,
                            int ring_vertices) {
  if (rings_per_bone < 2 || ring_vertices < 3)
    throw ContractError("build_template: need >=2 rings and >=3 ring vertices");
  const Tensor rest = tree.rest_joints();
  MeshTemplate tmpl;
  tmpl.bind_joints = rest;

  struct Ring {
    int first_vertex;
    double center[3];
  };
  std::vector<Ring> rings;
  std::vector<double> verts;
  std::vector<std::vector<double>> wrows;

  for (int j = 1; j < tree.joints; ++j) {
    const int p = tree.parent[size_t(j)];
    double off[3], len2 = 0.0;
    for (int c = 0; c < 3; ++c) {
      off[c] = rest.at(j, c) - rest.at(p, c);
      len2 += off[c] * off[c];
    }
    const double len = std::sqrt(len2);
    if (len < 1e-12) {
      tmpl.skipped_bones.push_back(j);
      continue;
    }
    const double radius = std::fmin(std::fmax(0.22 * len, 0.02), 0.06);
    const double axis[3] = {off[0] / len, off[1] / len, off[2] / len};
    const double ref[3] = {std::fabs(axis[0]) < 0.9 ? 1.0 : 0.0,
                           std::fabs(axis[0]) < 0.9 ? 0.0 : 1.0, 0.0};
    double u[3] = {axis[1] * ref[2] - axis[2] * ref[1],
                   axis[2] * ref[0] - axis[0] * ref[2],
                   axis[0] * ref[1] - axis[1] * ref[0]};
    const double un =
        std::sqrt(u[0] * u[0] + u[1] * u[1] + u[2] * u[2]);
    for (double& x : u) x /= un;
    const double w[3] = {axis[1] * u[2] - axis[2] * u[1],
                         axis[2] * u[0] - axis[0] * u[2],
                         axis[0] * u[1] - axis[1] * u[0]};

    const int base_ring = int(rings.size());
    for (int r = 0; r < rings_per_bone; ++r) {
      const double t = double(r) / double(rings_per_bone - 1);
      Ring ring;
      ring.first_vertex = int(verts.size()) / 3;
      for (int c = 0; c < 3; ++c) ring.center[c] = rest.at(p, c) + t * off[c];
      for (int k = 0; k < ring_vertices; ++k) {
        const double phi = 2.0 * kPi * double(k) / double(ring_vertices);
        const double cu = radius * std::cos(phi), cw = radius * std::sin(phi);
        for (int c = 0; c < 3; ++c)
          verts.push_back(ring.center[c] + cu * u[c] + cw * w[c]);
        std::vector<double> wrow(size_t(tree.joints), 0.0);
        wrow[size_t(j)] = t;
        wrow[size_t(p)] += 1.0 - t;  // += so a hypothetical p==j still sums to 1
        wrows.push_back(std::move(wrow));
      }
      rings.push_back(ring);
    }
    for (int r = 0; r < rings_per_bone - 1; ++r) {
      const int a = rings[size_t(base_ring + r)].first_vertex;
      const int b = rings[size_t(base_ring + r + 1)].first_vertex;
      for (int k = 0; k < ring_vertices; ++k) {
        const int k2 = (k + 1) % ring_vertices;
        tmpl.faces.push_back({a + k, a + k2, b + k2});
        tmpl.faces.push_back({a + k, b + k2, b + k});
      }
    }
  }

  const int v = int(wrows.size());
  tmpl.vertices = Tensor({v, 3}, std::move(verts));
  tmpl.weights = Tensor::zeros({v, tree.joints});
  for (int i = 0; i < v; ++i)
    for (int c = 0; c < tree.joints; ++c)
      tmpl.weights.at(i, c) = wrows[size_t(i)][size_t(c)];

  // Each joint reads off the centroid of its nearest ring.
  tmpl.joint_regressor = Tensor::zeros({tree.joints, v});
  for (int j = 0; j < tree.joints; ++j) {
    int best = -1;
    double best_d2 = 0.0;
    for (size_t r = 0; r < rings.size(); ++r) {
      double d2 = 0.0;
      for (int c = 0; c < 3; ++c) {
        const double d = rings[r].center[c] - rest.at(j, c);
        d2 += d * d;
      }
      if (best < 0 || d2 < best_d2) {
        best = int(r);
        best_d2 = d2;
      }
    }
    if (best < 0) throw ContractError("build_template: tree has no mesh");
    for (int k = 0; k < ring_vertices; ++k)
      tmpl.joint_regressor.at(j, rings[size_t(best)].first_vertex + k) =
          1.0 / double(ring_vertices);
  }
  tmpl.validate();
  return tmpl;
}

void MeshTemplate::validate() const {
  const int v = vertices.shape[0];
  if (weights.shape[0] != v || joint_regressor.shape[1] != v)
    throw DimensionError("MeshTemplate: inconsistent vertex counts");
  for (int i = 0; i < v; ++i) {
    double s = 0.0;
    for (int j = 0; j < weights.shape[1]; ++j) {
      if (weights.at(i, j) < 0.0)
        throw ContractError("MeshTemplate: negative skinning weight");
      s += weights.at(i, j);
    }
    if (std::fabs(s - 1.0) > 1e-9)
      throw ContractError("MeshTemplate: weight row does not sum to 1");
  }
  for (int j = 0; j < joint_regressor.shape[0]; ++j) {
    double s = 0.0;
    for (int i = 0; i < v; ++i) s += joint_regressor.at(j, i);
    if (std::fabs(s - 1.0) > 1e-9)
      throw ContractError("MeshTemplate: regressor row does not sum to 1");
  }
  for (const auto& f : faces)
    for (int idx : f)
      if (idx < 0 || idx >= v)
        throw ContractError("MeshTemplate: face index out of range");
}

Tensor lbs(const MeshTemplate& tmpl, const BodyState& state) {
  const int v = tmpl.vertices.shape[0];
  const int j = tmpl.weights.shape[1];
  if (int(state.transforms.size()) != j)
    throw DimensionError("lbs: transform count does not match weights");
  Tensor out = Tensor::zeros({v, 3});
  for (int i = 0; i < v; ++i) {
    const double p[3] = {tmpl.vertices.at(i, 0), tmpl.vertices.at(i, 1),
                         tmpl.vertices.at(i, 2)};
    double acc[3] = {0.0, 0.0, 0.0};
    for (int k = 0; k < j; ++k) {
      const double w = tmpl.weights.at(i, k);
      if (w == 0.0) continue;
      const Tensor& t = state.transforms[size_t(k)];
      for (int r = 0; r < 3; ++r) {
        const double local[3] = {p[0] - tmpl.bind_joints.at(k, 0),
                                 p[1] - tmpl.bind_joints.at(k, 1),
                                 p[2] - tmpl.bind_joints.at(k, 2)};
        acc[r] += w * (t.at(r, 0) * local[0] + t.at(r, 1) * local[1] +
                       t.at(r, 2) * local[2] + t.at(r, 3));
      }
    }
    for (int c = 0; c < 3; ++c) out.at(i, c) = acc[c];
  }
  return out;
}

Tensor regress_joints(const MeshTemplate& tmpl, const Tensor& posed) {
  const int v = tmpl.joint_regressor.shape[1];
  if (posed.shape != std::vector<int>{v, 3})
    throw DimensionError("regress_joints: posed vertices must be {V,3}");
  const int j = tmpl.joint_regressor.shape[0];
  Tensor out = Tensor::zeros({j, 3});
  for (int a = 0; a < j; ++a)
    for (int i = 0; i < v; ++i) {
      const double w = tmpl.joint_regressor.at(a, i);
      if (w == 0.0) continue;
      for (int c = 0; c < 3; ++c) out.at(a, c) += w * posed.at(i, c);
    }
  return out;
}

Tensor wrap_axis_angle(const Tensor& omega) {
  if (omega.size() != 3)
    throw DimensionError("wrap_axis_angle: expected a 3-vector");
  const double th = std::sqrt(omega[0] * omega[0] + omega[1] * omega[1] +
                              omega[2] * omega[2]);
  if (th <= kPi) return omega;
  double r = std::fmod(th, 2.0 * kPi);
  if (r > kPi) r -= 2.0 * kPi;
  Tensor out = omega;
  for (double& x : out.values) x *= r / th;
  return out;
}

void export_obj(std::ostream& os, const Tensor& vertices,
                const std::vector<std::array<int, 3>>& faces) {
  os << std::setprecision(9);
  for (int i = 0; i < vertices.shape[0]; ++i)
    os << "v " << vertices.at(i, 0) << ' ' << vertices.at(i, 1) << ' '
       << vertices.at(i, 2) << '\n';
  for (const auto& f : faces)
    os << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
}

void export_obj(const std::string& path, const Tensor& vertices,
                const std::vector<std::array<int, 3>>& faces) {
  std::ofstream os(path);
  if (!os) throw IoError("export_obj: cannot open " + path);
  export_obj(os, vertices, faces);
  if (!os.good()) throw IoError("export_obj: write failed for " + path);
}

}  // namespace dapa::body
