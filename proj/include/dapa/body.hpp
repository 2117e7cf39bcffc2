#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "dapa/tape.hpp"
#include "dapa/tensor.hpp"

namespace dapa::body {

// Kinematic tree with per-bone rest offsets and a linear shape basis that
// scales bone lengths. Joints are stored in topological order, parent[0] = 0.
struct KinematicTree {
  int joints = 0;
  std::vector<int> parent;
  Tensor rest_offsets;  // {J,3} meters, offset from parent at rest
  Tensor shape_basis;   // {J,K} per-joint length sensitivity to each beta
  std::vector<std::string> names;

  static KinematicTree human17();
  static KinematicTree smpl24();

  int shape_dims() const { return shape_basis.shape[1]; }
  int pose_dims() const { return 3 * (joints - 1); }
  int index_of(std::string_view name) const;  // throws if absent
  Tensor rest_joints() const;                 // {J,3} cumulative offsets
  void validate() const;
};

struct BodyState {
  Tensor joints;                   // {J,3} world positions
  std::vector<Tensor> transforms;  // J rigid {4,4} world transforms
};

// offset_j = rest_j * clamp(1 + sum_k beta_k * basis[j,k], 0.2, 3.0)
Tensor shaped_offsets(const KinematicTree& tree, const Tensor& beta);

// Pose layout: body_pose is flat {3(J-1)} axis-angle per non-root joint,
// orient {3} rotates the whole body about the pelvis, root_transl {3} moves
// the pelvis. Child offsets rotate with the parent's world rotation.
BodyState forward_kinematics(const KinematicTree& tree, const Tensor& body_pose,
                             const Tensor& orient, const Tensor& beta,
                             const Tensor& root_transl = Tensor::zeros({3}));

// Tape twin of forward_kinematics. Shares the kern:: rotation kernels with
// the numeric path, so values agree bit for bit.
struct FkVars {
  Var joints;                   // {J,3}
  std::vector<Var> local_rots;  // J of {3,3}; [0] is the global orient
  std::vector<Var> world_rots;  // J of {3,3}
};
FkVars forward_kinematics(Tape& tape, const KinematicTree& tree, Var body_pose,
                          Var orient, Var beta, Var root_transl);

// Procedural capsule mesh: rings of vertices along each bone, skinning
// weight split between the bone's two joints by position along the bone.
struct MeshTemplate {
  Tensor vertices;  // {V,3} rest positions
  std::vector<std::array<int, 3>> faces;
  Tensor weights;          // {V,J} rows sum to 1
  Tensor bind_joints;      // {J,3} rest joints the weights were built against
  Tensor joint_regressor;  // {J,V} ring-averaging rows, sum to 1
  std::vector<int> skipped_bones;  // zero-length bones left unmeshed
  void validate() const;
};

MeshTemplate build_template(const KinematicTree& tree, int rings_per_bone = 3,
                            int ring_vertices = 8);

// Linear blend skinning: v' = sum_j w_vj (R_j (v - bind_j) + x_j).
Tensor lbs(const MeshTemplate& tmpl, const BodyState& state);  // {V,3}

// Joint positions as a fixed linear combination of mesh vertices.
Tensor regress_joints(const MeshTemplate& tmpl, const Tensor& posed);  // {J,3}

// Equivalent rotation with axis-angle norm in [0, pi].
Tensor wrap_axis_angle(const Tensor& omega);

void export_obj(std::ostream& os, const Tensor& vertices,
                const std::vector<std::array<int, 3>>& faces);
void export_obj(const std::string& path, const Tensor& vertices,
                const std::vector<std::array<int, 3>>& faces);

}  // namespace dapa::body
