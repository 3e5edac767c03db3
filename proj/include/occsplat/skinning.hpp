#pragma once

#include "occsplat/gaussian.hpp"

#include <span>
#include <string>
#include <vector>

namespace occsplat {

// Rest-pose articulated template: stand-in for a parametric body model.
// Joint parents must form a tree rooted at joint 0; base-weight rows are
// nonnegative and sum to 1.
struct ArticulatedTemplate {
    std::vector<Vec3> rest_vertices;           // N
    std::vector<int> joint_parents;            // K, root entry = -1
    std::vector<Vec3> rest_joints;             // K
    Eigen::MatrixXd base_weights;              // N x K

    int vertex_count() const { return static_cast<int>(rest_vertices.size()); }
    int joint_count() const { return static_cast<int>(rest_joints.size()); }

    // Throws on malformed weights or a parent graph that is not a tree
    // rooted at joint 0. Fills topo_order (parents before children).
    void validate_and_finalize();
    std::vector<int> topo_order;

    // Diagonal of the rest-vertex bounding box (scale reference for
    // densify thresholds).
    double bounding_diagonal() const;
};

struct Pose {
    std::vector<Vec4> rotations;  // unit quaternions (w,x,y,z), one per joint
    Vec3 root_translation = Vec3::Zero();

    static Pose identity(int joint_count);
    static Pose from_axis_angle(std::span<const Vec3> axis_angles, const Vec3& root_translation);
    std::vector<Vec3> to_axis_angle() const;
};

Vec4 axis_angle_to_quat(const Vec3& aa);
Vec3 quat_to_axis_angle(const Vec4& q_unit);

// Per-joint skinning transforms G_k, b_k (posed = G_k x + b_k for a
// point fully bound to joint k) plus posed joint positions.
struct JointTransforms {
    std::vector<Mat3> rotation;
    std::vector<Vec3> translation;
    std::vector<Vec3> posed_joints;
    int size() const { return static_cast<int>(rotation.size()); }
};

// World transforms of each joint (used by FK backward and the mesh
// renderer; bones move rigidly with these).
struct JointWorld {
    std::vector<Mat3> rotation;
    std::vector<Vec3> translation;
};

// Tree-recursive forward kinematics. Identity pose gives G_k = I,
// b_k = 0 for every joint.
JointTransforms forward_kinematics(const ArticulatedTemplate& tmpl, const Pose& pose);
JointWorld forward_kinematics_world(const ArticulatedTemplate& tmpl, const Pose& pose);

// x_p = sum_k w_k (G_k x + b_k). Weights must sum to 1 within 1e-6.
Vec3 lbs_point(const Vec3& x, const Eigen::VectorXd& w, const JointTransforms& transforms);

struct RigidTransform {
    Mat3 rot = Mat3::Identity();
    Vec3 trans = Vec3::Zero();
    Vec3 apply(const Vec3& p) const { return rot * p + trans; }
    Mat3 apply_cov(const Mat3& cov) const { return rot * cov * rot.transpose(); }
};

// Blended per-point transform G(.) = sum w_k G_k, b(.) = sum w_k b_k.
RigidTransform blend_transforms(const Eigen::VectorXd& w, const JointTransforms& transforms);

struct SkinnedGaussian {
    Vec3 mean;
    Mat3 cov;
};

// Eq.-5 style forward skinning: mean and covariance are rotated and
// translated by the blended transform.
SkinnedGaussian skin_gaussian(const Gaussian& g, const Eigen::VectorXd& w,
                              const JointTransforms& transforms);

// softmax(log(w_smpl + 1e-8) + offsets): a probability vector.
Eigen::VectorXd blend_lbs_weights(const Eigen::VectorXd& w_smpl, const Eigen::VectorXd& offsets);
// Gradient of the blend w.r.t. offsets given d(loss)/d(blended w).
Eigen::VectorXd blend_lbs_weights_backward(const Eigen::VectorXd& w_out,
                                           const Eigen::VectorXd& d_w);

// Per-joint right-composition of rotation corrections; root translation
// is unchanged.
Pose refine_pose(const Pose& pose, std::span<const Vec4> corrections);

// Frozen per-view rigid transforms: x^o = R x^c + T per point.
struct ViewTransformCache {
    std::vector<std::vector<RigidTransform>> views;  // [view][point]

    const std::vector<RigidTransform>& view(int index) const;
    int view_count() const { return static_cast<int>(views.size()); }
};

// Bakes the full skinning pipeline (given per-point blended weights) into
// per-view per-point rigid transforms.
ViewTransformCache cache_view_transforms(const std::vector<Eigen::VectorXd>& point_weights,
                                         const ArticulatedTemplate& tmpl,
                                         std::span<const Pose> poses);

// Argmin of Euclidean distance over rest vertices; ties take the lowest
// index.
int nearest_template_vertex(const Vec3& x, const ArticulatedTemplate& tmpl);

// Text serialization: "occsplat-template 1" header, N K counts, vertex
// lines, joint lines (parent + rest position), weight rows.
void save_template(const std::string& path, const ArticulatedTemplate& tmpl);
ArticulatedTemplate load_template(const std::string& path);

}  // namespace occsplat
