#include "occsplat/skinning.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace occsplat {

void ArticulatedTemplate::validate_and_finalize() {
    const int n = vertex_count();
    const int k = joint_count();
    if (n == 0 || k == 0) throw std::invalid_argument("template must have vertices and joints");
    if (static_cast<int>(joint_parents.size()) != k)
        throw std::invalid_argument("joint parent list size mismatch");
    if (base_weights.rows() != n || base_weights.cols() != k)
        throw std::invalid_argument("base weight matrix shape mismatch");
    for (int i = 0; i < n; ++i) {
        if (base_weights.row(i).minCoeff() < 0.0)
            throw std::invalid_argument("base weights must be nonnegative");
        if (std::abs(base_weights.row(i).sum() - 1.0) > 1e-6)
            throw std::invalid_argument("base weight row does not sum to 1");
    }
    if (joint_parents[0] != -1) throw std::invalid_argument("joint 0 must be the root");
    // Each non-root joint must reach the root without revisiting a node.
    for (int j = 1; j < k; ++j) {
        if (joint_parents[j] < 0 || joint_parents[j] >= k || joint_parents[j] == j)
            throw std::invalid_argument("invalid joint parent index");
        int cur = j, steps = 0;
        while (cur != 0) {
            cur = joint_parents[cur];
            if (++steps > k) throw std::invalid_argument("cyclic joint parent graph");
        }
    }
    // Parents-first order.
    topo_order.clear();
    topo_order.reserve(k);
    std::vector<char> placed(k, 0);
    topo_order.push_back(0);
    placed[0] = 1;
    while (static_cast<int>(topo_order.size()) < k) {
        bool progress = false;
        for (int j = 1; j < k; ++j) {
            if (!placed[j] && placed[joint_parents[j]]) {
                topo_order.push_back(j);
                placed[j] = 1;
                progress = true;
            }
        }
        if (!progress) throw std::invalid_argument("cyclic joint parent graph");
    }
}

double ArticulatedTemplate::bounding_diagonal() const {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const Vec3& v : rest_vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    return (hi - lo).norm();
}

Pose Pose::identity(int joint_count) {
    Pose p;
    p.rotations.assign(joint_count, Vec4(1, 0, 0, 0));
    return p;
}

Vec4 axis_angle_to_quat(const Vec3& aa) {
    const double angle = aa.norm();
    if (angle < 1e-12) return Vec4(1, 0, 0, 0);
    const Vec3 axis = aa / angle;
    const double h = 0.5 * angle;
    return Vec4(std::cos(h), std::sin(h) * axis.x(), std::sin(h) * axis.y(), std::sin(h) * axis.z());
}

Vec3 quat_to_axis_angle(const Vec4& q) {
    Vec4 u = q;
    if (u[0] < 0.0) u = -u;  // shortest arc
    const double w = std::clamp(u[0], -1.0, 1.0);
    const double angle = 2.0 * std::acos(w);
    const double s = std::sqrt(std::max(0.0, 1.0 - w * w));
    if (s < 1e-9) return Vec3::Zero();
    return Vec3(u[1], u[2], u[3]) / s * angle;
}

Pose Pose::from_axis_angle(std::span<const Vec3> axis_angles, const Vec3& root_translation) {
    Pose p;
    p.rotations.reserve(axis_angles.size());
    for (const Vec3& aa : axis_angles) p.rotations.push_back(axis_angle_to_quat(aa));
    p.root_translation = root_translation;
    return p;
}

std::vector<Vec3> Pose::to_axis_angle() const {
    std::vector<Vec3> out;
    out.reserve(rotations.size());
    for (const Vec4& q : rotations) out.push_back(quat_to_axis_angle(normalize_rotation(q)));
    return out;
}

JointWorld forward_kinematics_world(const ArticulatedTemplate& tmpl, const Pose& pose) {
    const int k = tmpl.joint_count();
    if (static_cast<int>(pose.rotations.size()) != k)
        throw std::invalid_argument("pose has wrong number of joint rotations");
    JointWorld world;
    world.rotation.resize(k);
    world.translation.resize(k);
    for (int j : tmpl.topo_order) {
        const Mat3 local = quat_to_matrix(normalize_rotation(pose.rotations[j]));
        if (j == 0) {
            world.rotation[j] = local;
            world.translation[j] = tmpl.rest_joints[j];
        } else {
            const int p = tmpl.joint_parents[j];
            const Vec3 offset = tmpl.rest_joints[j] - tmpl.rest_joints[p];
            world.rotation[j] = world.rotation[p] * local;
            world.translation[j] = world.rotation[p] * offset + world.translation[p];
        }
    }
    return world;
}

JointTransforms forward_kinematics(const ArticulatedTemplate& tmpl, const Pose& pose) {
    const JointWorld world = forward_kinematics_world(tmpl, pose);
    const int k = tmpl.joint_count();
    JointTransforms out;
    out.rotation.resize(k);
    out.translation.resize(k);
    out.posed_joints.resize(k);
    for (int j = 0; j < k; ++j) {
        out.rotation[j] = world.rotation[j];
        // Skinning transform fixes the rest joint: G_k J_k + b_k = posed joint.
        out.translation[j] =
            world.translation[j] - world.rotation[j] * tmpl.rest_joints[j] + pose.root_translation;
        out.posed_joints[j] = world.translation[j] + pose.root_translation;
    }
    return out;
}

namespace {
void check_weights(const Eigen::VectorXd& w, int k) {
    if (w.size() != k) throw std::invalid_argument("weight vector size mismatch");
    if (std::abs(w.sum() - 1.0) > 1e-6) throw std::invalid_argument("weights must sum to 1");
}
}  // namespace

Vec3 lbs_point(const Vec3& x, const Eigen::VectorXd& w, const JointTransforms& transforms) {
    check_weights(w, transforms.size());
    Vec3 out = Vec3::Zero();
    for (int j = 0; j < transforms.size(); ++j) {
        if (w[j] == 0.0) continue;
        out += w[j] * (transforms.rotation[j] * x + transforms.translation[j]);
    }
    return out;
}

RigidTransform blend_transforms(const Eigen::VectorXd& w, const JointTransforms& transforms) {
    check_weights(w, transforms.size());
    RigidTransform out;
    out.rot = Mat3::Zero();
    for (int j = 0; j < transforms.size(); ++j) {
        if (w[j] == 0.0) continue;
        out.rot += w[j] * transforms.rotation[j];
        out.trans += w[j] * transforms.translation[j];
    }
    return out;
}

SkinnedGaussian skin_gaussian(const Gaussian& g, const Eigen::VectorXd& w,
                              const JointTransforms& transforms) {
    const RigidTransform t = blend_transforms(w, transforms);
    const Mat3 cov = build_covariance(g.scale(), normalize_rotation(g.rotation));
    return {t.apply(g.mean), t.apply_cov(cov)};
}

Eigen::VectorXd blend_lbs_weights(const Eigen::VectorXd& w_smpl, const Eigen::VectorXd& offsets) {
    if (w_smpl.size() != offsets.size()) throw std::invalid_argument("weight/offset size mismatch");
    if (w_smpl.minCoeff() < 0.0) throw std::invalid_argument("base weights must be nonnegative");
    Eigen::VectorXd logits = (w_smpl.array() + 1e-8).log() + offsets.array();
    logits.array() -= logits.maxCoeff();
    Eigen::VectorXd w = logits.array().exp();
    return w / w.sum();
}

Eigen::VectorXd blend_lbs_weights_backward(const Eigen::VectorXd& w_out,
                                           const Eigen::VectorXd& d_w) {
    const double dot = w_out.dot(d_w);
    return w_out.cwiseProduct((d_w.array() - dot).matrix());
}

Pose refine_pose(const Pose& pose, std::span<const Vec4> corrections) {
    if (corrections.size() != pose.rotations.size())
        throw std::invalid_argument("corrections size mismatch");
    Pose out = pose;
    for (size_t j = 0; j < corrections.size(); ++j)
        out.rotations[j] = normalize_rotation(quat_multiply(pose.rotations[j], corrections[j]));
    return out;
}

const std::vector<RigidTransform>& ViewTransformCache::view(int index) const {
    if (index < 0 || index >= view_count()) throw std::out_of_range("view index out of range");
    return views[static_cast<size_t>(index)];
}

ViewTransformCache cache_view_transforms(const std::vector<Eigen::VectorXd>& point_weights,
                                         const ArticulatedTemplate& tmpl,
                                         std::span<const Pose> poses) {
    ViewTransformCache cache;
    cache.views.reserve(poses.size());
    for (const Pose& pose : poses) {
        const JointTransforms transforms = forward_kinematics(tmpl, pose);
        std::vector<RigidTransform> per_point;
        per_point.reserve(point_weights.size());
        for (const auto& w : point_weights) per_point.push_back(blend_transforms(w, transforms));
        cache.views.push_back(std::move(per_point));
    }
    return cache;
}

int nearest_template_vertex(const Vec3& x, const ArticulatedTemplate& tmpl) {
    if (tmpl.rest_vertices.empty()) throw std::invalid_argument("template has no vertices");
    int best = 0;
    double best_d2 = (tmpl.rest_vertices[0] - x).squaredNorm();
    for (int i = 1; i < tmpl.vertex_count(); ++i) {
        const double d2 = (tmpl.rest_vertices[i] - x).squaredNorm();
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return best;
}

void save_template(const std::string& path, const ArticulatedTemplate& tmpl) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot open template file for writing: " + path);
    f.precision(17);
    f << "occsplat-template 1\n";
    f << tmpl.vertex_count() << " " << tmpl.joint_count() << "\n";
    for (const Vec3& v : tmpl.rest_vertices) f << "v " << v.x() << " " << v.y() << " " << v.z() << "\n";
    for (int j = 0; j < tmpl.joint_count(); ++j) {
        const Vec3& p = tmpl.rest_joints[j];
        f << "j " << tmpl.joint_parents[j] << " " << p.x() << " " << p.y() << " " << p.z() << "\n";
    }
    for (int i = 0; i < tmpl.vertex_count(); ++i) {
        f << "w";
        for (int j = 0; j < tmpl.joint_count(); ++j) f << " " << tmpl.base_weights(i, j);
        f << "\n";
    }
    if (!f) throw std::runtime_error("failed writing template file: " + path);
}

ArticulatedTemplate load_template(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot open template file: " + path);
    std::string magic;
    int version = 0;
    f >> magic >> version;
    if (magic != "occsplat-template" || version != 1)
        throw std::runtime_error("unrecognized template file header");
    int n = 0, k = 0;
    f >> n >> k;
    if (!f || n <= 0 || k <= 0) throw std::runtime_error("bad template counts");
    ArticulatedTemplate tmpl;
    tmpl.rest_vertices.resize(n);
    tmpl.joint_parents.resize(k);
    tmpl.rest_joints.resize(k);
    tmpl.base_weights.resize(n, k);
    std::string tag;
    for (int i = 0; i < n; ++i) {
        f >> tag >> tmpl.rest_vertices[i].x() >> tmpl.rest_vertices[i].y() >> tmpl.rest_vertices[i].z();
        if (!f || tag != "v") throw std::runtime_error("bad vertex line in template");
    }
    for (int j = 0; j < k; ++j) {
        f >> tag >> tmpl.joint_parents[j] >> tmpl.rest_joints[j].x() >> tmpl.rest_joints[j].y() >>
            tmpl.rest_joints[j].z();
        if (!f || tag != "j") throw std::runtime_error("bad joint line in template");
    }
    for (int i = 0; i < n; ++i) {
        f >> tag;
        if (!f || tag != "w") throw std::runtime_error("bad weight line in template");
        for (int j = 0; j < k; ++j) f >> tmpl.base_weights(i, j);
    }
    if (!f) throw std::runtime_error("truncated template file");
    tmpl.validate_and_finalize();
    return tmpl;
}

}  // namespace occsplat
