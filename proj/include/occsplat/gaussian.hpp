#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <vector>

namespace occsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using ShCoeffs = Eigen::Matrix<double, 3, 16>;  // rows = RGB, cols = degree-3 real SH basis

constexpr int kShCount = 16;

// One anisotropic 3D Gaussian. Scale is stored as log-scale and opacity
// as a logit so gradient descent is unconstrained; activations are
// exp / sigmoid. Quaternion is scalar-first (w, x, y, z).
struct Gaussian {
    Vec3 mean = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1, 0, 0, 0);
    double opacity_logit = 0.0;
    ShCoeffs sh = ShCoeffs::Zero();

    Vec3 scale() const { return log_scale.array().exp(); }
    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
};

enum class SpaceTag { canonical, posed };

// Canonical (or posed) Gaussian set plus per-point visibility weights rho.
// |rho| == |gaussians| is maintained through every densify action.
struct GaussianCloud {
    std::vector<Gaussian> gaussians;
    std::vector<double> visibility_weights;
    SpaceTag space_tag = SpaceTag::canonical;

    size_t size() const { return gaussians.size(); }
    void push_back(const Gaussian& g, double rho = 0.0) {
        gaussians.push_back(g);
        visibility_weights.push_back(rho);
    }
    void check_consistent() const;
};

double sigmoid(double x);
double logit(double p);  // inverse sigmoid, valid for p in (0,1)

// Unit quaternion with the direction preserved. Throws on zero norm.
Vec4 normalize_rotation(const Vec4& q);

// Rotation matrix of a unit quaternion (w, x, y, z).
Mat3 quat_to_matrix(const Vec4& q_unit);

// d(quat_to_matrix)/dq for a unit quaternion, one 3x3 per component.
std::array<Mat3, 4> quat_to_matrix_jacobian(const Vec4& q_unit);

// Quaternion Hamilton product a*b (both scalar-first).
Vec4 quat_multiply(const Vec4& a, const Vec4& b);
// 4x4 matrix L with L*b == quat_multiply(a, b).
Eigen::Matrix4d quat_left_matrix(const Vec4& a);

// Sigma = R S S^T R^T with S = diag(s). Requires s > 0 and unit q.
Mat3 build_covariance(const Vec3& s, const Vec4& q);

// (2*pi)^{-3/2} |Sigma|^{-1/2} exp(-1/2 (x-mu)^T Sigma^{-1} (x-mu)).
// Throws "degenerate covariance" when |Sigma| < 1e-30.
double gaussian_density(const Vec3& x, const Vec3& mu, const Mat3& sigma);

// Real spherical-harmonic basis up to degree 3 at a unit direction.
std::array<double, kShCount> sh_basis(const Vec3& d_unit);
// Basis derivatives w.r.t. the (unconstrained) direction components.
std::array<Vec3, kShCount> sh_basis_gradient(const Vec3& d_unit);

// Per-channel dot product of the basis with the coefficients; no clamp.
Vec3 eval_sh_raw(const ShCoeffs& f, const Vec3& d_unit);
// Clamped to [0, 1]. Requires |d| = 1 within 1e-6.
Vec3 eval_sh(const ShCoeffs& f, const Vec3& d);

}  // namespace occsplat
