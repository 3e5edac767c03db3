#include "occsplat/gaussian.hpp"

#include <cmath>
#include <stdexcept>

namespace occsplat {

void GaussianCloud::check_consistent() const {
    if (gaussians.size() != visibility_weights.size())
        throw std::logic_error("cloud size mismatch: |rho| != |gaussians|");
    for (double r : visibility_weights)
        if (r < 0.0) throw std::logic_error("negative visibility weight");
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double logit(double p) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("logit requires p in (0,1)");
    return std::log(p / (1.0 - p));
}

Vec4 normalize_rotation(const Vec4& q) {
    const double n = q.norm();
    if (n <= 0.0 || !std::isfinite(n)) throw std::invalid_argument("degenerate rotation");
    return q / n;
}

Mat3 quat_to_matrix(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

std::array<Mat3, 4> quat_to_matrix_jacobian(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    std::array<Mat3, 4> d;
    d[0] <<  0, -2 * z,  2 * y,
             2 * z,  0, -2 * x,
            -2 * y,  2 * x,  0;
    d[1] <<  0,  2 * y,  2 * z,
             2 * y, -4 * x, -2 * w,
             2 * z,  2 * w, -4 * x;
    d[2] << -4 * y,  2 * x,  2 * w,
             2 * x,  0,  2 * z,
            -2 * w,  2 * z, -4 * y;
    d[3] << -4 * z, -2 * w,  2 * x,
             2 * w, -4 * z,  2 * y,
             2 * x,  2 * y,  0;
    return d;
}

Vec4 quat_multiply(const Vec4& a, const Vec4& b) {
    return Vec4(a[0] * b[0] - a[1] * b[1] - a[2] * b[2] - a[3] * b[3],
                a[0] * b[1] + a[1] * b[0] + a[2] * b[3] - a[3] * b[2],
                a[0] * b[2] - a[1] * b[3] + a[2] * b[0] + a[3] * b[1],
                a[0] * b[3] + a[1] * b[2] - a[2] * b[1] + a[3] * b[0]);
}

Eigen::Matrix4d quat_left_matrix(const Vec4& a) {
    Eigen::Matrix4d m;
    m << a[0], -a[1], -a[2], -a[3],
         a[1],  a[0], -a[3],  a[2],
         a[2],  a[3],  a[0], -a[1],
         a[3], -a[2],  a[1],  a[0];
    return m;
}

Mat3 build_covariance(const Vec3& s, const Vec4& q) {
    if (!(s.minCoeff() > 0.0)) throw std::invalid_argument("scale must be positive");
    if (std::abs(q.norm() - 1.0) > 1e-6) throw std::invalid_argument("rotation must be unit; normalize first");
    const Mat3 r = quat_to_matrix(q);
    const Mat3 m = r * s.asDiagonal();
    return m * m.transpose();
}

double gaussian_density(const Vec3& x, const Vec3& mu, const Mat3& sigma) {
    const double det = sigma.determinant();
    if (!(det >= 1e-30)) throw std::invalid_argument("degenerate covariance");
    const Vec3 d = x - mu;
    const double maha = d.dot(sigma.inverse() * d);
    constexpr double two_pi = 2.0 * 3.14159265358979323846;
    return std::exp(-0.5 * maha) / std::sqrt(two_pi * two_pi * two_pi * det);
}

// Real SH basis constants, degree 0..3 (the convention shared by the
// common splatting renderers: l=1 basis is (-y, z, -x) scaled).
namespace {
constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};
}  // namespace

std::array<double, kShCount> sh_basis(const Vec3& d) {
    const double x = d[0], y = d[1], z = d[2];
    const double xx = x * x, yy = y * y, zz = z * z;
    const double xy = x * y, yz = y * z, xz = x * z;
    return {
        kC0,
        -kC1 * y, kC1 * z, -kC1 * x,
        kC2[0] * xy, kC2[1] * yz, kC2[2] * (2.0 * zz - xx - yy), kC2[3] * xz, kC2[4] * (xx - yy),
        kC3[0] * y * (3.0 * xx - yy), kC3[1] * xy * z, kC3[2] * y * (4.0 * zz - xx - yy),
        kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy), kC3[4] * x * (4.0 * zz - xx - yy),
        kC3[5] * z * (xx - yy), kC3[6] * x * (xx - yy)};
}

std::array<Vec3, kShCount> sh_basis_gradient(const Vec3& d) {
    const double x = d[0], y = d[1], z = d[2];
    const double xx = x * x, yy = y * y, zz = z * z;
    std::array<Vec3, kShCount> g;
    g[0] = Vec3::Zero();
    g[1] = Vec3(0, -kC1, 0);
    g[2] = Vec3(0, 0, kC1);
    g[3] = Vec3(-kC1, 0, 0);
    g[4] = kC2[0] * Vec3(y, x, 0);
    g[5] = kC2[1] * Vec3(0, z, y);
    g[6] = kC2[2] * Vec3(-2 * x, -2 * y, 4 * z);
    g[7] = kC2[3] * Vec3(z, 0, x);
    g[8] = kC2[4] * Vec3(2 * x, -2 * y, 0);
    g[9] = kC3[0] * Vec3(6 * x * y, 3 * xx - 3 * yy, 0);
    g[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    g[11] = kC3[2] * Vec3(-2 * x * y, 4 * zz - xx - 3 * yy, 8 * y * z);
    g[12] = kC3[3] * Vec3(-6 * x * z, -6 * y * z, 6 * zz - 3 * xx - 3 * yy);
    g[13] = kC3[4] * Vec3(4 * zz - 3 * xx - yy, -2 * x * y, 8 * x * z);
    g[14] = kC3[5] * Vec3(2 * x * z, -2 * y * z, xx - yy);
    g[15] = kC3[6] * Vec3(3 * xx - yy, -2 * x * y, 0);
    return g;
}

Vec3 eval_sh_raw(const ShCoeffs& f, const Vec3& d) {
    const auto basis = sh_basis(d);
    Vec3 rgb = Vec3::Zero();
    for (int i = 0; i < kShCount; ++i) rgb += basis[i] * f.col(i);
    return rgb;
}

Vec3 eval_sh(const ShCoeffs& f, const Vec3& d) {
    if (std::abs(d.norm() - 1.0) > 1e-6) throw std::invalid_argument("direction must be unit");
    Vec3 rgb = eval_sh_raw(f, d);
    return rgb.cwiseMax(0.0).cwiseMin(1.0);
}

}  // namespace occsplat
