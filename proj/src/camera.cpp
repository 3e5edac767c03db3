#include "occsplat/camera.hpp"

#include <stdexcept>

namespace occsplat {

void Camera::validate() const {
    if (!(fx > 0.0 && fy > 0.0)) throw std::invalid_argument("focal lengths must be positive");
    if (width <= 0 || height <= 0) throw std::invalid_argument("camera resolution must be positive");
    const Mat3 should_be_identity = rotation * rotation.transpose();
    if ((should_be_identity - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-8)
        throw std::invalid_argument("camera rotation is not orthonormal");
    if (std::abs(rotation.determinant() - 1.0) > 1e-8)
        throw std::invalid_argument("camera rotation must have determinant +1");
}

PointProjection project_point(const Camera& cam, const Vec3& mu) {
    const Vec3 p = cam.to_camera(mu);
    PointProjection out;
    if (p.z() <= kNearPlane) return out;  // culled
    out.pixel = Vec2(cam.fx * p.x() / p.z() + cam.cx, cam.fy * p.y() / p.z() + cam.cy);
    out.depth = p.z();
    out.culled = false;
    return out;
}

Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& p) {
    const double z = p.z();
    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0.0, -cam.fx * p.x() / (z * z),
         0.0, cam.fy / z, -cam.fy * p.y() / (z * z);
    return j;
}

Mat2 project_covariance(const Camera& cam, const Mat3& sigma, const Vec3& mu) {
    const Vec3 p = cam.to_camera(mu);
    if (p.z() <= kNearPlane) throw std::invalid_argument("cannot project covariance of a culled point");
    const Eigen::Matrix<double, 2, 3> jw = projection_jacobian(cam, p) * cam.rotation;
    Mat2 cov2d = jw * sigma * jw.transpose();
    cov2d(0, 0) += 0.3;
    cov2d(1, 1) += 0.3;
    // symmetrize against roundoff
    cov2d(0, 1) = cov2d(1, 0) = 0.5 * (cov2d(0, 1) + cov2d(1, 0));
    return cov2d;
}

}  // namespace occsplat
