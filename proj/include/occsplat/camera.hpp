#pragma once

#include "occsplat/gaussian.hpp"

namespace occsplat {

// World-to-camera near plane; points at or behind it are culled.
constexpr double kNearPlane = 0.01;

// Pinhole camera. Camera frame: +x right, +y down, looking along +z.
// Continuous pixel coordinates put integer values at pixel centers.
struct Camera {
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Mat3 rotation = Mat3::Identity();   // world -> camera
    Vec3 translation = Vec3::Zero();
    int width = 0, height = 0;

    void validate() const;
    Vec3 to_camera(const Vec3& p) const { return rotation * p + translation; }
    Vec3 center() const { return -rotation.transpose() * translation; }
};

struct PointProjection {
    Vec2 pixel = Vec2::Zero();
    double depth = 0.0;
    bool culled = true;
};

// mu' = c(W mu + t); culled (not an error) when camera-space z <= near plane.
PointProjection project_point(const Camera& cam, const Vec3& mu);

// Perspective-projection Jacobian at a camera-space point.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& cam_point);

// Screen-space covariance Sigma' = J W Sigma W^T J^T plus a low-pass
// floor of 0.3 px^2 on the diagonal. Requires the point not culled.
Mat2 project_covariance(const Camera& cam, const Mat3& sigma, const Vec3& mu);

}  // namespace occsplat
