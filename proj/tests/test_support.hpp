#pragma once

#include "occsplat/camera.hpp"
#include "occsplat/gaussian.hpp"
#include "occsplat/image.hpp"
#include "occsplat/rasterizer.hpp"
#include "occsplat/rng.hpp"
#include "occsplat/skinning.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <utility>
#include <vector>

namespace occsplat::test {

inline Camera make_camera(int width, int height, double focal) {
    Camera cam;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal;
    cam.cx = (width - 1) / 2.0;
    cam.cy = (height - 1) / 2.0;
    return cam;
}

inline Vec4 random_unit_quat(Rng& rng) {
    Vec4 q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    while (q.norm() < 1e-6) q = Vec4(rng.normal(), rng.normal(), rng.normal(), rng.normal());
    return q / q.norm();
}

// Gaussians scattered in front of the camera, sized so several overlap
// per pixel.
inline GaussianCloud random_scene(Rng& rng, int count, double spread = 0.8,
                                  double depth_mid = 3.0) {
    GaussianCloud cloud;
    cloud.space_tag = SpaceTag::posed;
    for (int i = 0; i < count; ++i) {
        Gaussian g;
        g.mean = Vec3(rng.uniform(-spread, spread), rng.uniform(-spread, spread),
                      depth_mid + rng.uniform(-1.0, 1.0));
        g.log_scale = Vec3(rng.uniform(-3.5, -1.5), rng.uniform(-3.5, -1.5),
                           rng.uniform(-3.5, -1.5));
        g.rotation = random_unit_quat(rng);
        g.opacity_logit = rng.uniform(-2.0, 2.0);
        g.sh.setZero();
        for (int c = 0; c < 3; ++c) {
            g.sh(c, 0) = rng.uniform(0.2, 3.0);
            for (int k = 1; k < kShCount; ++k) g.sh(c, k) = rng.uniform(-0.2, 0.2);
        }
        cloud.push_back(g, 0.0);
    }
    return cloud;
}

// Untiled reference renderer: every Gaussian evaluated at every pixel,
// one global depth sort, Eq.-4 compositing. Only the small projection
// and SH ops are shared with the implementation under test.
inline RenderOutput brute_force_render(const GaussianCloud& cloud, const Camera& cam) {
    struct Entry {
        double depth;
        int index;
        Vec2 center;
        Mat2 inv_cov;
        Vec3 color;
        double alpha;
    };
    std::vector<Entry> entries;
    const Vec3 cam_center = cam.center();
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        const PointProjection proj = project_point(cam, g.mean);
        if (proj.culled) continue;
        const Mat3 cov = build_covariance(g.scale(), normalize_rotation(g.rotation));
        const Mat2 cov2d = project_covariance(cam, cov, g.mean);
        if (!(cov2d.determinant() > 1e-12)) continue;
        const Vec3 dir = (cam_center - g.mean).normalized();
        entries.push_back({proj.depth, static_cast<int>(i), proj.pixel, cov2d.inverse(),
                           eval_sh(g.sh, dir), g.opacity()});
    }
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.index < b.index;
    });
    RenderOutput out;
    out.color = Image3(cam.height, cam.width);
    out.alpha = Image1(cam.height, cam.width);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            double transmittance = 1.0;
            Vec3 color = Vec3::Zero();
            for (const Entry& e : entries) {
                if (transmittance < kTransmittanceStop) break;
                const Vec2 d = Vec2(x, y) - e.center;
                const double maha = d.dot(e.inv_cov * d);
                if (maha < 0.0) continue;
                const double a = e.alpha * std::exp(-0.5 * maha);
                if (a < kAlphaCutoff) continue;
                color += e.color * (a * transmittance);
                transmittance *= 1.0 - a;
            }
            for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color[c];
            out.alpha.at(y, x) = 1.0 - transmittance;
        }
    }
    return out;
}

inline double max_image_diff(const Image3& a, const Image3& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

inline double max_image_diff(const Image1& a, const Image1& b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a.data[i] - b.data[i]));
    return m;
}

// Two-bone chain along +x with `verts` vertices spread along it.
inline ArticulatedTemplate chain_template(int verts = 8) {
    ArticulatedTemplate tmpl;
    tmpl.joint_parents = {-1, 0};
    tmpl.rest_joints = {Vec3(0, 0, 0), Vec3(1, 0, 0)};
    tmpl.rest_vertices.resize(verts);
    tmpl.base_weights.resize(verts, 2);
    for (int i = 0; i < verts; ++i) {
        const double t = verts == 1 ? 0.0 : static_cast<double>(i) / (verts - 1);
        tmpl.rest_vertices[i] = Vec3(2.0 * t, 0.1, 0.0);
        tmpl.base_weights(i, 0) = 1.0 - t;
        tmpl.base_weights(i, 1) = t;
    }
    tmpl.validate_and_finalize();
    return tmpl;
}

struct FdCheckResult {
    int checked = 0;
    int passed = 0;
    double fraction() const { return checked == 0 ? 1.0 : static_cast<double>(passed) / checked; }
};

inline bool grad_close(double analytic, double numeric, double rel_tol, double abs_tol) {
    const double diff = std::abs(analytic - numeric);
    if (diff <= abs_tol) return true;
    const double denom = std::max(std::abs(analytic), std::abs(numeric));
    return diff <= rel_tol * denom;
}

}  // namespace occsplat::test
