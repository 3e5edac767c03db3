#pragma once

#include "occsplat/camera.hpp"
#include "occsplat/gaussian.hpp"
#include "occsplat/image.hpp"

#include <memory>
#include <span>
#include <vector>

namespace occsplat {

// Contributions below this per-pixel alpha are treated as zero.
constexpr double kAlphaCutoff = 1.0 / 255.0;
// Front-to-back compositing stops once transmittance drops below this.
constexpr double kTransmittanceStop = 1e-4;

// Render-ready point: posed mean, full posed covariance, activated
// opacity, and the SH coefficients used for color. This is the unit the
// rasterizer consumes; the training pipeline substitutes MLP-predicted
// sh/alpha here for occluded points.
struct RenderablePoint {
    Vec3 mean = Vec3::Zero();
    Mat3 cov = Mat3::Identity();
    double alpha = 0.0;  // in (0,1)
    ShCoeffs sh = ShCoeffs::Zero();
};

// A projected Gaussian.
struct Splat2D {
    Vec2 center = Vec2::Zero();  // pixel coordinates
    Mat2 cov2d = Mat2::Identity();
    double depth = 0.0;
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
};

// alpha_i = splat.alpha * exp(-1/2 d^T cov2d^{-1} d); values below
// 1/255 are zero. Throws when cov2d is singular.
double splat_alpha(const Splat2D& splat, const Vec2& pixel);

// Front-to-back Eq.-4 compositing of a depth-sorted contribution list.
struct PixelComposite {
    Vec3 color = Vec3::Zero();
    double alpha = 0.0;
};
PixelComposite composite(std::span<const std::pair<Vec3, double>> contributions);

// Retained only in training mode; lets the backward pass replay
// compositing without re-deciding per-pixel contributor sets.
struct TrainingRecord {
    struct Contribution {
        int splat;     // index into prepared
        double alpha;  // alpha_i at that pixel
    };
    struct PreparedSplat {
        int point = -1;  // index into the input point list
        Vec2 center = Vec2::Zero();
        Mat2 cov2d = Mat2::Identity();
        Mat2 inv_cov2d = Mat2::Identity();
        double depth = 0.0;
        Vec3 color = Vec3::Zero();    // clamped
        Vec3 raw_rgb = Vec3::Zero();  // pre-clamp, for the clamp mask
        Vec3 view_dir = Vec3::Zero();
        double dist_to_cam = 0.0;
        double alpha = 0.0;
    };
    int height = 0, width = 0;
    std::vector<PreparedSplat> prepared;
    std::vector<std::vector<Contribution>> pixels;  // size height*width
};

struct RenderOutput {
    Image3 color;
    Image1 alpha;
    std::shared_ptr<TrainingRecord> record;  // null outside training mode
};

struct RenderOptions {
    bool training = false;
    int tile_size = 16;
};

// Tile-based forward rasterization. Deterministic: depth ties are broken
// by point index, tiles only partition work.
RenderOutput render_points(std::span<const RenderablePoint> points, const Camera& cam,
                           const RenderOptions& opts = {});

// Gradients w.r.t. the renderable-point fields.
struct PointGrad {
    Vec3 d_mean = Vec3::Zero();
    Mat3 d_cov = Mat3::Zero();
    double d_alpha = 0.0;
    ShCoeffs d_sh = ShCoeffs::Zero();
    Vec2 d_center2d = Vec2::Zero();  // screen-space mean gradient (densify statistic)
};

std::vector<PointGrad> render_points_backward(std::span<const RenderablePoint> points,
                                              const Camera& cam, const TrainingRecord& record,
                                              const Image3& d_color, const Image1& d_alpha);

// Cloud-level entry points over a posed GaussianCloud.
std::vector<RenderablePoint> make_renderables(const GaussianCloud& cloud);
RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderOptions& opts = {});
RenderOutput render_subset(const GaussianCloud& cloud, std::span<const int> indices,
                           const Camera& cam, const RenderOptions& opts = {});

// Gradients w.r.t. the raw Gaussian parameters (mean, log_scale,
// rotation, opacity_logit, sh).
struct GaussianGrad {
    Vec3 d_mean = Vec3::Zero();
    Vec3 d_log_scale = Vec3::Zero();
    Vec4 d_rotation = Vec4::Zero();
    double d_opacity_logit = 0.0;
    ShCoeffs d_sh = ShCoeffs::Zero();
    Vec2 d_center2d = Vec2::Zero();
};

// Chains a point-field gradient back to raw parameters.
GaussianGrad chain_point_grad(const Gaussian& g, const PointGrad& pg);

// Throws when `out` was not produced in training mode.
std::vector<GaussianGrad> render_backward(const GaussianCloud& cloud, const Camera& cam,
                                          const RenderOutput& out, const Image3& d_color,
                                          const Image1& d_alpha);

}  // namespace occsplat
