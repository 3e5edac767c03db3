#pragma once

#include "occsplat/camera.hpp"
#include "occsplat/image.hpp"

#include <span>
#include <vector>

namespace occsplat {

// H x W x C feature grid (default C = 16), channel-major innermost.
struct FeatureMap {
    int height = 0, width = 0, channels = 0;
    std::vector<double> data;  // size height*width*channels

    FeatureMap() = default;
    FeatureMap(int h, int w, int c)
        : height(h), width(w), channels(c), data(static_cast<size_t>(h) * w * c, 0.0) {}

    double& at(int y, int x, int c) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
};

// Seen/occluded partition of a posed point set. The two index lists are
// disjoint and together cover every input point.
struct VisibilitySplit {
    std::vector<int> seen;
    std::vector<int> occluded;
};

// A point is seen iff its projection lands in-bounds on a mask-1 pixel
// (nearest-pixel lookup); behind-camera and out-of-bounds points count
// as occluded.
VisibilitySplit classify_visibility(std::span<const Vec3> points, const Camera& cam,
                                    const Mask& fg_mask);

// Row-major neighbor table: for each occluded point, K indices into the
// seen list (not global indices) with non-decreasing distances. When
// |seen| < K the distance-sorted seen set repeats cyclically.
struct KnnResult {
    int k = 0;
    std::vector<int> indices;       // occluded.size() * k
    std::vector<double> distances;  // occluded.size() * k

    int neighbor(size_t row, int j) const { return indices[row * k + j]; }
    double distance(size_t row, int j) const { return distances[row * k + j]; }
};

// Exact K-nearest query of occluded points against the seen set
// (Euclidean, ties by lowest seen-list index). Throws on an empty seen
// set.
KnnResult knn_visible(std::span<const Vec3> occluded_points, std::span<const Vec3> seen_points,
                      int k);

// Handcrafted deterministic encoder, C = 16:
//   0-2   raw RGB
//   3-5   RGB blurred, sigma 1
//   6-8   RGB blurred, sigma 2
//   9     |horizontal luminance gradient| (central differences)
//   10    |vertical luminance gradient|
//   11-15 luminance blurred at sigma 1, 2, 4, 8, 16
FeatureMap encode_features(const Image3& image);

constexpr int kFeatureChannels = 16;

struct SampledFeature {
    Eigen::VectorXd value;  // zero when culled
    bool culled = false;
    // Gradient of each channel w.r.t. the continuous pixel position
    // (u, v); zero when culled or clamped fully outside the border.
    Eigen::MatrixXd d_pixel;  // C x 2
};

// Bilinear interpolation at the projected subpixel location, clamped to
// the border. Behind-camera points yield a zero feature with the culled
// flag set.
SampledFeature sample_feature(const FeatureMap& fmap, const Vec3& point, const Camera& cam);

// h_agg = sum_i rho_hat_i h_i with rho_hat = rho / sum(rho); uniform
// weights when sum(rho) == 0. h is K x C.
Eigen::VectorXd aggregate_features(const Eigen::MatrixXd& h, const Eigen::VectorXd& rho_knn);
// Normalized weights used by the aggregation (exposed for the backward
// pass and for direct neighbor-parameter blending).
Eigen::VectorXd aggregation_weights(const Eigen::VectorXd& rho_knn);

// rho'[i] = rho[i] + 1 for seen i unless frozen.
std::vector<double> update_visibility_weights(const std::vector<double>& rho,
                                              std::span<const int> seen_indices, bool frozen);

// Projected-point silhouette: each in-frustum point stamps a 2 px
// radius block (the 5x5 pixel neighborhood), the union is then eroded
// with a 5x5 square structuring element. Border pixels count as
// background for the erosion.
Mask body_mask(std::span<const Vec3> points, const Camera& cam);

Mask erode_5x5(const Mask& m);

// alpha_occ = alpha_body AND NOT alpha_fg. Throws on dimension mismatch.
Mask occlusion_mask(const Mask& alpha_body, const Mask& alpha_fg);

}  // namespace occsplat
