#include "occsplat/occlusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

namespace occsplat {

VisibilitySplit classify_visibility(std::span<const Vec3> points, const Camera& cam,
                                    const Mask& fg_mask) {
    if (fg_mask.height != cam.height || fg_mask.width != cam.width)
        throw std::invalid_argument("mask dimensions must match the camera resolution");
    VisibilitySplit split;
    for (size_t i = 0; i < points.size(); ++i) {
        const PointProjection proj = project_point(cam, points[i]);
        bool seen = false;
        if (!proj.culled) {
            const long px = std::lround(proj.pixel.x());
            const long py = std::lround(proj.pixel.y());
            if (px >= 0 && px < cam.width && py >= 0 && py < cam.height)
                seen = fg_mask.at(static_cast<int>(py), static_cast<int>(px)) != 0;
        }
        (seen ? split.seen : split.occluded).push_back(static_cast<int>(i));
    }
    return split;
}

namespace {

// Implicit kd-tree over the seen set. Query semantics are exact: the
// K smallest (distance^2, index) pairs, identical to a brute-force scan
// using the same squaredNorm arithmetic.
class KdTree {
public:
    explicit KdTree(std::span<const Vec3> pts) : pts_(pts), order_(pts.size()) {
        std::iota(order_.begin(), order_.end(), 0);
        build(0, static_cast<int>(order_.size()));
    }

    // Candidates sorted by (d2, index) ascending.
    void query(const Vec3& q, int k, std::vector<std::pair<double, int>>& out) const {
        out.clear();
        k_ = std::min<int>(k, static_cast<int>(order_.size()));
        heap_ = &out;
        search(0, static_cast<int>(order_.size()), 0, q);
        std::sort(out.begin(), out.end());
        heap_ = nullptr;
    }

private:
    struct WorseFirst {
        bool operator()(const std::pair<double, int>& a, const std::pair<double, int>& b) const {
            return a < b;  // max-heap on (d2, index)
        }
    };

    void build(int lo, int hi) {
        if (hi - lo <= kLeafSize) return;
        const int axis = widest_axis(lo, hi);
        const int mid = (lo + hi) / 2;
        std::nth_element(order_.begin() + lo, order_.begin() + mid, order_.begin() + hi,
                         [&](int a, int b) { return pts_[a][axis] < pts_[b][axis]; });
        axes_[key(lo, hi)] = axis;
        build(lo, mid);
        build(mid + 1, hi);
    }

    int widest_axis(int lo, int hi) const {
        Vec3 mn = pts_[order_[lo]], mx = mn;
        for (int i = lo + 1; i < hi; ++i) {
            mn = mn.cwiseMin(pts_[order_[i]]);
            mx = mx.cwiseMax(pts_[order_[i]]);
        }
        int axis = 0;
        (mx - mn).maxCoeff(&axis);
        return axis;
    }

    static long long key(int lo, int hi) { return (static_cast<long long>(lo) << 32) | hi; }

    void consider(int idx, const Vec3& q) const {
        const double d2 = (pts_[idx] - q).squaredNorm();
        const std::pair<double, int> cand{d2, idx};
        auto& heap = *heap_;
        if (static_cast<int>(heap.size()) < k_) {
            heap.push_back(cand);
            std::push_heap(heap.begin(), heap.end(), WorseFirst{});
        } else if (cand < heap.front()) {
            std::pop_heap(heap.begin(), heap.end(), WorseFirst{});
            heap.back() = cand;
            std::push_heap(heap.begin(), heap.end(), WorseFirst{});
        }
    }

    void search(int lo, int hi, int /*depth*/, const Vec3& q) const {
        if (hi - lo <= kLeafSize) {
            for (int i = lo; i < hi; ++i) consider(order_[i], q);
            return;
        }
        const int axis = axes_.at(key(lo, hi));
        const int mid = (lo + hi) / 2;
        consider(order_[mid], q);
        const double delta = q[axis] - pts_[order_[mid]][axis];
        const int near_lo = delta < 0 ? lo : mid + 1;
        const int near_hi = delta < 0 ? mid : hi;
        const int far_lo = delta < 0 ? mid + 1 : lo;
        const int far_hi = delta < 0 ? hi : mid;
        search(near_lo, near_hi, 0, q);
        // The far side can still hold an equal-distance lower index, so
        // prune only on strict inequality.
        if (static_cast<int>(heap_->size()) < k_ || delta * delta <= heap_->front().first)
            search(far_lo, far_hi, 0, q);
    }

    static constexpr int kLeafSize = 12;
    std::span<const Vec3> pts_;
    std::vector<int> order_;
    std::unordered_map<long long, int> axes_;
    mutable int k_ = 0;
    mutable std::vector<std::pair<double, int>>* heap_ = nullptr;
};

}  // namespace

KnnResult knn_visible(std::span<const Vec3> occluded_points, std::span<const Vec3> seen_points,
                      int k) {
    if (seen_points.empty()) throw std::invalid_argument("no visible points");
    if (k <= 0) throw std::invalid_argument("k must be positive");

    KnnResult out;
    out.k = k;
    out.indices.resize(occluded_points.size() * k);
    out.distances.resize(occluded_points.size() * k);

    const int avail = static_cast<int>(seen_points.size());
    KdTree tree(seen_points);
    std::vector<std::pair<double, int>> cand;
    for (size_t row = 0; row < occluded_points.size(); ++row) {
        tree.query(occluded_points[row], k, cand);
        for (int j = 0; j < k; ++j) {
            // When |seen| < k the sorted seen set repeats cyclically.
            const auto& [d2, idx] = cand[j % avail];
            out.indices[row * k + j] = idx;
            out.distances[row * k + j] = std::sqrt(d2);
        }
    }
    return out;
}

namespace {

double luminance(const Image3& img, int y, int x) {
    return 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2);
}

std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        k[i + radius] = std::exp(-0.5 * i * i / (sigma * sigma));
        sum += k[i + radius];
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable blur with replicate border.
Image1 blur(const Image1& src, double sigma) {
    const auto k = gaussian_kernel(sigma);
    const int radius = static_cast<int>(k.size() / 2);
    Image1 tmp(src.height, src.width), out(src.height, src.width);
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * src.at(y, std::clamp(x + i, 0, src.width - 1));
            tmp.at(y, x) = acc;
        }
    for (int y = 0; y < src.height; ++y)
        for (int x = 0; x < src.width; ++x) {
            double acc = 0.0;
            for (int i = -radius; i <= radius; ++i)
                acc += k[i + radius] * tmp.at(std::clamp(y + i, 0, src.height - 1), x);
            out.at(y, x) = acc;
        }
    return out;
}

}  // namespace

FeatureMap encode_features(const Image3& image) {
    const int h = image.height, w = image.width;
    FeatureMap fmap(h, w, kFeatureChannels);

    Image1 channel(h, w);
    auto store = [&](int c, const Image1& img) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) fmap.at(y, x, c) = img.at(y, x);
    };

    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) channel.at(y, x) = image.at(y, x, c);
        store(c, channel);
        store(3 + c, blur(channel, 1.0));
        store(6 + c, blur(channel, 2.0));
    }

    Image1 luma(h, w);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) luma.at(y, x) = luminance(image, y, x);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gx =
                0.5 * (luma.at(y, std::min(x + 1, w - 1)) - luma.at(y, std::max(x - 1, 0)));
            const double gy =
                0.5 * (luma.at(std::min(y + 1, h - 1), x) - luma.at(std::max(y - 1, 0), x));
            fmap.at(y, x, 9) = std::abs(gx);
            fmap.at(y, x, 10) = std::abs(gy);
        }

    const double pyramid_sigmas[5] = {1.0, 2.0, 4.0, 8.0, 16.0};
    for (int s = 0; s < 5; ++s) store(11 + s, blur(luma, pyramid_sigmas[s]));
    return fmap;
}

SampledFeature sample_feature(const FeatureMap& fmap, const Vec3& point, const Camera& cam) {
    SampledFeature out;
    out.value = Eigen::VectorXd::Zero(fmap.channels);
    out.d_pixel = Eigen::MatrixXd::Zero(fmap.channels, 2);
    const PointProjection proj = project_point(cam, point);
    if (proj.culled) {
        out.culled = true;
        return out;
    }
    const double u = proj.pixel.x(), v = proj.pixel.y();
    const double uc = std::clamp(u, 0.0, static_cast<double>(fmap.width - 1));
    const double vc = std::clamp(v, 0.0, static_cast<double>(fmap.height - 1));
    const int x0 = std::min(static_cast<int>(std::floor(uc)), std::max(0, fmap.width - 2));
    const int y0 = std::min(static_cast<int>(std::floor(vc)), std::max(0, fmap.height - 2));
    const int x1 = std::min(x0 + 1, fmap.width - 1);
    const int y1 = std::min(y0 + 1, fmap.height - 1);
    const double fx = uc - x0, fy = vc - y0;
    const bool inside_u = (u > 0.0 && u < fmap.width - 1);
    const bool inside_v = (v > 0.0 && v < fmap.height - 1);
    for (int c = 0; c < fmap.channels; ++c) {
        const double f00 = fmap.at(y0, x0, c), f01 = fmap.at(y0, x1, c);
        const double f10 = fmap.at(y1, x0, c), f11 = fmap.at(y1, x1, c);
        out.value[c] = (1 - fy) * ((1 - fx) * f00 + fx * f01) + fy * ((1 - fx) * f10 + fx * f11);
        if (inside_u) out.d_pixel(c, 0) = (1 - fy) * (f01 - f00) + fy * (f11 - f10);
        if (inside_v) out.d_pixel(c, 1) = (1 - fx) * (f10 - f00) + fx * (f11 - f01);
    }
    return out;
}

Eigen::VectorXd aggregation_weights(const Eigen::VectorXd& rho_knn) {
    if (rho_knn.minCoeff() < 0.0) throw std::invalid_argument("rho weights must be nonnegative");
    const double total = rho_knn.sum();
    if (total == 0.0)
        return Eigen::VectorXd::Constant(rho_knn.size(), 1.0 / static_cast<double>(rho_knn.size()));
    return rho_knn / total;
}

Eigen::VectorXd aggregate_features(const Eigen::MatrixXd& h, const Eigen::VectorXd& rho_knn) {
    if (h.rows() != rho_knn.size()) throw std::invalid_argument("feature/weight row mismatch");
    return h.transpose() * aggregation_weights(rho_knn);
}

std::vector<double> update_visibility_weights(const std::vector<double>& rho,
                                              std::span<const int> seen_indices, bool frozen) {
    std::vector<double> out = rho;
    if (frozen) return out;
    for (int i : seen_indices) {
        if (i < 0 || static_cast<size_t>(i) >= rho.size())
            throw std::out_of_range("visibility index out of range");
        out[static_cast<size_t>(i)] += 1.0;
    }
    return out;
}

Mask erode_5x5(const Mask& m) {
    Mask out(m.height, m.width, 0);
    for (int y = 0; y < m.height; ++y) {
        for (int x = 0; x < m.width; ++x) {
            bool all = true;
            for (int dy = -2; dy <= 2 && all; ++dy) {
                for (int dx = -2; dx <= 2; ++dx) {
                    const int yy = y + dy, xx = x + dx;
                    // Outside the image counts as background.
                    if (yy < 0 || yy >= m.height || xx < 0 || xx >= m.width || !m.at(yy, xx)) {
                        all = false;
                        break;
                    }
                }
            }
            out.at(y, x) = all ? 1 : 0;
        }
    }
    return out;
}

Mask body_mask(std::span<const Vec3> points, const Camera& cam) {
    Mask stamped(cam.height, cam.width, 0);
    for (const Vec3& p : points) {
        const PointProjection proj = project_point(cam, p);
        if (proj.culled) continue;
        const long px = std::lround(proj.pixel.x());
        const long py = std::lround(proj.pixel.y());
        for (long dy = -2; dy <= 2; ++dy) {
            for (long dx = -2; dx <= 2; ++dx) {
                const long yy = py + dy, xx = px + dx;
                if (yy >= 0 && yy < cam.height && xx >= 0 && xx < cam.width)
                    stamped.at(static_cast<int>(yy), static_cast<int>(xx)) = 1;
            }
        }
    }
    return erode_5x5(stamped);
}

Mask occlusion_mask(const Mask& alpha_body, const Mask& alpha_fg) {
    if (!alpha_body.same_dims(alpha_fg)) throw std::invalid_argument("mask dimension mismatch");
    Mask out(alpha_body.height, alpha_body.width, 0);
    for (size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = (alpha_body.data[i] && !alpha_fg.data[i]) ? 1 : 0;
    return out;
}

}  // namespace occsplat
