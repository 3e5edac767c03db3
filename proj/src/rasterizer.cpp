#include "occsplat/rasterizer.hpp"

#include "occsplat/threading.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace occsplat {

double splat_alpha(const Splat2D& splat, const Vec2& pixel) {
    const double det = splat.cov2d.determinant();
    if (!(std::abs(det) > 1e-12)) throw std::invalid_argument("singular 2D covariance");
    const Vec2 d = pixel - splat.center;
    const double maha = d.dot(splat.cov2d.inverse() * d);
    if (maha < 0.0) return 0.0;  // numerically indefinite, falloff undefined
    const double a = splat.alpha * std::exp(-0.5 * maha);
    return a < kAlphaCutoff ? 0.0 : a;
}

PixelComposite composite(std::span<const std::pair<Vec3, double>> contributions) {
    PixelComposite out;
    double transmittance = 1.0;
    for (const auto& [color, a] : contributions) {
        if (transmittance < kTransmittanceStop) break;
        out.color += color * (a * transmittance);
        transmittance *= 1.0 - a;
    }
    out.alpha = 1.0 - transmittance;
    return out;
}

namespace {

using Prepared = TrainingRecord::PreparedSplat;

double max_eigenvalue_2x2(const Mat2& m) {
    const double mid = 0.5 * (m(0, 0) + m(1, 1));
    const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
    return mid + std::sqrt(std::max(0.0, mid * mid - det));
}

// Projects every point; culls behind-near-plane and degenerate splats.
// Output is sorted by (depth, point index) so per-pixel iteration order
// is globally fixed.
std::vector<Prepared> prepare_splats(std::span<const RenderablePoint> points, const Camera& cam) {
    std::vector<Prepared> prepared;
    prepared.reserve(points.size());
    const Vec3 cam_center = cam.center();
    for (size_t i = 0; i < points.size(); ++i) {
        const RenderablePoint& pt = points[i];
        const PointProjection proj = project_point(cam, pt.mean);
        if (proj.culled) continue;
        if (!(pt.alpha >= kAlphaCutoff)) continue;  // cannot reach the cutoff anywhere
        Prepared s;
        s.point = static_cast<int>(i);
        s.center = proj.pixel;
        s.depth = proj.depth;
        s.cov2d = project_covariance(cam, pt.cov, pt.mean);
        const double det = s.cov2d.determinant();
        if (!(det > 1e-12)) continue;  // skipped, not an error
        s.inv_cov2d = s.cov2d.inverse();
        const Vec3 to_cam = cam_center - pt.mean;
        s.dist_to_cam = to_cam.norm();
        s.view_dir = to_cam / s.dist_to_cam;
        s.raw_rgb = eval_sh_raw(pt.sh, s.view_dir);
        s.color = s.raw_rgb.cwiseMax(0.0).cwiseMin(1.0);
        s.alpha = pt.alpha;
        prepared.push_back(s);
    }
    std::sort(prepared.begin(), prepared.end(), [](const Prepared& a, const Prepared& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.point < b.point;
    });
    return prepared;
}

// 3.5 sigma covers everything above the 1/255 cutoff (alpha <= 1).
double cull_radius(const Mat2& cov2d) { return 3.5 * std::sqrt(max_eigenvalue_2x2(cov2d)); }

struct TileGrid {
    int tile = 16;
    int tiles_x = 0, tiles_y = 0;
    std::vector<std::vector<int>> splats;  // per tile, indices into prepared, sorted order
};

TileGrid build_tiles(const std::vector<Prepared>& prepared, int width, int height, int tile) {
    TileGrid grid;
    grid.tile = tile;
    grid.tiles_x = (width + tile - 1) / tile;
    grid.tiles_y = (height + tile - 1) / tile;
    grid.splats.resize(static_cast<size_t>(grid.tiles_x) * grid.tiles_y);
    for (size_t si = 0; si < prepared.size(); ++si) {
        const Prepared& s = prepared[si];
        const double r = cull_radius(s.cov2d);
        const int x0 = std::max(0, static_cast<int>(std::floor((s.center.x() - r) / tile)));
        const int x1 = std::min(grid.tiles_x - 1, static_cast<int>(std::floor((s.center.x() + r) / tile)));
        const int y0 = std::max(0, static_cast<int>(std::floor((s.center.y() - r) / tile)));
        const int y1 = std::min(grid.tiles_y - 1, static_cast<int>(std::floor((s.center.y() + r) / tile)));
        for (int ty = y0; ty <= y1; ++ty)
            for (int tx = x0; tx <= x1; ++tx)
                grid.splats[static_cast<size_t>(ty) * grid.tiles_x + tx].push_back(static_cast<int>(si));
    }
    return grid;
}

}  // namespace

RenderOutput render_points(std::span<const RenderablePoint> points, const Camera& cam,
                           const RenderOptions& opts) {
    cam.validate();
    RenderOutput out;
    out.color = Image3(cam.height, cam.width);
    out.alpha = Image1(cam.height, cam.width);
    if (opts.training) {
        out.record = std::make_shared<TrainingRecord>();
        out.record->height = cam.height;
        out.record->width = cam.width;
        out.record->pixels.resize(static_cast<size_t>(cam.height) * cam.width);
    }

    auto prepared = prepare_splats(points, cam);
    const TileGrid grid = build_tiles(prepared, cam.width, cam.height, opts.tile_size);

    const size_t n_tiles = grid.splats.size();
    parallel_for(n_tiles, [&](size_t t0, size_t t1) {
        for (size_t t = t0; t < t1; ++t) {
            const int tx = static_cast<int>(t) % grid.tiles_x;
            const int ty = static_cast<int>(t) / grid.tiles_x;
            const auto& list = grid.splats[t];
            if (list.empty()) continue;
            const int px0 = tx * grid.tile, px1 = std::min(cam.width, px0 + grid.tile);
            const int py0 = ty * grid.tile, py1 = std::min(cam.height, py0 + grid.tile);
            for (int py = py0; py < py1; ++py) {
                for (int px = px0; px < px1; ++px) {
                    const Vec2 pixel(px, py);
                    double transmittance = 1.0;
                    Vec3 color = Vec3::Zero();
                    auto* contribs = opts.training
                        ? &out.record->pixels[static_cast<size_t>(py) * cam.width + px]
                        : nullptr;
                    for (int si : list) {
                        if (transmittance < kTransmittanceStop) break;
                        const Prepared& s = prepared[si];
                        const Vec2 d = pixel - s.center;
                        const double maha = d.dot(s.inv_cov2d * d);
                        if (maha < 0.0) continue;
                        const double a = s.alpha * std::exp(-0.5 * maha);
                        if (a < kAlphaCutoff) continue;
                        color += s.color * (a * transmittance);
                        transmittance *= 1.0 - a;
                        if (contribs) contribs->push_back({si, a});
                    }
                    for (int c = 0; c < 3; ++c) out.color.at(py, px, c) = color[c];
                    out.alpha.at(py, px) = 1.0 - transmittance;
                }
            }
        }
    });

    if (opts.training) out.record->prepared = std::move(prepared);
    return out;
}

namespace {

// Per-splat accumulation of the per-pixel quantities; SH and covariance
// chains are applied once per splat afterwards.
struct SplatAccum {
    Vec3 d_color = Vec3::Zero();
    Vec2 d_center = Vec2::Zero();
    Mat2 d_cov2d = Mat2::Zero();
    double d_alpha = 0.0;
};

}  // namespace

std::vector<PointGrad> render_points_backward(std::span<const RenderablePoint> points,
                                              const Camera& cam, const TrainingRecord& record,
                                              const Image3& d_color, const Image1& d_alpha) {
    if (record.pixels.empty() && (record.height * record.width) != 0)
        throw std::logic_error("backward requires a training-mode record");
    if (d_color.height != record.height || d_color.width != record.width ||
        d_alpha.height != record.height || d_alpha.width != record.width)
        throw std::invalid_argument("upstream gradient dimensions mismatch");

    const auto& prepared = record.prepared;
    const size_t n_pixels = record.pixels.size();

    // Fixed chunking (independent of worker count) so the reduction
    // order below is deterministic.
    const size_t grain = 1024;
    const size_t chunks = chunk_count(n_pixels == 0 ? 1 : n_pixels, grain);
    std::vector<std::vector<SplatAccum>> partials(chunks);

    parallel_for(n_pixels, [&](size_t p0, size_t p1) {
        const size_t chunk = p0 / grain;
        auto& acc = partials[chunk];
        acc.resize(prepared.size());
        std::vector<double> transmittances;
        for (size_t p = p0; p < p1; ++p) {
            const auto& contribs = record.pixels[p];
            if (contribs.empty()) continue;
            const int px = static_cast<int>(p) % record.width;
            const int py = static_cast<int>(p) / record.width;
            const Vec3 dC(d_color.at(py, px, 0), d_color.at(py, px, 1), d_color.at(py, px, 2));
            const double dA = d_alpha.at(py, px);
            if (dC.isZero(0.0) && dA == 0.0) continue;

            transmittances.resize(contribs.size());
            double t = 1.0;
            for (size_t i = 0; i < contribs.size(); ++i) {
                transmittances[i] = t;
                t *= 1.0 - contribs[i].alpha;
            }
            // Back-to-front: w/v carry the suffix terms of dC_hat/d alpha_i
            // without dividing by (1 - alpha).
            Vec3 w = Vec3::Zero();
            double v = 0.0;
            for (size_t ri = contribs.size(); ri-- > 0;) {
                const auto& c = contribs[ri];
                const Prepared& s = prepared[c.splat];
                const double ti = transmittances[ri];
                const double d_ai = dC.dot(s.color - w) * ti + dA * (1.0 - v) * ti;

                SplatAccum& sa = acc[c.splat];
                sa.d_color += dC * (c.alpha * ti);
                const Vec2 d = Vec2(px, py) - s.center;
                const Vec2 qd = s.inv_cov2d * d;
                // alpha_i = alpha * g; dg/dcenter = g * (Q d), dg/dQ = -1/2 g d d^T
                const double g = c.alpha / s.alpha;
                sa.d_alpha += d_ai * g;
                const double common = d_ai * c.alpha;  // = d_ai * alpha * g
                sa.d_center += common * qd;
                sa.d_cov2d += (0.5 * common) * (qd * qd.transpose());  // via dSigma' = -Q dQ Q below

                w = s.color * c.alpha + (1.0 - c.alpha) * w;
                v = c.alpha + (1.0 - c.alpha) * v;
            }
        }
    }, grain);

    // Deterministic reduction in chunk order.
    std::vector<SplatAccum> total(prepared.size());
    for (const auto& part : partials) {
        if (part.empty()) continue;
        for (size_t si = 0; si < prepared.size(); ++si) {
            total[si].d_color += part[si].d_color;
            total[si].d_center += part[si].d_center;
            total[si].d_cov2d += part[si].d_cov2d;
            total[si].d_alpha += part[si].d_alpha;
        }
    }

    std::vector<PointGrad> grads(points.size());
    const Vec3 cam_center = cam.center();
    parallel_for(prepared.size(), [&](size_t s0, size_t s1) {
        for (size_t si = s0; si < s1; ++si) {
            const Prepared& s = prepared[si];
            const SplatAccum& sa = total[si];
            PointGrad& out = grads[s.point];
            const RenderablePoint& pt = points[s.point];

            out.d_alpha = sa.d_alpha;
            out.d_center2d = sa.d_center;

            // Note: sa.d_cov2d above accumulated dL/dQ terms as
            // +1/2 common qd qd^T which equals dL/dSigma' directly
            // (dL/dSigma' = -Q (dL/dQ) Q and dL/dQ = -1/2 common d d^T).
            const Mat2 d_cov2d = sa.d_cov2d;

            // Color -> SH, masked by the [0,1] clamp.
            Vec3 d_rgb = sa.d_color;
            for (int c = 0; c < 3; ++c)
                if (s.raw_rgb[c] < 0.0 || s.raw_rgb[c] > 1.0) d_rgb[c] = 0.0;
            const auto basis = sh_basis(s.view_dir);
            for (int k = 0; k < kShCount; ++k) out.d_sh.col(k) = d_rgb * basis[k];

            // Color -> mean through the view direction.
            const auto basis_grad = sh_basis_gradient(s.view_dir);
            Vec3 d_dir = Vec3::Zero();
            for (int k = 0; k < kShCount; ++k) d_dir += basis_grad[k] * d_rgb.dot(pt.sh.col(k));
            const Mat3 norm_jac =
                (Mat3::Identity() - s.view_dir * s.view_dir.transpose()) / s.dist_to_cam;
            // view_dir = normalize(cam_center - mean): d dir/d mean = -norm_jac
            Vec3 d_mean = -(norm_jac * d_dir);

            // Screen center -> mean.
            const Vec3 cam_pt = cam.to_camera(pt.mean);
            const Eigen::Matrix<double, 2, 3> jac = projection_jacobian(cam, cam_pt);
            Vec3 d_cam = jac.transpose() * sa.d_center;

            // Sigma' = J W Sigma W^T J^T: gradient into Sigma and, through
            // the Jacobian's dependence on the camera-space point, into mean.
            const Eigen::Matrix<double, 2, 3> jw = jac * cam.rotation;
            out.d_cov = jw.transpose() * d_cov2d * jw;
            const Mat3 m_cam = cam.rotation * pt.cov * cam.rotation.transpose();
            const Eigen::Matrix<double, 2, 3> d_jac = 2.0 * d_cov2d * jac * m_cam;
            const double z = cam_pt.z(), z2 = z * z, z3 = z2 * z;
            d_cam.x() += d_jac(0, 2) * (-cam.fx / z2);
            d_cam.y() += d_jac(1, 2) * (-cam.fy / z2);
            d_cam.z() += d_jac(0, 0) * (-cam.fx / z2) + d_jac(0, 2) * (2.0 * cam.fx * cam_pt.x() / z3) +
                         d_jac(1, 1) * (-cam.fy / z2) + d_jac(1, 2) * (2.0 * cam.fy * cam_pt.y() / z3);

            d_mean += cam.rotation.transpose() * d_cam;
            out.d_mean = d_mean;
        }
    }, 64);
    return grads;
}

std::vector<RenderablePoint> make_renderables(const GaussianCloud& cloud) {
    std::vector<RenderablePoint> pts(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i) {
        const Gaussian& g = cloud.gaussians[i];
        pts[i].mean = g.mean;
        pts[i].cov = build_covariance(g.scale(), normalize_rotation(g.rotation));
        pts[i].alpha = g.opacity();
        pts[i].sh = g.sh;
    }
    return pts;
}

RenderOutput render(const GaussianCloud& cloud, const Camera& cam, const RenderOptions& opts) {
    if (cloud.space_tag != SpaceTag::posed)
        throw std::invalid_argument("render expects a posed cloud");
    const auto pts = make_renderables(cloud);
    return render_points(pts, cam, opts);
}

RenderOutput render_subset(const GaussianCloud& cloud, std::span<const int> indices,
                           const Camera& cam, const RenderOptions& opts) {
    if (cloud.space_tag != SpaceTag::posed)
        throw std::invalid_argument("render expects a posed cloud");
    GaussianCloud filtered;
    filtered.space_tag = cloud.space_tag;
    for (int idx : indices) {
        if (idx < 0 || static_cast<size_t>(idx) >= cloud.size())
            throw std::out_of_range("render_subset index out of range");
        filtered.push_back(cloud.gaussians[idx], cloud.visibility_weights[idx]);
    }
    return render(filtered, cam, opts);
}

GaussianGrad chain_point_grad(const Gaussian& g, const PointGrad& pg) {
    GaussianGrad out;
    out.d_mean = pg.d_mean;
    out.d_sh = pg.d_sh;
    out.d_center2d = pg.d_center2d;

    const double a = g.opacity();
    out.d_opacity_logit = pg.d_alpha * a * (1.0 - a);

    // Sigma = M M^T with M = R diag(s).
    const Vec4 q_unit = normalize_rotation(g.rotation);
    const Mat3 rot = quat_to_matrix(q_unit);
    const Vec3 s = g.scale();
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 d_sym = pg.d_cov + pg.d_cov.transpose();
    const Mat3 d_m = d_sym * m;
    const Mat3 d_rot = d_m * s.asDiagonal();
    const Vec3 d_s = (rot.transpose() * d_m).diagonal();
    out.d_log_scale = d_s.cwiseProduct(s);

    const auto rot_jac = quat_to_matrix_jacobian(q_unit);
    Vec4 d_q_unit;
    for (int k = 0; k < 4; ++k) d_q_unit[k] = (d_rot.cwiseProduct(rot_jac[k])).sum();
    const double qn = g.rotation.norm();
    out.d_rotation = (Eigen::Matrix4d::Identity() - q_unit * q_unit.transpose()) * d_q_unit / qn;
    return out;
}

std::vector<GaussianGrad> render_backward(const GaussianCloud& cloud, const Camera& cam,
                                          const RenderOutput& rendered, const Image3& d_color,
                                          const Image1& d_alpha) {
    if (!rendered.record)
        throw std::logic_error("render_backward requires a training-mode render");
    const auto pts = make_renderables(cloud);
    const auto point_grads = render_points_backward(pts, cam, *rendered.record, d_color, d_alpha);
    std::vector<GaussianGrad> out(cloud.size());
    for (size_t i = 0; i < cloud.size(); ++i)
        out[i] = chain_point_grad(cloud.gaussians[i], point_grads[i]);
    return out;
}

}  // namespace occsplat
