#include "occsplat/trainer.hpp"

#include "occsplat/occlusion.hpp"
#include "occsplat/rng.hpp"
#include "occsplat/threading.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace occsplat {

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamMoments& moments,
               double lr, double beta1, double beta2, double eps) {
    if (params.size() != grads.size() || params.size() != moments.m.size())
        throw std::invalid_argument("adam_step shape mismatch");
    moments.step += 1;
    moments.m = beta1 * moments.m + (1.0 - beta1) * grads;
    moments.v = beta2 * moments.v + (1.0 - beta2) * grads.cwiseProduct(grads);
    const double c1 = 1.0 - std::pow(beta1, moments.step);
    const double c2 = 1.0 - std::pow(beta2, moments.step);
    params.array() -=
        lr * (moments.m.array() / c1) / ((moments.v.array() / c2).sqrt() + eps);
}

void Model::refresh_nearest_vertices() {
    nearest_vertex.resize(cloud.size());
    parallel_for(cloud.size(), [&](size_t i0, size_t i1) {
        for (size_t i = i0; i < i1; ++i)
            nearest_vertex[i] = nearest_template_vertex(cloud.gaussians[i].mean, tmpl);
    }, 64);
}

Model initialize_model(const ArticulatedTemplate& tmpl, const TrainConfig& config) {
    Model model;
    model.tmpl = tmpl;
    Rng rng(Rng::mix(config.seed, 0x1017));
    model.heads = OcclusionHeads::make(kFeatureChannels, rng);
    const int k = tmpl.joint_count();
    model.mlp_lbs = Mlp(model.lbs_encoding.encoded_dim(3), 64, k);
    model.mlp_lbs.init_weights(rng);
    model.mlp_pose = Mlp(4 * k, 64, 4 * k);
    model.mlp_pose.init_weights(rng);

    // isotropic scale from the nearest-neighbor spacing
    const int n = tmpl.vertex_count();
    std::vector<double> nn_dist(n, std::numeric_limits<double>::infinity());
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            nn_dist[i] = std::min(nn_dist[i],
                                  (tmpl.rest_vertices[i] - tmpl.rest_vertices[j]).norm());
        }

    const double dc = 0.5 / 0.28209479177387814;  // gray at init
    model.cloud.space_tag = SpaceTag::canonical;
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.mean = tmpl.rest_vertices[i];
        const double s = std::clamp(nn_dist[i], 1e-4, 0.2);
        g.log_scale = Vec3::Constant(std::log(s));
        g.rotation = Vec4(1, 0, 0, 0);
        g.opacity_logit = logit(0.1);
        g.sh.setZero();
        g.sh.col(0) = Vec3::Constant(dc);
        model.cloud.push_back(g, 0.0);
    }
    model.refresh_nearest_vertices();
    return model;
}

SkinnedCloud skin_cloud(const Model& model, const Pose& pose) {
    SkinnedCloud out;
    const size_t n = model.cloud.size();
    const int k = model.tmpl.joint_count();

    // pose refinement: corrections = normalize(e + raw) per joint
    out.pose_input.resize(4 * k);
    for (int j = 0; j < k; ++j) out.pose_input.segment<4>(4 * j) = pose.rotations[j];
    out.pose_raw = model.mlp_pose.forward(out.pose_input, &out.pose_cache).col(0);
    out.corrections.resize(k);
    for (int j = 0; j < k; ++j) {
        Vec4 q = Vec4(1, 0, 0, 0) + out.pose_raw.segment<4>(4 * j);
        out.corrections[j] = normalize_rotation(q);
    }
    out.refined_pose = refine_pose(pose, out.corrections);
    out.joint_transforms = forward_kinematics(model.tmpl, out.refined_pose);

    // batched LBS weight offsets from the canonical means
    out.lbs_inputs.resize(model.lbs_encoding.encoded_dim(3), n);
    for (size_t i = 0; i < n; ++i)
        out.lbs_inputs.col(i) = positional_encoding(model.cloud.gaussians[i].mean,
                                                    model.lbs_encoding);
    out.lbs_offsets = model.mlp_lbs.forward(out.lbs_inputs, &out.lbs_cache);

    out.weights.resize(n);
    out.transforms.resize(n);
    out.means.resize(n);
    out.covs.resize(n);
    parallel_for(n, [&](size_t i0, size_t i1) {
        for (size_t i = i0; i < i1; ++i) {
            const Gaussian& g = model.cloud.gaussians[i];
            const Eigen::VectorXd base =
                model.tmpl.base_weights.row(model.nearest_vertex[i]).transpose();
            out.weights[i] = blend_lbs_weights(base, out.lbs_offsets.col(i));
            out.transforms[i] = blend_transforms(out.weights[i], out.joint_transforms);
            out.means[i] = out.transforms[i].apply(g.mean);
            const Mat3 cov = build_covariance(g.scale(), normalize_rotation(g.rotation));
            out.covs[i] = out.transforms[i].apply_cov(cov);
        }
    }, 64);
    return out;
}

namespace {

// Covariance gradient -> (log_scale, rotation) for one Gaussian.
void chain_cov_to_params(const Gaussian& g, const Mat3& d_cov, Vec3& d_log_scale,
                         Vec4& d_rotation) {
    const Vec4 q_unit = normalize_rotation(g.rotation);
    const Mat3 rot = quat_to_matrix(q_unit);
    const Vec3 s = g.scale();
    const Mat3 m = rot * s.asDiagonal();
    const Mat3 d_m = (d_cov + d_cov.transpose()) * m;
    const Mat3 d_rot = d_m * s.asDiagonal();
    d_log_scale += (rot.transpose() * d_m).diagonal().cwiseProduct(s);
    const auto rot_jac = quat_to_matrix_jacobian(q_unit);
    Vec4 d_q_unit;
    for (int c = 0; c < 4; ++c) d_q_unit[c] = (d_rot.cwiseProduct(rot_jac[c])).sum();
    d_rotation +=
        (Eigen::Matrix4d::Identity() - q_unit * q_unit.transpose()) * d_q_unit / g.rotation.norm();
}

enum class OverrideMode { none, mlp, neighbor_by_rho, neighbor_by_distance };

struct OcclusionPipeline {
    OverrideMode mode = OverrideMode::none;
    std::vector<int> occluded;            // global indices with replaced appearance
    std::vector<int> occ_pos;             // position of each global index in `occluded`
    Eigen::MatrixXd neighbor_weights;     // K x B (rho-hat, distance weights, or agg weights)
    std::vector<std::vector<int>> neighbors;  // global seen indices per occluded point
    std::vector<std::vector<SampledFeature>> samples;  // per occluded point, per neighbor
    Eigen::MatrixXd h_agg;                // C x B (mlp mode)
    Eigen::MatrixXd head_input;           // (C+enc) x B
    Mlp::Cache sh_cache, op_cache;
    Eigen::MatrixXd sh_out;               // 48 x B
    Eigen::VectorXd op_out;               // B
    std::vector<double> alpha_override;   // B
    std::vector<ShCoeffs> sh_override;    // B
};

struct StepOutput {
    LossBreakdown parts;
    Eigen::VectorXd g_mean, g_log_scale, g_rotation, g_opacity, g_sh;
    Eigen::VectorXd g_heads_sh, g_heads_opacity, g_lbs, g_pose;
    std::vector<double> grad2d_norm;
    std::vector<char> touched;  // produced a splat in the full render
    std::vector<int> seen_global;
};

struct PointAccum {
    Vec3 d_mean = Vec3::Zero();
    Mat3 d_cov = Mat3::Zero();
    double d_alpha = 0.0;
    ShCoeffs d_sh = ShCoeffs::Zero();
};

void scatter_point_grads(const std::vector<PointGrad>& grads, const std::vector<int>& map,
                         std::vector<PointAccum>& accum) {
    for (size_t local = 0; local < grads.size(); ++local) {
        PointAccum& a = accum[map.empty() ? local : static_cast<size_t>(map[local])];
        a.d_mean += grads[local].d_mean;
        a.d_cov += grads[local].d_cov;
        a.d_alpha += grads[local].d_alpha;
        a.d_sh += grads[local].d_sh;
    }
}

OcclusionPipeline run_occlusion_pipeline(const Model& model, const SkinnedCloud& skinned,
                                         const VisibilitySplit& split, const Frame& frame,
                                         const FeatureMap& fmap, const TrainConfig& config) {
    OcclusionPipeline pipe;
    if (config.disable_knn || split.occluded.empty() || split.seen.empty()) return pipe;

    pipe.mode = config.disable_aggregation ? OverrideMode::neighbor_by_distance
               : config.disable_mlp_heads ? OverrideMode::neighbor_by_rho
                                          : OverrideMode::mlp;
    pipe.occluded = split.occluded;
    pipe.occ_pos.assign(model.cloud.size(), -1);
    for (size_t b = 0; b < pipe.occluded.size(); ++b)
        pipe.occ_pos[static_cast<size_t>(pipe.occluded[b])] = static_cast<int>(b);

    std::vector<Vec3> occ_pts, seen_pts;
    occ_pts.reserve(split.occluded.size());
    seen_pts.reserve(split.seen.size());
    for (int i : split.occluded) occ_pts.push_back(skinned.means[static_cast<size_t>(i)]);
    for (int i : split.seen) seen_pts.push_back(skinned.means[static_cast<size_t>(i)]);

    const KnnResult knn = knn_visible(occ_pts, seen_pts, config.knn_k);

    const size_t b_count = pipe.occluded.size();
    pipe.neighbors.resize(b_count);
    pipe.neighbor_weights.resize(config.knn_k, static_cast<Eigen::Index>(b_count));
    pipe.alpha_override.resize(b_count);
    pipe.sh_override.resize(b_count);

    if (pipe.mode == OverrideMode::mlp) {
        pipe.samples.resize(b_count);
        pipe.h_agg.resize(kFeatureChannels, static_cast<Eigen::Index>(b_count));
    }

    for (size_t b = 0; b < b_count; ++b) {
        Eigen::VectorXd rho(config.knn_k), dist(config.knn_k);
        pipe.neighbors[b].resize(config.knn_k);
        for (int j = 0; j < config.knn_k; ++j) {
            const int seen_local = knn.neighbor(b, j);
            const int global = split.seen[static_cast<size_t>(seen_local)];
            pipe.neighbors[b][j] = global;
            rho[j] = model.cloud.visibility_weights[static_cast<size_t>(global)];
            dist[j] = knn.distance(b, j);
        }
        switch (pipe.mode) {
            case OverrideMode::mlp: {
                pipe.neighbor_weights.col(b) = aggregation_weights(rho);
                Eigen::MatrixXd h(config.knn_k, kFeatureChannels);
                pipe.samples[b].resize(config.knn_k);
                for (int j = 0; j < config.knn_k; ++j) {
                    pipe.samples[b][j] = sample_feature(
                        fmap, skinned.means[static_cast<size_t>(pipe.neighbors[b][j])],
                        frame.camera);
                    h.row(j) = pipe.samples[b][j].value.transpose();
                }
                pipe.h_agg.col(b) = h.transpose() * pipe.neighbor_weights.col(b);
                break;
            }
            case OverrideMode::neighbor_by_rho:
                pipe.neighbor_weights.col(b) = aggregation_weights(rho);
                break;
            case OverrideMode::neighbor_by_distance: {
                Eigen::VectorXd inv = (dist.array() + 1e-8).inverse();
                pipe.neighbor_weights.col(b) = inv / inv.sum();
                break;
            }
            case OverrideMode::none: break;
        }
    }

    if (pipe.mode == OverrideMode::mlp) {
        const int enc_dim = model.heads.encoding.encoded_dim(3);
        pipe.head_input.resize(kFeatureChannels + enc_dim, static_cast<Eigen::Index>(b_count));
        for (size_t b = 0; b < b_count; ++b) {
            pipe.head_input.col(b).head(kFeatureChannels) = pipe.h_agg.col(b);
            pipe.head_input.col(b).tail(enc_dim) =
                positional_encoding(occ_pts[b], model.heads.encoding);
        }
        pipe.sh_out = model.heads.mlp_sh.forward(pipe.head_input, &pipe.sh_cache);
        pipe.op_out = model.heads.mlp_opacity.forward(pipe.head_input, &pipe.op_cache).row(0);
        for (size_t b = 0; b < b_count; ++b) {
            pipe.alpha_override[b] = sigmoid(pipe.op_out[static_cast<Eigen::Index>(b)]);
            for (int c = 0; c < 3; ++c)
                for (int kk = 0; kk < kShCount; ++kk)
                    pipe.sh_override[b](c, kk) =
                        pipe.sh_out(c * kShCount + kk, static_cast<Eigen::Index>(b));
        }
    } else {
        // direct neighbor-parameter blending (weighted copies)
        for (size_t b = 0; b < b_count; ++b) {
            double alpha = 0.0;
            ShCoeffs sh = ShCoeffs::Zero();
            for (int j = 0; j < config.knn_k; ++j) {
                const Gaussian& ng =
                    model.cloud.gaussians[static_cast<size_t>(pipe.neighbors[b][j])];
                const double w = pipe.neighbor_weights(j, static_cast<Eigen::Index>(b));
                alpha += w * ng.opacity();
                sh += w * ng.sh;
            }
            pipe.alpha_override[b] = alpha;
            pipe.sh_override[b] = sh;
        }
    }
    return pipe;
}

}  // namespace

// Loss and full analytic gradient for one training frame. Selection
// sets (visibility split, KNN indices, sub-threshold set, body mask)
// are constants w.r.t. differentiation.
static StepOutput compute_step(const Model& model, const Frame& frame, const FeatureMap& fmap,
                               const TrainConfig& config) {
    const size_t n = model.cloud.size();
    StepOutput out;
    out.g_mean = Eigen::VectorXd::Zero(3 * n);
    out.g_log_scale = Eigen::VectorXd::Zero(3 * n);
    out.g_rotation = Eigen::VectorXd::Zero(4 * n);
    out.g_opacity = Eigen::VectorXd::Zero(n);
    out.g_sh = Eigen::VectorXd::Zero(48 * n);
    out.g_heads_sh = Eigen::VectorXd::Zero(model.heads.mlp_sh.params().size());
    out.g_heads_opacity = Eigen::VectorXd::Zero(model.heads.mlp_opacity.params().size());
    out.g_lbs = Eigen::VectorXd::Zero(model.mlp_lbs.params().size());
    out.g_pose = Eigen::VectorXd::Zero(model.mlp_pose.params().size());
    out.grad2d_norm.assign(n, 0.0);
    out.touched.assign(n, 0);

    // ---- forward -------------------------------------------------------
    const SkinnedCloud skinned = skin_cloud(model, frame.pose);
    const VisibilitySplit split =
        classify_visibility(skinned.means, frame.camera, frame.mask);
    out.seen_global = split.seen;

    OcclusionPipeline pipe =
        run_occlusion_pipeline(model, skinned, split, frame, fmap, config);

    std::vector<RenderablePoint> renderables(n);
    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = model.cloud.gaussians[i];
        renderables[i].mean = skinned.means[i];
        renderables[i].cov = skinned.covs[i];
        const int b = pipe.mode == OverrideMode::none ? -1 : pipe.occ_pos[i];
        if (b >= 0) {
            renderables[i].alpha = pipe.alpha_override[static_cast<size_t>(b)];
            renderables[i].sh = pipe.sh_override[static_cast<size_t>(b)];
        } else {
            renderables[i].alpha = g.opacity();
            renderables[i].sh = g.sh;
        }
    }

    RenderOptions training{.training = true};
    const RenderOutput full = render_points(renderables, frame.camera, training);

    out.parts.rgb = l_rgb(full.color, frame.rgb);
    out.parts.mask = l_mask(full.alpha, frame.mask);
    out.parts.ssim = 1.0 - ssim(full.color, frame.rgb);

    // occlusion-aware losses on subset renders
    std::vector<RenderablePoint> occ_renderables, con_renderables;
    std::vector<int> con_indices;
    RenderOutput occ_render, con_render;
    Mask alpha_occ;
    ConsistencyGrad con_grad;
    if (!config.disable_occlusion_losses) {
        const Mask body = body_mask(skinned.means, frame.camera);
        alpha_occ = occlusion_mask(body, frame.mask);

        occ_renderables.reserve(split.occluded.size());
        for (int i : split.occluded) occ_renderables.push_back(renderables[static_cast<size_t>(i)]);
        occ_render = render_points(occ_renderables, frame.camera, training);
        out.parts.occ = l_occ(occ_render.alpha, alpha_occ);

        for (size_t i = 0; i < n; ++i)
            if (model.cloud.gaussians[i].opacity() < config.weights.opacity_eps)
                con_indices.push_back(static_cast<int>(i));
        con_renderables.reserve(con_indices.size());
        for (int i : con_indices) con_renderables.push_back(renderables[static_cast<size_t>(i)]);
        con_render = render_points(con_renderables, frame.camera, training);
        con_grad = l_con_with_grad(con_render.color, con_render.alpha, frame.rgb, frame.mask,
                                   config.weights.lambda_con);
        out.parts.con = con_grad.value;
    }
    out.parts.total = total_loss(out.parts, config.weights);

    // ---- backward ------------------------------------------------------
    std::vector<PointAccum> accum(n);

    {
        Image3 d_color = l_rgb_backward(full.color, frame.rgb);
        const Image3 ds = ssim_backward(full.color, frame.rgb);
        for (size_t i = 0; i < d_color.size(); ++i)
            d_color.data[i] -= config.weights.lambda_ssim * ds.data[i];
        Image1 d_alpha = l_mask_backward(full.alpha, frame.mask);
        for (auto& v : d_alpha.data) v *= config.weights.lambda_mask;
        const auto grads =
            render_points_backward(renderables, frame.camera, *full.record, d_color, d_alpha);
        scatter_point_grads(grads, {}, accum);
        for (const auto& splat : full.record->prepared) {
            out.touched[static_cast<size_t>(splat.point)] = 1;
            out.grad2d_norm[static_cast<size_t>(splat.point)] +=
                grads[static_cast<size_t>(splat.point)].d_center2d.norm();
        }
    }

    if (!config.disable_occlusion_losses) {
        Image1 d_alpha = l_occ_backward(occ_render.alpha, alpha_occ);
        for (auto& v : d_alpha.data) v *= config.weights.lambda_occ;
        const auto grads = render_points_backward(
            occ_renderables, frame.camera, *occ_render.record,
            Image3(frame.camera.height, frame.camera.width, 0.0), d_alpha);
        scatter_point_grads(grads, split.occluded, accum);

        const auto con_grads = render_points_backward(con_renderables, frame.camera,
                                                      *con_render.record, con_grad.d_color,
                                                      con_grad.d_alpha);
        scatter_point_grads(con_grads, con_indices, accum);
    }

    // appearance chain: overridden points feed the heads (or neighbor
    // parameters), everything else feeds its own sh/opacity
    if (pipe.mode == OverrideMode::mlp) {
        const size_t b_count = pipe.occluded.size();
        Eigen::MatrixXd d_sh_out = Eigen::MatrixXd::Zero(3 * kShCount,
                                                         static_cast<Eigen::Index>(b_count));
        Eigen::MatrixXd d_op_out = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(b_count));
        for (size_t b = 0; b < b_count; ++b) {
            const PointAccum& a = accum[static_cast<size_t>(pipe.occluded[b])];
            for (int c = 0; c < 3; ++c)
                for (int kk = 0; kk < kShCount; ++kk)
                    d_sh_out(c * kShCount + kk, static_cast<Eigen::Index>(b)) = a.d_sh(c, kk);
            const double alpha = pipe.alpha_override[b];
            d_op_out(0, static_cast<Eigen::Index>(b)) = a.d_alpha * alpha * (1.0 - alpha);
        }
        const Eigen::MatrixXd d_in_sh =
            model.heads.mlp_sh.backward(pipe.sh_cache, d_sh_out, out.g_heads_sh);
        const Eigen::MatrixXd d_in_op =
            model.heads.mlp_opacity.backward(pipe.op_cache, d_op_out, out.g_heads_opacity);
        const Eigen::MatrixXd d_input = d_in_sh + d_in_op;

        const int enc_dim = model.heads.encoding.encoded_dim(3);
        for (size_t b = 0; b < b_count; ++b) {
            const int global = pipe.occluded[b];
            // through the positional encoding of the occluded posed point
            accum[static_cast<size_t>(global)].d_mean += positional_encoding_backward(
                skinned.means[static_cast<size_t>(global)], model.heads.encoding,
                d_input.col(static_cast<Eigen::Index>(b)).tail(enc_dim));
            // through the sampled pixel-aligned features of the neighbors
            const Eigen::VectorXd d_h_agg =
                d_input.col(static_cast<Eigen::Index>(b)).head(kFeatureChannels);
            for (int j = 0; j < config.knn_k; ++j) {
                const int neighbor = pipe.neighbors[b][j];
                const SampledFeature& sample = pipe.samples[b][j];
                if (sample.culled) continue;
                const double w = pipe.neighbor_weights(j, static_cast<Eigen::Index>(b));
                const Eigen::Vector2d d_pix = sample.d_pixel.transpose() * (w * d_h_agg);
                const Vec3 cam_pt =
                    frame.camera.to_camera(skinned.means[static_cast<size_t>(neighbor)]);
                const Eigen::Matrix<double, 2, 3> jw =
                    projection_jacobian(frame.camera, cam_pt) * frame.camera.rotation;
                accum[static_cast<size_t>(neighbor)].d_mean += jw.transpose() * d_pix;
            }
        }
    } else if (pipe.mode != OverrideMode::none) {
        // blended copies: route appearance gradients to the neighbors'
        // own parameters (blend weights held constant)
        for (size_t b = 0; b < pipe.occluded.size(); ++b) {
            const PointAccum& a = accum[static_cast<size_t>(pipe.occluded[b])];
            for (int j = 0; j < config.knn_k; ++j) {
                const int neighbor = pipe.neighbors[b][j];
                const Gaussian& ng = model.cloud.gaussians[static_cast<size_t>(neighbor)];
                const double w = pipe.neighbor_weights(j, static_cast<Eigen::Index>(b));
                const double alpha = ng.opacity();
                out.g_opacity[neighbor] += w * a.d_alpha * alpha * (1.0 - alpha);
                Eigen::Map<ShCoeffs> g_sh(out.g_sh.data() + 48 * neighbor);
                g_sh += w * a.d_sh;
            }
        }
    }

    for (size_t i = 0; i < n; ++i) {
        const bool overridden = pipe.mode != OverrideMode::none && pipe.occ_pos[i] >= 0;
        if (overridden) continue;
        const Gaussian& g = model.cloud.gaussians[i];
        const double alpha = g.opacity();
        out.g_opacity[static_cast<Eigen::Index>(i)] += accum[i].d_alpha * alpha * (1.0 - alpha);
        Eigen::Map<ShCoeffs> g_sh(out.g_sh.data() + 48 * i);
        g_sh += accum[i].d_sh;
    }

    // skinning chain: posed mean/cov -> canonical parameters, LBS
    // weights, and joint transforms
    const int k = model.tmpl.joint_count();
    std::vector<Mat3> d_joint_rot(k, Mat3::Zero());
    std::vector<Vec3> d_joint_trans(k, Vec3::Zero());
    Eigen::MatrixXd d_offsets = Eigen::MatrixXd::Zero(k, static_cast<Eigen::Index>(n));

    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = model.cloud.gaussians[i];
        const PointAccum& a = accum[i];
        const RigidTransform& t = skinned.transforms[i];
        const Mat3 cov_c = build_covariance(g.scale(), normalize_rotation(g.rotation));

        // x_p = G mu + b ; Sigma_p = G Sigma G^T
        Vec3 d_mean_c = t.rot.transpose() * a.d_mean;
        const Mat3 d_cov_c = t.rot.transpose() * a.d_cov * t.rot;
        Mat3 d_g = a.d_mean * g.mean.transpose() +
                   (a.d_cov + a.d_cov.transpose()) * t.rot * cov_c;
        const Vec3 d_b = a.d_mean;

        Vec3 d_ls = Vec3::Zero();
        Vec4 d_rot = Vec4::Zero();
        chain_cov_to_params(g, d_cov_c, d_ls, d_rot);

        Eigen::VectorXd d_w(k);
        for (int j = 0; j < k; ++j) {
            d_w[j] = (d_g.cwiseProduct(skinned.joint_transforms.rotation[j])).sum() +
                     d_b.dot(skinned.joint_transforms.translation[j]);
            const double w = skinned.weights[i][j];
            if (w != 0.0) {
                d_joint_rot[j] += w * d_g;
                d_joint_trans[j] += w * d_b;
            }
        }
        d_offsets.col(static_cast<Eigen::Index>(i)) =
            blend_lbs_weights_backward(skinned.weights[i], d_w);

        out.g_mean.segment<3>(3 * i) += d_mean_c;
        out.g_log_scale.segment<3>(3 * i) += d_ls;
        out.g_rotation.segment<4>(4 * i) += d_rot;
    }

    // LBS MLP backward, plus the encoding chain back to canonical means
    {
        const Eigen::MatrixXd d_enc = model.mlp_lbs.backward(skinned.lbs_cache, d_offsets,
                                                             out.g_lbs);
        for (size_t i = 0; i < n; ++i)
            out.g_mean.segment<3>(3 * i) += positional_encoding_backward(
                model.cloud.gaussians[i].mean, model.lbs_encoding,
                d_enc.col(static_cast<Eigen::Index>(i)));
    }

    // FK adjoint: skinning transforms -> refined joint rotations -> pose MLP
    {
        const JointWorld world = forward_kinematics_world(model.tmpl, skinned.refined_pose);
        std::vector<Mat3> dA_rot(k, Mat3::Zero());
        std::vector<Vec3> dA_trans(k, Vec3::Zero());
        for (int j = 0; j < k; ++j) {
            // G_j = A_j.R ; b_j = A_j.t - A_j.R J_j + root
            dA_rot[j] = d_joint_rot[j] - d_joint_trans[j] * model.tmpl.rest_joints[j].transpose();
            dA_trans[j] = d_joint_trans[j];
        }
        Eigen::VectorXd d_pose_raw = Eigen::VectorXd::Zero(4 * k);
        for (auto it = model.tmpl.topo_order.rbegin(); it != model.tmpl.topo_order.rend(); ++it) {
            const int j = *it;
            const Mat3 local = quat_to_matrix(normalize_rotation(skinned.refined_pose.rotations[j]));
            Mat3 d_local;
            if (j == 0) {
                d_local = dA_rot[0];
            } else {
                const int p = model.tmpl.joint_parents[j];
                const Vec3 offset = model.tmpl.rest_joints[j] - model.tmpl.rest_joints[p];
                dA_rot[p] += dA_rot[j] * local.transpose() + dA_trans[j] * offset.transpose();
                dA_trans[p] += dA_trans[j];
                d_local = world.rotation[p].transpose() * dA_rot[j];
            }
            // refined quat -> correction quat -> raw MLP output
            const Vec4 q_comp = quat_multiply(frame.pose.rotations[j], skinned.corrections[j]);
            const Vec4 q_unit = normalize_rotation(q_comp);
            const auto rot_jac = quat_to_matrix_jacobian(q_unit);
            Vec4 d_q_unit;
            for (int c = 0; c < 4; ++c) d_q_unit[c] = (d_local.cwiseProduct(rot_jac[c])).sum();
            const Vec4 d_q_comp =
                (Eigen::Matrix4d::Identity() - q_unit * q_unit.transpose()) * d_q_unit /
                q_comp.norm();
            const Vec4 d_corr = quat_left_matrix(frame.pose.rotations[j]).transpose() * d_q_comp;
            const Vec4 raw_plus_e = Vec4(1, 0, 0, 0) + skinned.pose_raw.segment<4>(4 * j);
            const Vec4 corr = skinned.corrections[j];
            d_pose_raw.segment<4>(4 * j) =
                (Eigen::Matrix4d::Identity() - corr * corr.transpose()) * d_corr /
                raw_plus_e.norm();
        }
        model.mlp_pose.backward(skinned.pose_cache, d_pose_raw, out.g_pose);
    }

    return out;
}

// ---------------------------------------------------------------------
// training loop

namespace {

struct CloudParams {
    Eigen::VectorXd mean, log_scale, rotation, opacity, sh;
};

CloudParams flatten(const GaussianCloud& cloud) {
    const size_t n = cloud.size();
    CloudParams p;
    p.mean.resize(3 * n);
    p.log_scale.resize(3 * n);
    p.rotation.resize(4 * n);
    p.opacity.resize(n);
    p.sh.resize(48 * n);
    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = cloud.gaussians[i];
        p.mean.segment<3>(3 * i) = g.mean;
        p.log_scale.segment<3>(3 * i) = g.log_scale;
        p.rotation.segment<4>(4 * i) = g.rotation;
        p.opacity[static_cast<Eigen::Index>(i)] = g.opacity_logit;
        Eigen::Map<const Eigen::VectorXd> shv(g.sh.data(), 48);
        p.sh.segment(48 * i, 48) = shv;
    }
    return p;
}

void unflatten(const CloudParams& p, GaussianCloud& cloud) {
    const size_t n = cloud.size();
    for (size_t i = 0; i < n; ++i) {
        Gaussian& g = cloud.gaussians[i];
        g.mean = p.mean.segment<3>(3 * i);
        g.log_scale = p.log_scale.segment<3>(3 * i);
        g.rotation = p.rotation.segment<4>(4 * i);
        g.opacity_logit = p.opacity[static_cast<Eigen::Index>(i)];
        Eigen::Map<Eigen::VectorXd> shv(g.sh.data(), 48);
        shv = p.sh.segment(48 * i, 48);
    }
}

// Rebuild per-row optimizer state after a densify step: surviving and
// duplicated rows carry their source moments, per the bookkeeping
// contract.
void remap_moments(AdamMoments& mom, const std::vector<int>& source, int stride) {
    Eigen::VectorXd m = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(source.size()) * stride);
    Eigen::VectorXd v = m;
    for (size_t i = 0; i < source.size(); ++i) {
        m.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            mom.m.segment(static_cast<Eigen::Index>(source[i]) * stride, stride);
        v.segment(static_cast<Eigen::Index>(i) * stride, stride) =
            mom.v.segment(static_cast<Eigen::Index>(source[i]) * stride, stride);
    }
    mom.m = std::move(m);
    mom.v = std::move(v);
}

}  // namespace

TrainResult train(const TrainConfig& config, const Dataset& dataset, const TrainLogs& logs) {
    if (dataset.train_frames.empty()) throw std::invalid_argument("dataset has no training frames");
    if (config.iterations <= 0) throw std::invalid_argument("iterations must be positive");
    if (config.workers > 0) set_worker_count(config.workers);

    Model model = initialize_model(dataset.tmpl, config);
    const double extent = dataset.tmpl.bounding_diagonal();

    DensifyConfig densify_cfg;
    densify_cfg.grad_threshold = config.densify_grad_threshold;
    densify_cfg.scale_threshold = config.densify_scale_fraction * extent;
    densify_cfg.opacity_prune_threshold = config.densify_opacity_prune;
    densify_cfg.surface_distance_threshold = config.densify_surface_fraction * extent;
    densify_cfg.interval = config.densify_interval;

    CloudParams params = flatten(model.cloud);
    AdamMoments mom_mean, mom_scale, mom_rot, mom_op, mom_sh;
    mom_mean.init(params.mean.size());
    mom_scale.init(params.log_scale.size());
    mom_rot.init(params.rotation.size());
    mom_op.init(params.opacity.size());
    mom_sh.init(params.sh.size());
    AdamMoments mom_heads_sh, mom_heads_op, mom_lbs, mom_pose;
    mom_heads_sh.init(model.heads.mlp_sh.params().size());
    mom_heads_op.init(model.heads.mlp_opacity.params().size());
    mom_lbs.init(model.mlp_lbs.params().size());
    mom_pose.init(model.mlp_pose.params().size());

    DensifyStats stats;
    stats.resize(model.cloud.size());

    std::vector<FeatureMap> fmap_cache(dataset.train_frames.size());
    std::vector<char> fmap_ready(dataset.train_frames.size(), 0);

    std::ofstream loss_csv, densify_csv;
    if (!logs.loss_csv_path.empty()) {
        loss_csv.open(logs.loss_csv_path);
        loss_csv << "iteration,rgb,mask,ssim,occ,con,total\n";
    }
    if (!logs.densify_csv_path.empty()) {
        densify_csv.open(logs.densify_csv_path);
        densify_csv << "iteration,action,index,other\n";
    }

    TrainResult result;
    bool rho_frozen = false;
    const int densify_stop =
        static_cast<int>(config.densify_stop_fraction * config.iterations);

    for (int it = 0; it < config.iterations; ++it) {
        const size_t frame_idx = static_cast<size_t>(it) % dataset.train_frames.size();
        const Frame& frame = dataset.train_frames[frame_idx];
        if (!fmap_ready[frame_idx]) {
            fmap_cache[frame_idx] = encode_features(frame.rgb);
            fmap_ready[frame_idx] = 1;
        }

        const StepOutput step = compute_step(model, frame, fmap_cache[frame_idx], config);
        if (!std::isfinite(step.parts.total)) {
            std::ostringstream msg;
            msg << "non-finite loss at iteration " << it;
            throw std::runtime_error(msg.str());
        }
        result.loss_log.push_back(step.parts);
        if (loss_csv.is_open()) {
            loss_csv.precision(10);
            loss_csv << it << "," << step.parts.rgb << "," << step.parts.mask << ","
                     << step.parts.ssim << "," << step.parts.occ << "," << step.parts.con << ","
                     << step.parts.total << "\n";
        }

        adam_step(params.mean, step.g_mean, mom_mean, config.lr_mean * extent);
        adam_step(params.log_scale, step.g_log_scale, mom_scale, config.lr_scale);
        adam_step(params.rotation, step.g_rotation, mom_rot, config.lr_rotation);
        adam_step(params.opacity, step.g_opacity, mom_op, config.lr_opacity);
        adam_step(params.sh, step.g_sh, mom_sh, config.lr_sh);
        unflatten(params, model.cloud);
        adam_step(model.heads.mlp_sh.params(), step.g_heads_sh, mom_heads_sh, config.lr_mlp);
        adam_step(model.heads.mlp_opacity.params(), step.g_heads_opacity, mom_heads_op,
                  config.lr_mlp);
        adam_step(model.mlp_lbs.params(), step.g_lbs, mom_lbs, config.lr_mlp);
        adam_step(model.mlp_pose.params(), step.g_pose, mom_pose, config.lr_mlp);

        for (size_t i = 0; i < model.cloud.size(); ++i) {
            if (step.touched[i]) {
                stats.grad_norm_sum[i] += step.grad2d_norm[i];
                stats.count[i] += 1;
            }
        }

        if (!rho_frozen)
            model.cloud.visibility_weights = update_visibility_weights(
                model.cloud.visibility_weights, step.seen_global, false);

        const int done = it + 1;
        if (done >= config.densify_start && done % config.densify_interval == 0 &&
            done <= densify_stop) {
            const DensifyResult dres =
                densify_step(model.cloud, stats, densify_cfg, model.tmpl,
                             Rng::mix(config.seed, static_cast<std::uint64_t>(done)));
            if (!rho_frozen) {
                rho_frozen = true;
                result.rho_freeze_iteration = done;
            }
            if (densify_csv.is_open())
                for (const auto& a : dres.actions)
                    densify_csv << done << "," << action_name(a.kind) << "," << a.index << ","
                                << a.other << "\n";
            model.cloud = dres.cloud;
            model.refresh_nearest_vertices();
            params = flatten(model.cloud);
            remap_moments(mom_mean, dres.source_index, 3);
            remap_moments(mom_scale, dres.source_index, 3);
            remap_moments(mom_rot, dres.source_index, 4);
            remap_moments(mom_op, dres.source_index, 1);
            remap_moments(mom_sh, dres.source_index, 48);
            stats.resize(model.cloud.size());
        }
    }

    // bake per-view transforms for the held-out views
    Checkpoint ckpt;
    ckpt.config = config;
    ckpt.iteration = config.iterations;
    for (const Frame& tf : dataset.test_frames) {
        const SkinnedCloud s = skin_cloud(model, tf.pose);
        CachedView view;
        view.camera = tf.camera;
        view.transforms = s.transforms;
        ckpt.views.push_back(std::move(view));
    }
    ckpt.model = std::move(model);
    result.checkpoint = std::move(ckpt);
    return result;
}

RenderOutput render_cached_view(const Model& model, const CachedView& view) {
    const size_t n = model.cloud.size();
    if (view.transforms.size() != n)
        throw std::invalid_argument("cached view does not match the cloud size");
    std::vector<RenderablePoint> pts(n);
    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = model.cloud.gaussians[i];
        pts[i].mean = view.transforms[i].apply(g.mean);
        pts[i].cov = view.transforms[i].apply_cov(
            build_covariance(g.scale(), normalize_rotation(g.rotation)));
        pts[i].alpha = g.opacity();
        pts[i].sh = g.sh;
    }
    return render_points(pts, view.camera, {});
}

EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Frame>& test_frames) {
    if (test_frames.size() != ckpt.views.size())
        throw std::invalid_argument("test frame count does not match cached views");
    EvalReport report;
    for (size_t v = 0; v < test_frames.size(); ++v) {
        const RenderOutput out = render_cached_view(ckpt.model, ckpt.views[v]);
        Metrics m;
        m.psnr = psnr(out.color, test_frames[v].rgb);
        m.ssim = ssim(out.color, test_frames[v].rgb);
        std::vector<Vec3> posed(ckpt.model.cloud.size());
        for (size_t i = 0; i < posed.size(); ++i)
            posed[i] = ckpt.views[v].transforms[i].apply(ckpt.model.cloud.gaussians[i].mean);
        const Mask body = body_mask(posed, ckpt.views[v].camera);
        m.occlusion_extent =
            body.count() == 0 ? 0.0 : occlusion_extent(test_frames[v].mask, body);
        report.per_frame.push_back(m);
        report.mean.psnr += m.psnr;
        report.mean.ssim += m.ssim;
        report.mean.occlusion_extent += m.occlusion_extent;
    }
    const double n = static_cast<double>(std::max<size_t>(1, report.per_frame.size()));
    report.mean.psnr /= n;
    report.mean.ssim /= n;
    report.mean.occlusion_extent /= n;
    return report;
}

// ---------------------------------------------------------------------
// checkpoint serialization (little-endian f32 payloads)

namespace {

void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& buf, double v) {
    const float f = static_cast<float>(v);
    std::uint32_t bits;
    std::memcpy(&bits, &f, 4);
    put_u32(buf, bits);
}

struct Reader {
    const std::string& data;
    size_t at = 0;
    explicit Reader(const std::string& d) : data(d) {}
    void need(size_t bytes) const {
        if (at + bytes > data.size()) throw std::runtime_error("truncated checkpoint");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(data[at + i])) << (8 * i);
        at += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(data[at + i])) << (8 * i);
        at += 8;
        return v;
    }
    double f32() {
        const std::uint32_t bits = u32();
        float f;
        std::memcpy(&f, &bits, 4);
        return static_cast<double>(f);
    }
    std::string bytes(size_t n) {
        need(n);
        std::string out = data.substr(at, n);
        at += n;
        return out;
    }
};

void put_mlp(std::string& buf, const Mlp& mlp) {
    put_u32(buf, static_cast<std::uint32_t>(mlp.input_dim()));
    put_u32(buf, static_cast<std::uint32_t>(mlp.hidden_dim()));
    put_u32(buf, static_cast<std::uint32_t>(mlp.output_dim()));
    put_u64(buf, static_cast<std::uint64_t>(mlp.params().size()));
    for (Eigen::Index i = 0; i < mlp.params().size(); ++i) put_f32(buf, mlp.params()[i]);
}

Mlp get_mlp(Reader& r) {
    const int in = static_cast<int>(r.u32());
    const int hidden = static_cast<int>(r.u32());
    const int out = static_cast<int>(r.u32());
    const std::uint64_t count = r.u64();
    Mlp mlp(in, hidden, out);
    if (static_cast<std::uint64_t>(mlp.params().size()) != count)
        throw std::runtime_error("checkpoint MLP parameter count mismatch");
    for (std::uint64_t i = 0; i < count; ++i)
        mlp.params()[static_cast<Eigen::Index>(i)] = r.f32();
    return mlp;
}

void put_camera(std::string& buf, const Camera& cam) {
    put_f32(buf, cam.fx);
    put_f32(buf, cam.fy);
    put_f32(buf, cam.cx);
    put_f32(buf, cam.cy);
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) put_f32(buf, cam.rotation(r, c));
    for (int i = 0; i < 3; ++i) put_f32(buf, cam.translation[i]);
    put_u32(buf, static_cast<std::uint32_t>(cam.width));
    put_u32(buf, static_cast<std::uint32_t>(cam.height));
}

Camera get_camera(Reader& r) {
    Camera cam;
    cam.fx = r.f32();
    cam.fy = r.f32();
    cam.cx = r.f32();
    cam.cy = r.f32();
    for (int row = 0; row < 3; ++row)
        for (int c = 0; c < 3; ++c) cam.rotation(row, c) = r.f32();
    for (int i = 0; i < 3; ++i) cam.translation[i] = r.f32();
    cam.width = static_cast<int>(r.u32());
    cam.height = static_cast<int>(r.u32());
    // f32 storage perturbs orthonormality slightly; re-project onto SO(3)
    Eigen::JacobiSVD<Mat3> svd(cam.rotation, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 fixed = svd.matrixU() * svd.matrixV().transpose();
    if (fixed.determinant() < 0) {
        Mat3 flip = Mat3::Identity();
        flip(2, 2) = -1;
        fixed = svd.matrixU() * flip * svd.matrixV().transpose();
    }
    cam.rotation = fixed;
    return cam;
}

constexpr std::uint32_t kCheckpointMagic = 0x4353474fu;  // "OGSC" little-endian
constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    struct Section {
        std::string tag;
        std::string payload;
    };
    std::vector<Section> sections;

    {
        std::string conf = serialize_config(ckpt.config);
        std::string payload;
        put_u64(payload, conf.size());
        payload += conf;
        sections.push_back({"CONF", std::move(payload)});
    }
    {
        std::string payload;
        const auto& cloud = ckpt.model.cloud;
        put_u64(payload, cloud.size());
        for (const Gaussian& g : cloud.gaussians) {
            for (int i = 0; i < 3; ++i) put_f32(payload, g.mean[i]);
            for (int i = 0; i < 3; ++i) put_f32(payload, g.log_scale[i]);
            for (int i = 0; i < 4; ++i) put_f32(payload, g.rotation[i]);
            put_f32(payload, g.opacity_logit);
            for (int c = 0; c < 3; ++c)
                for (int kk = 0; kk < kShCount; ++kk) put_f32(payload, g.sh(c, kk));
        }
        sections.push_back({"CLDG", std::move(payload)});
    }
    {
        std::string payload;
        put_u64(payload, ckpt.model.cloud.visibility_weights.size());
        for (double rho : ckpt.model.cloud.visibility_weights) put_f32(payload, rho);
        sections.push_back({"RHOW", std::move(payload)});
    }
    {
        std::string payload;
        put_mlp(payload, ckpt.model.heads.mlp_sh);
        put_mlp(payload, ckpt.model.heads.mlp_opacity);
        put_mlp(payload, ckpt.model.mlp_lbs);
        put_mlp(payload, ckpt.model.mlp_pose);
        sections.push_back({"MLPS", std::move(payload)});
    }
    {
        std::string payload;
        put_u32(payload, static_cast<std::uint32_t>(ckpt.views.size()));
        for (const CachedView& view : ckpt.views) {
            put_camera(payload, view.camera);
            put_u64(payload, view.transforms.size());
            for (const RigidTransform& t : view.transforms) {
                for (int r = 0; r < 3; ++r)
                    for (int c = 0; c < 3; ++c) put_f32(payload, t.rot(r, c));
                for (int i = 0; i < 3; ++i) put_f32(payload, t.trans[i]);
            }
        }
        sections.push_back({"CACH", std::move(payload)});
    }
    {
        std::string payload;
        put_u32(payload, static_cast<std::uint32_t>(ckpt.iteration));
        sections.push_back({"META", std::move(payload)});
    }

    std::string header;
    put_u32(header, kCheckpointMagic);
    put_u32(header, kCheckpointVersion);
    put_u32(header, static_cast<std::uint32_t>(sections.size()));
    const size_t table_bytes = sections.size() * (4 + 8 + 8);
    std::uint64_t offset = header.size() + table_bytes;
    std::string table;
    for (const Section& s : sections) {
        table += s.tag;
        put_u64(table, offset);
        put_u64(table, s.payload.size());
        offset += s.payload.size();
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    f << header << table;
    for (const Section& s : sections) f << s.payload;
    if (!f) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open checkpoint: " + path);
    std::ostringstream buf;
    buf << f.rdbuf();
    const std::string data = buf.str();
    Reader r(data);
    if (r.u32() != kCheckpointMagic) throw std::runtime_error("not an occsplat checkpoint");
    if (r.u32() != kCheckpointVersion) throw std::runtime_error("unsupported checkpoint version");
    const std::uint32_t n_sections = r.u32();
    std::unordered_map<std::string, std::pair<std::uint64_t, std::uint64_t>> table;
    for (std::uint32_t i = 0; i < n_sections; ++i) {
        const std::string tag = r.bytes(4);
        const std::uint64_t off = r.u64();
        const std::uint64_t size = r.u64();
        table[tag] = {off, size};
    }
    auto section = [&](const char* tag) {
        const auto it = table.find(tag);
        if (it == table.end())
            throw std::runtime_error(std::string("checkpoint missing section ") + tag);
        Reader sr(data);
        sr.at = it->second.first;
        return sr;
    };

    Checkpoint ckpt;
    {
        Reader sr = section("CONF");
        const std::uint64_t len = sr.u64();
        ckpt.config = parse_config_text(sr.bytes(len));
    }
    {
        Reader sr = section("CLDG");
        const std::uint64_t n = sr.u64();
        ckpt.model.cloud.space_tag = SpaceTag::canonical;
        for (std::uint64_t i = 0; i < n; ++i) {
            Gaussian g;
            for (int c = 0; c < 3; ++c) g.mean[c] = sr.f32();
            for (int c = 0; c < 3; ++c) g.log_scale[c] = sr.f32();
            for (int c = 0; c < 4; ++c) g.rotation[c] = sr.f32();
            g.opacity_logit = sr.f32();
            for (int c = 0; c < 3; ++c)
                for (int kk = 0; kk < kShCount; ++kk) g.sh(c, kk) = sr.f32();
            ckpt.model.cloud.gaussians.push_back(g);
        }
    }
    {
        Reader sr = section("RHOW");
        const std::uint64_t n = sr.u64();
        if (n != ckpt.model.cloud.gaussians.size())
            throw std::runtime_error("checkpoint rho size mismatch");
        for (std::uint64_t i = 0; i < n; ++i)
            ckpt.model.cloud.visibility_weights.push_back(sr.f32());
    }
    {
        Reader sr = section("MLPS");
        ckpt.model.heads = OcclusionHeads{};
        ckpt.model.heads.feature_channels = kFeatureChannels;
        ckpt.model.heads.mlp_sh = get_mlp(sr);
        ckpt.model.heads.mlp_opacity = get_mlp(sr);
        ckpt.model.mlp_lbs = get_mlp(sr);
        ckpt.model.mlp_pose = get_mlp(sr);
    }
    {
        Reader sr = section("CACH");
        const std::uint32_t n_views = sr.u32();
        for (std::uint32_t v = 0; v < n_views; ++v) {
            CachedView view;
            view.camera = get_camera(sr);
            const std::uint64_t n_pts = sr.u64();
            view.transforms.resize(n_pts);
            for (std::uint64_t i = 0; i < n_pts; ++i) {
                for (int row = 0; row < 3; ++row)
                    for (int c = 0; c < 3; ++c) view.transforms[i].rot(row, c) = sr.f32();
                for (int c = 0; c < 3; ++c) view.transforms[i].trans[c] = sr.f32();
            }
            ckpt.views.push_back(std::move(view));
        }
    }
    {
        Reader sr = section("META");
        ckpt.iteration = static_cast<int>(sr.u32());
    }
    ckpt.model.cloud.check_consistent();
    return ckpt;
}

// Exposed for gradient tests: single-frame loss + gradients.
LossBreakdown train_step_loss(const Model& model, const Frame& frame, const FeatureMap& fmap,
                              const TrainConfig& config) {
    return compute_step(model, frame, fmap, config).parts;
}

StepGradients train_step_gradients(const Model& model, const Frame& frame, const FeatureMap& fmap,
                                   const TrainConfig& config) {
    const StepOutput step = compute_step(model, frame, fmap, config);
    StepGradients out;
    out.parts = step.parts;
    out.g_mean = step.g_mean;
    out.g_log_scale = step.g_log_scale;
    out.g_rotation = step.g_rotation;
    out.g_opacity = step.g_opacity;
    out.g_sh = step.g_sh;
    out.g_heads_sh = step.g_heads_sh;
    out.g_heads_opacity = step.g_heads_opacity;
    out.g_lbs = step.g_lbs;
    out.g_pose = step.g_pose;
    return out;
}

}  // namespace occsplat
