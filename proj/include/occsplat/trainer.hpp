#pragma once

#include "occsplat/config.hpp"
#include "occsplat/dataset.hpp"
#include "occsplat/density.hpp"
#include "occsplat/heads.hpp"
#include "occsplat/occlusion.hpp"
#include "occsplat/rasterizer.hpp"

#include <optional>
#include <string>
#include <vector>

namespace occsplat {

// Bias-corrected Adam on a flat parameter vector.
struct AdamMoments {
    Eigen::VectorXd m, v;
    int step = 0;

    void init(Eigen::Index n) {
        m = Eigen::VectorXd::Zero(n);
        v = Eigen::VectorXd::Zero(n);
        step = 0;
    }
};

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grads, AdamMoments& moments,
               double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

// Everything the optimizer touches.
struct Model {
    GaussianCloud cloud;  // canonical
    ArticulatedTemplate tmpl;
    OcclusionHeads heads;
    Mlp mlp_lbs;   // gamma(x_c) -> per-joint weight offsets
    Mlp mlp_pose;  // flattened pose quaternions -> per-joint correction quaternions
    EncodingConfig lbs_encoding;

    // nearest template vertex per Gaussian; recomputed after densify
    std::vector<int> nearest_vertex;
    void refresh_nearest_vertices();
};

// Canonical cloud seeded on the template vertices: isotropic scales from
// the nearest-neighbor spacing, identity rotations, opacity 0.1, gray DC.
Model initialize_model(const ArticulatedTemplate& tmpl, const TrainConfig& config);

// Per-point posed state for one pose (the forward skinning pass).
struct SkinnedCloud {
    std::vector<Eigen::VectorXd> weights;  // blended LBS weights per point
    std::vector<RigidTransform> transforms;
    std::vector<Vec3> means;
    std::vector<Mat3> covs;
    JointTransforms joint_transforms;
    Pose refined_pose;
    // caches for the backward pass
    Eigen::MatrixXd lbs_inputs;   // encoded canonical means
    Mlp::Cache lbs_cache;
    Eigen::MatrixXd lbs_offsets;  // K x N
    Eigen::VectorXd pose_input;
    Mlp::Cache pose_cache;
    Eigen::VectorXd pose_raw;     // raw correction output, 4K
    std::vector<Vec4> corrections;
};

SkinnedCloud skin_cloud(const Model& model, const Pose& pose);

struct CachedView {
    Camera camera;
    std::vector<RigidTransform> transforms;
};

struct Checkpoint {
    Model model;
    std::vector<CachedView> views;
    TrainConfig config;
    int iteration = 0;
};

// Binary checkpoint: versioned header, little-endian f32 payloads,
// section table (config, cloud, rho, MLPs, view caches, meta). Layout
// documented in docs/checkpoint_format.md.
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Renders a cached view with the model's own appearance parameters.
RenderOutput render_cached_view(const Model& model, const CachedView& view);

struct Metrics {
    double psnr = 0.0;
    double ssim = 0.0;
    double occlusion_extent = 0.0;
};

struct EvalReport {
    std::vector<Metrics> per_frame;
    Metrics mean;
};

// Per-frame PSNR/SSIM against unoccluded ground truth via the cached
// view transforms (views must align with dataset.test_frames).
EvalReport evaluate(const Checkpoint& ckpt, const std::vector<Frame>& test_frames);

struct TrainResult {
    Checkpoint checkpoint;
    std::vector<LossBreakdown> loss_log;  // one row per iteration
    int rho_freeze_iteration = -1;        // first densify step, -1 if never
};

// Optional sinks for the CSV logs named in the module interfaces.
struct TrainLogs {
    std::string loss_csv_path;     // iteration,rgb,mask,ssim,occ,con,total
    std::string densify_csv_path;  // iteration,action,index[,other]
};

TrainResult train(const TrainConfig& config, const Dataset& dataset,
                  const TrainLogs& logs = {});

// Single-frame loss and full analytic gradients (the body of one
// training step, without the optimizer update). Exposed so gradient
// checks can drive the whole pipeline.
struct StepGradients {
    LossBreakdown parts;
    Eigen::VectorXd g_mean, g_log_scale, g_rotation, g_opacity, g_sh;
    Eigen::VectorXd g_heads_sh, g_heads_opacity, g_lbs, g_pose;
};

LossBreakdown train_step_loss(const Model& model, const Frame& frame, const FeatureMap& fmap,
                              const TrainConfig& config);
StepGradients train_step_gradients(const Model& model, const Frame& frame, const FeatureMap& fmap,
                                   const TrainConfig& config);

}  // namespace occsplat
