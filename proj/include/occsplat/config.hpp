#pragma once

#include "occsplat/losses.hpp"

#include <cstdint>
#include <string>

namespace occsplat {

// Training hyperparameters. Every field is addressable from the
// key-value config file; unknown keys are an error.
struct TrainConfig {
    int iterations = 2400;
    std::uint64_t seed = 1;
    int knn_k = 3;

    // per-group learning rates; lr_mean is scaled by the template
    // bounding-box diagonal at train time
    double lr_mean = 1.6e-4;
    double lr_sh = 2.5e-3;
    double lr_opacity = 5e-2;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_mlp = 5e-4;

    int densify_interval = 100;
    int densify_start = 500;
    double densify_stop_fraction = 0.6;
    double densify_grad_threshold = 2e-4;
    double densify_scale_fraction = 0.01;    // tau_s as a fraction of the bbox diagonal
    double densify_opacity_prune = 0.005;
    double densify_surface_fraction = 0.05;  // tau_d as a fraction of the bbox diagonal

    LossWeights weights;

    // ablation hooks (Table-3 style)
    bool disable_knn = false;
    bool disable_aggregation = false;
    bool disable_occlusion_losses = false;
    bool disable_mlp_heads = false;

    int workers = 0;  // 0 = hardware concurrency
};

// Plain "key = value" lines, '#' comments. Unknown keys throw.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);
// Semicolon-separated "key=value" pairs applied on top.
void apply_overrides(TrainConfig& config, const std::string& overrides);
std::string serialize_config(const TrainConfig& config);

}  // namespace occsplat
