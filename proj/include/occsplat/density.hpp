#pragma once

#include "occsplat/gaussian.hpp"
#include "occsplat/skinning.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace occsplat {

// Per-Gaussian densification statistics: accumulated screen-space
// positional-gradient norm and the number of accumulations. Reset after
// each densify step.
struct DensifyStats {
    std::vector<double> grad_norm_sum;
    std::vector<int> count;

    void resize(size_t n) {
        grad_norm_sum.assign(n, 0.0);
        count.assign(n, 0);
    }
    double mean_grad(size_t i) const {
        return count[i] > 0 ? grad_norm_sum[i] / count[i] : 0.0;
    }
};

struct DensifyConfig {
    double grad_threshold = 2e-4;       // tau_g, screen-space units
    double scale_threshold = 0.0;       // tau_s, world units (set from bbox diagonal)
    double kl_merge_threshold = 0.1;
    double opacity_prune_threshold = 0.005;
    double surface_distance_threshold = 0.0;  // tau_d, world units
    int interval = 100;
    double split_scale_shrink = 1.6;
};

// KL(g0 || g1) for two Gaussians:
//   1/2 (tr(S1^-1 S0) + ln(det S1 / det S0) + (m1-m0)^T S1^-1 (m1-m0) - 3)
// Throws on a singular covariance.
double kl_divergence(const Vec3& mean0, const Mat3& cov0, const Vec3& mean1, const Mat3& cov1);

// Two children sampled from the parent's own distribution (deterministic
// per (seed, parent index)); child scales are the parent's divided by
// the shrink factor, remaining fields copied.
std::pair<Gaussian, Gaussian> split_gaussian(const Gaussian& g, std::uint64_t seed,
                                             std::uint64_t parent_index,
                                             double scale_shrink = 1.6);

// Mean, activated opacity and SH coefficients are averaged; log-scale
// and rotation come from the first argument.
Gaussian merge_gaussians(const Gaussian& a, const Gaussian& b);

enum class DensifyActionKind { split, clone, merge, prune };

struct DensifyAction {
    DensifyActionKind kind;
    int index;        // primary Gaussian
    int other = -1;   // merge partner
};

std::string action_name(DensifyActionKind kind);

struct DensifyResult {
    GaussianCloud cloud;
    std::vector<DensifyAction> actions;
    // For every Gaussian of the new cloud: index of the source Gaussian
    // in the old cloud, or -1 for freshly created entries (split
    // children, merged results). Lets the caller carry optimizer
    // moments and rho consistently.
    std::vector<int> source_index;
    int splits = 0, clones = 0, merges = 0, prunes = 0;
};

// One adaptive-density step:
//   prune:  opacity below threshold, or farther than tau_d from the
//           nearest template vertex;
//   split:  mean grad > tau_g and max scale > tau_s;
//   clone candidates: mean grad > tau_g and max scale <= tau_s; pairs of
//           candidates with mutual KL < 0.1 merge (greedy by index)
//           instead of cloning.
// Each Gaussian appears in at most one action. Deterministic given
// (cloud, stats, config, seed).
DensifyResult densify_step(const GaussianCloud& cloud, const DensifyStats& stats,
                           const DensifyConfig& config, const ArticulatedTemplate& tmpl,
                           std::uint64_t seed);

}  // namespace occsplat
