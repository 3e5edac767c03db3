#include "occsplat/density.hpp"

#include "occsplat/rng.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <stdexcept>

namespace occsplat {

double kl_divergence(const Vec3& mean0, const Mat3& cov0, const Vec3& mean1, const Mat3& cov1) {
    const double det0 = cov0.determinant();
    const double det1 = cov1.determinant();
    if (!(det0 > 1e-30) || !(det1 > 1e-30)) throw std::invalid_argument("singular covariance");
    const Mat3 inv1 = cov1.inverse();
    const Vec3 dmu = mean1 - mean0;
    return 0.5 * ((inv1 * cov0).trace() + std::log(det1 / det0) + dmu.dot(inv1 * dmu) - 3.0);
}

std::pair<Gaussian, Gaussian> split_gaussian(const Gaussian& g, std::uint64_t seed,
                                             std::uint64_t parent_index, double scale_shrink) {
    Rng rng(Rng::mix(seed, parent_index));
    const Mat3 cov = build_covariance(g.scale(), normalize_rotation(g.rotation));
    const Eigen::LLT<Mat3> llt(cov);
    const Mat3 lower = llt.matrixL();
    auto sample_child = [&]() {
        Gaussian child = g;
        const Vec3 z(rng.normal(), rng.normal(), rng.normal());
        child.mean = g.mean + lower * z;
        child.log_scale = g.log_scale.array() - std::log(scale_shrink);
        return child;
    };
    Gaussian first = sample_child();
    Gaussian second = sample_child();
    return {first, second};
}

Gaussian merge_gaussians(const Gaussian& a, const Gaussian& b) {
    Gaussian out = a;
    out.mean = 0.5 * (a.mean + b.mean);
    out.sh = 0.5 * (a.sh + b.sh);
    out.opacity_logit = logit(0.5 * (a.opacity() + b.opacity()));
    return out;
}

std::string action_name(DensifyActionKind kind) {
    switch (kind) {
        case DensifyActionKind::split: return "split";
        case DensifyActionKind::clone: return "clone";
        case DensifyActionKind::merge: return "merge";
        case DensifyActionKind::prune: return "prune";
    }
    return "?";
}

DensifyResult densify_step(const GaussianCloud& cloud, const DensifyStats& stats,
                           const DensifyConfig& config, const ArticulatedTemplate& tmpl,
                           std::uint64_t seed) {
    const size_t n = cloud.size();
    if (stats.grad_norm_sum.size() != n || stats.count.size() != n)
        throw std::invalid_argument("densify stats not aligned with cloud");
    if (!(config.grad_threshold > 0.0 && config.scale_threshold > 0.0 &&
          config.kl_merge_threshold > 0.0 && config.opacity_prune_threshold > 0.0 &&
          config.surface_distance_threshold > 0.0))
        throw std::invalid_argument("densify thresholds must be positive");

    enum class Tag { keep, prune, split, clone_candidate };
    std::vector<Tag> tag(n, Tag::keep);

    for (size_t i = 0; i < n; ++i) {
        const Gaussian& g = cloud.gaussians[i];
        const double dist =
            (g.mean - tmpl.rest_vertices[nearest_template_vertex(g.mean, tmpl)]).norm();
        if (g.opacity() < config.opacity_prune_threshold ||
            dist > config.surface_distance_threshold) {
            tag[i] = Tag::prune;
            continue;
        }
        if (stats.mean_grad(i) > config.grad_threshold) {
            tag[i] = g.scale().maxCoeff() > config.scale_threshold ? Tag::split
                                                                   : Tag::clone_candidate;
        }
    }

    // Pair clone candidates with mutual KL below the merge threshold;
    // greedy in index order, each Gaussian used at most once.
    std::vector<int> candidates;
    for (size_t i = 0; i < n; ++i)
        if (tag[i] == Tag::clone_candidate) candidates.push_back(static_cast<int>(i));

    std::vector<std::pair<int, int>> merge_pairs;
    std::vector<char> merged(n, 0);
    std::vector<Mat3> cand_cov(candidates.size());
    for (size_t a = 0; a < candidates.size(); ++a) {
        const Gaussian& g = cloud.gaussians[candidates[a]];
        cand_cov[a] = build_covariance(g.scale(), normalize_rotation(g.rotation));
    }
    for (size_t a = 0; a < candidates.size(); ++a) {
        const int i = candidates[a];
        if (merged[i]) continue;
        for (size_t b = a + 1; b < candidates.size(); ++b) {
            const int j = candidates[b];
            if (merged[j]) continue;
            const Gaussian& gi = cloud.gaussians[i];
            const Gaussian& gj = cloud.gaussians[j];
            const double kl_ij = kl_divergence(gi.mean, cand_cov[a], gj.mean, cand_cov[b]);
            const double kl_ji = kl_divergence(gj.mean, cand_cov[b], gi.mean, cand_cov[a]);
            if (kl_ij < config.kl_merge_threshold && kl_ji < config.kl_merge_threshold) {
                merge_pairs.emplace_back(i, j);
                merged[i] = merged[j] = 1;
                break;
            }
        }
    }

    DensifyResult result;
    result.cloud.space_tag = cloud.space_tag;

    auto carry = [&](size_t i) {
        result.cloud.push_back(cloud.gaussians[i], cloud.visibility_weights[i]);
        result.source_index.push_back(static_cast<int>(i));
    };
    auto fresh = [&](const Gaussian& g, double rho) {
        result.cloud.push_back(g, rho);
        result.source_index.push_back(-1);
    };

    for (size_t i = 0; i < n; ++i) {
        const double rho = cloud.visibility_weights[i];
        switch (tag[i]) {
            case Tag::prune:
                result.actions.push_back({DensifyActionKind::prune, static_cast<int>(i)});
                ++result.prunes;
                break;
            case Tag::split: {
                auto [c0, c1] = split_gaussian(cloud.gaussians[i], seed, i,
                                               config.split_scale_shrink);
                fresh(c0, rho);
                fresh(c1, rho);
                result.actions.push_back({DensifyActionKind::split, static_cast<int>(i)});
                ++result.splits;
                break;
            }
            case Tag::clone_candidate:
                if (merged[i]) break;  // handled via merge_pairs below
                carry(i);
                fresh(cloud.gaussians[i], rho);
                result.actions.push_back({DensifyActionKind::clone, static_cast<int>(i)});
                ++result.clones;
                break;
            case Tag::keep:
                carry(i);
                break;
        }
        // Emit the merged Gaussian at the position of the first partner.
        for (const auto& [a, b] : merge_pairs) {
            if (a == static_cast<int>(i)) {
                fresh(merge_gaussians(cloud.gaussians[a], cloud.gaussians[b]),
                      0.5 * (cloud.visibility_weights[a] + cloud.visibility_weights[b]));
                result.actions.push_back({DensifyActionKind::merge, a, b});
                ++result.merges;
            }
        }
    }

    result.cloud.check_consistent();
    return result;
}

}  // namespace occsplat
