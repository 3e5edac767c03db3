#include "occsplat/density.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace occsplat;
using namespace occsplat::test;

namespace {

DensifyConfig test_config() {
    DensifyConfig cfg;
    cfg.grad_threshold = 2e-4;
    cfg.scale_threshold = 0.05;
    cfg.opacity_prune_threshold = 0.005;
    cfg.surface_distance_threshold = 10.0;
    return cfg;
}

GaussianCloud near_template_cloud(const ArticulatedTemplate& tmpl, int n, Rng& rng) {
    GaussianCloud cloud;
    for (int i = 0; i < n; ++i) {
        Gaussian g;
        g.mean = tmpl.rest_vertices[static_cast<size_t>(i) % tmpl.rest_vertices.size()] +
                 0.01 * Vec3(rng.normal(), rng.normal(), rng.normal());
        g.log_scale = Vec3::Constant(std::log(0.02));
        g.opacity_logit = logit(0.5);
        cloud.push_back(g, static_cast<double>(i));
    }
    return cloud;
}

}  // namespace

TEST_CASE("kl_divergence closed forms") {
    const Mat3 eye = Mat3::Identity();
    CHECK(kl_divergence(Vec3(1, 2, 3), eye, Vec3(1, 2, 3), eye) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(kl_divergence(Vec3::Zero(), eye, Vec3(1, 0, 0), eye) == doctest::Approx(0.5).epsilon(1e-12));

    const double e2 = std::exp(2.0);
    const double expect = 0.5 * (3.0 * std::exp(-2.0) + 6.0 - 3.0);
    CHECK(kl_divergence(Vec3::Zero(), eye, Vec3::Zero(), e2 * eye) ==
          doctest::Approx(expect).epsilon(1e-9));
    CHECK(expect == doctest::Approx(1.7030).epsilon(1e-4));

    CHECK_THROWS(kl_divergence(Vec3::Zero(), Mat3::Zero(), Vec3::Zero(), eye));
}

TEST_CASE("kl_divergence is nonnegative on random SPD pairs") {
    Rng rng(42);
    for (int i = 0; i < 1000; ++i) {
        const Vec3 s0(std::exp(rng.uniform(-2, 1)), std::exp(rng.uniform(-2, 1)),
                      std::exp(rng.uniform(-2, 1)));
        const Vec3 s1(std::exp(rng.uniform(-2, 1)), std::exp(rng.uniform(-2, 1)),
                      std::exp(rng.uniform(-2, 1)));
        const Mat3 c0 = build_covariance(s0, random_unit_quat(rng));
        const Mat3 c1 = build_covariance(s1, random_unit_quat(rng));
        const Vec3 m0(rng.normal(), rng.normal(), rng.normal());
        const Vec3 m1(rng.normal(), rng.normal(), rng.normal());
        CHECK(kl_divergence(m0, c0, m1, c1) >= -1e-9);
        CHECK(kl_divergence(m0, c0, m0, c0) == doctest::Approx(0.0).epsilon(1e-9));
    }
}

TEST_CASE("split_gaussian") {
    Gaussian g;
    g.mean = Vec3(0.5, -0.2, 1.0);
    g.log_scale = Vec3(std::log(0.4), std::log(0.2), std::log(0.1));
    g.opacity_logit = 0.3;

    SUBCASE("children shrink by the configured factor") {
        const auto [a, b] = split_gaussian(g, 7, 0);
        CHECK(a.scale().maxCoeff() == doctest::Approx(g.scale().maxCoeff() / 1.6));
        CHECK(b.scale().maxCoeff() == doctest::Approx(g.scale().maxCoeff() / 1.6));
        CHECK(a.opacity_logit == g.opacity_logit);
        CHECK(a.rotation == g.rotation);
    }

    SUBCASE("deterministic per (seed, parent)") {
        const auto [a1, b1] = split_gaussian(g, 7, 3);
        const auto [a2, b2] = split_gaussian(g, 7, 3);
        CHECK(a1.mean == a2.mean);
        CHECK(b1.mean == b2.mean);
        const auto [a3, b3] = split_gaussian(g, 8, 3);
        CHECK(a1.mean != a3.mean);
    }

    SUBCASE("children are drawn from the parent distribution") {
        // sample mean over 1e4 splits approaches the parent mean
        Vec3 acc = Vec3::Zero();
        const int n = 10000;
        for (int i = 0; i < n; ++i) {
            const auto [a, b] = split_gaussian(g, 1234, static_cast<std::uint64_t>(i));
            acc += a.mean + b.mean;
        }
        const Vec3 sample_mean = acc / (2.0 * n);
        const double sigma_max = g.scale().maxCoeff();
        CHECK((sample_mean - g.mean).norm() < 3.0 * sigma_max / 100.0 * std::sqrt(3.0));
    }
}

TEST_CASE("merge_gaussians") {
    Gaussian a, b;
    a.mean = Vec3(0, 0, 0);
    b.mean = Vec3(2, 0, 0);
    a.opacity_logit = logit(0.2);
    b.opacity_logit = logit(0.6);
    a.sh.setConstant(1.0);
    b.sh.setConstant(3.0);
    a.log_scale = Vec3(1, 2, 3);
    b.log_scale = Vec3(-1, -2, -3);
    a.rotation = Vec4(1, 0, 0, 0);

    const Gaussian m = merge_gaussians(a, b);
    CHECK((m.mean - Vec3(1, 0, 0)).norm() < 1e-15);
    CHECK(m.opacity() == doctest::Approx(0.4).epsilon(1e-12));
    CHECK(m.sh(1, 5) == doctest::Approx(2.0));
    CHECK(m.log_scale == a.log_scale);
    CHECK(m.rotation == a.rotation);

    const Gaussian same = merge_gaussians(a, a);
    CHECK((same.mean - a.mean).norm() == 0.0);
    CHECK(same.opacity() == doctest::Approx(a.opacity()).epsilon(1e-12));
    CHECK((same.sh - a.sh).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("densify_step rule table") {
    Rng rng(31);
    const auto tmpl = chain_template(8);
    const DensifyConfig cfg = test_config();

    SUBCASE("quiet cloud: no actions") {
        GaussianCloud cloud = near_template_cloud(tmpl, 6, rng);
        DensifyStats stats;
        stats.resize(cloud.size());
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, 9);
        CHECK(r.actions.empty());
        CHECK(r.cloud.size() == cloud.size());
        CHECK(r.cloud.visibility_weights == cloud.visibility_weights);
    }

    SUBCASE("isolated small high-gradient Gaussian is cloned") {
        GaussianCloud cloud = near_template_cloud(tmpl, 4, rng);
        DensifyStats stats;
        stats.resize(cloud.size());
        stats.grad_norm_sum[2] = 1.0;  // mean grad 1.0 > tau_g
        stats.count[2] = 1;
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, 9);
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == DensifyActionKind::clone);
        CHECK(r.actions[0].index == 2);
        CHECK(r.cloud.size() == cloud.size() + 1);
        CHECK(r.clones == 1);
    }

    SUBCASE("large high-gradient Gaussian is split") {
        GaussianCloud cloud = near_template_cloud(tmpl, 4, rng);
        cloud.gaussians[1].log_scale = Vec3::Constant(std::log(0.2));  // above tau_s
        DensifyStats stats;
        stats.resize(cloud.size());
        stats.grad_norm_sum[1] = 1.0;
        stats.count[1] = 1;
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, 9);
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == DensifyActionKind::split);
        CHECK(r.cloud.size() == cloud.size() + 1);  // parent out, two children in
    }

    SUBCASE("coincident clone candidates merge") {
        GaussianCloud cloud = near_template_cloud(tmpl, 4, rng);
        cloud.gaussians[3] = cloud.gaussians[0];  // identical pair, KL = 0
        DensifyStats stats;
        stats.resize(cloud.size());
        stats.grad_norm_sum[0] = stats.grad_norm_sum[3] = 1.0;
        stats.count[0] = stats.count[3] = 1;
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, 9);
        REQUIRE(r.actions.size() == 1);
        CHECK(r.actions[0].kind == DensifyActionKind::merge);
        CHECK(r.actions[0].index == 0);
        CHECK(r.actions[0].other == 3);
        CHECK(r.cloud.size() == cloud.size() - 1);
        // averaged fields
        bool found_merged = false;
        for (size_t i = 0; i < r.cloud.size(); ++i) {
            if (r.source_index[i] == -1) {
                found_merged = true;
                CHECK((r.cloud.gaussians[i].mean -
                       0.5 * (cloud.gaussians[0].mean + cloud.gaussians[3].mean))
                          .norm() < 1e-15);
            }
        }
        CHECK(found_merged);
    }

    SUBCASE("low opacity and far-from-surface points are pruned") {
        GaussianCloud cloud = near_template_cloud(tmpl, 5, rng);
        cloud.gaussians[1].opacity_logit = logit(0.001);
        cloud.gaussians[4].mean = Vec3(100, 100, 100);
        DensifyStats stats;
        stats.resize(cloud.size());
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, 9);
        CHECK(r.prunes == 2);
        CHECK(r.cloud.size() == 3);
    }
}

TEST_CASE("densify_step bookkeeping invariants") {
    Rng rng(77);
    const auto tmpl = chain_template(8);
    const DensifyConfig cfg = test_config();
    for (int rep = 0; rep < 20; ++rep) {
        GaussianCloud cloud = near_template_cloud(tmpl, 12, rng);
        DensifyStats stats;
        stats.resize(cloud.size());
        for (size_t i = 0; i < cloud.size(); ++i) {
            if (rng.uniform() < 0.4) {
                stats.grad_norm_sum[i] = rng.uniform(0.0, 2e-3);
                stats.count[i] = 1 + rng.uniform_int(0, 3);
            }
            if (rng.uniform() < 0.2) cloud.gaussians[i].opacity_logit = logit(0.001);
            if (rng.uniform() < 0.3)
                cloud.gaussians[i].log_scale = Vec3::Constant(std::log(0.2));
        }
        const DensifyResult r = densify_step(cloud, stats, cfg, tmpl, rep);
        // reconciliation identity, exact
        CHECK(static_cast<int>(r.cloud.size()) ==
              static_cast<int>(cloud.size()) + r.splits + r.clones - r.merges - r.prunes);
        CHECK(r.cloud.visibility_weights.size() == r.cloud.size());
        CHECK(r.source_index.size() == r.cloud.size());

        // no Gaussian appears in two actions
        std::vector<int> seen_in_action;
        for (const auto& a : r.actions) {
            seen_in_action.push_back(a.index);
            if (a.other >= 0) seen_in_action.push_back(a.other);
        }
        std::sort(seen_in_action.begin(), seen_in_action.end());
        CHECK(std::adjacent_find(seen_in_action.begin(), seen_in_action.end()) ==
              seen_in_action.end());

        // determinism
        const DensifyResult again = densify_step(cloud, stats, cfg, tmpl, rep);
        CHECK(again.cloud.size() == r.cloud.size());
        for (size_t i = 0; i < r.cloud.size(); ++i)
            CHECK(again.cloud.gaussians[i].mean == r.cloud.gaussians[i].mean);
    }
}
