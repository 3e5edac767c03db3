#include "occsplat/rasterizer.hpp"
#include "occsplat/threading.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace occsplat;
using namespace occsplat::test;

namespace {

double weighted_sum(const RenderOutput& out, const Image3& u, const Image1& v) {
    double acc = 0.0;
    for (size_t i = 0; i < out.color.size(); ++i) acc += out.color.data[i] * u.data[i];
    for (size_t i = 0; i < out.alpha.size(); ++i) acc += out.alpha.data[i] * v.data[i];
    return acc;
}

// Applies fn to every raw parameter of the cloud: fn(value reference, analytic gradient).
template <typename Fn>
void for_each_param(GaussianCloud& cloud, const std::vector<GaussianGrad>& grads, Fn&& fn) {
    for (size_t i = 0; i < cloud.size(); ++i) {
        Gaussian& g = cloud.gaussians[i];
        const GaussianGrad& gr = grads[i];
        for (int c = 0; c < 3; ++c) fn(g.mean[c], gr.d_mean[c]);
        for (int c = 0; c < 3; ++c) fn(g.log_scale[c], gr.d_log_scale[c]);
        for (int c = 0; c < 4; ++c) fn(g.rotation[c], gr.d_rotation[c]);
        fn(g.opacity_logit, gr.d_opacity_logit);
        for (int c = 0; c < 3; ++c)
            for (int k = 0; k < kShCount; ++k) fn(g.sh(c, k), gr.d_sh(c, k));
    }
}

FdCheckResult check_render_gradients(Rng& rng, int n_gaussians, int resolution) {
    Camera cam = make_camera(resolution, resolution, resolution * 1.2);
    GaussianCloud cloud = random_scene(rng, n_gaussians);

    Image3 u(resolution, resolution);
    Image1 v(resolution, resolution);
    for (auto& x : u.data) x = rng.uniform(-1, 1);
    for (auto& x : v.data) x = rng.uniform(-1, 1);

    RenderOptions training{.training = true};
    const RenderOutput out = render(cloud, cam, training);
    const auto grads = render_backward(cloud, cam, out, u, v);

    const double h = 1e-4;
    FdCheckResult result;
    for_each_param(cloud, grads, [&](double& value, double analytic) {
        const double saved = value;
        value = saved + h;
        const double plus = weighted_sum(render(cloud, cam), u, v);
        value = saved - h;
        const double minus = weighted_sum(render(cloud, cam), u, v);
        value = saved;
        const double numeric = (plus - minus) / (2.0 * h);
        ++result.checked;
        if (grad_close(analytic, numeric, 1e-3, 1e-6)) ++result.passed;
    });
    return result;
}

}  // namespace

TEST_CASE("render_backward matches central finite differences") {
    Rng rng(2024);
    for (int scene = 0; scene < 3; ++scene) {
        const FdCheckResult r = check_render_gradients(rng, 8, 8);
        CAPTURE(scene);
        CAPTURE(r.checked);
        CHECK(r.fraction() >= 0.95);
    }
}

TEST_CASE("zero upstream gradient gives zero parameter gradients") {
    Rng rng(11);
    Camera cam = make_camera(8, 8, 10.0);
    GaussianCloud cloud = random_scene(rng, 6);
    RenderOptions training{.training = true};
    const RenderOutput out = render(cloud, cam, training);
    const auto grads =
        render_backward(cloud, cam, out, Image3(8, 8, 0.0), Image1(8, 8, 0.0));
    for (const auto& g : grads) {
        CHECK(g.d_mean.norm() == 0.0);
        CHECK(g.d_log_scale.norm() == 0.0);
        CHECK(g.d_rotation.norm() == 0.0);
        CHECK(g.d_opacity_logit == 0.0);
        CHECK(g.d_sh.cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("opacity gradient of mean alpha is positive") {
    Camera cam = make_camera(16, 16, 20.0);
    GaussianCloud cloud;
    cloud.space_tag = SpaceTag::posed;
    Gaussian g;
    g.mean = Vec3(0, 0, 2);
    g.log_scale = Vec3::Constant(std::log(0.08));
    g.opacity_logit = 0.0;
    cloud.push_back(g);

    RenderOptions training{.training = true};
    const RenderOutput out = render(cloud, cam, training);
    const double n = 16.0 * 16.0;
    Image1 v(16, 16, 1.0 / n);  // d(mean alpha)/d(alpha image)
    const auto grads = render_backward(cloud, cam, out, Image3(16, 16, 0.0), v);
    CHECK(grads[0].d_opacity_logit > 0.0);
}

TEST_CASE("backward without a training-mode render throws") {
    Camera cam = make_camera(8, 8, 10.0);
    GaussianCloud cloud;
    cloud.space_tag = SpaceTag::posed;
    const RenderOutput out = render(cloud, cam);  // not training mode
    CHECK(out.record == nullptr);
    CHECK_THROWS(render_backward(cloud, cam, out, Image3(8, 8, 0.0), Image1(8, 8, 0.0)));
}

TEST_CASE("backward is deterministic across worker counts") {
    Rng rng(31);
    Camera cam = make_camera(32, 32, 40.0);
    GaussianCloud cloud = random_scene(rng, 20);
    Image3 u(32, 32);
    Image1 v(32, 32);
    for (auto& x : u.data) x = rng.uniform(-1, 1);
    for (auto& x : v.data) x = rng.uniform(-1, 1);
    RenderOptions training{.training = true};
    const RenderOutput out = render(cloud, cam, training);

    set_worker_count(1);
    const auto serial = render_backward(cloud, cam, out, u, v);
    set_worker_count(4);
    const auto threaded = render_backward(cloud, cam, out, u, v);
    set_worker_count(0);
    for (size_t i = 0; i < serial.size(); ++i) {
        CHECK(serial[i].d_mean == threaded[i].d_mean);
        CHECK(serial[i].d_log_scale == threaded[i].d_log_scale);
        CHECK(serial[i].d_rotation == threaded[i].d_rotation);
        CHECK(serial[i].d_opacity_logit == threaded[i].d_opacity_logit);
        CHECK(serial[i].d_sh == threaded[i].d_sh);
    }
}
