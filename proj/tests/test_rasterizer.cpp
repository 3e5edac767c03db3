#include "occsplat/rasterizer.hpp"
#include "occsplat/threading.hpp"
#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <numeric>

using namespace occsplat;
using namespace occsplat::test;

TEST_CASE("project_point pinhole closed forms") {
    Camera cam = make_camera(100, 100, 100.0);
    cam.cx = cam.cy = 50.0;

    const auto on_axis = project_point(cam, Vec3(0, 0, 2));
    CHECK(!on_axis.culled);
    CHECK(on_axis.pixel.x() == doctest::Approx(50.0));
    CHECK(on_axis.pixel.y() == doctest::Approx(50.0));
    CHECK(on_axis.depth == doctest::Approx(2.0));

    const auto off = project_point(cam, Vec3(1, 0, 2));
    CHECK(off.pixel.x() == doctest::Approx(100.0));
    CHECK(off.pixel.y() == doctest::Approx(50.0));

    CHECK(project_point(cam, Vec3(0.3, 0.1, 0.0)).culled);
    CHECK(project_point(cam, Vec3(0, 0, -1)).culled);
}

TEST_CASE("project_covariance") {
    Camera cam = make_camera(64, 64, 80.0);

    SUBCASE("symmetric for random inputs") {
        Rng rng(2);
        for (int i = 0; i < 100; ++i) {
            const Vec3 s(std::exp(rng.uniform(-3, 0)), std::exp(rng.uniform(-3, 0)),
                         std::exp(rng.uniform(-3, 0)));
            const Mat3 sigma = build_covariance(s, random_unit_quat(rng));
            const Vec3 mu(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(1.5, 4.0));
            const Mat2 out = project_covariance(cam, sigma, mu);
            CHECK(std::abs(out(0, 1) - out(1, 0)) < 1e-10);
        }
    }

    SUBCASE("on-axis isotropic closed form") {
        const double sigma = 0.05, z = 2.5;
        const Mat2 out = project_covariance(cam, sigma * sigma * Mat3::Identity(), Vec3(0, 0, z));
        const double expect = std::pow(cam.fx * sigma / z, 2);
        CHECK(out(0, 0) == doctest::Approx(expect + 0.3).epsilon(1e-10));
        CHECK(out(1, 1) == doctest::Approx(expect + 0.3).epsilon(1e-10));
        CHECK(std::abs(out(0, 1)) < 1e-12);
    }

    SUBCASE("doubling depth quarters the pre-floor covariance on-axis") {
        const Mat3 sigma = 0.01 * Mat3::Identity();
        Mat2 near = project_covariance(cam, sigma, Vec3(0, 0, 2));
        Mat2 far = project_covariance(cam, sigma, Vec3(0, 0, 4));
        near.diagonal().array() -= 0.3;
        far.diagonal().array() -= 0.3;
        CHECK(near(0, 0) == doctest::Approx(4.0 * far(0, 0)).epsilon(1e-10));
        CHECK(near(1, 1) == doctest::Approx(4.0 * far(1, 1)).epsilon(1e-10));
    }

    CHECK_THROWS(project_covariance(cam, Mat3::Identity(), Vec3(0, 0, -1)));
}

TEST_CASE("splat_alpha") {
    Splat2D s;
    s.center = Vec2(10, 10);
    s.cov2d = Mat2::Identity();
    s.alpha = 0.7;

    CHECK(splat_alpha(s, Vec2(10, 10)) == doctest::Approx(0.7));
    CHECK(splat_alpha(s, Vec2(11, 10)) == doctest::Approx(0.7 * std::exp(-0.5)));
    // Mahalanobis distance 10 is far below the 1/255 cutoff
    CHECK(splat_alpha(s, Vec2(20, 10)) == 0.0);

    Splat2D degenerate = s;
    degenerate.cov2d = Mat2::Zero();
    CHECK_THROWS(splat_alpha(degenerate, Vec2(10, 10)));
}

TEST_CASE("composite closed forms") {
    using Contribution = std::pair<Vec3, double>;

    std::vector<Contribution> opaque = {{Vec3(0.3, 0.5, 0.9), 1.0}};
    auto got = composite(opaque);
    CHECK((got.color - Vec3(0.3, 0.5, 0.9)).norm() < 1e-15);
    CHECK(got.alpha == doctest::Approx(1.0));

    std::vector<Contribution> two = {{Vec3(1, 0, 0), 0.5}, {Vec3(0, 1, 0), 0.5}};
    got = composite(two);
    CHECK((got.color - Vec3(0.5, 0.25, 0.0)).norm() < 1e-15);
    CHECK(got.alpha == doctest::Approx(0.75));

    got = composite(std::vector<Contribution>{});
    CHECK(got.color == Vec3::Zero());
    CHECK(got.alpha == 0.0);
}

TEST_CASE("render basics") {
    Camera cam = make_camera(32, 32, 40.0);

    SUBCASE("empty cloud renders black") {
        GaussianCloud cloud;
        cloud.space_tag = SpaceTag::posed;
        const RenderOutput out = render(cloud, cam);
        CHECK(*std::max_element(out.color.data.begin(), out.color.data.end()) == 0.0);
        CHECK(*std::max_element(out.alpha.data.begin(), out.alpha.data.end()) == 0.0);
    }

    SUBCASE("single on-axis Gaussian") {
        Camera odd = make_camera(33, 33, 40.0);  // integer cx = cy = 16
        GaussianCloud cloud;
        cloud.space_tag = SpaceTag::posed;
        Gaussian g;
        g.mean = Vec3(0, 0, 2);
        g.log_scale = Vec3::Constant(std::log(0.05));
        g.opacity_logit = logit(0.9);
        g.sh.setZero();
        g.sh(0, 0) = 2.0;  // red-ish DC
        cloud.push_back(g);
        const RenderOutput out = render(cloud, odd);
        const Vec3 dir = (odd.center() - g.mean).normalized();
        const Vec3 expect_color = eval_sh(g.sh, dir);
        CHECK(out.alpha.at(16, 16) == doctest::Approx(0.9).epsilon(1e-9));
        CHECK(out.color.at(16, 16, 0) == doctest::Approx(expect_color[0] * 0.9).epsilon(1e-9));
        CHECK(out.color.at(16, 16, 1) == doctest::Approx(0.0).epsilon(1e-12));
    }

    SUBCASE("canonical cloud is rejected") {
        GaussianCloud cloud;
        cloud.space_tag = SpaceTag::canonical;
        CHECK_THROWS(render(cloud, cam));
    }
}

TEST_CASE("render matches the brute-force oracle") {
    Rng rng(123);
    Camera cam = make_camera(64, 64, 70.0);
    for (int rep = 0; rep < 5; ++rep) {
        const GaussianCloud cloud = random_scene(rng, 64);
        const RenderOutput tiled = render(cloud, cam);
        const RenderOutput ref = brute_force_render(cloud, cam);
        CHECK(max_image_diff(tiled.color, ref.color) < 1e-5);
        CHECK(max_image_diff(tiled.alpha, ref.alpha) < 1e-5);
    }
}

TEST_CASE("tile size never changes the output") {
    Rng rng(321);
    Camera cam = make_camera(48, 48, 50.0);
    const GaussianCloud cloud = random_scene(rng, 40);
    RenderOptions small_tiles{.training = false, .tile_size = 8};
    RenderOptions one_tile{.training = false, .tile_size = 4096};
    const RenderOutput a = render(cloud, cam, small_tiles);
    const RenderOutput b = render(cloud, cam, one_tile);
    CHECK(max_image_diff(a.color, b.color) < 1e-5);
    CHECK(max_image_diff(a.alpha, b.alpha) < 1e-5);
}

TEST_CASE("render_subset") {
    Rng rng(55);
    Camera cam = make_camera(32, 32, 40.0);
    const GaussianCloud cloud = random_scene(rng, 20);

    SUBCASE("full index set equals render bitwise") {
        std::vector<int> all(cloud.size());
        std::iota(all.begin(), all.end(), 0);
        const RenderOutput a = render(cloud, cam);
        const RenderOutput b = render_subset(cloud, all, cam);
        CHECK(a.color.data == b.color.data);
        CHECK(a.alpha.data == b.alpha.data);
    }

    SUBCASE("empty index set renders black") {
        const RenderOutput out = render_subset(cloud, std::vector<int>{}, cam);
        CHECK(*std::max_element(out.alpha.data.begin(), out.alpha.data.end()) == 0.0);
    }

    SUBCASE("subset equals the filtered cloud") {
        std::vector<int> half;
        for (size_t i = 0; i < cloud.size(); i += 2) half.push_back(static_cast<int>(i));
        GaussianCloud filtered;
        filtered.space_tag = SpaceTag::posed;
        for (int i : half) filtered.push_back(cloud.gaussians[i]);
        const RenderOutput a = render_subset(cloud, half, cam);
        const RenderOutput b = render(filtered, cam);
        CHECK(a.color.data == b.color.data);
        CHECK(a.alpha.data == b.alpha.data);
    }

    SUBCASE("out-of-range index throws") {
        CHECK_THROWS(render_subset(cloud, std::vector<int>{static_cast<int>(cloud.size())}, cam));
    }
}

TEST_CASE("alpha is monotone in any single opacity") {
    Rng rng(77);
    Camera cam = make_camera(24, 24, 30.0);
    GaussianCloud cloud = random_scene(rng, 12);
    const RenderOutput base = render(cloud, cam);
    for (int rep = 0; rep < 6; ++rep) {
        GaussianCloud bumped = cloud;
        bumped.gaussians[rep].opacity_logit += 0.8;
        const RenderOutput out = render(bumped, cam);
        double total_base = std::accumulate(base.alpha.data.begin(), base.alpha.data.end(), 0.0);
        double total_new = std::accumulate(out.alpha.data.begin(), out.alpha.data.end(), 0.0);
        CHECK(total_new >= total_base - 1e-12);
        for (size_t i = 0; i < out.alpha.data.size(); ++i)
            CHECK(out.alpha.data[i] >= base.alpha.data[i] - 1e-12);
    }
}

TEST_CASE("render is deterministic across runs and worker counts") {
    Rng rng(88);
    Camera cam = make_camera(40, 40, 45.0);
    const GaussianCloud cloud = random_scene(rng, 30);

    set_worker_count(1);
    const RenderOutput serial = render(cloud, cam);
    set_worker_count(4);
    const RenderOutput threaded = render(cloud, cam);
    const RenderOutput threaded2 = render(cloud, cam);
    set_worker_count(0);

    CHECK(serial.color.data == threaded.color.data);
    CHECK(serial.alpha.data == threaded.alpha.data);
    CHECK(threaded.color.data == threaded2.color.data);
}

TEST_CASE("permuting cloud order changes nothing beyond 1e-6") {
    Rng rng(99);
    Camera cam = make_camera(32, 32, 40.0);
    const GaussianCloud cloud = random_scene(rng, 25);
    GaussianCloud shuffled;
    shuffled.space_tag = SpaceTag::posed;
    std::vector<int> perm(cloud.size());
    std::iota(perm.begin(), perm.end(), 0);
    for (size_t i = perm.size(); i > 1; --i)
        std::swap(perm[i - 1], perm[rng.uniform_int(0, static_cast<int>(i) - 1)]);
    for (int i : perm) shuffled.push_back(cloud.gaussians[i]);

    const RenderOutput a = render(cloud, cam);
    const RenderOutput b = render(shuffled, cam);
    CHECK(max_image_diff(a.color, b.color) < 1e-6);
    CHECK(max_image_diff(a.alpha, b.alpha) < 1e-6);
}
