#include "occsplat/losses.hpp"
#include "occsplat/rng.hpp"
#include "test_support.hpp"

#include <doctest.h>

using namespace occsplat;
using namespace occsplat::test;

namespace {

Image3 random_image(Rng& rng, int h, int w) {
    Image3 img(h, w);
    for (auto& v : img.data) v = rng.uniform(0, 1);
    return img;
}

}  // namespace

TEST_CASE("l_rgb") {
    Rng rng(1);
    const Image3 a = random_image(rng, 4, 4);
    CHECK(l_rgb(a, a) == 0.0);

    Image3 b = a;
    for (auto& v : b.data) v += 0.25;
    CHECK(l_rgb(b, a) == doctest::Approx(0.25).epsilon(1e-12));

    const Image3 c = random_image(rng, 4, 4);
    double expect = 0.0;
    for (size_t i = 0; i < a.size(); ++i) expect += std::abs(a.data[i] - c.data[i]);
    CHECK(l_rgb(a, c) == doctest::Approx(expect / a.size()).epsilon(1e-12));

    CHECK_THROWS(l_rgb(a, random_image(rng, 4, 5)));
}

TEST_CASE("l_mask") {
    Image1 perfect(4, 4, 1.0);
    Mask ones(4, 4, 1);
    CHECK(l_mask(perfect, ones) == 0.0);

    Image1 half(4, 4, 0.5);
    CHECK(l_mask(half, ones) == doctest::Approx(0.25).epsilon(1e-12));

    Rng rng(2);
    Image1 pred(4, 4);
    Mask gt(4, 4);
    for (auto& v : pred.data) v = rng.uniform(0, 1);
    for (auto& v : gt.data) v = rng.uniform() < 0.5 ? 0 : 1;
    double expect = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.data[i] - gt.data[i];
        expect += d * d;
    }
    CHECK(l_mask(pred, gt) == doctest::Approx(expect / pred.size()).epsilon(1e-12));

    Mask wrong(3, 4, 0);
    CHECK_THROWS(l_mask(pred, wrong));
}

TEST_CASE("ssim") {
    Rng rng(3);

    SUBCASE("self similarity is 1") {
        const Image3 a = random_image(rng, 16, 16);
        CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-9));
    }

    SUBCASE("symmetry") {
        const Image3 a = random_image(rng, 16, 16);
        const Image3 b = random_image(rng, 16, 16);
        CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-9));
    }

    SUBCASE("constant black vs constant white is tiny") {
        Image3 black(16, 16, 0.0), white(16, 16, 1.0);
        const double v = ssim(black, white);
        CHECK(v < 0.01);
        CHECK(v > 0.0);
        // closed form: C1/(1 + C1) for equal-variance constant images
        CHECK(v == doctest::Approx(1e-4 / (1.0 + 1e-4)).epsilon(1e-9));
    }

    SUBCASE("checkerboard vs its inverse is negative") {
        Image3 a(16, 16), b(16, 16);
        for (int y = 0; y < 16; ++y)
            for (int x = 0; x < 16; ++x)
                for (int c = 0; c < 3; ++c) {
                    const double v = ((x + y) % 2 == 0) ? 1.0 : 0.0;
                    a.at(y, x, c) = v;
                    b.at(y, x, c) = 1.0 - v;
                }
        CHECK(ssim(a, b) < 0.0);
    }

    SUBCASE("image smaller than the window throws") {
        Image3 tiny(8, 8, 0.5);
        CHECK_THROWS(ssim(tiny, tiny));
    }
}

TEST_CASE("ssim_backward matches finite differences") {
    Rng rng(4);
    Image3 a = random_image(rng, 13, 14);
    const Image3 b = random_image(rng, 13, 14);
    const Image3 grad = ssim_backward(a, b);
    const double h = 1e-6;
    for (int rep = 0; rep < 30; ++rep) {
        const int y = rng.uniform_int(0, 12);
        const int x = rng.uniform_int(0, 13);
        const int c = rng.uniform_int(0, 2);
        const double saved = a.at(y, x, c);
        a.at(y, x, c) = saved + h;
        const double plus = ssim(a, b);
        a.at(y, x, c) = saved - h;
        const double minus = ssim(a, b);
        a.at(y, x, c) = saved;
        const double num = (plus - minus) / (2 * h);
        CHECK(grad_close(grad.at(y, x, c), num, 1e-4, 1e-10));
    }
}

TEST_CASE("l_occ") {
    Image1 alpha(4, 4, 0.0);
    Mask occ(4, 4, 0);
    CHECK(l_occ(alpha, occ) == 0.0);

    // empty target: loss is the mean squared alpha
    Rng rng(5);
    for (auto& v : alpha.data) v = rng.uniform(0, 1);
    double expect = 0.0;
    for (double v : alpha.data) expect += v * v;
    CHECK(l_occ(alpha, occ) == doctest::Approx(expect / alpha.size()).epsilon(1e-12));

    // hand 4x4 grid
    Mask target(4, 4, 0);
    target.at(1, 1) = target.at(2, 2) = 1;
    expect = 0.0;
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 4; ++x) {
            const double d = alpha.at(y, x) - target.at(y, x);
            expect += d * d;
        }
    CHECK(l_occ(alpha, target) == doctest::Approx(expect / 16.0).epsilon(1e-12));

    Mask wrong(4, 3, 0);
    CHECK_THROWS(l_occ(alpha, wrong));
}

TEST_CASE("l_con") {
    SUBCASE("empty render against background ground truth is zero") {
        Image3 black(6, 6, 0.0);
        Image1 zero_alpha(6, 6, 0.0);
        Image3 gt(6, 6, 0.7);  // color outside the mask must not matter
        Mask no_fg(6, 6, 0);
        CHECK(l_con(black, zero_alpha, gt, no_fg, 0.1) == 0.0);
    }

    SUBCASE("exact prediction is zero") {
        Rng rng(6);
        Image3 gt = random_image(rng, 6, 6);
        Mask fg(6, 6, 0);
        for (auto& v : fg.data) v = rng.uniform() < 0.5 ? 1 : 0;
        Image1 alpha(6, 6);
        for (size_t i = 0; i < alpha.size(); ++i) alpha.data[i] = fg.data[i];
        CHECK(l_con(gt, alpha, gt, fg, 0.1) == 0.0);
    }

    SUBCASE("hand-composed evaluation") {
        Image3 pred(4, 4, 0.25), gt(4, 4, 0.5);
        Image1 alpha(4, 4, 0.4);
        Mask fg(4, 4, 0);
        fg.at(0, 0) = fg.at(3, 3) = 1;
        // color: |0.25-0.5| on 2 fg pixels; alpha: (0.4-1)^2 on 2, (0.4)^2 on 14
        const double color = 0.25;
        const double mse = (2 * 0.36 + 14 * 0.16) / 16.0;
        CHECK(l_con(pred, alpha, gt, fg, 0.1) == doctest::Approx(color + 0.1 * mse).epsilon(1e-12));
    }

    SUBCASE("gradients match finite differences") {
        Rng rng(7);
        Image3 pred = random_image(rng, 5, 5);
        Image3 gt = random_image(rng, 5, 5);
        Image1 alpha(5, 5);
        for (auto& v : alpha.data) v = rng.uniform(0, 1);
        Mask fg(5, 5, 0);
        for (auto& v : fg.data) v = rng.uniform() < 0.6 ? 1 : 0;

        const ConsistencyGrad cg = l_con_with_grad(pred, alpha, gt, fg, 0.1);
        const double h = 1e-6;
        for (int rep = 0; rep < 20; ++rep) {
            const size_t i = static_cast<size_t>(rng.uniform_int(0, 74));
            const double saved = pred.data[i];
            pred.data[i] = saved + h;
            const double plus = l_con(pred, alpha, gt, fg, 0.1);
            pred.data[i] = saved - h;
            const double minus = l_con(pred, alpha, gt, fg, 0.1);
            pred.data[i] = saved;
            CHECK(grad_close(cg.d_color.data[i], (plus - minus) / (2 * h), 1e-4, 1e-9));
        }
        for (int rep = 0; rep < 20; ++rep) {
            const size_t i = static_cast<size_t>(rng.uniform_int(0, 24));
            const double saved = alpha.data[i];
            alpha.data[i] = saved + h;
            const double plus = l_con(pred, alpha, gt, fg, 0.1);
            alpha.data[i] = saved - h;
            const double minus = l_con(pred, alpha, gt, fg, 0.1);
            alpha.data[i] = saved;
            CHECK(grad_close(cg.d_alpha.data[i], (plus - minus) / (2 * h), 1e-4, 1e-9));
        }
    }
}

TEST_CASE("total_loss") {
    LossWeights w;  // all lambdas 0.1

    LossBreakdown zero;
    CHECK(total_loss(zero, w) == 0.0);

    LossBreakdown only_rgb;
    only_rgb.rgb = 1.0;
    CHECK(total_loss(only_rgb, w) == 1.0);

    LossBreakdown parts;
    parts.rgb = 0.2;
    parts.mask = 0.1;
    parts.ssim = 0.3;
    parts.occ = 0.4;
    parts.con = 0.05;
    CHECK(total_loss(parts, w) == doctest::Approx(0.33).epsilon(1e-12));

    // monotone in each part
    LossBreakdown bumped = parts;
    bumped.occ += 0.5;
    CHECK(total_loss(bumped, w) > total_loss(parts, w));

    // reproducible from the breakdown
    parts.total = total_loss(parts, w);
    CHECK(std::abs(parts.total - (parts.rgb + 0.1 * parts.mask + 0.1 * parts.ssim +
                                  0.1 * parts.occ + parts.con)) < 1e-9);
}

TEST_CASE("losses are nonnegative and zero at the optimum") {
    Rng rng(8);
    const Image3 img = random_image(rng, 16, 16);
    Mask mask(16, 16, 0);
    for (auto& v : mask.data) v = rng.uniform() < 0.5 ? 1 : 0;
    Image1 alpha(16, 16);
    for (size_t i = 0; i < alpha.size(); ++i) alpha.data[i] = mask.data[i];

    CHECK(l_rgb(img, img) == 0.0);
    CHECK(l_mask(alpha, mask) == 0.0);
    CHECK(1.0 - ssim(img, img) == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(l_occ(alpha, mask) == 0.0);

    const Image3 other = random_image(rng, 16, 16);
    CHECK(l_rgb(img, other) >= 0.0);
    const double s = 1.0 - ssim(img, other);
    CHECK(s >= 0.0);
    CHECK(s <= 2.0);
}
