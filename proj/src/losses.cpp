#include "occsplat/losses.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace occsplat {

namespace {

void check_dims(int h0, int w0, int h1, int w1) {
    if (h0 != h1 || w0 != w1) throw std::invalid_argument("image dimension mismatch");
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

double l_rgb(const Image3& pred, const Image3& gt) {
    check_dims(pred.height, pred.width, gt.height, gt.width);
    double acc = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) acc += std::abs(pred.data[i] - gt.data[i]);
    return acc / static_cast<double>(pred.size());
}

Image3 l_rgb_backward(const Image3& pred, const Image3& gt) {
    check_dims(pred.height, pred.width, gt.height, gt.width);
    Image3 d(pred.height, pred.width);
    const double scale = 1.0 / static_cast<double>(pred.size());
    for (size_t i = 0; i < pred.size(); ++i) d.data[i] = sign(pred.data[i] - gt.data[i]) * scale;
    return d;
}

double l_mask(const Image1& pred_alpha, const Mask& gt) {
    check_dims(pred_alpha.height, pred_alpha.width, gt.height, gt.width);
    double acc = 0.0;
    for (size_t i = 0; i < pred_alpha.size(); ++i) {
        const double diff = pred_alpha.data[i] - static_cast<double>(gt.data[i]);
        acc += diff * diff;
    }
    return acc / static_cast<double>(pred_alpha.size());
}

Image1 l_mask_backward(const Image1& pred_alpha, const Mask& gt) {
    check_dims(pred_alpha.height, pred_alpha.width, gt.height, gt.width);
    Image1 d(pred_alpha.height, pred_alpha.width);
    const double scale = 2.0 / static_cast<double>(pred_alpha.size());
    for (size_t i = 0; i < pred_alpha.size(); ++i)
        d.data[i] = scale * (pred_alpha.data[i] - static_cast<double>(gt.data[i]));
    return d;
}

namespace {

constexpr int kWindow = 11;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

const std::vector<double>& ssim_window() {
    static const std::vector<double> w = [] {
        std::vector<double> k(kWindow);
        const double sigma = 1.5;
        double sum = 0.0;
        for (int i = 0; i < kWindow; ++i) {
            const double d = i - (kWindow - 1) / 2.0;
            k[i] = std::exp(-0.5 * d * d / (sigma * sigma));
            sum += k[i];
        }
        for (double& v : k) v /= sum;
        return k;
    }();
    return w;
}

struct SsimMoments {
    double m1x, m1y, m2x, m2y, mxy;
};

// Windowed raw moments at a valid position (y0, x0 = top-left corner).
SsimMoments window_moments(const Image3& a, const Image3& b, int c, int y0, int x0) {
    const auto& w = ssim_window();
    SsimMoments m{0, 0, 0, 0, 0};
    for (int dy = 0; dy < kWindow; ++dy) {
        for (int dx = 0; dx < kWindow; ++dx) {
            const double weight = w[dy] * w[dx];
            const double x = a.at(y0 + dy, x0 + dx, c);
            const double y = b.at(y0 + dy, x0 + dx, c);
            m.m1x += weight * x;
            m.m1y += weight * y;
            m.m2x += weight * x * x;
            m.m2y += weight * y * y;
            m.mxy += weight * x * y;
        }
    }
    return m;
}

double ssim_at(const SsimMoments& m) {
    const double sx = m.m2x - m.m1x * m.m1x;
    const double sy = m.m2y - m.m1y * m.m1y;
    const double sxy = m.mxy - m.m1x * m.m1y;
    const double a1 = 2.0 * m.m1x * m.m1y + kSsimC1;
    const double a2 = 2.0 * sxy + kSsimC2;
    const double b1 = m.m1x * m.m1x + m.m1y * m.m1y + kSsimC1;
    const double b2 = sx + sy + kSsimC2;
    return (a1 * a2) / (b1 * b2);
}

}  // namespace

double ssim(const Image3& a, const Image3& b) {
    check_dims(a.height, a.width, b.height, b.width);
    if (a.height < kWindow || a.width < kWindow)
        throw std::invalid_argument("image smaller than the SSIM window");
    const int ny = a.height - kWindow + 1;
    const int nx = a.width - kWindow + 1;
    double acc = 0.0;
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < ny; ++y)
            for (int x = 0; x < nx; ++x) acc += ssim_at(window_moments(a, b, c, y, x));
    return acc / (3.0 * ny * nx);
}

Image3 ssim_backward(const Image3& a, const Image3& b) {
    check_dims(a.height, a.width, b.height, b.width);
    if (a.height < kWindow || a.width < kWindow)
        throw std::invalid_argument("image smaller than the SSIM window");
    const int ny = a.height - kWindow + 1;
    const int nx = a.width - kWindow + 1;
    const double norm = 1.0 / (3.0 * ny * nx);
    const auto& w = ssim_window();
    Image3 grad(a.height, a.width, 0.0);

    for (int c = 0; c < 3; ++c) {
        for (int y = 0; y < ny; ++y) {
            for (int x = 0; x < nx; ++x) {
                const SsimMoments m = window_moments(a, b, c, y, x);
                const double sx = m.m2x - m.m1x * m.m1x;
                const double sy = m.m2y - m.m1y * m.m1y;
                const double sxy = m.mxy - m.m1x * m.m1y;
                const double a1 = 2.0 * m.m1x * m.m1y + kSsimC1;
                const double a2 = 2.0 * sxy + kSsimC2;
                const double b1 = m.m1x * m.m1x + m.m1y * m.m1y + kSsimC1;
                const double b2 = sx + sy + kSsimC2;
                const double denom = b1 * b2;
                // Partials w.r.t. (mu_x, sigma_x^2, sigma_xy), then chained
                // to the raw moments m1x, m2x, mxy.
                const double d_mu = (2.0 * m.m1y * a2) / denom -
                                    (a1 * a2 * 2.0 * m.m1x) / (b1 * denom);
                const double d_sx = -(a1 * a2) / (b2 * denom);
                const double d_sxy = 2.0 * a1 / denom;
                const double d_m1x = d_mu - 2.0 * m.m1x * d_sx - m.m1y * d_sxy;
                const double d_m2x = d_sx;
                const double d_mxy = d_sxy;
                for (int dy = 0; dy < kWindow; ++dy) {
                    for (int dx = 0; dx < kWindow; ++dx) {
                        const double weight = w[dy] * w[dx] * norm;
                        const double xv = a.at(y + dy, x + dx, c);
                        const double yv = b.at(y + dy, x + dx, c);
                        grad.at(y + dy, x + dx, c) +=
                            weight * (d_m1x + 2.0 * xv * d_m2x + yv * d_mxy);
                    }
                }
            }
        }
    }
    return grad;
}

double l_occ(const Image1& rendered_occ_alpha, const Mask& alpha_occ) {
    check_dims(rendered_occ_alpha.height, rendered_occ_alpha.width, alpha_occ.height,
               alpha_occ.width);
    double acc = 0.0;
    for (size_t i = 0; i < rendered_occ_alpha.size(); ++i) {
        const double diff = rendered_occ_alpha.data[i] - static_cast<double>(alpha_occ.data[i]);
        acc += diff * diff;
    }
    return acc / static_cast<double>(rendered_occ_alpha.size());
}

Image1 l_occ_backward(const Image1& rendered_occ_alpha, const Mask& alpha_occ) {
    check_dims(rendered_occ_alpha.height, rendered_occ_alpha.width, alpha_occ.height,
               alpha_occ.width);
    Image1 d(rendered_occ_alpha.height, rendered_occ_alpha.width);
    const double scale = 2.0 / static_cast<double>(rendered_occ_alpha.size());
    for (size_t i = 0; i < d.size(); ++i)
        d.data[i] = scale * (rendered_occ_alpha.data[i] - static_cast<double>(alpha_occ.data[i]));
    return d;
}

ConsistencyGrad l_con_with_grad(const Image3& pred_color, const Image1& pred_alpha,
                                const Image3& gt_color, const Mask& gt_mask, double lambda_con) {
    check_dims(pred_color.height, pred_color.width, gt_color.height, gt_color.width);
    check_dims(pred_alpha.height, pred_alpha.width, gt_mask.height, gt_mask.width);
    check_dims(pred_color.height, pred_color.width, gt_mask.height, gt_mask.width);

    ConsistencyGrad out;
    out.d_color = Image3(pred_color.height, pred_color.width, 0.0);
    out.d_alpha = Image1(pred_alpha.height, pred_alpha.width, 0.0);

    const size_t n_fg = gt_mask.count();
    double color_term = 0.0;
    if (n_fg > 0) {
        const double scale = 1.0 / (3.0 * static_cast<double>(n_fg));
        for (int y = 0; y < pred_color.height; ++y) {
            for (int x = 0; x < pred_color.width; ++x) {
                if (!gt_mask.at(y, x)) continue;
                for (int c = 0; c < 3; ++c) {
                    const double diff = pred_color.at(y, x, c) - gt_color.at(y, x, c);
                    color_term += std::abs(diff) * scale;
                    out.d_color.at(y, x, c) = sign(diff) * scale;
                }
            }
        }
    }

    double mask_term = 0.0;
    const double mscale = 1.0 / static_cast<double>(pred_alpha.size());
    for (int y = 0; y < pred_alpha.height; ++y) {
        for (int x = 0; x < pred_alpha.width; ++x) {
            const double diff = pred_alpha.at(y, x) - static_cast<double>(gt_mask.at(y, x));
            mask_term += diff * diff * mscale;
            out.d_alpha.at(y, x) = lambda_con * 2.0 * diff * mscale;
        }
    }

    out.value = color_term + lambda_con * mask_term;
    return out;
}

double l_con(const Image3& pred_color, const Image1& pred_alpha, const Image3& gt_color,
             const Mask& gt_mask, double lambda_con) {
    return l_con_with_grad(pred_color, pred_alpha, gt_color, gt_mask, lambda_con).value;
}

double total_loss(const LossBreakdown& parts, const LossWeights& weights) {
    return parts.rgb + weights.lambda_mask * parts.mask + weights.lambda_ssim * parts.ssim +
           weights.lambda_lpips * 0.0 + weights.lambda_occ * parts.occ + parts.con;
}

}  // namespace occsplat
