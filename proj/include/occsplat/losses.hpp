#pragma once

#include "occsplat/image.hpp"

namespace occsplat {

struct LossWeights {
    double lambda_mask = 0.1;   // lambda_1
    double lambda_ssim = 0.1;   // lambda_2
    double lambda_lpips = 0.0;  // lambda_3; hook only, no perceptual net
    double lambda_occ = 0.1;    // lambda_4
    double lambda_con = 0.1;    // weight of the mask term inside l_con
    double opacity_eps = 0.05;  // sub-threshold point selection
};

// The ssim field stores the loss-side part (1 - SSIM).
struct LossBreakdown {
    double rgb = 0, mask = 0, ssim = 0, occ = 0, con = 0, total = 0;
};

// Mean absolute difference over pixels and channels.
double l_rgb(const Image3& pred, const Image3& gt);
Image3 l_rgb_backward(const Image3& pred, const Image3& gt);

// Mean squared difference between the rendered alpha and the binary mask.
double l_mask(const Image1& pred_alpha, const Mask& gt);
Image1 l_mask_backward(const Image1& pred_alpha, const Mask& gt);

// Wang et al. SSIM: 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, mean over valid window positions and channels. Throws
// when the image is smaller than the window.
double ssim(const Image3& a, const Image3& b);
// d(ssim)/d(a).
Image3 ssim_backward(const Image3& a, const Image3& b);

// MSE between the occluded-subset rendered alpha and the occlusion mask.
double l_occ(const Image1& rendered_occ_alpha, const Mask& alpha_occ);
Image1 l_occ_backward(const Image1& rendered_occ_alpha, const Mask& alpha_occ);

// Consistency loss for the sub-threshold-opacity render: an L1 color
// term over foreground-gt pixels plus lambda_con times the alpha MSE
// over the full frame. The foreground masking keeps an empty render
// from being punished for background mismatch.
struct ConsistencyGrad {
    double value = 0.0;
    Image3 d_color;
    Image1 d_alpha;
};
double l_con(const Image3& pred_color, const Image1& pred_alpha, const Image3& gt_color,
             const Mask& gt_mask, double lambda_con);
ConsistencyGrad l_con_with_grad(const Image3& pred_color, const Image1& pred_alpha,
                                const Image3& gt_color, const Mask& gt_mask, double lambda_con);

// total = rgb + l1*mask + l2*ssim_part + l3*lpips(=0) + l4*occ + con.
double total_loss(const LossBreakdown& parts, const LossWeights& weights);

}  // namespace occsplat
