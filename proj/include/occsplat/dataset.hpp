#pragma once

#include "occsplat/camera.hpp"
#include "occsplat/image.hpp"
#include "occsplat/skinning.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace occsplat {

// One unit of training or test data.
struct Frame {
    Image3 rgb;
    Mask mask;
    Pose pose;
    Camera camera;
    int index = 0;
};

struct Dataset {
    ArticulatedTemplate tmpl;
    std::vector<Frame> train_frames;
    std::vector<Frame> test_frames;
};

// Procedurally textured articulated capsule figure (15 joints, 600
// template vertices by default) animated through a deterministic pose
// sequence. Ground truth comes from an analytic ray-capsule renderer,
// independent of the Gaussian rasterizer; masks are exact. Test frames
// reuse poses from the sequence under rotated cameras.
struct SyntheticOptions {
    int template_vertices = 600;
    int test_frame_count = 4;
};
Dataset generate_synthetic_dataset(std::uint64_t seed, int frame_count, int width, int height,
                                   const SyntheticOptions& opts = {});

// The mesh-side renderer, exposed for tests.
void render_figure(const ArticulatedTemplate& tmpl, const Pose& pose, const Camera& cam,
                   std::uint64_t texture_seed, Image3& rgb_out, Mask& mask_out);

// Stationary full-width rectangle centered at the mean row of the
// reference frame's valid pixels, sized so it hides
// occluded_fraction +- 0.01 of them; composited (neutral gray) onto the
// first ceil(frame_fraction * n) frames with their masks zeroed inside.
// Throws when the target fraction is unreachable.
void simulate_occlusion(std::vector<Frame>& frames, double occluded_fraction = 0.5,
                        double frame_fraction = 0.8);

// 1 - |visible AND body| / |body|; 0 = fully visible. Throws when the
// body reference is empty.
double occlusion_extent(const Mask& visible, const Mask& body_reference);

// -10 log10(MSE) on [0,1] images, capped at 99 dB for MSE < 1e-10.
double psnr(const Image3& pred, const Image3& gt);

// On-disk layout: manifest.txt, template.txt, frame_%04d.png,
// mask_%04d.png (train) and test_frame_%04d.png, test_mask_%04d.png.
void save_dataset(const std::string& dir, const Dataset& dataset);
Dataset load_dataset(const std::string& dir);

}  // namespace occsplat
