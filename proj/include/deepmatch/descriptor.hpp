#pragma once

#include "deepmatch/image.hpp"

namespace deepmatch {

inline constexpr int kDescriptorDim = 9;  // 8 orientations + regularizer slot

struct DescriptorParams {
    double smooth_pre = 1.0;      // image denoising radius, 0 disables
    double smooth_orient = 1.0;   // per-orientation-map radius
    double smooth_post = 1.0;     // radius applied after the sigmoid
    double sigmoid_slope = 0.2;   // caps strong gradients
    double regularizer = 0.3;     // constant 9th component before normalization

    // Preset for uncompressed (PNG-like) sources: no pre-smoothing and a
    // smaller regularizer.
    static DescriptorParams uncompressed() {
        DescriptorParams p;
        p.smooth_pre = 0.0;
        p.regularizer = 0.1;
        return p;
    }
};

// Per-pixel unit 9-vectors, all components non-negative: similarity of two
// pixels is their dot product, always in [0,1].
struct DescriptorField {
    int width = 0;
    int height = 0;
    std::vector<float> data;  // width*height*kDescriptorDim, pixel-contiguous

    const float* vec(int x, int y) const {
        return &data[(static_cast<size_t>(y) * width + x) * kDescriptorDim];
    }
    float* vec(int x, int y) {
        return &data[(static_cast<size_t>(y) * width + x) * kDescriptorDim];
    }
    bool empty() const { return width <= 0 || height <= 0; }
};

// Oriented-gradient pixel descriptors: smooth, take central-difference
// gradients, project non-negatively onto 8 directions, smooth, cap through
// the sigmoid 2/(1+exp(-slope*x))-1, smooth again, append the regularizer
// and l2-normalize each 9-vector. Color inputs are first averaged to gray.
DescriptorField compute_descriptors(const ImageBuffer& img,
                                    const DescriptorParams& params,
                                    int threads = 1);

// Dot product of two unit descriptors; in [0,1] for valid inputs.
float descriptor_similarity(const float* a, const float* b);

}  // namespace deepmatch
