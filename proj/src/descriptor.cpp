#include "deepmatch/descriptor.hpp"

#include <cmath>
#include <stdexcept>

#include "deepmatch/parallel.hpp"

namespace deepmatch {

float descriptor_similarity(const float* a, const float* b) {
    double acc = 0.0;
    for (int i = 0; i < kDescriptorDim; ++i) acc += double(a[i]) * b[i];
    return static_cast<float>(acc);
}

DescriptorField compute_descriptors(const ImageBuffer& img,
                                    const DescriptorParams& params,
                                    int threads) {
    if (img.empty()) throw std::runtime_error("compute_descriptors: empty image");
    ImageBuffer gray = gaussian_smooth(to_gray(img), params.smooth_pre);

    const int w = gray.width, h = gray.height;
    std::vector<ImageBuffer> orient(8);

    // Central-difference gradients with replicate border, projected onto the
    // 8 directions (cos i*pi/4, sin i*pi/4), keeping positive parts only.
    ImageBuffer gx(w, h, 1), gy(w, h, 1);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            gx.at(x, y) = 0.5f * (gray.at_clamped(x + 1, y) - gray.at_clamped(x - 1, y));
            gy.at(x, y) = 0.5f * (gray.at_clamped(x, y + 1) - gray.at_clamped(x, y - 1));
        }

    parallel_chunks(8, threads, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            const double angle = (i + 1) * M_PI / 4.0;
            const float cx = static_cast<float>(std::cos(angle));
            const float cy = static_cast<float>(std::sin(angle));
            ImageBuffer proj(w, h, 1);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x)
                    proj.at(x, y) = std::max(0.f, cx * gx.at(x, y) + cy * gy.at(x, y));
            proj = gaussian_smooth(proj, params.smooth_orient);
            const float slope = static_cast<float>(params.sigmoid_slope);
            for (float& v : proj.data) v = 2.f / (1.f + std::exp(-slope * v)) - 1.f;
            orient[i] = gaussian_smooth(proj, params.smooth_post);
        }
    });

    DescriptorField field;
    field.width = w;
    field.height = h;
    field.data.resize(static_cast<size_t>(w) * h * kDescriptorDim);
    const float mu = static_cast<float>(params.regularizer);
    parallel_chunks(h, threads, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < w; ++x) {
                float* v = field.vec(x, y);
                double norm2 = double(mu) * mu;
                for (int i = 0; i < 8; ++i) {
                    v[i] = orient[i].at(x, y);
                    norm2 += double(v[i]) * v[i];
                }
                v[8] = mu;
                const float inv = static_cast<float>(1.0 / std::sqrt(norm2));
                for (int i = 0; i < kDescriptorDim; ++i) v[i] *= inv;
            }
    });
    return field;
}

}  // namespace deepmatch
