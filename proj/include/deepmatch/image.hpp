#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deepmatch {

// Row-major raster with 1 (gray) or 3 (RGB) interleaved channels,
// samples in [0,1].
struct ImageBuffer {
    int width = 0;
    int height = 0;
    int channels = 1;
    std::vector<float> data;

    ImageBuffer() = default;
    ImageBuffer(int w, int h, int c, float fill = 0.f)
        : width(w), height(h), channels(c),
          data(static_cast<size_t>(w) * h * c, fill) {}

    bool empty() const { return width <= 0 || height <= 0; }

    float& at(int x, int y, int c = 0) {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    float at(int x, int y, int c = 0) const {
        return data[(static_cast<size_t>(y) * width + x) * channels + c];
    }
    // Sample with replicate border.
    float at_clamped(int x, int y, int c = 0) const;
    // Bilinear sample at real coordinates, replicate border.
    float sample_bilinear(float x, float y, int c = 0) const;
};

// Reads a binary PGM (P5) or PPM (P6) file, 8-bit samples scaled to [0,1].
// Throws std::runtime_error on unreadable or malformed input.
ImageBuffer load_image(const std::string& path);

// Writes gray images as P5, RGB as P6.
void save_pnm(const ImageBuffer& img, const std::string& path);

// Channel-mean grayscale; returns the input unchanged if already gray.
ImageBuffer to_gray(const ImageBuffer& img);

// Area-average resampling to the given size (used both for downsizing and
// for the mild upsizing the flow pyramid needs, where it degenerates to
// bilinear-ish box sampling).
ImageBuffer resize(const ImageBuffer& img, int new_w, int new_h);

// Rotates the image content by `angle` radians (counter-clockwise, y down)
// about the image center into an enlarged canvas that contains the whole
// rotated frame. Samples bilinearly with replicate border. The canvas
// center maps to the source center; rotate_point_back() inverts the
// coordinate transform exactly.
ImageBuffer rotate_enlarged(const ImageBuffer& img, double angle);

// Canvas size chosen by rotate_enlarged for a w x h source.
void rotated_canvas_size(int w, int h, double angle, int* out_w, int* out_h);

// Maps a point in the rotated canvas back to source-image coordinates.
void rotate_point_back(double cx_canvas, double cy_canvas, int src_w, int src_h,
                       double angle, double* out_x, double* out_y);

// Separable Gaussian smoothing, sigma in pixels, kernel truncated at 4*sigma,
// replicate border. sigma == 0 is an identity pass.
ImageBuffer gaussian_smooth(const ImageBuffer& img, double sigma);

}  // namespace deepmatch
