#include "deepmatch/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace deepmatch {

float ImageBuffer::at_clamped(int x, int y, int c) const {
    x = std::clamp(x, 0, width - 1);
    y = std::clamp(y, 0, height - 1);
    return at(x, y, c);
}

float ImageBuffer::sample_bilinear(float x, float y, int c) const {
    x = std::clamp(x, 0.f, static_cast<float>(width - 1));
    y = std::clamp(y, 0.f, static_cast<float>(height - 1));
    int x0 = static_cast<int>(x);
    int y0 = static_cast<int>(y);
    int x1 = std::min(x0 + 1, width - 1);
    int y1 = std::min(y0 + 1, height - 1);
    float fx = x - x0, fy = y - y0;
    return (1 - fy) * ((1 - fx) * at(x0, y0, c) + fx * at(x1, y0, c)) +
           fy * ((1 - fx) * at(x0, y1, c) + fx * at(x1, y1, c));
}

namespace {

// Reads one PNM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string tok;
    int ch;
    while ((ch = in.get()) != EOF) {
        if (ch == '#') {
            while ((ch = in.get()) != EOF && ch != '\n') {
            }
        } else if (!std::isspace(ch)) {
            tok.push_back(static_cast<char>(ch));
            while ((ch = in.peek()) != EOF && !std::isspace(ch)) {
                tok.push_back(static_cast<char>(in.get()));
            }
            return tok;
        }
    }
    return tok;
}

int parse_int(const std::string& tok, const std::string& path) {
    if (tok.empty() || tok.find_first_not_of("0123456789") != std::string::npos)
        throw std::runtime_error("malformed image: " + path);
    return std::stoi(tok);
}

}  // namespace

ImageBuffer load_image(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image: " + path);

    std::string magic = next_token(in);
    int channels;
    if (magic == "P5")
        channels = 1;
    else if (magic == "P6")
        channels = 3;
    else
        throw std::runtime_error("unsupported image format (need binary PGM/PPM): " + path);

    int w = parse_int(next_token(in), path);
    int h = parse_int(next_token(in), path);
    int maxval = parse_int(next_token(in), path);
    if (w <= 0 || h <= 0) throw std::runtime_error("zero-dimension image: " + path);
    if (maxval <= 0 || maxval > 255)
        throw std::runtime_error("unsupported sample depth (want 8-bit): " + path);
    in.get();  // single whitespace byte after maxval

    size_t n = static_cast<size_t>(w) * h * channels;
    std::vector<uint8_t> raw(n);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n)
        throw std::runtime_error("malformed image (truncated payload): " + path);

    ImageBuffer img(w, h, channels);
    const float scale = 1.f / static_cast<float>(maxval);
    for (size_t i = 0; i < n; ++i) img.data[i] = raw[i] * scale;
    return img;
}

void save_pnm(const ImageBuffer& img, const std::string& path) {
    if (img.empty()) throw std::runtime_error("cannot write empty image: " + path);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << (img.channels == 3 ? "P6" : "P5") << "\n"
        << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> raw(img.data.size());
    for (size_t i = 0; i < img.data.size(); ++i) {
        float v = std::clamp(img.data[i], 0.f, 1.f);
        raw[i] = static_cast<uint8_t>(std::lround(v * 255.f));
    }
    out.write(reinterpret_cast<const char*>(raw.data()),
              static_cast<std::streamsize>(raw.size()));
    if (!out) throw std::runtime_error("write failed: " + path);
}

ImageBuffer to_gray(const ImageBuffer& img) {
    if (img.channels == 1) return img;
    ImageBuffer out(img.width, img.height, 1);
    const size_t n = static_cast<size_t>(img.width) * img.height;
    for (size_t i = 0; i < n; ++i) {
        const float* px = &img.data[i * img.channels];
        float sum = 0.f;
        for (int c = 0; c < img.channels; ++c) sum += px[c];
        out.data[i] = sum / static_cast<float>(img.channels);
    }
    return out;
}

ImageBuffer resize(const ImageBuffer& img, int new_w, int new_h) {
    if (new_w <= 0 || new_h <= 0) throw std::runtime_error("resize to empty image");
    if (new_w == img.width && new_h == img.height) return img;
    ImageBuffer out(new_w, new_h, img.channels);
    const double sx = static_cast<double>(img.width) / new_w;
    const double sy = static_cast<double>(img.height) / new_h;
    for (int y = 0; y < new_h; ++y) {
        double y0 = y * sy, y1 = (y + 1) * sy;
        int iy0 = static_cast<int>(y0);
        int iy1 = std::min(static_cast<int>(std::ceil(y1)), img.height);
        for (int x = 0; x < new_w; ++x) {
            double x0 = x * sx, x1 = (x + 1) * sx;
            int ix0 = static_cast<int>(x0);
            int ix1 = std::min(static_cast<int>(std::ceil(x1)), img.width);
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0, area = 0.0;
                for (int yy = iy0; yy < iy1; ++yy) {
                    double wy = std::min<double>(yy + 1, y1) - std::max<double>(yy, y0);
                    for (int xx = ix0; xx < ix1; ++xx) {
                        double wx = std::min<double>(xx + 1, x1) - std::max<double>(xx, x0);
                        acc += wx * wy * img.at(xx, yy, c);
                        area += wx * wy;
                    }
                }
                out.at(x, y, c) = static_cast<float>(acc / area);
            }
        }
    }
    return out;
}

void rotated_canvas_size(int w, int h, double angle, int* out_w, int* out_h) {
    double c = std::abs(std::cos(angle)), s = std::abs(std::sin(angle));
    *out_w = static_cast<int>(std::ceil(w * c + h * s));
    *out_h = static_cast<int>(std::ceil(w * s + h * c));
}

void rotate_point_back(double cx_canvas, double cy_canvas, int src_w, int src_h,
                       double angle, double* out_x, double* out_y) {
    int cw, ch;
    rotated_canvas_size(src_w, src_h, angle, &cw, &ch);
    const double ccx = 0.5 * (cw - 1), ccy = 0.5 * (ch - 1);
    const double scx = 0.5 * (src_w - 1), scy = 0.5 * (src_h - 1);
    // Canvas holds the content rotated by `angle`; undo it.
    const double dx = cx_canvas - ccx, dy = cy_canvas - ccy;
    const double c = std::cos(angle), s = std::sin(angle);
    *out_x = c * dx + s * dy + scx;
    *out_y = -s * dx + c * dy + scy;
}

ImageBuffer rotate_enlarged(const ImageBuffer& img, double angle) {
    int cw, ch;
    rotated_canvas_size(img.width, img.height, angle, &cw, &ch);
    ImageBuffer out(cw, ch, img.channels);
    for (int y = 0; y < ch; ++y) {
        for (int x = 0; x < cw; ++x) {
            double sx_, sy_;
            rotate_point_back(x, y, img.width, img.height, angle, &sx_, &sy_);
            for (int c = 0; c < img.channels; ++c)
                out.at(x, y, c) =
                    img.sample_bilinear(static_cast<float>(sx_), static_cast<float>(sy_), c);
        }
    }
    return out;
}

ImageBuffer gaussian_smooth(const ImageBuffer& img, double sigma) {
    if (sigma <= 0.0) return img;
    const int radius = static_cast<int>(std::ceil(4.0 * sigma));
    std::vector<double> kernel(2 * radius + 1);
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
        sum += kernel[i + radius];
    }
    for (double& k : kernel) k /= sum;

    ImageBuffer tmp(img.width, img.height, img.channels);
    ImageBuffer out(img.width, img.height, img.channels);
    // Horizontal then vertical pass, replicate border.
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * img.at_clamped(x + i, y, c);
                tmp.at(x, y, c) = static_cast<float>(acc);
            }
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            for (int c = 0; c < img.channels; ++c) {
                double acc = 0.0;
                for (int i = -radius; i <= radius; ++i)
                    acc += kernel[i + radius] * tmp.at_clamped(x, y + i, c);
                out.at(x, y, c) = static_cast<float>(acc);
            }
    return out;
}

}  // namespace deepmatch
