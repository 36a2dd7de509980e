#include "deepmatch/flow.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "deepmatch/parallel.hpp"

namespace deepmatch {

double penalizer(double s2, double eps) { return std::sqrt(s2 + eps * eps); }

double penalizer_deriv(double s2, double eps) {
    return 0.5 / std::sqrt(s2 + eps * eps);
}

namespace {

// Single-channel float plane with the handful of samplers the solver needs.
struct Plane {
    int w = 0, h = 0;
    std::vector<float> v;

    Plane() = default;
    Plane(int w_, int h_) : w(w_), h(h_), v(static_cast<size_t>(w_) * h_, 0.f) {}

    float& at(int x, int y) { return v[static_cast<size_t>(y) * w + x]; }
    float at(int x, int y) const { return v[static_cast<size_t>(y) * w + x]; }
    float atc(int x, int y) const {
        return at(std::clamp(x, 0, w - 1), std::clamp(y, 0, h - 1));
    }
    float bilinear(float x, float y) const {
        x = std::clamp(x, 0.f, static_cast<float>(w - 1));
        y = std::clamp(y, 0.f, static_cast<float>(h - 1));
        const int x0 = static_cast<int>(x), y0 = static_cast<int>(y);
        const int x1 = std::min(x0 + 1, w - 1), y1 = std::min(y0 + 1, h - 1);
        const float fx = x - x0, fy = y - y0;
        return (1 - fy) * ((1 - fx) * at(x0, y0) + fx * at(x1, y0)) +
               fy * ((1 - fx) * at(x0, y1) + fx * at(x1, y1));
    }
};

Plane deriv_x(const Plane& p) {
    Plane d(p.w, p.h);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
            d.at(x, y) = 0.5f * (p.atc(x + 1, y) - p.atc(x - 1, y));
    return d;
}

Plane deriv_y(const Plane& p) {
    Plane d(p.w, p.h);
    for (int y = 0; y < p.h; ++y)
        for (int x = 0; x < p.w; ++x)
            d.at(x, y) = 0.5f * (p.atc(x, y + 1) - p.atc(x, y - 1));
    return d;
}

// Channel planes scaled to 0..255, the intensity range the tuned weights
// assume.
std::vector<Plane> to_planes(const ImageBuffer& img, bool force_gray) {
    const ImageBuffer& src = force_gray && img.channels != 1 ? to_gray(img) : img;
    std::vector<Plane> planes(src.channels, Plane(src.width, src.height));
    for (int c = 0; c < src.channels; ++c)
        for (int y = 0; y < src.height; ++y)
            for (int x = 0; x < src.width; ++x)
                planes[c].at(x, y) = 255.f * src.at(x, y, c);
    return planes;
}

Plane resize_plane(const Plane& p, int nw, int nh) {
    if (nw == p.w && nh == p.h) return p;
    ImageBuffer tmp(p.w, p.h, 1);
    tmp.data = p.v;
    ImageBuffer r = resize(tmp, nw, nh);
    Plane out(nw, nh);
    out.v = std::move(r.data);
    return out;
}

// Pixel-wise channel stack at one pyramid level, with everything the data
// term needs precomputed.
struct LevelImages {
    int w = 0, h = 0;
    std::vector<Plane> i1, i2;
    std::vector<Plane> i1x, i1y;
    std::vector<Plane> i2x, i2y, i2xx, i2xy, i2yy;
    Plane alpha;  // local smoothness weight
};

LevelImages make_level(const std::vector<Plane>& full1, const std::vector<Plane>& full2,
                       int w, int h, const FlowParams& prm) {
    LevelImages L;
    L.w = w;
    L.h = h;
    const size_t nc = full1.size();
    L.i1.resize(nc);
    L.i2.resize(nc);
    L.i1x.resize(nc);
    L.i1y.resize(nc);
    L.i2x.resize(nc);
    L.i2y.resize(nc);
    L.i2xx.resize(nc);
    L.i2xy.resize(nc);
    L.i2yy.resize(nc);
    for (size_t c = 0; c < nc; ++c) {
        L.i1[c] = resize_plane(full1[c], w, h);
        L.i2[c] = resize_plane(full2[c], w, h);
        L.i1x[c] = deriv_x(L.i1[c]);
        L.i1y[c] = deriv_y(L.i1[c]);
        L.i2x[c] = deriv_x(L.i2[c]);
        L.i2y[c] = deriv_y(L.i2[c]);
        L.i2xx[c] = deriv_x(L.i2x[c]);
        L.i2xy[c] = deriv_y(L.i2x[c]);
        L.i2yy[c] = deriv_y(L.i2y[c]);
    }
    // alpha(x) = base * exp(-kappa |grad I1|), gradient in unit intensity.
    L.alpha = Plane(w, h);
    Plane gray(w, h);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            float s = 0.f;
            for (size_t c = 0; c < nc; ++c) s += L.i1[c].at(x, y);
            gray.at(x, y) = s / (255.f * nc);
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const float gx = 0.5f * (gray.atc(x + 1, y) - gray.atc(x - 1, y));
            const float gy = 0.5f * (gray.atc(x, y + 1) - gray.atc(x, y - 1));
            L.alpha.at(x, y) = static_cast<float>(
                prm.alpha * std::exp(-prm.smooth_slope * std::sqrt(double(gx) * gx + double(gy) * gy)));
        }
    return L;
}

MatchTermField match_field_at(const MatchTermField& full, int w, int h) {
    MatchTermField out(w, h);
    if (full.width <= 0 || full.height <= 0) return out;
    const double sx = static_cast<double>(w) / full.width;
    const double sy = static_cast<double>(h) / full.height;
    for (int y = 0; y < full.height; ++y)
        for (int x = 0; x < full.width; ++x) {
            const size_t i = static_cast<size_t>(y) * full.width + x;
            if (!full.mask[i]) continue;
            const int lx = std::clamp(static_cast<int>(std::lround(x * sx)), 0, w - 1);
            const int ly = std::clamp(static_cast<int>(std::lround(y * sy)), 0, h - 1);
            const size_t j = static_cast<size_t>(ly) * w + lx;
            if (out.mask[j] && out.phi[j] >= full.phi[i]) continue;
            out.mask[j] = 1;
            out.phi[j] = full.phi[i];
            out.u[j] = static_cast<float>(full.u[i] * sx);
            out.v[j] = static_cast<float>(full.v[i] * sy);
        }
    return out;
}

double level_energy(const LevelImages& L, const FlowField& flow,
                    const MatchTermField& match, const FlowParams& prm, double beta) {
    const double eps = prm.penalizer_eps;
    const double z2 = prm.norm_floor * prm.norm_floor;
    const size_t nc = L.i1.size();
    double total = 0.0;
    for (int y = 0; y < L.h; ++y)
        for (int x = 0; x < L.w; ++x) {
            const size_t i = flow.idx(x, y);
            const float wx = x + flow.u[i], wy = y + flow.v[i];
            double d0 = 0.0, dxy = 0.0;
            for (size_t c = 0; c < nc; ++c) {
                const double iz = L.i2[c].bilinear(wx, wy) - L.i1[c].at(x, y);
                const double ix = L.i2x[c].bilinear(wx, wy);
                const double iy = L.i2y[c].bilinear(wx, wy);
                d0 += iz * iz / (ix * ix + iy * iy + z2);
                const double ixz = ix - L.i1x[c].at(x, y);
                const double iyz = iy - L.i1y[c].at(x, y);
                const double ixx = L.i2xx[c].bilinear(wx, wy);
                const double ixy = L.i2xy[c].bilinear(wx, wy);
                const double iyy = L.i2yy[c].bilinear(wx, wy);
                dxy += ixz * ixz / (ixx * ixx + ixy * ixy + z2);
                dxy += iyz * iyz / (ixy * ixy + iyy * iyy + z2);
            }
            auto gx = [&](const std::vector<float>& f) {
                const float a = f[flow.idx(std::min(x + 1, L.w - 1), y)];
                const float b = f[flow.idx(std::max(x - 1, 0), y)];
                return 0.5 * (double(a) - b);
            };
            auto gy = [&](const std::vector<float>& f) {
                const float a = f[flow.idx(x, std::min(y + 1, L.h - 1))];
                const float b = f[flow.idx(x, std::max(y - 1, 0))];
                return 0.5 * (double(a) - b);
            };
            const double ux = gx(flow.u), uy = gy(flow.u);
            const double vx = gx(flow.v), vy = gy(flow.v);
            const double grad2 = ux * ux + uy * uy + vx * vx + vy * vy;

            total += prm.delta * penalizer(d0, eps);
            total += prm.gamma * penalizer(dxy, eps);
            total += L.alpha.at(x, y) * (penalizer(grad2, eps) - eps);
            const size_t mi = static_cast<size_t>(y) * match.width + x;
            if (match.mask[mi]) {
                const double du = flow.u[i] - match.u[mi];
                const double dv = flow.v[i] - match.v[mi];
                total += beta * match.phi[mi] * penalizer(du * du + dv * dv, eps);
            }
        }
    return total;
}

void solve_level(const LevelImages& L, const MatchTermField& match, FlowField& flow,
                 const FlowParams& prm, double beta_level, FlowDiagnostics* diag) {
    const int w = L.w, h = L.h;
    const size_t n = static_cast<size_t>(w) * h;
    const size_t nc = L.i1.size();
    const double eps = prm.penalizer_eps;
    const double z2 = prm.norm_floor * prm.norm_floor;

    // Warp the target image and its derivatives once per level.
    std::vector<Plane> i2w(nc), ixw(nc), iyw(nc), ixxw(nc), ixyw(nc), iyyw(nc);
    for (size_t c = 0; c < nc; ++c) {
        i2w[c] = Plane(w, h);
        ixw[c] = Plane(w, h);
        iyw[c] = Plane(w, h);
        ixxw[c] = Plane(w, h);
        ixyw[c] = Plane(w, h);
        iyyw[c] = Plane(w, h);
    }
    parallel_chunks(h, prm.threads, [&](int y0, int y1) {
        for (int y = y0; y < y1; ++y)
            for (int x = 0; x < w; ++x) {
                const size_t i = flow.idx(x, y);
                const float wx = x + flow.u[i], wy = y + flow.v[i];
                for (size_t c = 0; c < nc; ++c) {
                    i2w[c].at(x, y) = L.i2[c].bilinear(wx, wy);
                    ixw[c].at(x, y) = L.i2x[c].bilinear(wx, wy);
                    iyw[c].at(x, y) = L.i2y[c].bilinear(wx, wy);
                    ixxw[c].at(x, y) = L.i2xx[c].bilinear(wx, wy);
                    ixyw[c].at(x, y) = L.i2xy[c].bilinear(wx, wy);
                    iyyw[c].at(x, y) = L.i2yy[c].bilinear(wx, wy);
                }
            }
    });

    std::vector<float> du(n, 0.f), dv(n, 0.f);
    std::vector<float> a11(n), a12(n), a22(n), b1(n), b2(n), sw(n);

    for (int fp = 0; fp < prm.fp_iters; ++fp) {
        // Re-linearize the penalizers around the current increment.
        parallel_chunks(h, prm.threads, [&](int y0, int y1) {
            for (int y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    double s0 = 0.0, sxy = 0.0;
                    for (size_t c = 0; c < nc; ++c) {
                        const double ix = ixw[c].v[i], iy = iyw[c].v[i];
                        const double iz = i2w[c].v[i] - L.i1[c].v[i];
                        const double t0 = 1.0 / (ix * ix + iy * iy + z2);
                        const double r0 = iz + ix * du[i] + iy * dv[i];
                        s0 += t0 * r0 * r0;
                        const double ixx = ixxw[c].v[i], ixy = ixyw[c].v[i], iyy = iyyw[c].v[i];
                        const double ixz = ixw[c].v[i] - L.i1x[c].v[i];
                        const double iyz = iyw[c].v[i] - L.i1y[c].v[i];
                        const double tx = 1.0 / (ixx * ixx + ixy * ixy + z2);
                        const double ty = 1.0 / (ixy * ixy + iyy * iyy + z2);
                        const double rx = ixz + ixx * du[i] + ixy * dv[i];
                        const double ry = iyz + ixy * du[i] + iyy * dv[i];
                        sxy += tx * rx * rx + ty * ry * ry;
                    }
                    const double p0 = prm.delta * penalizer_deriv(s0, eps);
                    const double pxy = prm.gamma * penalizer_deriv(sxy, eps);

                    double m11 = 0, m12 = 0, m22 = 0, r1 = 0, r2 = 0;
                    for (size_t c = 0; c < nc; ++c) {
                        const double ix = ixw[c].v[i], iy = iyw[c].v[i];
                        const double iz = i2w[c].v[i] - L.i1[c].v[i];
                        const double t0 = 1.0 / (ix * ix + iy * iy + z2);
                        m11 += p0 * t0 * ix * ix;
                        m12 += p0 * t0 * ix * iy;
                        m22 += p0 * t0 * iy * iy;
                        r1 -= p0 * t0 * ix * iz;
                        r2 -= p0 * t0 * iy * iz;
                        const double ixx = ixxw[c].v[i], ixy = ixyw[c].v[i], iyy = iyyw[c].v[i];
                        const double ixz = ixw[c].v[i] - L.i1x[c].v[i];
                        const double iyz = iyw[c].v[i] - L.i1y[c].v[i];
                        const double tx = 1.0 / (ixx * ixx + ixy * ixy + z2);
                        const double ty = 1.0 / (ixy * ixy + iyy * iyy + z2);
                        m11 += pxy * (tx * ixx * ixx + ty * ixy * ixy);
                        m12 += pxy * (tx * ixx * ixy + ty * ixy * iyy);
                        m22 += pxy * (tx * ixy * ixy + ty * iyy * iyy);
                        r1 -= pxy * (tx * ixx * ixz + ty * ixy * iyz);
                        r2 -= pxy * (tx * ixy * ixz + ty * iyy * iyz);
                    }
                    const size_t mi = static_cast<size_t>(y) * match.width + x;
                    if (match.mask[mi] && beta_level > 0.0) {
                        const double ru = flow.u[i] + du[i] - match.u[mi];
                        const double rv = flow.v[i] + dv[i] - match.v[mi];
                        const double pm = beta_level * match.phi[mi] *
                                          penalizer_deriv(ru * ru + rv * rv, eps);
                        m11 += pm;
                        m22 += pm;
                        r1 -= pm * (flow.u[i] - match.u[mi]);
                        r2 -= pm * (flow.v[i] - match.v[mi]);
                    }
                    a11[i] = static_cast<float>(m11);
                    a12[i] = static_cast<float>(m12);
                    a22[i] = static_cast<float>(m22);
                    b1[i] = static_cast<float>(r1);
                    b2[i] = static_cast<float>(r2);
                }
        });

        // Smoothness weights from the current full flow.
        parallel_chunks(h, prm.threads, [&](int y0, int y1) {
            for (int y = y0; y < y1; ++y)
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    auto f = [&](const std::vector<float>& base, const std::vector<float>& inc,
                                 int xx, int yy) {
                        const size_t j =
                            static_cast<size_t>(std::clamp(yy, 0, h - 1)) * w +
                            std::clamp(xx, 0, w - 1);
                        return double(base[j]) + inc[j];
                    };
                    const double ux = 0.5 * (f(flow.u, du, x + 1, y) - f(flow.u, du, x - 1, y));
                    const double uy = 0.5 * (f(flow.u, du, x, y + 1) - f(flow.u, du, x, y - 1));
                    const double vx = 0.5 * (f(flow.v, dv, x + 1, y) - f(flow.v, dv, x - 1, y));
                    const double vy = 0.5 * (f(flow.v, dv, x, y + 1) - f(flow.v, dv, x, y - 1));
                    sw[i] = static_cast<float>(
                        L.alpha.v[i] *
                        penalizer_deriv(ux * ux + uy * uy + vx * vx + vy * vy, eps));
                }
        });

        // Red-black SOR on the coupled 2x2 per-pixel system.
        const double omega = prm.sor_omega;
        for (int sweep = 0; sweep < prm.sor_iters; ++sweep) {
            for (int color = 0; color < 2; ++color) {
                parallel_chunks(h, prm.threads, [&](int y0, int y1) {
                    for (int y = y0; y < y1; ++y)
                        for (int x = (y + color) & 1; x < w; x += 2) {
                            const size_t i = static_cast<size_t>(y) * w + x;
                            double wsum = 0, su = 0, sv = 0;
                            auto edge = [&](int xx, int yy) {
                                const size_t j = static_cast<size_t>(yy) * w + xx;
                                const double wgt = 0.5 * (double(sw[i]) + sw[j]);
                                wsum += wgt;
                                su += wgt * (double(flow.u[j]) + du[j] - flow.u[i]);
                                sv += wgt * (double(flow.v[j]) + dv[j] - flow.v[i]);
                            };
                            if (x > 0) edge(x - 1, y);
                            if (x + 1 < w) edge(x + 1, y);
                            if (y > 0) edge(x, y - 1);
                            if (y + 1 < h) edge(x, y + 1);

                            const double nu =
                                (b1[i] + su - double(a12[i]) * dv[i]) / (a11[i] + wsum);
                            du[i] = static_cast<float>((1 - omega) * du[i] + omega * nu);
                            const double nv =
                                (b2[i] + sv - double(a12[i]) * du[i]) / (a22[i] + wsum);
                            dv[i] = static_cast<float>((1 - omega) * dv[i] + omega * nv);
                        }
                });
            }
        }

        if (diag) {
            FlowField cur = flow;
            for (size_t i = 0; i < n; ++i) {
                cur.u[i] += du[i];
                cur.v[i] += dv[i];
            }
            diag->finest_level_energies.push_back(
                level_energy(L, cur, match, prm, beta_level));
        }
    }

    for (size_t i = 0; i < n; ++i) {
        flow.u[i] += du[i];
        flow.v[i] += dv[i];
    }
}

}  // namespace

MatchTermField rasterize_matches(const MatchSet& matches, const ImageBuffer& img1,
                                 const ImageBuffer& img2, double sigma_m) {
    if (img1.empty() || img2.empty())
        throw std::runtime_error("rasterize_matches: empty image");
    MatchTermField out(img1.width, img1.height);

    const bool force_gray = img1.channels != img2.channels;
    const std::vector<Plane> p1 = to_planes(img1, force_gray);
    const std::vector<Plane> p2 = to_planes(img2, force_gray);
    const size_t nc = p1.size();
    std::vector<Plane> p1x(nc), p1y(nc), p2x(nc), p2y(nc);
    for (size_t c = 0; c < nc; ++c) {
        p1x[c] = deriv_x(p1[c]);
        p1y[c] = deriv_y(p1[c]);
        p2x[c] = deriv_x(p2[c]);
        p2y[c] = deriv_y(p2[c]);
    }

    // Texture strength: 10x the smallest eigenvalue of the 3x3
    // Gaussian-weighted structure tensor of image 1.
    Plane gray(img1.width, img1.height);
    for (int y = 0; y < img1.height; ++y)
        for (int x = 0; x < img1.width; ++x) {
            float s = 0;
            for (size_t c = 0; c < nc; ++c) s += p1[c].at(x, y);
            gray.at(x, y) = s / nc;
        }
    const Plane gx = deriv_x(gray), gy = deriv_y(gray);
    double wwin[3][3], wsum = 0;
    for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx) {
            wwin[dy + 1][dx + 1] = std::exp(-0.5 * (dx * dx + dy * dy));
            wsum += wwin[dy + 1][dx + 1];
        }
    Plane lam(img1.width, img1.height);
    for (int y = 0; y < img1.height; ++y)
        for (int x = 0; x < img1.width; ++x) {
            double txx = 0, txy = 0, tyy = 0;
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    const double wgt = wwin[dy + 1][dx + 1] / wsum;
                    const double ax = gx.atc(x + dx, y + dy);
                    const double ay = gy.atc(x + dx, y + dy);
                    txx += wgt * ax * ax;
                    txy += wgt * ax * ay;
                    tyy += wgt * ay * ay;
                }
            const double disc = std::sqrt((txx - tyy) * (txx - tyy) + 4 * txy * txy);
            lam.at(x, y) = static_cast<float>(std::max(0.0, 10.0 * 0.5 * (txx + tyy - disc)));
        }

    for (const Match& m : matches.matches) {
        const int x = static_cast<int>(std::lround(m.x1));
        const int y = static_cast<int>(std::lround(m.y1));
        if (x < 0 || y < 0 || x >= img1.width || y >= img1.height || m.x2 < -0.5f ||
            m.y2 < -0.5f || m.x2 > img2.width - 0.5f || m.y2 > img2.height - 0.5f) {
            ++out.skipped;
            continue;
        }
        double delta = 0.0;
        for (size_t c = 0; c < nc; ++c) {
            delta += std::abs(p1[c].at(x, y) - p2[c].bilinear(m.x2, m.y2));
            delta += std::abs(p1x[c].at(x, y) - p2x[c].bilinear(m.x2, m.y2));
            delta += std::abs(p1y[c].at(x, y) - p2y[c].bilinear(m.x2, m.y2));
        }
        const double phi = std::sqrt(double(lam.at(x, y))) / (sigma_m * std::sqrt(2.0 * M_PI)) *
                           std::exp(-delta / (2.0 * sigma_m));
        const size_t i = static_cast<size_t>(y) * img1.width + x;
        if (out.mask[i] && out.phi[i] >= phi) continue;
        out.mask[i] = 1;
        out.phi[i] = static_cast<float>(phi);
        out.u[i] = m.x2 - m.x1;
        out.v[i] = m.y2 - m.y1;
    }
    return out;
}

FlowField solve_flow(const ImageBuffer& img1, const ImageBuffer& img2,
                     const MatchTermField& match_field, const FlowParams& params,
                     FlowDiagnostics* diag) {
    if (img1.width != img2.width || img1.height != img2.height)
        throw std::runtime_error("solve_flow: image sizes differ");
    if (img1.empty()) throw std::runtime_error("solve_flow: empty image");

    const bool force_gray = img1.channels != img2.channels;
    const std::vector<Plane> full1 =
        to_planes(gaussian_smooth(img1, params.sigma), force_gray);
    const std::vector<Plane> full2 =
        to_planes(gaussian_smooth(img2, params.sigma), force_gray);

    // Level sizes, finest first.
    std::vector<std::pair<int, int>> sizes{{img1.width, img1.height}};
    double s = 1.0;
    while (true) {
        s *= params.scale_factor;
        const int w = static_cast<int>(std::lround(img1.width * s));
        const int h = static_cast<int>(std::lround(img1.height * s));
        if (std::min(w, h) < params.min_size) break;
        if (w == sizes.back().first && h == sizes.back().second) continue;
        sizes.emplace_back(w, h);
    }
    const int k_max = static_cast<int>(sizes.size()) - 1;

    FlowField flow(sizes.back().first, sizes.back().second);
    for (int k = k_max; k >= 0; --k) {
        const auto [w, h] = sizes[k];
        if (flow.width != w || flow.height != h) {
            FlowField up(w, h);
            Plane pu(flow.width, flow.height), pv(flow.width, flow.height);
            pu.v = flow.u;
            pv.v = flow.v;
            const Plane ru = resize_plane(pu, w, h), rv = resize_plane(pv, w, h);
            const float fx = static_cast<float>(w) / flow.width;
            const float fy = static_cast<float>(h) / flow.height;
            for (size_t i = 0; i < up.u.size(); ++i) {
                up.u[i] = ru.v[i] * fx;
                up.v[i] = rv.v[i] * fy;
            }
            flow = std::move(up);
        }
        const LevelImages L = make_level(full1, full2, w, h, params);
        const MatchTermField match = match_field_at(match_field, w, h);
        const double beta_level =
            (k_max == 0) ? params.beta
                         : params.beta * std::pow(static_cast<double>(k) / k_max,
                                                  params.match_exponent);
        solve_level(L, match, flow, params, beta_level, (k == 0) ? diag : nullptr);
    }
    return flow;
}

double energy(const ImageBuffer& img1, const ImageBuffer& img2, const FlowField& flow,
              const MatchTermField& match_field, const FlowParams& params) {
    if (img1.width != img2.width || img1.height != img2.height)
        throw std::runtime_error("energy: image sizes differ");
    if (flow.width != img1.width || flow.height != img1.height)
        throw std::runtime_error("energy: flow dimensions differ from images");
    const bool force_gray = img1.channels != img2.channels;
    const std::vector<Plane> full1 =
        to_planes(gaussian_smooth(img1, params.sigma), force_gray);
    const std::vector<Plane> full2 =
        to_planes(gaussian_smooth(img2, params.sigma), force_gray);
    const LevelImages L = make_level(full1, full2, img1.width, img1.height, params);
    const MatchTermField match = match_field_at(match_field, img1.width, img1.height);
    return level_energy(L, flow, match, params, params.beta);
}

}  // namespace deepmatch
