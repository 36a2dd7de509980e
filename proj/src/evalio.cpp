#include "deepmatch/evalio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace deepmatch {

namespace {
constexpr float kFloTag = 202021.25f;  // "PIEH" read as little-endian float
constexpr float kInvalidLimit = 1e9f;
}  // namespace

GroundTruthFlow read_flo(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open flow file: " + path);
    char tag[4];
    in.read(tag, 4);
    if (in.gcount() != 4 || std::memcmp(tag, "PIEH", 4) != 0)
        throw std::runtime_error("bad flow magic (expected PIEH): " + path);
    int32_t w = 0, h = 0;
    in.read(reinterpret_cast<char*>(&w), 4);
    in.read(reinterpret_cast<char*>(&h), 4);
    if (!in || w <= 0 || h <= 0 || w > 100000 || h > 100000)
        throw std::runtime_error("bad flow dimensions: " + path);

    GroundTruthFlow gt;
    gt.flow = FlowField(w, h);
    gt.valid.assign(static_cast<size_t>(w) * h, 1);
    std::vector<float> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        in.read(reinterpret_cast<char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
        if (static_cast<size_t>(in.gcount()) != row.size() * sizeof(float))
            throw std::runtime_error("truncated flow payload: " + path);
        for (int x = 0; x < w; ++x) {
            const float u = row[2 * x], v = row[2 * x + 1];
            const size_t i = gt.flow.idx(x, y);
            gt.flow.u[i] = u;
            gt.flow.v[i] = v;
            if (!std::isfinite(u) || !std::isfinite(v) || std::abs(u) > kInvalidLimit ||
                std::abs(v) > kInvalidLimit)
                gt.valid[i] = 0;
        }
    }
    return gt;
}

void write_flo(const FlowField& flow, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out.write("PIEH", 4);
    const int32_t w = flow.width, h = flow.height;
    out.write(reinterpret_cast<const char*>(&w), 4);
    out.write(reinterpret_cast<const char*>(&h), 4);
    std::vector<float> row(static_cast<size_t>(w) * 2);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            row[2 * x] = flow.u[flow.idx(x, y)];
            row[2 * x + 1] = flow.v[flow.idx(x, y)];
        }
        out.write(reinterpret_cast<const char*>(row.data()),
                  static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

MetricReport accuracy_at_T(const MatchSet& matches, const GroundTruthFlow& gt, double T) {
    if (T <= 0) throw std::runtime_error("accuracy_at_T: threshold must be positive");
    const int w = gt.flow.width, h = gt.flow.height;
    const int cell = std::max(1, matches.cell_size);
    const int lo = cell / 2, hi = cell - cell / 2;  // patch covers [x-lo, x+hi)

    // Stamp each match over its cell, keeping the best score per pixel.
    std::vector<float> best(static_cast<size_t>(w) * h,
                            -std::numeric_limits<float>::infinity());
    std::vector<int32_t> who(static_cast<size_t>(w) * h, -1);
    for (size_t mi = 0; mi < matches.matches.size(); ++mi) {
        const Match& m = matches.matches[mi];
        const int cx = static_cast<int>(std::lround(m.x1));
        const int cy = static_cast<int>(std::lround(m.y1));
        for (int y = std::max(0, cy - lo); y < std::min(h, cy + hi); ++y)
            for (int x = std::max(0, cx - lo); x < std::min(w, cx + hi); ++x) {
                const size_t i = static_cast<size_t>(y) * w + x;
                if (m.score > best[i]) {
                    best[i] = m.score;
                    who[i] = static_cast<int32_t>(mi);
                }
            }
    }

    size_t n_eval = 0, n_covered = 0, n_correct = 0;
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const size_t i = static_cast<size_t>(y) * w + x;
            if (!gt.valid[i]) continue;
            ++n_eval;
            if (who[i] < 0) continue;  // uncovered: infinite error
            ++n_covered;
            const Match& m = matches.matches[who[i]];
            const double du = (m.x2 - m.x1) - gt.flow.u[i];
            const double dv = (m.y2 - m.y1) - gt.flow.v[i];
            if (std::sqrt(du * du + dv * dv) < T) ++n_correct;
        }

    MetricReport rep;
    rep.match_count = matches.matches.size();
    rep.accuracy_at_T = n_eval ? static_cast<double>(n_correct) / n_eval : 0.0;
    rep.accuracy_covered = n_covered ? static_cast<double>(n_correct) / n_covered : 0.0;
    rep.pixel_coverage = n_eval ? static_cast<double>(n_covered) / n_eval : 0.0;
    rep.coverage = coverage(matches, w, h);
    return rep;
}

MetricReport epe(const FlowField& flow, const GroundTruthFlow& gt,
                 const ImageBuffer* occlusion_mask) {
    if (flow.width != gt.flow.width || flow.height != gt.flow.height)
        throw std::runtime_error("epe: dimension mismatch");
    if (occlusion_mask &&
        (occlusion_mask->width != flow.width || occlusion_mask->height != flow.height))
        throw std::runtime_error("epe: occlusion mask dimension mismatch");

    double sum = 0, sum0 = 0, sum10 = 0, sum40 = 0, sum_occ = 0;
    size_t n = 0, n0 = 0, n10 = 0, n40 = 0, n_occ = 0;
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x) {
            const size_t i = flow.idx(x, y);
            if (!gt.valid[i]) continue;
            const double du = flow.u[i] - gt.flow.u[i];
            const double dv = flow.v[i] - gt.flow.v[i];
            const double err = std::sqrt(du * du + dv * dv);
            const bool occluded = occlusion_mask && occlusion_mask->at(x, y) > 0;
            if (occluded) {
                sum_occ += err;
                ++n_occ;
                continue;
            }
            sum += err;
            ++n;
            const double mag = std::sqrt(double(gt.flow.u[i]) * gt.flow.u[i] +
                                         double(gt.flow.v[i]) * gt.flow.v[i]);
            if (mag < 10) {
                sum0 += err;
                ++n0;
            } else if (mag < 40) {
                sum10 += err;
                ++n10;
            } else {
                sum40 += err;
                ++n40;
            }
        }

    MetricReport rep;
    rep.epe = n ? sum / n : 0.0;
    rep.epe_s0_10 = n0 ? sum0 / n0 : 0.0;
    rep.epe_s10_40 = n10 ? sum10 / n10 : 0.0;
    rep.epe_s40plus = n40 ? sum40 / n40 : 0.0;
    rep.epe_occluded = n_occ ? sum_occ / n_occ : 0.0;
    return rep;
}

double coverage(const MatchSet& matches, int width, int height) {
    if (width <= 0 || height <= 0) return 0.0;
    size_t total = 0, hit = 0;
    for (int gy = 0; gy < height; gy += 10)
        for (int gx = 0; gx < width; gx += 10) {
            ++total;
            for (const Match& m : matches.matches) {
                if (std::max(std::abs(m.x1 - gx), std::abs(m.y1 - gy)) <= 10.f) {
                    ++hit;
                    break;
                }
            }
        }
    return total ? static_cast<double>(hit) / total : 0.0;
}

std::string report_to_text(const MetricReport& r) {
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "accuracy %.6f\n"
                  "accuracy_covered %.6f\n"
                  "pixel_coverage %.6f\n"
                  "epe %.6f\n"
                  "epe_s0_10 %.6f\n"
                  "epe_s10_40 %.6f\n"
                  "epe_s40plus %.6f\n"
                  "epe_occluded %.6f\n"
                  "coverage %.6f\n"
                  "match_count %zu\n",
                  r.accuracy_at_T, r.accuracy_covered, r.pixel_coverage, r.epe,
                  r.epe_s0_10, r.epe_s10_40, r.epe_s40plus, r.epe_occluded, r.coverage,
                  r.match_count);
    return buf;
}

std::string report_to_json(const MetricReport& r) {
    nlohmann::json j;
    j["accuracy"] = r.accuracy_at_T;
    j["accuracy_covered"] = r.accuracy_covered;
    j["pixel_coverage"] = r.pixel_coverage;
    j["epe"] = r.epe;
    j["epe_s0_10"] = r.epe_s0_10;
    j["epe_s10_40"] = r.epe_s10_40;
    j["epe_s40plus"] = r.epe_s40plus;
    j["epe_occluded"] = r.epe_occluded;
    j["coverage"] = r.coverage;
    j["match_count"] = r.match_count;
    return j.dump(2);
}

ImageBuffer flow_visualization(const FlowField& flow, float max_magnitude) {
    float maxmag = max_magnitude;
    if (maxmag <= 0.f) {
        for (size_t i = 0; i < flow.u.size(); ++i)
            maxmag = std::max(maxmag, std::hypot(flow.u[i], flow.v[i]));
        if (maxmag <= 0.f) maxmag = 1.f;
    }
    ImageBuffer out(flow.width, flow.height, 3);
    for (int y = 0; y < flow.height; ++y)
        for (int x = 0; x < flow.width; ++x) {
            const size_t i = flow.idx(x, y);
            const float mag = std::min(1.f, std::hypot(flow.u[i], flow.v[i]) / maxmag);
            const float ang = std::atan2(-flow.v[i], -flow.u[i]) / static_cast<float>(M_PI);
            float hticks = (ang + 1.f) * 3.f;  // hue in [0,6)
            const int k = std::min(5, static_cast<int>(hticks));
            const float f = hticks - k;
            float r = 0, g = 0, b = 0;
            switch (k) {
                case 0: r = 1; g = f; break;
                case 1: r = 1 - f; g = 1; break;
                case 2: g = 1; b = f; break;
                case 3: g = 1 - f; b = 1; break;
                case 4: b = 1; r = f; break;
                default: b = 1 - f; r = 1; break;
            }
            out.at(x, y, 0) = 1.f - mag * (1.f - r);
            out.at(x, y, 1) = 1.f - mag * (1.f - g);
            out.at(x, y, 2) = 1.f - mag * (1.f - b);
        }
    return out;
}

}  // namespace deepmatch
