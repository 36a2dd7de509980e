#include "deepmatch/invariance.hpp"

#include <cmath>
#include <cstring>
#include <unordered_map>

namespace deepmatch {

std::vector<WarpCell> invariance_lattice() {
    std::vector<WarpCell> cells;
    for (int si = -4; si <= 4; ++si) {
        const double s = si * 0.5;
        for (int ti = 0; ti < 8; ++ti) {
            WarpCell c;
            c.log2_scale = s;
            c.theta = ti * M_PI / 4.0;
            c.sigma1 = std::max(1.0, std::pow(2.0, s));
            c.sigma2 = std::max(1.0, std::pow(2.0, -s));
            cells.push_back(c);
        }
    }
    return cells;
}

MatchSet match_invariant(const ImageBuffer& img1, const ImageBuffer& img2,
                         const MatchParams& params, InvariantStats* stats) {
    const std::vector<WarpCell> cells = invariance_lattice();
    std::vector<Match> pool;
    std::vector<std::pair<size_t, size_t>> cell_ranges;

    for (const WarpCell& cell : cells) {
        const int w1 = std::max(4, static_cast<int>(std::lround(img1.width / cell.sigma1)));
        const int h1 = std::max(4, static_cast<int>(std::lround(img1.height / cell.sigma1)));
        const ImageBuffer small1 = resize(img1, w1, h1);
        // Per-axis factors so odd sizes rectify consistently.
        const double fx1 = static_cast<double>(img1.width) / w1;
        const double fy1 = static_cast<double>(img1.height) / h1;

        const ImageBuffer rotated =
            (cell.theta == 0.0) ? img2 : rotate_enlarged(img2, -cell.theta);
        const int w2 = std::max(4, static_cast<int>(std::lround(rotated.width / cell.sigma2)));
        const int h2 = std::max(4, static_cast<int>(std::lround(rotated.height / cell.sigma2)));
        const ImageBuffer small2 = resize(rotated, w2, h2);
        const double fx2 = static_cast<double>(rotated.width) / w2;
        const double fy2 = static_cast<double>(rotated.height) / h2;

        MatchSet raw = deep_matching(small1, small2, params);

        const size_t begin = pool.size();
        for (Match m : raw.matches) {
            m.x1 = static_cast<float>(m.x1 * fx1);
            m.y1 = static_cast<float>(m.y1 * fy1);
            double x2 = m.x2 * fx2, y2 = m.y2 * fy2;
            if (cell.theta != 0.0) {
                double sx, sy;
                rotate_point_back(x2, y2, img2.width, img2.height, -cell.theta, &sx, &sy);
                x2 = sx;
                y2 = sy;
            }
            m.x2 = static_cast<float>(x2);
            m.y2 = static_cast<float>(y2);
            pool.push_back(m);
        }
        cell_ranges.emplace_back(begin, pool.size());
    }

    MatchSet out = reciprocal_filter(pool, img1.width, img1.height, img2.width, img2.height);
    out.params_fingerprint = params.fingerprint();
    out.cell_size = std::max(4, static_cast<int>(std::lround(4.0 / params.resolution)));

    if (stats) {
        stats->matches_per_cell.assign(cells.size(), 0);
        // Count survivors per producing cell by value identity.
        std::unordered_map<uint64_t, int> kept;
        kept.reserve(out.matches.size() * 2);
        auto key = [](const Match& m) {
            uint64_t h = 1469598103934665603ull;
            auto mixf = [&h](float v) {
                uint32_t bits;
                std::memcpy(&bits, &v, 4);
                h = (h ^ bits) * 1099511628211ull;
            };
            mixf(m.x1);
            mixf(m.y1);
            mixf(m.x2);
            mixf(m.y2);
            mixf(m.score);
            return h;
        };
        for (const Match& m : out.matches) kept[key(m)] = 1;
        size_t best_count = 0;
        for (size_t c = 0; c < cells.size(); ++c) {
            size_t n = 0;
            for (size_t i = cell_ranges[c].first; i < cell_ranges[c].second; ++i)
                if (kept.count(key(pool[i]))) ++n;
            stats->matches_per_cell[c] = n;
            if (n > best_count) {
                best_count = n;
                stats->best_cell = static_cast<int>(c);
            }
        }
    }
    return out;
}

}  // namespace deepmatch
