#include "deepmatch/correspondence.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace deepmatch {

UndoResult undo_max(const CorrelationMap& child_map, int px, int py, int quadrant) {
    const int pw = (child_map.width + 1) / 2;
    const int ph = (child_map.height + 1) / 2;
    const int tx = std::clamp(px + kQuadrantOffset[quadrant][0], 0, pw - 1);
    const int ty = std::clamp(py + kQuadrantOffset[quadrant][1], 0, ph - 1);
    const int bx = 2 * tx, by = 2 * ty;

    UndoResult best;
    best.value = -1.f;
    for (int dy = -1; dy <= 1; ++dy) {
        const int y = by + dy;
        if (y < 0 || y >= child_map.height) continue;
        for (int dx = -1; dx <= 1; ++dx) {
            const int x = bx + dx;
            if (x < 0 || x >= child_map.width) continue;
            const float v = child_map.at(x, y);
            if (v > best.value) {
                best.value = v;
                best.x = x;
                best.y = y;
            }
        }
    }
    return best;
}

namespace {

struct Tuple {
    int32_t patch;   // index into the level's grid
    int32_t cell_x;  // position in the level's map coordinates
    int32_t cell_y;
    float score;
};

// Score table for one level, keyed by (patch, cell). A dense array when it
// fits, a hash map otherwise; merging keeps the maximum so the content is
// independent of insertion order.
class Frontier {
public:
    Frontier(size_t patches, size_t cells)
        : patches_(patches), cells_(cells), dense_ok_(patches * cells <= (size_t{1} << 28)) {
        if (dense_ok_)
            dense_.assign(patches * cells, -1.f);
        else
            sparse_.reserve(1024);
    }

    void merge_max(int32_t patch, int32_t cell, float score) {
        const size_t key = static_cast<size_t>(patch) * cells_ + cell;
        if (dense_ok_) {
            if (score > dense_[key]) dense_[key] = score;
        } else {
            auto [it, inserted] = sparse_.try_emplace(key, score);
            if (!inserted && score > it->second) it->second = score;
        }
    }

    template <typename Fn>
    void for_each(int map_width, Fn&& fn) const {
        if (dense_ok_) {
            for (size_t key = 0; key < dense_.size(); ++key) {
                if (dense_[key] < 0.f) continue;
                emit(key, dense_[key], map_width, fn);
            }
        } else {
            for (const auto& [key, score] : sparse_) emit(key, score, map_width, fn);
        }
    }

private:
    template <typename Fn>
    void emit(size_t key, float score, int map_width, Fn&& fn) const {
        Tuple t;
        t.patch = static_cast<int32_t>(key / cells_);
        const size_t cell = key % cells_;
        t.cell_x = static_cast<int32_t>(cell % map_width);
        t.cell_y = static_cast<int32_t>(cell / map_width);
        t.score = score;
        fn(t);
    }

    size_t patches_, cells_;
    bool dense_ok_;
    std::vector<float> dense_;
    std::unordered_map<size_t, float> sparse_;
};

std::vector<Match> backtrack_from(const CorrelationPyramid& pyr,
                                  const std::vector<Tuple>& seeds) {
    const int top = static_cast<int>(pyr.levels.size()) - 1;
    std::vector<Match> out;
    if (top < 0) return out;
    if (top == 0) {
        for (const auto& t : seeds) {
            const auto& p = pyr.levels[0].grid.positions[t.patch];
            out.push_back({static_cast<float>(p[0]), static_cast<float>(p[1]),
                           static_cast<float>(t.cell_x), static_cast<float>(t.cell_y),
                           t.score});
        }
        return out;
    }

    auto level_frontier = [&](int level) {
        const auto& lv = pyr.levels[level];
        const size_t cells = lv.maps.empty()
                                 ? 0
                                 : static_cast<size_t>(lv.maps[0].width) * lv.maps[0].height;
        return Frontier(lv.grid.positions.size(), cells);
    };

    Frontier current = level_frontier(top);
    for (const auto& t : seeds) {
        const auto& map = pyr.levels[top].maps[t.patch];
        current.merge_max(t.patch, t.cell_y * map.width + t.cell_x, t.score);
    }

    for (int level = top; level >= 1; --level) {
        const auto& lv = pyr.levels[level];
        const auto& child_lv = pyr.levels[level - 1];
        Frontier next = level_frontier(level - 1);
        const int map_w = lv.maps[0].width;
        current.for_each(map_w, [&](const Tuple& t) {
            const auto& kids = lv.grid.children[t.patch];
            for (int q = 0; q < 4; ++q) {
                const int32_t ci = kids[q];
                if (ci < 0) continue;
                const auto& child_map = child_lv.maps[ci];
                const UndoResult r = undo_max(child_map, t.cell_x, t.cell_y, q);
                next.merge_max(ci, r.y * child_map.width + r.x, t.score + r.value);
            }
        });
        current = std::move(next);
    }

    const int map_w0 = pyr.levels[0].maps[0].width;
    current.for_each(map_w0, [&](const Tuple& t) {
        const auto& p = pyr.levels[0].grid.positions[t.patch];
        out.push_back({static_cast<float>(p[0]), static_cast<float>(p[1]),
                       static_cast<float>(t.cell_x), static_cast<float>(t.cell_y),
                       t.score});
    });
    return out;
}

}  // namespace

std::vector<Match> backtrack_all(const CorrelationPyramid& pyr) {
    std::vector<Tuple> seeds;
    if (pyr.levels.empty()) return {};
    const auto& top = pyr.levels.back();
    for (size_t pi = 0; pi < top.maps.size(); ++pi) {
        const auto& map = top.maps[pi];
        for (int y = 0; y < map.height; ++y)
            for (int x = 0; x < map.width; ++x)
                seeds.push_back({static_cast<int32_t>(pi), x, y, map.at(x, y)});
    }
    return backtrack_from(pyr, seeds);
}

std::vector<Match> backtrack_single(const CorrelationPyramid& pyr, int patch_index,
                                    int cell_x, int cell_y) {
    const auto& map = pyr.levels.back().maps[patch_index];
    return backtrack_from(
        pyr, {{static_cast<int32_t>(patch_index), cell_x, cell_y, map.at(cell_x, cell_y)}});
}

namespace {

// Total order used for best-in-cell selection: higher score first, then the
// lexicographically smallest endpoints.
bool better(const Match& a, const Match& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.y1 != b.y1) return a.y1 < b.y1;
    if (a.x1 != b.x1) return a.x1 < b.x1;
    if (a.y2 != b.y2) return a.y2 < b.y2;
    return a.x2 < b.x2;
}

bool same(const Match& a, const Match& b) {
    return a.x1 == b.x1 && a.y1 == b.y1 && a.x2 == b.x2 && a.y2 == b.y2 &&
           a.score == b.score;
}

}  // namespace

MatchSet reciprocal_filter(const std::vector<Match>& raw, int width1, int height1,
                           int width2, int height2) {
    const int cw1 = (width1 + 3) / 4, ch1 = (height1 + 3) / 4;
    const int cw2 = (width2 + 3) / 4, ch2 = (height2 + 3) / 4;
    auto cell_of = [](float x, float y, int cw, int ch) -> int {
        const int cx = std::clamp(static_cast<int>(std::floor(x / 4.f)), 0, cw - 1);
        const int cy = std::clamp(static_cast<int>(std::floor(y / 4.f)), 0, ch - 1);
        return cy * cw + cx;
    };

    std::vector<int32_t> best1(static_cast<size_t>(cw1) * ch1, -1);
    std::vector<int32_t> best2(static_cast<size_t>(cw2) * ch2, -1);
    for (size_t i = 0; i < raw.size(); ++i) {
        const Match& m = raw[i];
        if (m.x1 < 0 || m.y1 < 0 || m.x1 >= width1 || m.y1 >= height1) continue;
        if (m.x2 < -0.5f || m.y2 < -0.5f || m.x2 >= width2 || m.y2 >= height2) continue;
        const int c1 = cell_of(m.x1, m.y1, cw1, ch1);
        const int c2 = cell_of(m.x2, m.y2, cw2, ch2);
        if (best1[c1] < 0 || better(m, raw[best1[c1]])) best1[c1] = static_cast<int32_t>(i);
        if (best2[c2] < 0 || better(m, raw[best2[c2]])) best2[c2] = static_cast<int32_t>(i);
    }

    MatchSet out;
    for (size_t i = 0; i < raw.size(); ++i) {
        const Match& m = raw[i];
        if (m.x1 < 0 || m.y1 < 0 || m.x1 >= width1 || m.y1 >= height1) continue;
        if (m.x2 < -0.5f || m.y2 < -0.5f || m.x2 >= width2 || m.y2 >= height2) continue;
        const int c1 = cell_of(m.x1, m.y1, cw1, ch1);
        const int c2 = cell_of(m.x2, m.y2, cw2, ch2);
        if (same(raw[best1[c1]], m) && same(raw[best2[c2]], m)) out.matches.push_back(m);
    }
    std::sort(out.matches.begin(), out.matches.end(), [](const Match& a, const Match& b) {
        if (a.y1 != b.y1) return a.y1 < b.y1;
        if (a.x1 != b.x1) return a.x1 < b.x1;
        if (a.y2 != b.y2) return a.y2 < b.y2;
        return a.x2 < b.x2;
    });
    return out;
}

uint64_t MatchParams::fingerprint() const {
    // FNV-1a over the fields that change the output.
    uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* p, size_t n) {
        const unsigned char* b = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 1099511628211ull;
        }
    };
    mix(&resolution, sizeof resolution);
    mix(&dict_size, sizeof dict_size);
    mix(&rectify_power, sizeof rectify_power);
    mix(&desc.smooth_pre, sizeof desc.smooth_pre);
    mix(&desc.smooth_orient, sizeof desc.smooth_orient);
    mix(&desc.smooth_post, sizeof desc.smooth_post);
    mix(&desc.sigmoid_slope, sizeof desc.sigmoid_slope);
    mix(&desc.regularizer, sizeof desc.regularizer);
    mix(&kmeans_iters, sizeof kmeans_iters);
    mix(&seed, sizeof seed);
    return h;
}

MatchSet deep_matching(const ImageBuffer& img1, const ImageBuffer& img2,
                       const MatchParams& params) {
    if (params.resolution <= 0.0 || params.resolution > 1.0)
        throw std::runtime_error("deep_matching: resolution must be in (0,1]");

    ImageBuffer work1 = img1, work2 = img2;
    double sx1 = 1, sy1 = 1, sx2 = 1, sy2 = 1;
    if (params.resolution < 1.0) {
        const int w1 = std::max(4, static_cast<int>(std::lround(img1.width * params.resolution)));
        const int h1 = std::max(4, static_cast<int>(std::lround(img1.height * params.resolution)));
        const int w2 = std::max(4, static_cast<int>(std::lround(img2.width * params.resolution)));
        const int h2 = std::max(4, static_cast<int>(std::lround(img2.height * params.resolution)));
        work1 = resize(img1, w1, h1);
        work2 = resize(img2, w2, h2);
        sx1 = static_cast<double>(img1.width) / w1;
        sy1 = static_cast<double>(img1.height) / h1;
        sx2 = static_cast<double>(img2.width) / w2;
        sy2 = static_cast<double>(img2.height) / h2;
    }

    const DescriptorField f1 = compute_descriptors(work1, params.desc, params.threads);
    const DescriptorField f2 = compute_descriptors(work2, params.desc, params.threads);

    CorrelationPyramid pyr;
    if (params.dict_size > 0) {
        const PrototypeDictionary dict = cluster_prototypes(
            f1, params.dict_size, params.kmeans_iters, params.seed, params.threads);
        pyr = build_pyramid_approx(f1, f2, dict, params.rectify_power, params.threads);
    } else {
        pyr = build_pyramid(f1, f2, params.rectify_power, params.threads);
    }

    std::vector<Match> raw = backtrack_all(pyr);
    MatchSet set = reciprocal_filter(raw, work1.width, work1.height, work2.width, work2.height);
    for (Match& m : set.matches) {
        m.x1 = static_cast<float>(m.x1 * sx1);
        m.y1 = static_cast<float>(m.y1 * sy1);
        m.x2 = static_cast<float>(m.x2 * sx2);
        m.y2 = static_cast<float>(m.y2 * sy2);
    }
    set.params_fingerprint = params.fingerprint();
    set.cell_size = std::max(4, static_cast<int>(std::lround(4.0 * sx1)));
    return set;
}

std::string matches_to_string(const MatchSet& matches) {
    std::string out;
    char line[160];
    for (const Match& m : matches.matches) {
        std::snprintf(line, sizeof line, "%.9g %.9g %.9g %.9g %.9g\n", m.x1, m.y1, m.x2,
                      m.y2, m.score);
        out += line;
    }
    return out;
}

MatchSet matches_from_string(const std::string& text) {
    MatchSet set;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        Match m;
        std::istringstream ls(line);
        if (!(ls >> m.x1 >> m.y1 >> m.x2 >> m.y2 >> m.score))
            throw std::runtime_error("bad match line " + std::to_string(lineno) + ": " + line);
        set.matches.push_back(m);
    }
    return set;
}

void save_matches(const MatchSet& matches, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open for writing: " + path);
    out << matches_to_string(matches);
    if (!out) throw std::runtime_error("write failed: " + path);
}

MatchSet load_matches(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open match file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return matches_from_string(ss.str());
}

}  // namespace deepmatch
