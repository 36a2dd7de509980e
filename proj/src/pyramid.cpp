#include "deepmatch/pyramid.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstring>
#include <map>
#include <random>
#include <stdexcept>
#include <unordered_map>

#include "deepmatch/parallel.hpp"

namespace deepmatch {

namespace {

// Live/peak accounting for score storage; transient pooled maps are counted
// while alive so the high-water mark reflects real usage.
struct ByteCounter {
    size_t live = 0;
    size_t peak = 0;
    void add(size_t n) {
        live += n;
        peak = std::max(peak, live);
    }
    void sub(size_t n) { live -= n; }
};

std::shared_ptr<std::vector<float>> alloc_scores(size_t n, ByteCounter* bytes) {
    if (bytes) bytes->add(n * sizeof(float));
    return std::make_shared<std::vector<float>>(n);
}

inline int64_t pack_pos(int x, int y) {
    return (static_cast<int64_t>(y) << 32) | static_cast<uint32_t>(x);
}

float rectify(float v, float power) { return std::pow(v, power); }

void rectify_map(std::vector<float>& scores, float power) {
    for (float& v : scores) v = rectify(v, power);
}

// Dot product over one patch row: 4 pixels x 9 components, contiguous on
// both sides. Four float lanes keep the loop vectorizable without
// fast-math.
inline float dot36(const float* a, const float* b) {
    float acc[4] = {0.f, 0.f, 0.f, 0.f};
    for (int k = 0; k < 9; ++k) {
        acc[0] += a[4 * k + 0] * b[4 * k + 0];
        acc[1] += a[4 * k + 1] * b[4 * k + 1];
        acc[2] += a[4 * k + 2] * b[4 * k + 2];
        acc[3] += a[4 * k + 3] * b[4 * k + 3];
    }
    return (acc[0] + acc[1]) + (acc[2] + acc[3]);
}

}  // namespace

PatchGrid make_atomic_grid(int width, int height) {
    PatchGrid grid;
    grid.level = 0;
    grid.patch_size = kAtomicPatchSize;
    for (int y = 2; y + 2 <= height; y += 4)
        for (int x = 2; x + 2 <= width; x += 4)
            grid.positions.push_back({x, y});
    return grid;
}

PatchGrid make_parent_grid(const PatchGrid& child_grid, int width, int height) {
    PatchGrid grid;
    grid.level = child_grid.level + 1;
    grid.patch_size = child_grid.patch_size * 2;
    const int shift = grid.patch_size / 4;

    std::unordered_map<int64_t, int32_t> child_index;
    child_index.reserve(child_grid.positions.size() * 2);
    for (size_t i = 0; i < child_grid.positions.size(); ++i)
        child_index.emplace(pack_pos(child_grid.positions[i][0], child_grid.positions[i][1]),
                            static_cast<int32_t>(i));

    std::map<std::pair<int, int>, std::array<int32_t, 4>> parents;  // (y,x) ordered
    for (const auto& c : child_grid.positions) {
        for (const auto& o : kQuadrantOffset) {
            const int px = c[0] - shift * o[0];
            const int py = c[1] - shift * o[1];
            if (px < 0 || px >= width || py < 0 || py >= height) continue;
            auto [it, inserted] = parents.try_emplace({py, px});
            if (inserted) it->second = {-1, -1, -1, -1};
        }
    }
    for (auto& [pos, kids] : parents) {
        for (int i = 0; i < 4; ++i) {
            const int cx = pos.second + shift * kQuadrantOffset[i][0];
            const int cy = pos.first + shift * kQuadrantOffset[i][1];
            auto it = child_index.find(pack_pos(cx, cy));
            kids[i] = (it == child_index.end()) ? -1 : it->second;
        }
        grid.positions.push_back({pos.second, pos.first});
        grid.children.push_back(kids);
    }
    return grid;
}

void extract_patch_descriptor(const DescriptorField& field, int cx, int cy,
                              float* out) {
    for (int dy = -2; dy < 2; ++dy)
        for (int dx = -2; dx < 2; ++dx) {
            std::memcpy(out, field.vec(cx + dx, cy + dy), kDescriptorDim * sizeof(float));
            out += kDescriptorDim;
        }
}

namespace {

void atomic_correlation_into(const float* patch, const DescriptorField& field2,
                             float rectify_power, std::vector<float>& scores) {
    const int w = field2.width, h = field2.height;
    const size_t row_stride = static_cast<size_t>(w) * kDescriptorDim;

    for (int py = 0; py < h; ++py) {
        const bool y_interior = (py >= 2 && py + 1 < h);
        float* out_row = &scores[static_cast<size_t>(py) * w];
        for (int px = 0; px < w; ++px) {
            double acc = 0.0;
            if (y_interior && px >= 2 && px + 1 < w) {
                const float* base =
                    field2.data.data() + (py - 2) * row_stride + static_cast<size_t>(px - 2) * kDescriptorDim;
                acc += dot36(patch, base);
                acc += dot36(patch + 36, base + row_stride);
                acc += dot36(patch + 72, base + 2 * row_stride);
                acc += dot36(patch + 108, base + 3 * row_stride);
            } else {
                for (int dy = -2; dy < 2; ++dy) {
                    const int y = py + dy;
                    if (y < 0 || y >= h) continue;
                    for (int dx = -2; dx < 2; ++dx) {
                        const int x = px + dx;
                        if (x < 0 || x >= w) continue;
                        const float* a = patch + ((dy + 2) * 4 + (dx + 2)) * kDescriptorDim;
                        const float* b = field2.vec(x, y);
                        for (int k = 0; k < kDescriptorDim; ++k) acc += double(a[k]) * b[k];
                    }
                }
            }
            float v = static_cast<float>(acc / 16.0);
            v = std::clamp(v, 0.f, 1.f);
            out_row[px] = rectify(v, rectify_power);
        }
    }
}

}  // namespace

CorrelationMap atomic_correlation(const float* patch_desc, const DescriptorField& field2,
                                  std::array<int, 2> owner, float rectify_power) {
    CorrelationMap map;
    map.owner = owner;
    map.level = 0;
    map.width = field2.width;
    map.height = field2.height;
    map.scores = std::make_shared<std::vector<float>>(
        static_cast<size_t>(map.width) * map.height);
    atomic_correlation_into(patch_desc, field2, rectify_power, *map.scores);
    return map;
}

CorrelationMap decimate_maxpool(const CorrelationMap& map) {
    CorrelationMap out;
    out.owner = map.owner;
    out.level = map.level;  // pooled view of the same level
    out.width = (map.width + 1) / 2;
    out.height = (map.height + 1) / 2;
    out.scores = std::make_shared<std::vector<float>>(
        static_cast<size_t>(out.width) * out.height);
    const auto& src = *map.scores;
    auto& dst = *out.scores;
    for (int qy = 0; qy < out.height; ++qy) {
        const int y0 = std::max(0, 2 * qy - 1);
        const int y1 = std::min(map.height - 1, 2 * qy + 1);
        for (int qx = 0; qx < out.width; ++qx) {
            const int x0 = std::max(0, 2 * qx - 1);
            const int x1 = std::min(map.width - 1, 2 * qx + 1);
            float best = 0.f;
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x)
                    best = std::max(best, src[static_cast<size_t>(y) * map.width + x]);
            dst[static_cast<size_t>(qy) * out.width + qx] = best;
        }
    }
    return out;
}

namespace {

// Aggregation with caller-managed pooled maps and byte accounting. Pooled
// maps are produced once per distinct child map (sharing-aware).
std::vector<CorrelationMap> aggregate_with_pool(const std::vector<CorrelationMap>& child_maps,
                                                const PatchGrid& parent_grid,
                                                float rectify_power, int threads,
                                                ByteCounter* bytes) {
    // Pool each distinct score buffer once.
    std::unordered_map<const void*, CorrelationMap> pooled;
    for (const auto& cm : child_maps) {
        if (pooled.count(cm.scores.get())) continue;
        CorrelationMap p = decimate_maxpool(cm);
        if (bytes) bytes->add(p.scores->size() * sizeof(float));
        pooled.emplace(cm.scores.get(), std::move(p));
    }

    const int out_w = pooled.begin()->second.width;
    const int out_h = pooled.begin()->second.height;
    const size_t cells = static_cast<size_t>(out_w) * out_h;

    std::vector<CorrelationMap> maps(parent_grid.positions.size());
    // Reuse one buffer for parents whose child maps coincide (approximate
    // mode, level 1): key on the pooled buffers actually read.
    std::map<std::array<const void*, 4>, int> shared_key;

    struct Job {
        int parent;
        std::array<const CorrelationMap*, 4> kids;
    };
    std::vector<Job> jobs;
    for (size_t pi = 0; pi < parent_grid.positions.size(); ++pi) {
        std::array<const void*, 4> key = {nullptr, nullptr, nullptr, nullptr};
        std::array<const CorrelationMap*, 4> kids = {nullptr, nullptr, nullptr, nullptr};
        for (int i = 0; i < 4; ++i) {
            const int32_t ci = parent_grid.children[pi][i];
            if (ci < 0) continue;
            kids[i] = &pooled.at(child_maps[ci].scores.get());
            key[i] = kids[i]->scores.get();
        }
        auto [it, inserted] = shared_key.try_emplace(key, static_cast<int>(pi));
        CorrelationMap& m = maps[pi];
        m.owner = parent_grid.positions[pi];
        m.level = parent_grid.level;
        m.width = out_w;
        m.height = out_h;
        if (!inserted) {
            m.scores = maps[it->second].scores;  // filled by the owning job
            continue;
        }
        m.scores = alloc_scores(cells, bytes);
        jobs.push_back({static_cast<int>(pi), kids});
    }

    parallel_chunks(static_cast<int>(jobs.size()), threads, [&](int begin, int end) {
        for (int j = begin; j < end; ++j) {
            const auto& kids = jobs[j].kids;
            auto& out = *maps[jobs[j].parent].scores;
            int valid = 0;
            for (int i = 0; i < 4; ++i)
                if (kids[i]) ++valid;
            const float inv = 1.f / static_cast<float>(valid);
            for (int qy = 0; qy < out_h; ++qy)
                for (int qx = 0; qx < out_w; ++qx) {
                    float acc = 0.f;
                    for (int i = 0; i < 4; ++i) {
                        if (!kids[i]) continue;
                        const int sx = std::clamp(qx + kQuadrantOffset[i][0], 0, out_w - 1);
                        const int sy = std::clamp(qy + kQuadrantOffset[i][1], 0, out_h - 1);
                        acc += kids[i]->at(sx, sy);
                    }
                    out[static_cast<size_t>(qy) * out_w + qx] =
                        rectify(acc * inv, rectify_power);
                }
        }
    });

    if (bytes)
        for (auto& [ptr, p] : pooled) bytes->sub(p.scores->size() * sizeof(float));
    return maps;
}

}  // namespace

std::vector<CorrelationMap> aggregate_level(const std::vector<CorrelationMap>& child_maps,
                                            const PatchGrid& child_grid,
                                            const PatchGrid& parent_grid,
                                            float rectify_power, int threads) {
    (void)child_grid;
    return aggregate_with_pool(child_maps, parent_grid, rectify_power, threads, nullptr);
}

namespace {

CorrelationPyramid build_pyramid_impl(const DescriptorField& field1,
                                      const DescriptorField& field2,
                                      const PrototypeDictionary* dict,
                                      float rectify_power, int threads) {
    if (field1.width < kAtomicPatchSize || field1.height < kAtomicPatchSize)
        throw std::runtime_error("build_pyramid: image smaller than one atomic patch");
    if (field2.empty()) throw std::runtime_error("build_pyramid: empty target field");

    CorrelationPyramid pyr;
    pyr.image1_width = field1.width;
    pyr.image1_height = field1.height;
    pyr.image2_width = field2.width;
    pyr.image2_height = field2.height;

    ByteCounter bytes;

    PyramidLevel level0;
    level0.grid = make_atomic_grid(field1.width, field1.height);
    const size_t npatch = level0.grid.positions.size();
    level0.maps.resize(npatch);
    const size_t cells0 = static_cast<size_t>(field2.width) * field2.height;

    if (!dict) {
        for (size_t i = 0; i < npatch; ++i) {
            level0.maps[i].owner = level0.grid.positions[i];
            level0.maps[i].level = 0;
            level0.maps[i].width = field2.width;
            level0.maps[i].height = field2.height;
            level0.maps[i].scores = alloc_scores(cells0, &bytes);
        }
        parallel_chunks(static_cast<int>(npatch), threads, [&](int begin, int end) {
            float patch[kPatchDescriptorDim];
            for (int i = begin; i < end; ++i) {
                const auto& p = level0.grid.positions[i];
                extract_patch_descriptor(field1, p[0], p[1], patch);
                atomic_correlation_into(patch, field2, rectify_power, *level0.maps[i].scores);
            }
        });
        pyr.distinct_level0_maps = npatch;
    } else {
        if (dict->assignment.size() != npatch)
            throw std::runtime_error("build_pyramid_approx: dictionary does not cover the atomic grid");
        // One correlation per prototype actually used.
        std::vector<int32_t> used(dict->size, -1);
        std::vector<int> order;
        for (int32_t a : dict->assignment) {
            if (a < 0 || a >= dict->size)
                throw std::runtime_error("build_pyramid_approx: assignment out of range");
            if (used[a] < 0) {
                used[a] = static_cast<int32_t>(order.size());
                order.push_back(a);
            }
        }
        std::vector<std::shared_ptr<std::vector<float>>> proto_maps(order.size());
        for (auto& m : proto_maps) m = alloc_scores(cells0, &bytes);
        parallel_chunks(static_cast<int>(order.size()), threads, [&](int begin, int end) {
            for (int i = begin; i < end; ++i)
                atomic_correlation_into(dict->centroid(order[i]), field2, rectify_power,
                                        *proto_maps[i]);
        });
        for (size_t i = 0; i < npatch; ++i) {
            level0.maps[i].owner = level0.grid.positions[i];
            level0.maps[i].level = 0;
            level0.maps[i].width = field2.width;
            level0.maps[i].height = field2.height;
            level0.maps[i].scores = proto_maps[used[dict->assignment[i]]];
        }
        pyr.distinct_level0_maps = order.size();
    }
    pyr.levels.push_back(std::move(level0));

    int patch_size = kAtomicPatchSize;
    const int target = std::max(field1.width, field1.height);
    while (patch_size < target) {
        const PyramidLevel& prev = pyr.levels.back();
        PyramidLevel next;
        next.grid = make_parent_grid(prev.grid, field1.width, field1.height);
        if (next.grid.positions.empty()) break;
        next.maps = aggregate_with_pool(prev.maps, next.grid, rectify_power, threads, &bytes);
        pyr.levels.push_back(std::move(next));
        patch_size *= 2;
    }

    pyr.peak_score_bytes = bytes.peak;
    return pyr;
}

}  // namespace

CorrelationPyramid build_pyramid(const DescriptorField& field1,
                                 const DescriptorField& field2,
                                 float rectify_power, int threads) {
    return build_pyramid_impl(field1, field2, nullptr, rectify_power, threads);
}

CorrelationPyramid build_pyramid_approx(const DescriptorField& field1,
                                        const DescriptorField& field2,
                                        const PrototypeDictionary& dict,
                                        float rectify_power, int threads) {
    return build_pyramid_impl(field1, field2, &dict, rectify_power, threads);
}

namespace {

double patch_dist2(const float* a, const float* b) {
    double acc = 0.0;
    for (int k = 0; k < kPatchDescriptorDim; ++k) {
        const double d = double(a[k]) - b[k];
        acc += d * d;
    }
    return acc;
}

double patch_dot(const float* a, const float* b) {
    double acc = 0.0;
    for (int k = 0; k < kPatchDescriptorDim; ++k) acc += double(a[k]) * b[k];
    return acc;
}

double unit_draw(std::mt19937_64& rng) {
    return (rng() >> 11) * (1.0 / 9007199254740992.0);  // [0,1) with 53 bits
}

}  // namespace

PrototypeDictionary cluster_prototypes(const DescriptorField& field1, int dict_size,
                                       int iters, uint64_t seed, int threads) {
    if (dict_size < 1) throw std::runtime_error("cluster_prototypes: dictionary size must be >= 1");
    PatchGrid grid = make_atomic_grid(field1.width, field1.height);
    const int n = static_cast<int>(grid.positions.size());
    if (n == 0) throw std::runtime_error("cluster_prototypes: no atomic patches");

    std::vector<float> patches(static_cast<size_t>(n) * kPatchDescriptorDim);
    for (int i = 0; i < n; ++i)
        extract_patch_descriptor(field1, grid.positions[i][0], grid.positions[i][1],
                                 &patches[static_cast<size_t>(i) * kPatchDescriptorDim]);
    auto patch = [&](int i) { return &patches[static_cast<size_t>(i) * kPatchDescriptorDim]; };

    PrototypeDictionary dict;
    dict.requested_size = dict_size;
    const int d_max = std::min(dict_size, n);

    // Distance-weighted seeding; duplicates carry zero weight, so the
    // effective size is capped by the number of distinct patches.
    std::mt19937_64 rng(seed);
    std::vector<int> seeds;
    std::vector<double> min_d2(n, 0.0);
    seeds.push_back(static_cast<int>(rng() % static_cast<uint64_t>(n)));
    for (int i = 0; i < n; ++i) min_d2[i] = patch_dist2(patch(i), patch(seeds[0]));
    while (static_cast<int>(seeds.size()) < d_max) {
        double total = 0.0;
        for (int i = 0; i < n; ++i) total += min_d2[i];
        int pick = -1;
        if (total > 0.0) {
            double r = unit_draw(rng) * total;
            for (int i = 0; i < n; ++i) {
                r -= min_d2[i];
                if (r <= 0.0) {
                    pick = i;
                    break;
                }
            }
            if (pick < 0) {  // fp slack: last strictly-positive weight
                for (int i = n - 1; i >= 0; --i)
                    if (min_d2[i] > 0.0) {
                        pick = i;
                        break;
                    }
            }
        }
        if (pick < 0) break;  // every remaining patch duplicates a seed
        seeds.push_back(pick);
        for (int i = 0; i < n; ++i)
            min_d2[i] = std::min(min_d2[i], patch_dist2(patch(i), patch(pick)));
    }

    const int d = static_cast<int>(seeds.size());
    dict.size = d;
    dict.centroids.resize(static_cast<size_t>(d) * kPatchDescriptorDim);
    for (int c = 0; c < d; ++c)
        std::memcpy(&dict.centroids[static_cast<size_t>(c) * kPatchDescriptorDim],
                    patch(seeds[c]), kPatchDescriptorDim * sizeof(float));

    dict.assignment.assign(n, 0);
    std::vector<double> sums;
    std::vector<int> counts;
    for (int iter = 0; iter < iters; ++iter) {
        // Assign by maximum patch similarity (equivalent to min distance for
        // unit per-pixel vectors).
        std::atomic<bool> changed{false};
        parallel_chunks(n, threads, [&](int begin, int end) {
            for (int i = begin; i < end; ++i) {
                double best = -1.0;
                int best_c = 0;
                for (int c = 0; c < d; ++c) {
                    const double s = patch_dot(patch(i), dict.centroid(c));
                    if (s > best) {
                        best = s;
                        best_c = c;
                    }
                }
                if (dict.assignment[i] != best_c) {
                    dict.assignment[i] = best_c;
                    changed.store(true, std::memory_order_relaxed);
                }
            }
        });
        if (iter > 0 && !changed.load()) break;

        sums.assign(static_cast<size_t>(d) * kPatchDescriptorDim, 0.0);
        counts.assign(d, 0);
        for (int i = 0; i < n; ++i) {
            const int c = dict.assignment[i];
            ++counts[c];
            const float* p = patch(i);
            double* s = &sums[static_cast<size_t>(c) * kPatchDescriptorDim];
            for (int k = 0; k < kPatchDescriptorDim; ++k) s[k] += p[k];
        }
        // Re-seed empty clusters from the farthest-assigned patches.
        for (int c = 0; c < d; ++c) {
            if (counts[c] > 0) continue;
            double worst = -1.0;
            int far_i = -1;
            for (int i = 0; i < n; ++i) {
                if (counts[dict.assignment[i]] <= 1) continue;
                const double dd = patch_dist2(patch(i), dict.centroid(dict.assignment[i]));
                if (dd > worst) {
                    worst = dd;
                    far_i = i;
                }
            }
            if (far_i < 0) continue;
            --counts[dict.assignment[far_i]];
            const float* p = patch(far_i);
            double* sold = &sums[static_cast<size_t>(dict.assignment[far_i]) * kPatchDescriptorDim];
            for (int k = 0; k < kPatchDescriptorDim; ++k) sold[k] -= p[k];
            dict.assignment[far_i] = c;
            counts[c] = 1;
            double* s = &sums[static_cast<size_t>(c) * kPatchDescriptorDim];
            for (int k = 0; k < kPatchDescriptorDim; ++k) s[k] = p[k];
        }
        // Mean, then project every pixel 9-vector back to the unit sphere.
        for (int c = 0; c < d; ++c) {
            float* ctr = &dict.centroids[static_cast<size_t>(c) * kPatchDescriptorDim];
            const double* s = &sums[static_cast<size_t>(c) * kPatchDescriptorDim];
            const double inv = 1.0 / counts[c];
            for (int px = 0; px < 16; ++px) {
                double mean[kDescriptorDim];
                double norm2 = 0.0;
                for (int k = 0; k < kDescriptorDim; ++k) {
                    mean[k] = s[px * kDescriptorDim + k] * inv;
                    norm2 += mean[k] * mean[k];
                }
                // Skip the projection when the vector is unit already (up to
                // float rounding) so uniform clusters stay bit-exact.
                const double scale = (std::abs(norm2 - 1.0) <= 1e-5) ? 1.0 : 1.0 / std::sqrt(norm2);
                for (int k = 0; k < kDescriptorDim; ++k)
                    ctr[px * kDescriptorDim + k] = static_cast<float>(mean[k] * scale);
            }
        }
    }

    // Final assignment against the last centroids.
    parallel_chunks(n, threads, [&](int begin, int end) {
        for (int i = begin; i < end; ++i) {
            double best = -1.0;
            int best_c = 0;
            for (int c = 0; c < d; ++c) {
                const double s = patch_dot(patch(i), dict.centroid(c));
                if (s > best) {
                    best = s;
                    best_c = c;
                }
            }
            dict.assignment[i] = best_c;
        }
    });
    return dict;
}

}  // namespace deepmatch
