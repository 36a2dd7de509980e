#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <vector>

#include "deepmatch/descriptor.hpp"

namespace deepmatch {

inline constexpr int kAtomicPatchSize = 4;
inline constexpr int kPatchDescriptorDim = 16 * kDescriptorDim;  // 4x4 pixels

// Quadrant offsets, (x,y) unit vectors. Children of a patch of size N sit at
// p + (N/4)*offset.
inline constexpr std::array<std::array<int, 2>, 4> kQuadrantOffset = {
    {{-1, -1}, {-1, +1}, {+1, -1}, {+1, +1}}};

struct PatchGrid {
    int level = 0;       // 0 = atomic
    int patch_size = 4;  // 4 * 2^level
    std::vector<std::array<int, 2>> positions;  // patch centers (x,y) in image 1
    // Per position, indices into the child grid's positions; -1 where the
    // child falls outside the image (level >= 1 only).
    std::vector<std::array<int32_t, 4>> children;
};

// Similarity of one image-1 patch against image 2, subsampled 2^level-fold.
// Scores may be shared between patches in approximate mode.
struct CorrelationMap {
    std::array<int, 2> owner = {0, 0};
    int level = 0;
    int width = 0;
    int height = 0;
    std::shared_ptr<std::vector<float>> scores;

    float at(int x, int y) const {
        return (*scores)[static_cast<size_t>(y) * width + x];
    }
};

struct PyramidLevel {
    PatchGrid grid;
    std::vector<CorrelationMap> maps;  // one per grid position
};

struct CorrelationPyramid {
    std::vector<PyramidLevel> levels;
    int image1_width = 0, image1_height = 0;
    int image2_width = 0, image2_height = 0;
    // High-water mark of live correlation-score storage during the build,
    // counting shared maps once.
    size_t peak_score_bytes = 0;
    // Materialized level-0 maps (== |G4| in exact mode, <= D in approximate).
    size_t distinct_level0_maps = 0;
};

// Atomic-patch prototype codebook for approximate matching.
struct PrototypeDictionary {
    int size = 0;                    // effective size after clamping
    int requested_size = 0;
    std::vector<float> centroids;    // size * kPatchDescriptorDim
    std::vector<int32_t> assignment; // per atomic patch, atomic-grid order

    const float* centroid(int i) const {
        return &centroids[static_cast<size_t>(i) * kPatchDescriptorDim];
    }
};

// Atomic patch lattice {2,6,...} x {2,6,...}; count floor(W/4)*floor(H/4).
PatchGrid make_atomic_grid(int width, int height);

// Parent grid one level up: candidates are child centers shifted by
// -(N/4)*offset, kept when inside image 1 with at least one valid child.
PatchGrid make_parent_grid(const PatchGrid& child_grid, int width, int height);

// Copies the 4x4 patch descriptor centered at (cx,cy) into out[144].
void extract_patch_descriptor(const DescriptorField& field, int cx, int cy,
                              float* out);

// Average pixel-wise descriptor similarity of the patch against every
// position of image 2 (missing border pixels contribute zero), clamped to
// [0,1] and rectified by the power `rectify_power`.
CorrelationMap atomic_correlation(const float* patch_desc,
                                  const DescriptorField& field2,
                                  std::array<int, 2> owner,
                                  float rectify_power);

// Joint 3x3 max-pool and factor-2 decimation: out(q) = max C(2q+m).
CorrelationMap decimate_maxpool(const CorrelationMap& map);

// One aggregation step: parents average their valid children's pooled maps
// shifted by the quadrant offsets (reads clamped to map bounds), then apply
// the power rectification.
std::vector<CorrelationMap> aggregate_level(const std::vector<CorrelationMap>& child_maps,
                                            const PatchGrid& child_grid,
                                            const PatchGrid& parent_grid,
                                            float rectify_power,
                                            int threads = 1);

// Bottom-up pyramid: level 0 from atomic correlations, then aggregate until
// the patch size reaches max(W,H) of image 1 (or the grid empties).
CorrelationPyramid build_pyramid(const DescriptorField& field1,
                                 const DescriptorField& field2,
                                 float rectify_power, int threads = 1);

// Spherical k-means over atomic patch descriptors: distance-weighted
// seeding, then `iters` assign/update rounds; after each update every
// centroid's 16 pixel 9-vectors are re-projected to unit norm. D is clamped
// to the number of distinct patches.
PrototypeDictionary cluster_prototypes(const DescriptorField& field1, int dict_size,
                                       int iters, uint64_t seed, int threads = 1);

// Approximate pyramid: level-0 maps are computed once per used prototype and
// shared by assignment; level-1 parents with identical child prototype
// tuples share a map; higher levels follow the exact path.
CorrelationPyramid build_pyramid_approx(const DescriptorField& field1,
                                        const DescriptorField& field2,
                                        const PrototypeDictionary& dict,
                                        float rectify_power, int threads = 1);

}  // namespace deepmatch
