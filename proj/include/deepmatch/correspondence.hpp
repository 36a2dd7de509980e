#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "deepmatch/pyramid.hpp"

namespace deepmatch {

// One quasi-dense correspondence; coordinates are pixels in the original
// image frames, the score is the sum of correlation values along the
// backtracking path that produced it.
struct Match {
    float x1 = 0, y1 = 0;
    float x2 = 0, y2 = 0;
    float score = 0;
};

struct MatchSet {
    std::vector<Match> matches;
    uint64_t params_fingerprint = 0;
    // Side length in image-1 pixels of the cell one match accounts for
    // (the atomic patch footprint scaled back to the original resolution).
    int cell_size = 4;
};

struct UndoResult {
    int x = 0, y = 0;   // position in the child map's coordinates
    float value = 0.f;  // correlation stored there
};

// Undoes one pooling/subsampling step: best child placement for quadrant
// `quadrant` of a parent matched at (px,py) in parent-level coordinates.
// The 3x3 window sits at twice the clamped shifted position; ties go to the
// smallest (dy,dx).
UndoResult undo_max(const CorrelationMap& child_map, int px, int py, int quadrant);

// Backtracks every cell of every top-level map down to atomic matches,
// merging tuples that agree on (level, patch, position) by keeping the
// higher score. Output coordinates are image pixels (level-0 maps are
// unsubsampled); order is unspecified.
std::vector<Match> backtrack_all(const CorrelationPyramid& pyr);

// Backtracks a single top-level entry; no cross-path merging is needed
// since every patch of the subtree is visited once.
std::vector<Match> backtrack_single(const CorrelationPyramid& pyr, int patch_index,
                                    int cell_x, int cell_y);

// Keeps a match iff it is the best-scoring one in both its image-1 and
// image-2 4x4-pixel cells; ties break to the lexicographically smallest
// endpoints. Output is sorted by (y1,x1,y2,x2).
MatchSet reciprocal_filter(const std::vector<Match>& raw, int width1, int height1,
                           int width2, int height2);

struct MatchParams {
    double resolution = 0.5;   // internal working resolution R in (0,1]
    int dict_size = 0;         // prototype count; 0 selects exact mode
    float rectify_power = 1.4f;
    DescriptorParams desc;
    int kmeans_iters = 20;
    uint64_t seed = 1234;
    int threads = 1;

    uint64_t fingerprint() const;
};

// Full matching pipeline: optional downsizing to the working resolution,
// descriptors, correlation pyramid (exact or prototype-compressed),
// backtracking and reciprocal filtering. Coordinates are reported in the
// original image frames.
MatchSet deep_matching(const ImageBuffer& img1, const ImageBuffer& img2,
                       const MatchParams& params);

// Line-oriented "x1 y1 x2 y2 score" text, round-trip exact for floats.
void save_matches(const MatchSet& matches, const std::string& path);
MatchSet load_matches(const std::string& path);
std::string matches_to_string(const MatchSet& matches);
MatchSet matches_from_string(const std::string& text);

}  // namespace deepmatch
