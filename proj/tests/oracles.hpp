#pragma once

// Independent reference implementations used to freeze expected values.
// Everything here is a direct double-precision transcription of the defining
// formulas with plain scalar loops; none of it shares code with the library.

#include <array>
#include <cstdint>
#include <map>
#include <vector>

#include "deepmatch/correspondence.hpp"
#include "deepmatch/descriptor.hpp"
#include "deepmatch/evalio.hpp"
#include "deepmatch/pyramid.hpp"

namespace oracle {

// Full descriptor pipeline (smooth, gradient, 8 projections, smooth,
// sigmoid, smooth, append regularizer, normalize) in double precision.
std::vector<std::array<double, 9>> descriptor_pipeline(const deepmatch::ImageBuffer& img,
                                                       const deepmatch::DescriptorParams& p);

// Average pixel-wise similarity of the 4x4 patch centered at (cx,cy) in
// field1 against position (px,py) of field2, missing pixels contributing 0.
double atomic_similarity(const deepmatch::DescriptorField& field1, int cx, int cy,
                         const deepmatch::DescriptorField& field2, int px, int py);

// Entire correlation pyramid by the direct recursion, one level at a time:
// level 0 from atomic_similarity (clamped, rectified), upper levels by
// averaging each valid child's best placement in the 3x3 window at twice the
// clamped shifted cell. Returns per-level maps keyed by patch center.
struct OraclePyramid {
    struct Level {
        int patch_size;
        int map_w, map_h;
        std::map<std::pair<int, int>, std::vector<double>> maps;  // (y,x) -> scores
    };
    std::vector<Level> levels;
};
OraclePyramid pyramid(const deepmatch::DescriptorField& field1,
                      const deepmatch::DescriptorField& field2, double rectify_power);

// Expands every backtracking path from the given pyramid without any
// pruning, then keeps the best score per atomic (patch, position).
std::map<std::tuple<int, int, int, int>, float> backtrack_no_pruning(
    const deepmatch::CorrelationPyramid& pyr);

// Quadratic-time mutual-best filter.
std::vector<deepmatch::Match> reciprocal_bruteforce(const std::vector<deepmatch::Match>& raw,
                                                    int w1, int h1, int w2, int h2);

// Per-pixel accuracy scan: every pixel checks every match.
double accuracy_scan(const deepmatch::MatchSet& matches, const deepmatch::GroundTruthFlow& gt,
                     double T);

// Scalar-loop endpoint error.
double epe_scan(const deepmatch::FlowField& flow, const deepmatch::GroundTruthFlow& gt);

// Exhaustive lattice coverage.
double coverage_scan(const deepmatch::MatchSet& matches, int width, int height);

}  // namespace oracle
