#pragma once

#include "deepmatch/correspondence.hpp"

namespace deepmatch {

// One cell of the scale/rotation search lattice.
struct WarpCell {
    double log2_scale = 0;  // in {-2,-1.5,...,2}
    double theta = 0;       // in {0, pi/4, ..., 7pi/4}
    double sigma1 = 1;      // image-1 downsize factor, max(1, 2^s)
    double sigma2 = 1;      // image-2 downsize factor, max(1, 2^-s)
};

std::vector<WarpCell> invariance_lattice();

struct InvariantStats {
    std::vector<size_t> matches_per_cell;  // raw match counts, lattice order
    int best_cell = -1;                    // cell contributing the most survivors
};

// Scale- and rotation-invariant matching: runs the core matcher on every
// lattice cell (image 1 downsized by sigma1, image 2 rotated by -theta then
// downsized by sigma2), maps matches back to the original frames and keeps
// the reciprocal ones over the union.
MatchSet match_invariant(const ImageBuffer& img1, const ImageBuffer& img2,
                         const MatchParams& params, InvariantStats* stats = nullptr);

}  // namespace deepmatch
