#pragma once

#include "deepmatch/correspondence.hpp"
#include "deepmatch/image.hpp"

namespace deepmatch {

struct FlowField {
    int width = 0;
    int height = 0;
    std::vector<float> u, v;

    FlowField() = default;
    FlowField(int w, int h)
        : width(w), height(h),
          u(static_cast<size_t>(w) * h, 0.f), v(static_cast<size_t>(w) * h, 0.f) {}
    size_t idx(int x, int y) const { return static_cast<size_t>(y) * width + x; }
};

struct FlowParams {
    double alpha = 1.0;            // smoothness base weight
    double beta = 300.0;           // matching term weight (coarsest level)
    double gamma = 0.8;            // gradient constancy weight
    double delta = 0.0;            // color constancy weight (0 = off)
    double sigma = 0.5;            // input pre-smoothing, pixels
    double match_exponent = 0.6;   // level falloff b in beta*(k/k_max)^b
    double norm_floor = 0.1;       // zeta, data-term normalization floor
    double penalizer_eps = 0.001;  // epsilon in sqrt(s^2 + eps^2)
    double smooth_slope = 5.0;     // kappa in alpha(x) = exp(-kappa*|grad I|)
    double match_bandwidth = 50.0; // sigma_M of the match reliability kernel
    double scale_factor = 0.95;    // eta, pyramid downsampling factor
    int min_size = 16;             // coarsest level keeps min(W,H) >= this
    int fp_iters = 5;
    int sor_iters = 25;
    double sor_omega = 1.6;
    int threads = 1;
};

// Sparse match constraints rasterized on the image-1 pixel grid.
struct MatchTermField {
    int width = 0;
    int height = 0;
    std::vector<uint8_t> mask;  // 1 where a match constrains the flow
    std::vector<float> u, v;    // target displacement where mask == 1
    std::vector<float> phi;     // reliability weight, >= 0
    int skipped = 0;            // matches dropped for being out of bounds

    MatchTermField() = default;
    MatchTermField(int w, int h)
        : width(w), height(h),
          mask(static_cast<size_t>(w) * h, 0),
          u(static_cast<size_t>(w) * h, 0.f), v(static_cast<size_t>(w) * h, 0.f),
          phi(static_cast<size_t>(w) * h, 0.f) {}
};

// Robust penalizer sqrt(s2 + eps^2) and its derivative wrt s2; these exact
// functions drive the fixed-point linearization.
double penalizer(double s2, double eps);
double penalizer_deriv(double s2, double eps);

// Places each match at its nearest image-1 pixel with the displacement as
// target. The weight combines local texture strength (10x the smallest
// structure-tensor eigenvalue) with a photometric agreement kernel of
// bandwidth sigma_M; collisions keep the higher weight.
MatchTermField rasterize_matches(const MatchSet& matches, const ImageBuffer& img1,
                                 const ImageBuffer& img2, double sigma_m = 50.0);

struct FlowDiagnostics {
    // Energy after each fixed-point iteration at the finest level,
    // evaluated with that level's effective matching weight.
    std::vector<double> finest_level_energies;
};

// Coarse-to-fine variational solver: normalized color/gradient constancy
// data term, locally weighted smoothness, and the match term faded out
// toward fine scales. Each level runs fp_iters re-linearizations, each
// approximately solved by sor_iters relaxation sweeps in red-black order.
FlowField solve_flow(const ImageBuffer& img1, const ImageBuffer& img2,
                     const MatchTermField& match_field, const FlowParams& params,
                     FlowDiagnostics* diag = nullptr);

// Discrete objective for diagnostics; the smoothness term is measured
// relative to its zero-gradient floor. Uses params.beta as the matching
// weight.
double energy(const ImageBuffer& img1, const ImageBuffer& img2, const FlowField& flow,
              const MatchTermField& match_field, const FlowParams& params);

}  // namespace deepmatch
