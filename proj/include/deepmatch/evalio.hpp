#pragma once

#include <optional>
#include <string>

#include "deepmatch/flow.hpp"

namespace deepmatch {

struct GroundTruthFlow {
    FlowField flow;
    std::vector<uint8_t> valid;  // per pixel, 0 where ground truth undefined

    bool is_valid(int x, int y) const { return valid[flow.idx(x, y)] != 0; }
};

struct MetricReport {
    double accuracy_at_T = 0;    // uncovered pixels count as incorrect
    double accuracy_covered = 0; // restricted to pixels some match accounts for
    double pixel_coverage = 0;   // fraction of evaluated pixels covered
    double epe = 0;
    double epe_s0_10 = 0;
    double epe_s10_40 = 0;
    double epe_s40plus = 0;
    double epe_occluded = 0;     // only when an occlusion mask is supplied
    double coverage = 0;         // 10-px lattice coverage
    size_t match_count = 0;
};

// Middlebury .flo: "PIEH", int32 width, int32 height, then row-major
// interleaved (u,v) float32, all little-endian. Components with magnitude
// above 1e9 mark the pixel invalid on read.
GroundTruthFlow read_flo(const std::string& path);
void write_flo(const FlowField& flow, const std::string& path);

// Fraction of ground-truth-valid pixels whose inherited match displacement
// lands strictly within T pixels of the ground-truth target. Every pixel
// inherits the highest-score match whose cell (cell_size x cell_size,
// centered like the atomic patch) contains it.
MetricReport accuracy_at_T(const MatchSet& matches, const GroundTruthFlow& gt, double T);

// Endpoint-error family over valid pixels, with the ground-truth-magnitude
// bands [0,10), [10,40), [40,inf). An optional occlusion mask (nonzero =
// occluded) excludes occluded pixels from the main EPE and reports them
// separately.
MetricReport epe(const FlowField& flow, const GroundTruthFlow& gt,
                 const ImageBuffer* occlusion_mask = nullptr);

// Fraction of 10-px lattice points of image 1 with a match endpoint within
// Chebyshev distance 10.
double coverage(const MatchSet& matches, int width, int height);

// Line-oriented "key value" serialization and a JSON variant.
std::string report_to_text(const MetricReport& report);
std::string report_to_json(const MetricReport& report);

// HSV-wheel rendering of a flow field; vectors at or above max_magnitude
// saturate (pass 0 to auto-scale to the field's maximum).
ImageBuffer flow_visualization(const FlowField& flow, float max_magnitude = 0.f);

}  // namespace deepmatch
