#include <cmath>
#include <set>

#include "deepmatch/pyramid.hpp"
#include "doctest.h"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace deepmatch;

namespace {

DescriptorField descriptors_of(const ImageBuffer& img) {
    return compute_descriptors(img, DescriptorParams{});
}

}  // namespace

TEST_CASE("atomic grid is the step-4 lattice starting at 2") {
    PatchGrid g = make_atomic_grid(16, 12);
    CHECK(g.positions.size() == 4u * 3u);
    CHECK(g.positions.front() == std::array<int, 2>{2, 2});
    CHECK(g.positions.back() == std::array<int, 2>{14, 10});

    // Trailing pixels beyond the last atomic center stay uncovered.
    PatchGrid g2 = make_atomic_grid(18, 13);
    CHECK(g2.positions.size() == 4u * 3u);
}

TEST_CASE("parent grids keep only in-image centers with a valid child") {
    PatchGrid g4 = make_atomic_grid(8, 8);
    PatchGrid g8 = make_parent_grid(g4, 8, 8);
    CHECK(g8.patch_size == 8);
    std::set<std::pair<int, int>> pos;
    for (const auto& p : g8.positions) pos.insert({p[0], p[1]});
    CHECK(pos == std::set<std::pair<int, int>>{{0, 0}, {0, 4}, {4, 0}, {4, 4}});
    for (const auto& kids : g8.children) {
        int valid = 0;
        for (int32_t k : kids)
            if (k >= 0) ++valid;
        CHECK(valid >= 1);
    }
    // The fully interior parent (4,4) has all four children.
    for (size_t i = 0; i < g8.positions.size(); ++i)
        if (g8.positions[i] == std::array<int, 2>{4, 4})
            for (int32_t k : g8.children[i]) CHECK(k >= 0);
}

TEST_CASE("self correlation peaks at the patch center with value 1") {
    ImageBuffer img = testsupport::smooth_texture(20, 20, 21);
    DescriptorField f = descriptors_of(img);
    float patch[kPatchDescriptorDim];
    extract_patch_descriptor(f, 10, 10, patch);
    CorrelationMap map = atomic_correlation(patch, f, {10, 10}, 1.4f);
    CHECK(map.at(10, 10) == doctest::Approx(1.f).epsilon(1e-6));
    float maxv = 0;
    for (float v : *map.scores) maxv = std::max(maxv, v);
    CHECK(map.at(10, 10) == doctest::Approx(maxv));
}

TEST_CASE("flat image pair correlates at 1 wherever the window is complete") {
    ImageBuffer a(12, 12, 1, 0.4f), b(16, 10, 1, 0.9f);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    float patch[kPatchDescriptorDim];
    extract_patch_descriptor(fa, 6, 6, patch);
    CorrelationMap map = atomic_correlation(patch, fb, {6, 6}, 1.4f);
    for (int y = 2; y + 1 < map.height; ++y)
        for (int x = 2; x + 1 < map.width; ++x)
            CHECK(map.at(x, y) == doctest::Approx(1.f).epsilon(1e-6));
    // Bordering positions lose the out-of-image pixels and shrink.
    CHECK(map.at(0, 0) < 0.5f);
}

TEST_CASE("atomic correlation equals the direct similarity loop") {
    ImageBuffer a = testsupport::random_noise(8, 8, 31);
    ImageBuffer b = testsupport::random_noise(8, 8, 32);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    float patch[kPatchDescriptorDim];
    for (const auto& center : make_atomic_grid(8, 8).positions) {
        extract_patch_descriptor(fa, center[0], center[1], patch);
        CorrelationMap raw = atomic_correlation(patch, fb, center, 1.f);
        CorrelationMap rect = atomic_correlation(patch, fb, center, 1.4f);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                const double want = std::clamp(
                    oracle::atomic_similarity(fa, center[0], center[1], fb, x, y), 0.0, 1.0);
                CHECK(raw.at(x, y) == doctest::Approx(want).epsilon(1e-6));
                CHECK(rect.at(x, y) == doctest::Approx(std::pow(want, 1.4)).epsilon(1e-6));
            }
    }
}

TEST_CASE("rectification preserves the argmax position") {
    ImageBuffer a = testsupport::random_noise(12, 12, 8);
    ImageBuffer b = testsupport::random_noise(12, 12, 9);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    float patch[kPatchDescriptorDim];
    extract_patch_descriptor(fa, 6, 6, patch);
    CorrelationMap raw = atomic_correlation(patch, fb, {6, 6}, 1.f);
    CorrelationMap rect = atomic_correlation(patch, fb, {6, 6}, 1.4f);
    const auto argmax = [](const CorrelationMap& m) {
        int best = 0;
        for (size_t i = 1; i < m.scores->size(); ++i)
            if ((*m.scores)[i] > (*m.scores)[best]) best = static_cast<int>(i);
        return best;
    };
    CHECK(argmax(raw) == argmax(rect));
}

TEST_CASE("constant children aggregate to a constant c^lambda map") {
    PatchGrid g4 = make_atomic_grid(8, 8);
    PatchGrid g8 = make_parent_grid(g4, 8, 8);
    std::vector<CorrelationMap> children(4);
    for (int i = 0; i < 4; ++i) {
        children[i].owner = g4.positions[i];
        children[i].level = 0;
        children[i].width = 9;
        children[i].height = 7;
        children[i].scores = std::make_shared<std::vector<float>>(9 * 7, 0.5f);
    }
    std::vector<CorrelationMap> parents = aggregate_level(children, g4, g8, 1.4f);
    REQUIRE(parents.size() == g8.positions.size());
    const float want = std::pow(0.5f, 1.4f);
    for (const auto& m : parents)
        for (float v : *m.scores) CHECK(v == doctest::Approx(want).epsilon(1e-6));
}

TEST_CASE("pyramid stops once the patch covers the larger image side") {
    ImageBuffer a = testsupport::smooth_texture(64, 64, 4);
    DescriptorField f = descriptors_of(a);
    CorrelationPyramid pyr = build_pyramid(f, f, 1.4f);
    REQUIRE(pyr.levels.size() == 5);
    for (size_t l = 0; l < 5; ++l)
        CHECK(pyr.levels[l].grid.patch_size == 4 << l);

    ImageBuffer tiny(4, 4, 1, 0.2f);
    DescriptorField ft = descriptors_of(tiny);
    CorrelationPyramid small = build_pyramid(ft, ft, 1.4f);
    CHECK(small.levels.size() == 1);

    ImageBuffer micro(3, 5, 1, 0.2f);
    DescriptorField fm = descriptors_of(micro);
    CHECK_THROWS_AS(build_pyramid(fm, ft, 1.4f), std::runtime_error);
}

TEST_CASE("pyramid scores match the direct recursion") {
    for (uint64_t seed : {101, 102}) {
        ImageBuffer a = testsupport::smooth_texture(20, 16, seed);
        ImageBuffer b = testsupport::smooth_texture(20, 16, seed + 50);
        DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
        CorrelationPyramid pyr = build_pyramid(fa, fb, 1.4f);
        oracle::OraclePyramid ref = oracle::pyramid(fa, fb, 1.4);
        REQUIRE(pyr.levels.size() == ref.levels.size());
        double max_dev = 0;
        for (size_t l = 0; l < pyr.levels.size(); ++l) {
            REQUIRE(pyr.levels[l].maps.size() == ref.levels[l].maps.size());
            for (size_t i = 0; i < pyr.levels[l].maps.size(); ++i) {
                const auto& m = pyr.levels[l].maps[i];
                const auto it = ref.levels[l].maps.find({m.owner[1], m.owner[0]});
                REQUIRE(it != ref.levels[l].maps.end());
                for (size_t k = 0; k < m.scores->size(); ++k)
                    max_dev = std::max(max_dev,
                                       std::abs(double((*m.scores)[k]) - it->second[k]));
            }
        }
        CHECK(max_dev < 1e-5);
    }
}

TEST_CASE("all stored scores stay in [0,1] across levels") {
    ImageBuffer a = testsupport::random_noise(24, 20, 61);
    ImageBuffer b = testsupport::smooth_texture(28, 24, 62);
    CorrelationPyramid pyr = build_pyramid(descriptors_of(a), descriptors_of(b), 1.4f);
    for (const auto& level : pyr.levels)
        for (const auto& m : level.maps)
            for (float v : *m.scores) {
                CHECK(v >= 0.f);
                CHECK(v <= 1.f);
            }
}

TEST_CASE("matching an image to itself peaks at the aligned position") {
    ImageBuffer a = testsupport::smooth_texture(24, 24, 77);
    DescriptorField f = descriptors_of(a);
    CorrelationPyramid pyr = build_pyramid(f, f, 1.4f);
    for (const auto& m : pyr.levels[0].maps) {
        float maxv = 0;
        for (float v : *m.scores) maxv = std::max(maxv, v);
        CHECK(m.at(m.owner[0], m.owner[1]) == doctest::Approx(maxv).epsilon(1e-6));
    }
}

TEST_CASE("threading leaves pyramid scores unchanged") {
    ImageBuffer a = testsupport::smooth_texture(24, 20, 15);
    ImageBuffer b = testsupport::smooth_texture(24, 20, 16);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    CorrelationPyramid p1 = build_pyramid(fa, fb, 1.4f, 1);
    CorrelationPyramid p2 = build_pyramid(fa, fb, 1.4f, 4);
    REQUIRE(p1.levels.size() == p2.levels.size());
    for (size_t l = 0; l < p1.levels.size(); ++l)
        for (size_t i = 0; i < p1.levels[l].maps.size(); ++i)
            CHECK(*p1.levels[l].maps[i].scores == *p2.levels[l].maps[i].scores);
}

TEST_CASE("a dictionary of every distinct patch reproduces the exact pyramid") {
    ImageBuffer a = testsupport::smooth_texture(24, 24, 300);
    ImageBuffer b = testsupport::smooth_texture(24, 24, 301);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    const int n_patches = static_cast<int>(make_atomic_grid(24, 24).positions.size());
    PrototypeDictionary dict = cluster_prototypes(fa, n_patches, 20, 9);
    CHECK(dict.size == n_patches);  // texture: all patches distinct
    CorrelationPyramid exact = build_pyramid(fa, fb, 1.4f);
    CorrelationPyramid approx = build_pyramid_approx(fa, fb, dict, 1.4f);
    REQUIRE(exact.levels.size() == approx.levels.size());
    for (size_t l = 0; l < exact.levels.size(); ++l) {
        REQUIRE(exact.levels[l].maps.size() == approx.levels[l].maps.size());
        for (size_t i = 0; i < exact.levels[l].maps.size(); ++i)
            CHECK(*exact.levels[l].maps[i].scores == *approx.levels[l].maps[i].scores);
    }
}

TEST_CASE("two planted texture classes are recovered with two prototypes") {
    // Left half: horizontal stripes (vertical gradients); right half:
    // vertical stripes. Atomic patches are identical within each half.
    ImageBuffer img(32, 16, 1);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 32; ++x)
            img.at(x, y) = (x < 16) ? (y % 2 ? 0.9f : 0.1f) : (x % 2 ? 0.9f : 0.1f);
    DescriptorField f = compute_descriptors(img, DescriptorParams::uncompressed());
    PrototypeDictionary dict = cluster_prototypes(f, 2, 20, 123);
    REQUIRE(dict.size == 2);
    PatchGrid grid = make_atomic_grid(32, 16);
    // Sample the class interiors away from the half boundary.
    std::set<int> left_labels, right_labels;
    for (size_t i = 0; i < grid.positions.size(); ++i) {
        const int x = grid.positions[i][0];
        if (x <= 10) left_labels.insert(dict.assignment[i]);
        if (x >= 22) right_labels.insert(dict.assignment[i]);
    }
    CHECK(left_labels.size() == 1);
    CHECK(right_labels.size() == 1);
    CHECK(*left_labels.begin() != *right_labels.begin());
    // Assignment agrees with an independent nearest-centroid scan.
    float patch[kPatchDescriptorDim];
    for (size_t i = 0; i < grid.positions.size(); ++i) {
        extract_patch_descriptor(f, grid.positions[i][0], grid.positions[i][1], patch);
        double best = -1;
        int best_c = -1;
        for (int c = 0; c < dict.size; ++c) {
            double s = 0;
            for (int k = 0; k < kPatchDescriptorDim; ++k)
                s += double(patch[k]) * dict.centroid(c)[k];
            if (s > best) {
                best = s;
                best_c = c;
            }
        }
        CHECK(dict.assignment[i] == best_c);
    }
}

TEST_CASE("oversized dictionary requests clamp to the patch count") {
    ImageBuffer img = testsupport::smooth_texture(12, 12, 55);
    DescriptorField f = descriptors_of(img);
    PrototypeDictionary dict = cluster_prototypes(f, 500, 10, 1);
    CHECK(dict.requested_size == 500);
    CHECK(dict.size <= 9);
    for (int32_t a : dict.assignment) {
        CHECK(a >= 0);
        CHECK(a < dict.size);
    }
}

TEST_CASE("approximate mode materializes at most D level-0 maps") {
    ImageBuffer a = testsupport::smooth_texture(48, 48, 401);
    ImageBuffer b = testsupport::smooth_texture(48, 48, 402);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    PrototypeDictionary dict = cluster_prototypes(fa, 16, 20, 5);
    CorrelationPyramid approx = build_pyramid_approx(fa, fb, dict, 1.4f);
    CHECK(approx.distinct_level0_maps <= 16u);
    CHECK(approx.levels[0].maps.size() == make_atomic_grid(48, 48).positions.size());

    CorrelationPyramid exact = build_pyramid(fa, fb, 1.4f);
    CHECK(approx.peak_score_bytes < exact.peak_score_bytes);

    // Sharing matches the assignment histogram: distinct maps == distinct
    // prototypes actually assigned.
    std::set<int32_t> used(dict.assignment.begin(), dict.assignment.end());
    CHECK(approx.distinct_level0_maps == used.size());
    std::set<const void*> buffers;
    for (const auto& m : approx.levels[0].maps) buffers.insert(m.scores.get());
    CHECK(buffers.size() == used.size());
}

TEST_CASE("peak score storage stays within the analytic bound" * doctest::timeout(300)) {
    ImageBuffer a = testsupport::smooth_texture(256, 256, 500);
    ImageBuffer b = testsupport::smooth_texture(256, 256, 501);
    DescriptorField fa = descriptors_of(a), fb = descriptors_of(b);
    CorrelationPyramid pyr = build_pyramid(fa, fb, 1.4f, 2);
    size_t bound = 0;
    for (const auto& level : pyr.levels) {
        const int l = level.grid.level;
        const size_t cells = static_cast<size_t>((256 + (1 << l) - 1) >> l) *
                             ((256 + (1 << l) - 1) >> l);
        bound += level.grid.positions.size() * cells * sizeof(float);
    }
    CHECK(pyr.peak_score_bytes <= bound + bound / 5);
    CHECK(pyr.peak_score_bytes >= bound);  // everything is retained
}
