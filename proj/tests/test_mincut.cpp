#include "doctest.h"

#include "cmfseg/mincut.hpp"
#include "test_support.hpp"

#include <cmath>
#include <limits>
#include <random>

using namespace cmfseg;
using cmfseg::test::random_caps;

namespace {

CapacityField make_caps(Dims d, Spacing sp = Spacing{}) {
    return CapacityField{Volume3D(d, sp), Volume3D(d, sp), Volume3D(d, sp)};
}

// Independent energy check: walk every labeling of a small graph with plain
// loops, no shared code with enumerate_min's Gray-code path.
double brute_force_min(const GridGraph& g) {
    const std::size_t n = g.cs.size();
    const int nx = g.dims.nx, ny = g.dims.ny, nz = g.dims.nz;
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t bits = 0; bits < (std::size_t(1) << n); ++bits) {
        double e = 0.0;
        auto lab = [&](int x, int y, int z) {
            return (bits >> (std::size_t(z) * ny * nx + std::size_t(y) * nx + x)) & 1u;
        };
        for (int z = 0; z < nz; ++z)
            for (int y = 0; y < ny; ++y)
                for (int x = 0; x < nx; ++x) {
                    const std::size_t i =
                        std::size_t(z) * ny * nx + std::size_t(y) * nx + x;
                    e += lab(x, y, z) ? g.ct[i] : g.cs[i];
                    if (x + 1 < nx && lab(x, y, z) != lab(x + 1, y, z)) e += g.wx[i];
                    if (y + 1 < ny && lab(x, y, z) != lab(x, y + 1, z)) e += g.wy[i];
                    if (z + 1 < nz && lab(x, y, z) != lab(x, y, z + 1)) e += g.wz[i];
                }
        best = std::min(best, e);
    }
    return best;
}

// Multiples of 2^-13 in [0, 2): exact after the solver's 2^-20 scaling.
CapacityField dyadic_caps(Dims d, std::uint64_t seed, double alpha_max) {
    CapacityField caps = make_caps(d);
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> u(0, (1 << 14) - 1);
    const double q = 1.0 / (1 << 13);
    for (auto& v : caps.cs.data) v = u(rng) * q;
    for (auto& v : caps.ct.data) v = u(rng) * q;
    std::uniform_int_distribution<int> ua(0, int(alpha_max * (1 << 13)));
    for (auto& v : caps.alpha.data) v = ua(rng) * q;
    return caps;
}

} // namespace

TEST_SUITE("mincut") {

TEST_CASE("single voxel goes to the cheaper terminal") {
    CapacityField caps = make_caps(Dims{1, 1, 1});
    caps.cs.data[0] = 2.0;
    caps.ct.data[0] = 1.0;
    caps.alpha.data[0] = 5.0;
    CutResult r = min_cut(discretize(caps));
    CHECK(r.labels[0] == 1);
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.flow == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two voxels: strong terminals beat the connecting face") {
    CapacityField caps = make_caps(Dims{2, 1, 1});
    caps.cs.data = {10.0, 0.0};
    caps.ct.data = {0.0, 10.0};
    caps.alpha.data = {3.0, 3.0};
    GridGraph g = discretize(caps);
    CHECK(g.wx[0] == doctest::Approx(3.0).epsilon(1e-12));
    CutResult r = min_cut(g);
    CHECK(r.labels[0] == 1);
    CHECK(r.labels[1] == 0);
    CHECK(r.value == doctest::Approx(3.0).epsilon(1e-12));
}

TEST_CASE("discretize: face weight is mean alpha times s_j*s_k/s_i") {
    CapacityField caps = make_caps(Dims{2, 2, 2}, Spacing{1.0, 1.0, 2.0});
    for (auto& v : caps.alpha.data) v = 1.0;
    GridGraph g = discretize(caps);
    // x faces: sy*sz/sx = 2, y faces: sx*sz/sy = 2, z faces: sx*sy/sz = 0.5
    CHECK(g.wx[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g.wy[0] == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(g.wz[0] == doctest::Approx(0.5).epsilon(1e-12));

    caps.alpha.data[0] = 0.2;
    caps.alpha.data[1] = 0.6;
    g = discretize(caps);
    CHECK(g.wx[0] == doctest::Approx(0.4 * 2.0).epsilon(1e-12));
}

TEST_CASE("alpha = 0 decouples voxels: optimum is sum of per-voxel minima") {
    CapacityField caps = random_caps(Dims{3, 3, 2}, 7, 0.0);
    CutResult r = min_cut(discretize(caps));
    double expect = 0.0;
    for (std::size_t i = 0; i < caps.cs.data.size(); ++i)
        expect += std::min(caps.cs.data[i], caps.ct.data[i]);
    CHECK(r.value == doctest::Approx(expect).epsilon(1e-9));
    for (std::size_t i = 0; i < r.labels.size(); ++i) {
        if (caps.cs.data[i] > caps.ct.data[i]) CHECK(r.labels[i] == 1);
        if (caps.cs.data[i] < caps.ct.data[i]) CHECK(r.labels[i] == 0);
    }
}

TEST_CASE("zero capacities cut nothing") {
    CapacityField caps = make_caps(Dims{3, 3, 3});
    CutResult r = min_cut(discretize(caps));
    CHECK(r.value == 0.0);
    CHECK(r.flow == 0.0);
}

TEST_CASE("enumerate_min matches an independently coded brute force") {
    for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
        CapacityField caps = dyadic_caps(Dims{2, 2, 2}, seed, 0.5);
        GridGraph g = discretize(caps);
        CutResult r = enumerate_min(g);
        CHECK(r.value == brute_force_min(g));
        CHECK(cut_energy(g, r.labels) == r.value);
    }
}

TEST_CASE("min_cut equals enumerate_min exactly on dyadic instances") {
    for (std::uint64_t seed = 0; seed < 12; ++seed) {
        CapacityField caps = dyadic_caps(Dims{3, 2, 2}, 100 + seed, 0.75);
        GridGraph g = discretize(caps);
        CutResult mc = min_cut(g);
        CutResult en = enumerate_min(g);
        // Dyadic capacities survive the 2^-20 integer scaling, so both the
        // cut value and the reported flow are exact.
        CHECK(mc.value == en.value);
        CHECK(mc.flow == mc.value);
        CHECK(cut_energy(g, mc.labels) == mc.value);
    }
}

TEST_CASE("max-flow value matches the cut energy on random instances") {
    for (std::uint64_t seed : {11u, 12u, 13u}) {
        CapacityField caps = random_caps(Dims{12, 12, 12}, seed, 0.5);
        GridGraph g = discretize(caps);
        CutResult r = min_cut(g);
        CHECK(std::abs(r.flow - r.value) < 1e-4);
        CHECK(cut_energy(g, r.labels) == doctest::Approx(r.value).epsilon(1e-12));
    }
}

TEST_CASE("labels orientation: source side is foreground") {
    CapacityField caps = make_caps(Dims{3, 1, 1});
    // Middle voxel has no terminal preference; neighbors pull it along.
    caps.cs.data = {5.0, 0.0, 0.0};
    caps.ct.data = {0.0, 0.0, 5.0};
    caps.alpha.data = {1.0, 1.0, 1.0};
    CutResult r = min_cut(discretize(caps));
    CHECK(r.labels[0] == 1);
    CHECK(r.labels[2] == 0);
    // Either middle assignment cuts exactly one unit face.
    CHECK(r.value == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("size guards") {
    CapacityField big = make_caps(Dims{33, 32, 32});
    CHECK_THROWS_AS(min_cut(discretize(big)), ValidationError);
    CapacityField mid = make_caps(Dims{3, 3, 3}); // 27 > 20
    CHECK_THROWS_AS(enumerate_min(discretize(mid)), ValidationError);
}

} // TEST_SUITE
