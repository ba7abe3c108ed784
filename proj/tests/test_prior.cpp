#include "doctest.h"

#include "cmfseg/metrics.hpp"
#include "cmfseg/prior.hpp"
#include "test_support.hpp"

#include <cmath>
#include <vector>

using namespace cmfseg;

namespace {

Volume3D ellipsoid_mask(Dims d, double cx, double cy, double cz, double rx,
                        double ry, double rz) {
    Volume3D m(d, Spacing{});
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const double qx = (x - cx) / rx, qy = (y - cy) / ry,
                             qz = (z - cz) / rz;
                if (qx * qx + qy * qy + qz * qz <= 1.0) m.at(x, y, z) = 1.0;
            }
    return m;
}

// Ellipsoids of varying radii, pose-normalized onto a 16^3 canonical grid.
ShapeModel trained_model() {
    const Dims train{24, 24, 24};
    const Dims canon{16, 16, 16};
    const double radii[5][3] = {{5, 6, 7},
                                {6, 7, 5},
                                {7, 5, 6},
                                {6, 6, 6},
                                {5.5, 6.5, 6}};
    std::vector<ShapeSample> samples;
    for (const double* r : radii) {
        const Volume3D m =
            ellipsoid_mask(train, 11.5, 11.5, 11.5, r[0], r[1], r[2]);
        samples.push_back(align_shape(mask_to_sdf(m), canon, 0.05));
    }
    return fit_gaussian_prior(samples, 3);
}

// Probability map: high inside the mask, low outside.
Volume3D prob_from_mask(const Volume3D& mask, double p_in = 0.9,
                        double p_out = 0.1) {
    Volume3D p = mask;
    for (double& v : p.data) v = v != 0.0 ? p_in : p_out;
    return p;
}

Volume3D plain_reference(const Volume3D& prob, const PriorCmfConfig& cfg,
                         const EdgeWeighting* edges = nullptr) {
    const CapacityField caps = build_capacities(prob, cfg.alpha0, edges);
    auto [lambda, report] = solve_cmf(caps, cfg.cmf);
    return threshold_mask(lambda, cfg.cmf.threshold);
}

} // namespace

TEST_SUITE("prior") {

TEST_CASE("configuration bounds are enforced") {
    PriorCmfConfig cfg;
    CHECK_NOTHROW(validate_prior_config(cfg));

    cfg.outer_iters = 0;
    CHECK_THROWS_WITH_AS(validate_prior_config(cfg),
                         "prior_cmf: outer_iters must be at least 1",
                         ValidationError);
    cfg = PriorCmfConfig{};
    cfg.beta = -0.1;
    CHECK_THROWS_WITH_AS(validate_prior_config(cfg),
                         "prior_cmf: beta must be non-negative", ValidationError);
    cfg = PriorCmfConfig{};
    cfg.width = 0.0;
    CHECK_THROWS_WITH_AS(validate_prior_config(cfg),
                         "prior_cmf: width must be positive", ValidationError);
    cfg = PriorCmfConfig{};
    cfg.alpha0 = -1.0;
    CHECK_THROWS_WITH_AS(validate_prior_config(cfg),
                         "prior_cmf: alpha0 must be non-negative", ValidationError);
    cfg = PriorCmfConfig{};
    cfg.volume_fraction = 0.0;
    CHECK_THROWS_WITH_AS(validate_prior_config(cfg),
                         "prior_cmf: volume_fraction must lie in (0, 1)",
                         ValidationError);
    cfg.volume_fraction = 1.0;
    CHECK_THROWS_AS(validate_prior_config(cfg), ValidationError);

    // Inner solver settings are checked through the same gate.
    cfg = PriorCmfConfig{};
    cfg.cmf.c = 0.0;
    CHECK_THROWS_AS(validate_prior_config(cfg), ValidationError);
}

TEST_CASE("beta zero reproduces the plain solve bit for bit") {
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    const Volume3D prob = prob_from_mask(obj);

    PriorCmfConfig cfg;
    cfg.beta = 0.0;
    cfg.outer_iters = 3;
    const Volume3D ref = plain_reference(prob, cfg);

    const PriorResult res = segment_with_prior(prob, model, cfg);
    CHECK(cmfseg::test::bits_equal(res.mask.data, ref.data));
    CHECK(cmfseg::test::bits_equal(res.plain_mask.data, ref.data));
    REQUIRE(res.trace.size() == 3);
    // Identical capacities and identical masks each round: the trace repeats.
    for (const PriorTraceEntry& e : res.trace) {
        CHECK(e.cut_energy == res.trace[0].cut_energy);
        CHECK(e.shape_energy == res.trace[0].shape_energy);
    }
}

TEST_CASE("a single outer iteration never applies the shape term") {
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    const Volume3D prob = prob_from_mask(obj);

    PriorCmfConfig cfg;
    cfg.beta = 2.0;
    cfg.outer_iters = 1;
    const Volume3D ref = plain_reference(prob, cfg);

    const PriorResult res = segment_with_prior(prob, model, cfg);
    CHECK(cmfseg::test::bits_equal(res.mask.data, ref.data));
    CHECK(cmfseg::test::bits_equal(res.plain_mask.data, ref.data));
    CHECK(res.trace.size() == 1);
}

TEST_CASE("the first trace entry scores the data-only mask") {
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    const Volume3D prob = prob_from_mask(obj);

    PriorCmfConfig cfg;
    cfg.outer_iters = 2;
    const PriorResult res = segment_with_prior(prob, model, cfg);

    const CapacityField caps = build_capacities(prob, cfg.alpha0);
    const double cut = discrete_mask_energy(caps, res.plain_mask);
    const ShapeSample s = align_shape(mask_to_sdf(res.plain_mask),
                                      model.canonical_dims, cfg.volume_fraction);
    CHECK(res.trace[0].cut_energy == cut);
    CHECK(res.trace[0].shape_energy == shape_energy(s.z, model));
}

TEST_CASE("an objectless probability map is rejected as degenerate") {
    const ShapeModel model = trained_model();
    const Volume3D prob(Dims{12, 12, 12}, Spacing{}, 0.01);
    PriorCmfConfig cfg;
    cfg.outer_iters = 1;
    CHECK_THROWS_WITH_AS(
        segment_with_prior(prob, model, cfg),
        "prior_cmf: degenerate input: probability map contains no detectable object",
        ValidationError);

    // The all-foreground direction fails later, at the distance transform.
    const Volume3D full(Dims{12, 12, 12}, Spacing{}, 0.99);
    CHECK_THROWS_AS(segment_with_prior(full, model, cfg), ValidationError);
}

TEST_CASE("edge weighting reaches the capacity build") {
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    const Volume3D prob = prob_from_mask(obj);
    Volume3D intensity = prob;
    for (double& v : intensity.data) v *= 2.0;
    const EdgeWeighting ew{&intensity, 0.7};

    PriorCmfConfig cfg;
    cfg.beta = 0.0;
    cfg.outer_iters = 2;
    const Volume3D ref = plain_reference(prob, cfg, &ew);
    const PriorResult res = segment_with_prior(prob, model, cfg, &ew);
    CHECK(cmfseg::test::bits_equal(res.mask.data, ref.data));
}

TEST_CASE("the shape term restores an occluded cap") {
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    Volume3D prob = prob_from_mask(obj);
    // Occlude the +x cap: the data alone now argues for background there.
    std::vector<int> cap_voxels;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 13; x < d.nx; ++x)
                if (obj.at(x, y, z) != 0.0) {
                    prob.at(x, y, z) = 0.3;
                    cap_voxels.push_back(int(obj.idx(x, y, z)));
                }
    REQUIRE(cap_voxels.size() > 20);

    PriorCmfConfig cfg;
    cfg.beta = 4.0;
    cfg.outer_iters = 3;
    const PriorResult res = segment_with_prior(prob, model, cfg);
    REQUIRE(res.trace.size() == 3);

    std::size_t plain_hit = 0, prior_hit = 0;
    for (int i : cap_voxels) {
        plain_hit += res.plain_mask.data[std::size_t(i)] != 0.0;
        prior_hit += res.mask.data[std::size_t(i)] != 0.0;
    }
    // The data-only solve drops the cap entirely. The model restores part of
    // it: the defective mask aligns with an inflated scale, so the
    // reconstructed surface sits about a voxel inside the true one and the
    // refill is substantial but never total.
    CHECK(plain_hit < cap_voxels.size() / 8);
    CHECK(prior_hit >= cap_voxels.size() / 6);

    const ConfusionCounts plain_c = confusion(res.plain_mask, obj);
    const ConfusionCounts prior_c = confusion(res.mask, obj);
    CHECK(dice(prior_c) > dice(plain_c) + 0.015);
}

TEST_CASE("each outer iteration improves on the objective it solved") {
    // Consecutive trace entries are scored under different capacity fields
    // (the shape map moves every iteration), so the raw sequence need not
    // fall. The guaranteed direction is within one functional: the new mask
    // scores no worse than the previous mask under the capacities the new
    // solve actually used. Truncating the loop recovers the intermediate
    // mask, and rebuilding those capacities from it reproduces the traced
    // energy bit for bit.
    const ShapeModel model = trained_model();
    const Dims d{20, 20, 20};
    const Volume3D obj = ellipsoid_mask(d, 9.5, 9.5, 9.5, 6, 6, 6);
    Volume3D prob = prob_from_mask(obj);
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 13; x < d.nx; ++x)
                if (obj.at(x, y, z) != 0.0) prob.at(x, y, z) = 0.3;

    PriorCmfConfig cfg;
    cfg.beta = 4.0;
    cfg.outer_iters = 3;
    const PriorResult res3 = segment_with_prior(prob, model, cfg);
    cfg.outer_iters = 2;
    const PriorResult res2 = segment_with_prior(prob, model, cfg);
    REQUIRE(res3.trace.size() == 3);
    REQUIRE(res2.trace.size() == 2);
    CHECK(res3.trace[1].cut_energy == res2.trace[1].cut_energy);

    const ShapeSample s1 =
        align_shape(mask_to_sdf(res2.mask), model.canonical_dims,
                    cfg.volume_fraction);
    const std::vector<double> rec = reconstruct_shape(s1.z, model);
    const Volume3D smap =
        shape_probability_map(rec, model.canonical_dims, s1.alignment,
                              prob.dims, prob.spacing, cfg.width);
    const CapacityField caps2 =
        build_capacities(prob, cfg.alpha0, nullptr, &smap, cfg.beta);

    const double e_new = discrete_mask_energy(caps2, res3.mask);
    const double e_prev = discrete_mask_energy(caps2, res2.mask);
    CHECK(e_new == res3.trace[2].cut_energy);
    CHECK(e_new <= e_prev);
}

} // TEST_SUITE
