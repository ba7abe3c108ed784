#include "cmfseg/prior.hpp"

#include <cmath>
#include <string>
#include <utility>

namespace cmfseg {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("prior_cmf", msg);
}

bool mask_empty(const Volume3D& mask) {
    for (double v : mask.data)
        if (v != 0.0) return false;
    return true;
}

} // namespace

void validate_prior_config(const PriorCmfConfig& cfg) {
    validate_config(cfg.cmf);
    require(cfg.outer_iters >= 1, "outer_iters must be at least 1");
    require(std::isfinite(cfg.beta) && cfg.beta >= 0.0, "beta must be non-negative");
    require(std::isfinite(cfg.width) && cfg.width > 0.0, "width must be positive");
    require(std::isfinite(cfg.alpha0) && cfg.alpha0 >= 0.0,
            "alpha0 must be non-negative");
    require(cfg.volume_fraction > 0.0 && cfg.volume_fraction < 1.0,
            "volume_fraction must lie in (0, 1)");
}

PriorResult segment_with_prior(const Volume3D& prob, const ShapeModel& model,
                               const PriorCmfConfig& cfg,
                               const EdgeWeighting* edges) {
    validate_prior_config(cfg);

    PriorResult result;
    CapacityField caps = build_capacities(prob, cfg.alpha0, edges);
    auto [lambda, report] = solve_cmf(caps, cfg.cmf);
    Volume3D mask = threshold_mask(lambda, cfg.cmf.threshold);
    result.plain_mask = mask;
    result.last_report = std::move(report);

    // The shape trace needs the mask in aligned form; the same sample also
    // seeds the next iteration's reconstruction.
    auto align_current = [&](const Volume3D& m) {
        if (mask_empty(m))
            throw ValidationError(
                "prior_cmf",
                "degenerate input: probability map contains no detectable object");
        return align_shape(mask_to_sdf(m), model.canonical_dims,
                           cfg.volume_fraction);
    };

    ShapeSample sample = align_current(mask);
    result.trace.push_back(PriorTraceEntry{discrete_mask_energy(caps, mask),
                                           shape_energy(sample.z, model)});

    for (int it = 1; it < cfg.outer_iters; ++it) {
        const std::vector<double> rec = reconstruct_shape(sample.z, model);
        const Volume3D smap =
            shape_probability_map(rec, model.canonical_dims, sample.alignment,
                                  prob.dims, prob.spacing, cfg.width);
        caps = build_capacities(prob, cfg.alpha0, edges, &smap, cfg.beta);
        auto [lam_it, rep_it] = solve_cmf(caps, cfg.cmf);
        mask = threshold_mask(lam_it, cfg.cmf.threshold);
        result.last_report = std::move(rep_it);
        sample = align_current(mask);
        result.trace.push_back(PriorTraceEntry{discrete_mask_energy(caps, mask),
                                               shape_energy(sample.z, model)});
    }

    result.mask = std::move(mask);
    return result;
}

} // namespace cmfseg
