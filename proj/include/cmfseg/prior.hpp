#pragma once

#include "cmfseg/shape.hpp"
#include "cmfseg/solver.hpp"

#include <vector>

namespace cmfseg {

// Outer-loop configuration. alpha0 and volume_fraction feed the capacity
// build and the mask alignment; volume_fraction must match the value used
// when the training shapes were aligned.
struct PriorCmfConfig {
    CmfConfig cmf;
    int outer_iters = 3;
    double beta = 0.5;
    double width = 1.0;
    double alpha0 = 0.5;
    double volume_fraction = 0.05;
};

// cut_energy is the discrete energy of that iteration's mask under the
// capacities it was solved with (shape bias included from iteration 1 on);
// shape_energy is the model energy of the iteration's aligned mask.
struct PriorTraceEntry {
    double cut_energy = 0.0;
    double shape_energy = 0.0;
};

struct PriorResult {
    Volume3D mask;       // final thresholded mask
    Volume3D plain_mask; // iteration-0 (data-only) mask, kept for comparison
    std::vector<PriorTraceEntry> trace; // one entry per outer iteration
    SolveReport last_report;
};

void validate_prior_config(const PriorCmfConfig& cfg);

// Alternates CMF solves with shape reconstruction: iteration 0 runs data-only
// capacities; afterwards the current mask is aligned, reconstructed through
// the model, turned into a probability map, and folded back into the
// capacities as the additive beta term. With beta == 0 or outer_iters == 1
// the result is bit-identical to plain solve_cmf + threshold.
// A mask that comes back empty is reported as degenerate input.
PriorResult segment_with_prior(const Volume3D& prob, const ShapeModel& model,
                               const PriorCmfConfig& cfg,
                               const EdgeWeighting* edges = nullptr);

} // namespace cmfseg
