#pragma once

#include "cmfseg/solver.hpp"

#include <cstdint>
#include <vector>

namespace cmfseg {

// 6-connected grid graph for the discrete reference solvers. wx/wy/wz hold
// the face capacity toward +x/+y/+z from each voxel; entries on the far
// boundary are zero and never read.
struct GridGraph {
    Dims dims;
    std::vector<double> cs, ct;
    std::vector<double> wx, wy, wz;
};

// labels: 1 = source side (foreground). value is the discrete cut energy of
// the labeling, recomputed in floating point. flow is the max-flow value
// mapped back from the solver's integer scale; strong duality says it equals
// value on instances whose capacities survive the scaling exactly.
struct CutResult {
    std::vector<std::uint8_t> labels;
    double value = 0.0;
    double flow = 0.0;
};

// Face capacity along axis i = mean of alpha at the two endpoints times
// s_j*s_k/s_i, the same weighting discrete_mask_energy uses.
GridGraph discretize(const CapacityField& caps);

// Exact min cut via Dinic max-flow. Capacities are scaled to integers at
// 2^-20 resolution first; dyadic inputs coarser than that survive exactly.
// Guard: at most 32^3 voxels.
CutResult min_cut(const GridGraph& g);

// Brute force over all 2^n labelings. Guard: at most 20 voxels.
CutResult enumerate_min(const GridGraph& g);

// Discrete energy of a labeling: sum cs over background, ct over foreground,
// face capacity over label changes.
double cut_energy(const GridGraph& g, const std::vector<std::uint8_t>& labels);

} // namespace cmfseg
