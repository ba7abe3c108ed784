#pragma once

#include "cmfseg/volume.hpp"

#include <optional>
#include <vector>

namespace cmfseg {

// Per-voxel terminal capacities and the spatial flow bound.
// cs is the penalty for excluding a voxel from the mask, ct the penalty for
// including it; alpha bounds each component of the spatial flow inside the
// solver, so the regularizer matches the 6-connected discrete cut energy.
struct CapacityField {
    Volume3D cs, ct, alpha;
};

// Primal-dual solver state. lambda is the flow-conservation multiplier; it
// converges to the relaxed segmentation indicator in [0,1].
// aux holds div(p) - ps + pt - lambda/c for the current state; step()
// maintains it, refresh_aux() rebuilds it after external edits.
struct FlowState {
    Volume3D ps, pt, lambda;
    VectorField3D p;
    Volume3D aux;
};

struct CmfConfig {
    double c = 0.35;        // augmentation weight, > 0
    double gamma = 0.11;    // spatial-flow step size, > 0
    int max_iters = 300;
    double tol = 1e-4;      // mean |lambda change| per voxel
    double threshold = 0.5; // cut level for the output mask
};

struct SolveReport {
    int iters = 0;
    double final_residual = 0.0;
    double primal_energy = 0.0;
    bool converged = false;
    std::vector<double> residual_history;
    std::vector<double> elapsed_ms; // per iteration, same length as history
};

struct EdgeWeighting {
    const Volume3D* intensity = nullptr; // I in g(|grad I|) = 1/(1+(|grad I|/contrast)^2)
    double contrast = 1.0;
};

void validate_config(const CmfConfig& cfg);
void validate_capacities(const CapacityField& caps);

// Negative-log-likelihood mapping from a foreground probability map, plus an
// optional additive shape bias and edge-stopping modulation of alpha:
//   cs = -ln(clamp(1-prob)) + beta*s,   ct = -ln(clamp(prob)) + beta*(1-s),
//   alpha = alpha0 * g(|grad I|)  (g identity when no edge weighting given).
// s defaults to 1/2 everywhere so the beta terms reduce to a constant shift.
CapacityField build_capacities(const Volume3D& prob, double alpha0,
                               const EdgeWeighting* edges = nullptr,
                               const Volume3D* shape_map = nullptr,
                               double beta = 0.0, double eps = 1e-6);

// Per-voxel radial projection onto {q : |q|_2 <= alpha(x)}.
VectorField3D project_onto_ball(const VectorField3D& p, const Volume3D& alpha);

// lambda = 1 where cs > ct, flows saturated at min(cs, ct), p = 0.
FlowState init_flow_state(const CapacityField& caps, const CmfConfig& cfg);

// Rebuild the aux field from (p, ps, pt, lambda). Needed after constructing
// or hand-editing a state; solve paths keep it current themselves.
void refresh_aux(FlowState& st, const CmfConfig& cfg);

// One augmented-Lagrangian sweep:
//   p  <- clamp_axes(p + gamma * grad(div p - ps + pt - lambda/c), alpha)
//   ps <- min(cs, div p + pt + (1 - lambda)/c)
//   pt <- min(ct, ps - div p + lambda/c)
//   lambda <- lambda - c*(div p - ps + pt)
// Returns mean |lambda change| per voxel. step() fuses the sweeps and runs
// them OpenMP-parallel over z; step_serial() is the unfused single-threaded
// reference that performs the identical per-voxel arithmetic. The two
// produce bitwise equal states and are compared in the tests and the
// benchmark.
double step(FlowState& st, const CapacityField& caps, const CmfConfig& cfg);
double step_serial(FlowState& st, const CapacityField& caps, const CmfConfig& cfg);

// Iterates step() until the residual drops below cfg.tol or max_iters is
// reached; non-convergence is reported, not thrown. Returned lambda is
// clamped to [0,1].
std::pair<Volume3D, SolveReport> solve_cmf(const CapacityField& caps,
                                           const CmfConfig& cfg,
                                           bool use_serial = false);

// voxel = 1 iff lambda >= level, level in (0,1).
Volume3D threshold_mask(const Volume3D& lambda, double level);

// Discrete cut energy of a binary mask:
//   sum_{m=0} cs + sum_{m=1} ct + sum_{cut faces} mean(alpha) * s_j*s_k/s_i.
// Same face weighting the min-cut reference uses, so values are directly
// comparable with its cut values.
double discrete_mask_energy(const CapacityField& caps, const Volume3D& mask);

// One line per iteration: index <TAB> residual <TAB> elapsed ms.
std::string format_run_log(const SolveReport& report);

} // namespace cmfseg
