#pragma once

#include <cmath>
#include <cstdint>

// Per-voxel finite-difference and projection expressions shared by the public
// grid operators and the fused solver kernels. Keeping one definition is what
// makes the fused OpenMP path and the serial reference bitwise comparable.
namespace cmfseg::detail {

inline double fwd_diff(const double* u, std::int64_t i, std::int64_t stride,
                       bool has_next, double inv_s) {
    return has_next ? (u[i + stride] - u[i]) * inv_s : 0.0;
}

// Backward-difference term for one axis; the stored far-face component is
// treated as zero so divergence stays the exact negative adjoint of gradient.
inline double bwd_term(const double* q, std::int64_t i, std::int64_t stride,
                       bool has_next, bool has_prev) {
    double d = has_next ? q[i] : 0.0;
    if (has_prev) d -= q[i - stride];
    return d;
}

inline double div_value(double dx, double dy, double dz, double isx, double isy,
                        double isz) {
    return dx * isx + dy * isy + dz * isz;
}

inline void project_ball(double& px, double& py, double& pz, double a) {
    double n2 = px * px + py * py + pz * pz;
    if (n2 > a * a) {
        double s = a / std::sqrt(n2);
        px *= s;
        py *= s;
        pz *= s;
    }
}

// Per-axis clamp |p_a| <= alpha: the dual constraint of the anisotropic
// total variation sum_a alpha |d_a lambda|, which is exactly the neighbor
// energy the 6-connected discrete cut charges. The solver uses this, not the
// Euclidean ball, so its converged masks agree with the min-cut reference;
// the ball would optimize isotropic TV and land a few percent off the
// discrete optimum.
inline void project_box(double& px, double& py, double& pz, double a) {
    px = std::min(a, std::max(-a, px));
    py = std::min(a, std::max(-a, py));
    pz = std::min(a, std::max(-a, pz));
}

// div p - ps + pt - lambda/c, the quantity whose gradient drives the spatial
// flow update. The lambda term enters with a minus: completing the square in
// the augmented Lagrangian turns the p subproblem into
// min_{|p|<=alpha} |div p - (ps - pt + lambda/c)|^2, and one projected
// gradient-descent step on that objective ascends div p - ps + pt - lambda/c.
// With the opposite sign the multiplier update has an exact fixed point at
// the initial labeling and the iteration never moves.
inline double aux_value(double div, double ps, double pt, double lam,
                        double inv_c) {
    return div - ps + pt - lam * inv_c;
}

// Source then sink stationary points clamped by capacity; returns the
// multiplier change c*(div - ps_new + pt_new).
inline double terminal_sweep(double div, double pt_in, double lam_in, double cs,
                             double ct, double c, double inv_c, double& ps_out,
                             double& pt_out) {
    double ps_new = std::min(cs, div + pt_in + (1.0 - lam_in) * inv_c);
    double pt_new = std::min(ct, ps_new - div + lam_in * inv_c);
    ps_out = ps_new;
    pt_out = pt_new;
    return c * (div - ps_new + pt_new);
}

} // namespace cmfseg::detail
