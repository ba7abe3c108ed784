#include "cmfseg/solver.hpp"

#include "cmfseg/kvfile.hpp"
#include "grid_inline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

namespace cmfseg {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("solver", msg);
}

// Scans the state in voxel order and returns the lowest index holding a
// non-finite value in any field, or -1 when the state is clean.
std::int64_t first_nonfinite_voxel(const FlowState& st) {
    const std::int64_t n = st.lambda.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        if (!std::isfinite(st.ps.data[u]) || !std::isfinite(st.pt.data[u]) ||
            !std::isfinite(st.lambda.data[u]) || !std::isfinite(st.p.x[u]) ||
            !std::isfinite(st.p.y[u]) || !std::isfinite(st.p.z[u]) ||
            !std::isfinite(st.aux.data[u]))
            return i;
    }
    return -1;
}

[[noreturn]] void throw_nonfinite(const FlowState& st) {
    std::int64_t i = first_nonfinite_voxel(st);
    if (i >= 0)
        throw Error("solver",
                    "non-finite intermediate at voxel index " + std::to_string(i));
    throw Error("solver", "non-finite residual");
}

} // namespace

void validate_config(const CmfConfig& cfg) {
    require(std::isfinite(cfg.c) && cfg.c > 0.0, "c must be positive");
    require(std::isfinite(cfg.gamma) && cfg.gamma > 0.0, "gamma must be positive");
    require(cfg.max_iters >= 1, "max_iters must be at least 1");
    require(std::isfinite(cfg.tol) && cfg.tol > 0.0, "tol must be positive");
    require(std::isfinite(cfg.threshold) && cfg.threshold > 0.0 && cfg.threshold < 1.0,
            "threshold must lie in (0, 1)");
}

void validate_capacities(const CapacityField& caps) {
    validate_volume(caps.cs, "capacity cs");
    validate_volume(caps.ct, "capacity ct");
    validate_volume(caps.alpha, "capacity alpha");
    require(caps.cs.same_grid(caps.ct) && caps.cs.same_grid(caps.alpha),
            "capacity fields must share one grid");
    const std::int64_t n = caps.cs.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        if (caps.cs.data[u] < 0.0 || caps.ct.data[u] < 0.0 || caps.alpha.data[u] < 0.0)
            throw ValidationError("solver", "negative capacity at voxel index " +
                                                std::to_string(i));
    }
}

CapacityField build_capacities(const Volume3D& prob, double alpha0,
                               const EdgeWeighting* edges,
                               const Volume3D* shape_map, double beta,
                               double eps) {
    validate_volume(prob, "probability map");
    require(std::isfinite(alpha0) && alpha0 >= 0.0, "alpha0 must be non-negative");
    require(std::isfinite(beta) && beta >= 0.0, "beta must be non-negative");
    require(std::isfinite(eps) && eps > 0.0 && eps < 0.5,
            "eps must lie in (0, 0.5)");
    for (double v : prob.data)
        require(v >= 0.0 && v <= 1.0, "probability values must lie in [0, 1]");
    if (shape_map) {
        validate_volume(*shape_map, "shape map");
        require(shape_map->same_grid(prob), "shape map grid mismatch");
        for (double v : shape_map->data)
            require(v >= 0.0 && v <= 1.0, "shape map values must lie in [0, 1]");
    }
    if (edges) {
        require(edges->intensity != nullptr, "edge weighting needs an intensity volume");
        validate_volume(*edges->intensity, "edge intensity");
        require(edges->intensity->same_grid(prob), "edge intensity grid mismatch");
        require(std::isfinite(edges->contrast) && edges->contrast > 0.0,
                "edge contrast must be positive");
    }

    CapacityField caps{Volume3D(prob.dims, prob.spacing),
                       Volume3D(prob.dims, prob.spacing),
                       Volume3D(prob.dims, prob.spacing)};
    const std::int64_t n = prob.size();
    const double lo = eps, hi = 1.0 - eps;
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        const double q = prob.data[u];
        const double s = shape_map ? shape_map->data[u] : 0.5;
        caps.cs.data[u] = -std::log(std::clamp(1.0 - q, lo, hi)) + beta * s;
        caps.ct.data[u] = -std::log(std::clamp(q, lo, hi)) + beta * (1.0 - s);
    }
    if (edges) {
        VectorField3D g = gradient(*edges->intensity);
        const double inv_k = 1.0 / edges->contrast;
        for (std::int64_t i = 0; i < n; ++i) {
            const std::size_t u = std::size_t(i);
            const double mag =
                std::sqrt(g.x[u] * g.x[u] + g.y[u] * g.y[u] + g.z[u] * g.z[u]);
            const double r = mag * inv_k;
            caps.alpha.data[u] = alpha0 / (1.0 + r * r);
        }
    } else {
        std::fill(caps.alpha.data.begin(), caps.alpha.data.end(), alpha0);
    }
    return caps;
}

VectorField3D project_onto_ball(const VectorField3D& p, const Volume3D& alpha) {
    validate_volume(alpha, "projection alpha");
    require(p.dims == alpha.dims && p.spacing == alpha.spacing,
            "flow field and alpha must share one grid");
    for (double a : alpha.data)
        require(a >= 0.0, "alpha must be non-negative");
    VectorField3D out = p;
    const std::int64_t n = alpha.size();
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        detail::project_ball(out.x[u], out.y[u], out.z[u], alpha.data[u]);
    }
    return out;
}

FlowState init_flow_state(const CapacityField& caps, const CmfConfig& cfg) {
    validate_capacities(caps);
    validate_config(cfg);
    const Dims d = caps.cs.dims;
    const Spacing sp = caps.cs.spacing;
    FlowState st{Volume3D(d, sp), Volume3D(d, sp), Volume3D(d, sp),
                 VectorField3D(d, sp), Volume3D(d, sp)};
    const std::int64_t n = caps.cs.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        const double m = std::min(caps.cs.data[u], caps.ct.data[u]);
        st.ps.data[u] = m;
        st.pt.data[u] = m;
        st.lambda.data[u] = caps.cs.data[u] > caps.ct.data[u] ? 1.0 : 0.0;
    }
    refresh_aux(st, cfg);
    return st;
}

void refresh_aux(FlowState& st, const CmfConfig& cfg) {
    const double inv_c = 1.0 / cfg.c;
    Volume3D dv = divergence(st.p);
    const std::int64_t n = st.lambda.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        st.aux.data[u] = detail::aux_value(dv.data[u], st.ps.data[u],
                                           st.pt.data[u], st.lambda.data[u], inv_c);
    }
}

double step(FlowState& st, const CapacityField& caps, const CmfConfig& cfg) {
    const Dims d = st.lambda.dims;
    const int nx = d.nx, ny = d.ny, nz = d.nz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    const double isx = 1.0 / st.lambda.spacing.sx;
    const double isy = 1.0 / st.lambda.spacing.sy;
    const double isz = 1.0 / st.lambda.spacing.sz;
    const double gamma = cfg.gamma, c = cfg.c, inv_c = 1.0 / c;

    double* px = st.p.x.data();
    double* py = st.p.y.data();
    double* pz = st.p.z.data();
    const double* al = caps.alpha.data.data();
    const double* cs = caps.cs.data.data();
    const double* ct = caps.ct.data.data();
    double* ps = st.ps.data.data();
    double* pt = st.pt.data.data();
    double* lam = st.lambda.data.data();
    double* aux = st.aux.data.data();

    // Spatial flow: ascend the gradient of the cached conservation residual
    // aux = div p - ps + pt - lambda/c, then clamp each component to
    // [-alpha, alpha]. Reads aux only, writes p only, so slabs are
    // independent.
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                double gx = detail::fwd_diff(aux, i, 1, x + 1 < nx, isx);
                double gy = detail::fwd_diff(aux, i, sy, y + 1 < ny, isy);
                double gz = detail::fwd_diff(aux, i, sz, z + 1 < nz, isz);
                double vx = px[i] + gamma * gx;
                double vy = py[i] + gamma * gy;
                double vz = pz[i] + gamma * gz;
                detail::project_box(vx, vy, vz, al[i]);
                px[i] = vx;
                py[i] = vy;
                pz[i] = vz;
            }
        }
    }

    // Terminal flows and multiplier, fused with the divergence of the new p
    // and the aux refresh. Reads p (at i and behind), writes only voxel i of
    // ps/pt/lambda/aux. Residual partials are per z slab and combined in z
    // order below so the sum is identical for any thread count.
    std::vector<double> partial(std::size_t(nz), 0.0);
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        double slab = 0.0;
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                double dx = detail::bwd_term(px, i, 1, x + 1 < nx, x > 0);
                double dy = detail::bwd_term(py, i, sy, y + 1 < ny, y > 0);
                double dz = detail::bwd_term(pz, i, sz, z + 1 < nz, z > 0);
                double dv = detail::div_value(dx, dy, dz, isx, isy, isz);
                double ps_new, pt_new;
                double e = detail::terminal_sweep(dv, pt[i], lam[i], cs[i], ct[i],
                                                  c, inv_c, ps_new, pt_new);
                ps[i] = ps_new;
                pt[i] = pt_new;
                double lam_new = lam[i] - e;
                lam[i] = lam_new;
                aux[i] = detail::aux_value(dv, ps_new, pt_new, lam_new, inv_c);
                slab += std::abs(e);
            }
        }
        partial[std::size_t(z)] = slab;
    }
    double total = 0.0;
    for (int z = 0; z < nz; ++z) total += partial[std::size_t(z)];
    const double residual = total / double(d.count());
    if (!std::isfinite(residual)) throw_nonfinite(st);
    return residual;
}

double step_serial(FlowState& st, const CapacityField& caps, const CmfConfig& cfg) {
    const Dims d = st.lambda.dims;
    const int nx = d.nx, ny = d.ny, nz = d.nz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    const double isx = 1.0 / st.lambda.spacing.sx;
    const double isy = 1.0 / st.lambda.spacing.sy;
    const double isz = 1.0 / st.lambda.spacing.sz;
    const double gamma = cfg.gamma, c = cfg.c, inv_c = 1.0 / c;

    // Unfused single-threaded reference: one plain loop per stage, built on
    // the same per-voxel inlines as step() so the states stay bitwise equal
    // and a non-finite state surfaces through the same residual check instead
    // of an operator's input validation.
    const double* aux = st.aux.data.data();
    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                double vx = st.p.x[u] + gamma * detail::fwd_diff(aux, i, 1, x + 1 < nx, isx);
                double vy = st.p.y[u] + gamma * detail::fwd_diff(aux, i, sy, y + 1 < ny, isy);
                double vz = st.p.z[u] + gamma * detail::fwd_diff(aux, i, sz, z + 1 < nz, isz);
                detail::project_box(vx, vy, vz, caps.alpha.data[u]);
                st.p.x[u] = vx;
                st.p.y[u] = vy;
                st.p.z[u] = vz;
            }
        }

    const double* px = st.p.x.data();
    const double* py = st.p.y.data();
    const double* pz = st.p.z.data();
    double total = 0.0;
    for (int z = 0; z < nz; ++z) {
        double slab = 0.0;
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                double dx = detail::bwd_term(px, i, 1, x + 1 < nx, x > 0);
                double dy = detail::bwd_term(py, i, sy, y + 1 < ny, y > 0);
                double dz = detail::bwd_term(pz, i, sz, z + 1 < nz, z > 0);
                double dv = detail::div_value(dx, dy, dz, isx, isy, isz);
                double ps_new, pt_new;
                double e = detail::terminal_sweep(dv, st.pt.data[u],
                                                  st.lambda.data[u], caps.cs.data[u],
                                                  caps.ct.data[u], c, inv_c,
                                                  ps_new, pt_new);
                st.ps.data[u] = ps_new;
                st.pt.data[u] = pt_new;
                st.lambda.data[u] = st.lambda.data[u] - e;
                st.aux.data[u] = detail::aux_value(dv, ps_new, pt_new,
                                                   st.lambda.data[u], inv_c);
                slab += std::abs(e);
            }
        }
        total += slab;
    }
    const double residual = total / double(d.count());
    if (!std::isfinite(residual)) throw_nonfinite(st);
    return residual;
}

std::pair<Volume3D, SolveReport> solve_cmf(const CapacityField& caps,
                                           const CmfConfig& cfg, bool use_serial) {
    FlowState st = init_flow_state(caps, cfg);
    SolveReport report;
    using clock = std::chrono::steady_clock;
    for (int it = 0; it < cfg.max_iters; ++it) {
        const auto t0 = clock::now();
        const double r =
            use_serial ? step_serial(st, caps, cfg) : step(st, caps, cfg);
        const auto t1 = clock::now();
        report.residual_history.push_back(r);
        report.elapsed_ms.push_back(
            std::chrono::duration<double, std::milli>(t1 - t0).count());
        report.iters = it + 1;
        report.final_residual = r;
        if (r < cfg.tol) {
            report.converged = true;
            break;
        }
    }
    Volume3D lambda = st.lambda;
    for (double& v : lambda.data) v = std::clamp(v, 0.0, 1.0);
    Volume3D mask = threshold_mask(lambda, cfg.threshold);
    report.primal_energy = discrete_mask_energy(caps, mask);
    return {std::move(lambda), std::move(report)};
}

Volume3D threshold_mask(const Volume3D& lambda, double level) {
    validate_volume(lambda, "lambda");
    require(std::isfinite(level) && level > 0.0 && level < 1.0,
            "threshold level must lie in (0, 1)");
    Volume3D mask(lambda.dims, lambda.spacing);
    const std::int64_t n = lambda.size();
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        mask.data[u] = lambda.data[u] >= level ? 1.0 : 0.0;
    }
    return mask;
}

double discrete_mask_energy(const CapacityField& caps, const Volume3D& mask) {
    validate_capacities(caps);
    validate_binary(mask, "mask");
    if (!mask.same_grid(caps.cs))
        throw ValidationError("solver", "mask grid mismatch");
    const Dims d = mask.dims;
    const int nx = d.nx, ny = d.ny, nz = d.nz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    const Spacing sp = mask.spacing;
    const double wx = sp.sy * sp.sz / sp.sx;
    const double wy = sp.sx * sp.sz / sp.sy;
    const double wz = sp.sx * sp.sy / sp.sz;

    double energy = 0.0;
    for (std::int64_t i = 0; i < d.count(); ++i) {
        const std::size_t u = std::size_t(i);
        energy += mask.data[u] == 0.0 ? caps.cs.data[u] : caps.ct.data[u];
    }
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                const std::size_t u = std::size_t(i);
                if (x + 1 < nx && mask.data[u] != mask.data[u + 1])
                    energy += 0.5 * (caps.alpha.data[u] + caps.alpha.data[u + 1]) * wx;
                if (y + 1 < ny && mask.data[u] != mask.data[u + std::size_t(sy)])
                    energy += 0.5 *
                              (caps.alpha.data[u] + caps.alpha.data[u + std::size_t(sy)]) *
                              wy;
                if (z + 1 < nz && mask.data[u] != mask.data[u + std::size_t(sz)])
                    energy += 0.5 *
                              (caps.alpha.data[u] + caps.alpha.data[u + std::size_t(sz)]) *
                              wz;
            }
        }
    }
    return energy;
}

std::string format_run_log(const SolveReport& report) {
    std::ostringstream out;
    for (std::size_t i = 0; i < report.residual_history.size(); ++i) {
        out << (i + 1) << '\t' << KvFile::format_double(report.residual_history[i])
            << '\t' << KvFile::format_double(report.elapsed_ms[i]) << '\n';
    }
    return out.str();
}

} // namespace cmfseg
