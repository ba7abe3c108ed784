#include "cmfseg/shape.hpp"

#include "cmfseg/kvfile.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>

namespace cmfseg {

namespace {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian raw doubles");

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("shape_prior", msg);
}

// Sentinel for "no site on this line yet". Large enough to lose against any
// real squared distance, small enough to stay NaN-free in the envelope
// arithmetic (infinity minus infinity is not).
constexpr double kFar = 1e20;

// One lower-envelope pass of the exact squared Euclidean distance transform.
// f and out must not alias; v and zb are scratch of length n and n+1.
void edt_line(const double* f, double* out, int n, int* v, double* zb) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    int k = 0;
    v[0] = 0;
    zb[0] = -inf;
    zb[1] = inf;
    for (int q = 1; q < n; ++q) {
        const double fq = f[q] + double(q) * q;
        double s;
        for (;;) {
            const int p = v[k];
            s = (fq - (f[p] + double(p) * p)) / (2.0 * (q - p));
            if (s <= zb[k] && k > 0) {
                --k;
            } else {
                break;
            }
        }
        ++k;
        v[k] = q;
        zb[k] = s;
        zb[k + 1] = inf;
    }
    k = 0;
    for (int q = 0; q < n; ++q) {
        while (zb[k + 1] < q) ++k;
        const int p = v[k];
        out[q] = double(q - p) * (q - p) + f[p];
    }
}

// Squared distance to the nearest set voxel (value 1 in `sites`), exact on
// the integer voxel-center lattice.
std::vector<double> squared_edt(const Volume3D& sites) {
    const Dims d = sites.dims;
    const int nx = d.nx, ny = d.ny, nz = d.nz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    std::vector<double> d2(std::size_t(d.count()));
    for (std::int64_t i = 0; i < d.count(); ++i)
        d2[std::size_t(i)] = sites.data[std::size_t(i)] != 0.0 ? 0.0 : kFar;

    const std::size_t nmax = std::size_t(std::max({nx, ny, nz}));
    std::vector<double> f(nmax), g(nmax);
    std::vector<int> v(nmax);
    std::vector<double> zb(nmax + 1);

    for (int z = 0; z < nz; ++z)
        for (int y = 0; y < ny; ++y) {
            double* row = d2.data() + sy * y + sz * z;
            edt_line(row, g.data(), nx, v.data(), zb.data());
            std::copy_n(g.data(), nx, row);
        }
    for (int z = 0; z < nz; ++z)
        for (int x = 0; x < nx; ++x) {
            double* col = d2.data() + x + sz * z;
            for (int y = 0; y < ny; ++y) f[std::size_t(y)] = col[sy * y];
            edt_line(f.data(), g.data(), ny, v.data(), zb.data());
            for (int y = 0; y < ny; ++y) col[sy * y] = g[std::size_t(y)];
        }
    for (int y = 0; y < ny; ++y)
        for (int x = 0; x < nx; ++x) {
            double* pil = d2.data() + x + sy * y;
            for (int z = 0; z < nz; ++z) f[std::size_t(z)] = pil[sz * z];
            edt_line(f.data(), g.data(), nz, v.data(), zb.data());
            for (int z = 0; z < nz; ++z) pil[sz * z] = g[std::size_t(z)];
        }
    return d2;
}

// Trilinear sample with coordinates clamped to the voxel-center hull.
double sample_clamped(const Volume3D& vol, double x, double y, double z) {
    const Dims d = vol.dims;
    x = std::clamp(x, 0.0, double(d.nx - 1));
    y = std::clamp(y, 0.0, double(d.ny - 1));
    z = std::clamp(z, 0.0, double(d.nz - 1));
    const int x0 = std::min(int(x), d.nx - 2 >= 0 ? d.nx - 2 : 0);
    const int y0 = std::min(int(y), d.ny - 2 >= 0 ? d.ny - 2 : 0);
    const int z0 = std::min(int(z), d.nz - 2 >= 0 ? d.nz - 2 : 0);
    const int x1 = std::min(x0 + 1, d.nx - 1);
    const int y1 = std::min(y0 + 1, d.ny - 1);
    const int z1 = std::min(z0 + 1, d.nz - 1);
    const double fx = x - x0, fy = y - y0, fz = z - z0;
    auto at = [&](int xi, int yi, int zi) { return vol.at(xi, yi, zi); };
    const double c00 = at(x0, y0, z0) * (1 - fx) + at(x1, y0, z0) * fx;
    const double c10 = at(x0, y1, z0) * (1 - fx) + at(x1, y1, z0) * fx;
    const double c01 = at(x0, y0, z1) * (1 - fx) + at(x1, y0, z1) * fx;
    const double c11 = at(x0, y1, z1) * (1 - fx) + at(x1, y1, z1) * fx;
    const double c0 = c00 * (1 - fy) + c10 * fy;
    const double c1 = c01 * (1 - fy) + c11 * fy;
    return c0 * (1 - fz) + c1 * fz;
}

struct Vec3 {
    double x, y, z;
};

Vec3 grid_center(Dims d) {
    return {0.5 * (d.nx - 1), 0.5 * (d.ny - 1), 0.5 * (d.nz - 1)};
}

using MapMat = Eigen::Map<const Eigen::MatrixXd>;
using MapVec = Eigen::Map<const Eigen::VectorXd>;

MapMat mode_matrix(const ShapeModel& model) {
    return MapMat(model.modes.data(), model.dim(), model.mode_count());
}

void check_model(const ShapeModel& model) {
    require(model.dim() > 0, "model has empty mean");
    require(std::int64_t(model.modes.size()) ==
                model.dim() * model.mode_count(),
            "mode matrix size mismatch");
    require(model.lambda_perp > 0.0, "lambda_perp must be positive");
    for (double ev : model.eigenvalues)
        require(ev > 0.0, "eigenvalues must be positive");
    if (model.kind == PriorKind::kde) {
        require(model.sigma > 0.0, "kde model needs a positive sigma");
        require(model.mode_count() > 0, "kde model needs a nonzero subspace");
        require(int(model.kernel_samples.size()) ==
                    model.kernel_count() * model.mode_count(),
            "kernel sample size mismatch");
        require(model.kernel_count() >= 1, "kde model needs kernel samples");
    }
}

void check_query(const std::vector<double>& z, const ShapeModel& model) {
    check_model(model);
    require(std::int64_t(z.size()) == model.dim(), "dimension mismatch");
}

// Softmax weights over the kernel samples for the projected query; returns
// log((1/N) sum exp(a_i)) via the shifted form and fills w with exp(a_i - M).
double kernel_log_density(const Eigen::VectorXd& zhat, const ShapeModel& model,
                          Eigen::VectorXd& w) {
    const int m = model.mode_count();
    const int N = model.kernel_count();
    const double inv_2s2 = 1.0 / (2.0 * model.sigma * model.sigma);
    Eigen::VectorXd a(N);
    for (int i = 0; i < N; ++i) {
        MapVec zi(model.kernel_samples.data() + std::size_t(i) * m, m);
        a[i] = -(zhat - zi).squaredNorm() * inv_2s2;
    }
    const double shift = a.maxCoeff();
    w = (a.array() - shift).exp().matrix();
    return shift + std::log(w.sum()) - std::log(double(N));
}

} // namespace

Volume3D mask_to_sdf(const Volume3D& mask) {
    validate_volume(mask, "mask_to_sdf");
    validate_binary(mask, "mask_to_sdf");
    const std::int64_t n = mask.size();
    std::int64_t fg = 0;
    for (double v : mask.data) fg += v != 0.0 ? 1 : 0;
    if (fg == 0 || fg == n)
        throw ValidationError("shape_prior",
                              "mask must contain both foreground and background");

    Volume3D inverted(mask.dims, mask.spacing);
    for (std::int64_t i = 0; i < n; ++i)
        inverted.data[std::size_t(i)] = mask.data[std::size_t(i)] != 0.0 ? 0.0 : 1.0;
    const std::vector<double> to_fg = squared_edt(mask);
    const std::vector<double> to_bg = squared_edt(inverted);

    Volume3D sdf(mask.dims, mask.spacing);
    for (std::int64_t i = 0; i < n; ++i) {
        const std::size_t u = std::size_t(i);
        sdf.data[u] = mask.data[u] != 0.0 ? -std::sqrt(to_bg[u])
                                          : std::sqrt(to_fg[u]);
    }
    return sdf;
}

ShapeSample align_shape(const Volume3D& sdf, Dims canonical_dims,
                        double volume_fraction) {
    validate_volume(sdf, "align_shape");
    require(canonical_dims.nx > 0 && canonical_dims.ny > 0 && canonical_dims.nz > 0,
            "canonical dims must be positive");
    require(volume_fraction > 0.0 && volume_fraction < 1.0,
            "volume fraction must lie in (0, 1)");

    const Dims d = sdf.dims;
    std::int64_t fg = 0;
    double cx = 0.0, cy = 0.0, cz = 0.0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x)
                if (sdf.at(x, y, z) < 0.0) {
                    ++fg;
                    cx += x;
                    cy += y;
                    cz += z;
                }
    require(fg > 0, "no foreground voxels (sdf has no negative values)");
    cx /= double(fg);
    cy /= double(fg);
    cz /= double(fg);

    const double target = volume_fraction * double(canonical_dims.count());
    const double kappa = std::cbrt(target / double(fg));
    const Vec3 cc = grid_center(canonical_dims);

    Volume3D aligned(canonical_dims, Spacing{1.0, 1.0, 1.0});
    std::int64_t kept = 0;
    for (int z = 0; z < canonical_dims.nz; ++z)
        for (int y = 0; y < canonical_dims.ny; ++y)
            for (int x = 0; x < canonical_dims.nx; ++x) {
                const double sx = cx + (x - cc.x) / kappa;
                const double sy = cy + (y - cc.y) / kappa;
                const double sz = cz + (z - cc.z) / kappa;
                double val = 1.0; // off-grid reads count as background
                if (sx >= 0.0 && sx <= d.nx - 1 && sy >= 0.0 && sy <= d.ny - 1 &&
                    sz >= 0.0 && sz <= d.nz - 1)
                    val = sample_clamped(sdf, sx, sy, sz);
                const double m = val < 0.0 ? 1.0 : 0.0;
                aligned.at(x, y, z) = m;
                kept += m != 0.0 ? 1 : 0;
            }
    if (kept == 0)
        throw ValidationError("shape_prior", "empty foreground after alignment");

    Volume3D zvol = mask_to_sdf(aligned);
    ShapeSample sample;
    sample.z = std::move(zvol.data);
    sample.canonical_dims = canonical_dims;
    sample.alignment = AlignmentRecord{cx - cc.x, cy - cc.y, cz - cc.z, kappa};
    return sample;
}

ShapeModel fit_gaussian_prior(const std::vector<ShapeSample>& samples, int m,
                              std::optional<double> lambda_perp) {
    const int N = int(samples.size());
    require(N >= 2, "need at least 2 samples");
    const Dims cd = samples[0].canonical_dims;
    const std::int64_t d = cd.count();
    for (const ShapeSample& s : samples) {
        require(s.canonical_dims == cd, "samples disagree on canonical dims");
        require(std::int64_t(s.z.size()) == d, "sample length mismatch");
    }
    require(m >= 0 && std::int64_t(m) <= std::min<std::int64_t>(N - 1, d),
            "mode count must lie in [0, min(N-1, d)]");
    if (lambda_perp) require(*lambda_perp > 0.0, "lambda_perp must be positive");

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
    for (const ShapeSample& s : samples) mu += MapVec(s.z.data(), d);
    mu /= double(N);

    Eigen::MatrixXd X(d, N);
    for (int i = 0; i < N; ++i)
        X.col(i) = MapVec(samples[std::size_t(i)].z.data(), d) - mu;

    // N x N Gram trick: population covariance (1/N) X X^T shares its nonzero
    // spectrum with (1/N) X^T X, and the eigenvectors lift through X.
    const Eigen::MatrixXd gram = (X.transpose() * X) / double(N);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    require(es.info() == Eigen::Success, "gram eigendecomposition failed");

    const Eigen::VectorXd ev = es.eigenvalues(); // ascending
    // Rank floor: relative to the leading eigenvalue, but never below the
    // cancellation noise of centering (identical samples leave a Gram of pure
    // roundoff ~ eps^2 * |z|^2, which must not surface as a mode).
    double msq = 0.0;
    for (const ShapeSample& s : samples) {
        const MapVec zi(s.z.data(), d);
        msq += zi.squaredNorm();
    }
    msq /= double(N);
    const double floor =
        std::max(std::max(ev[N - 1], 0.0) * 1e-12, msq * 1e-24);
    ShapeModel model;
    model.kind = PriorKind::gaussian;
    model.canonical_dims = cd;
    model.mu.assign(mu.data(), mu.data() + d);
    for (int i = N - 1; i >= 0 && model.mode_count() < m; --i) {
        if (!(ev[i] > floor) || !(ev[i] > 0.0)) break; // rank exhausted: truncate
        Eigen::VectorXd v = X * es.eigenvectors().col(i) /
                            std::sqrt(double(N) * ev[i]);
        model.modes.insert(model.modes.end(), v.data(), v.data() + d);
        model.eigenvalues.push_back(ev[i]);
    }

    // Modified Gram-Schmidt pass to pin down orthonormality of the lifted
    // modes against accumulated roundoff.
    {
        Eigen::Map<Eigen::MatrixXd> V(model.modes.data(), d, model.mode_count());
        for (int i = 0; i < model.mode_count(); ++i) {
            for (int j = 0; j < i; ++j)
                V.col(i) -= V.col(j).dot(V.col(i)) * V.col(j);
            V.col(i) /= V.col(i).norm();
        }
    }

    model.lambda_perp = lambda_perp
                            ? *lambda_perp
                            : (model.eigenvalues.empty()
                                   ? 1.0
                                   : 0.5 * model.eigenvalues.back());
    return model;
}

ShapeModel fit_kde_prior(const std::vector<ShapeSample>& samples, int m,
                         std::optional<double> lambda_perp,
                         std::optional<double> sigma) {
    ShapeModel model = fit_gaussian_prior(samples, m, lambda_perp);
    model.kind = PriorKind::kde;
    const int m_eff = model.mode_count();
    require(m_eff > 0, "kde prior needs a nonzero mode subspace");

    const int N = int(samples.size());
    const std::int64_t d = model.dim();
    MapMat V = mode_matrix(model);
    MapVec mu(model.mu.data(), d);
    Eigen::MatrixXd Z(m_eff, N);
    for (int i = 0; i < N; ++i)
        Z.col(i) = V.transpose() * (MapVec(samples[std::size_t(i)].z.data(), d) - mu);
    model.kernel_samples.resize(std::size_t(N) * m_eff);
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < m_eff; ++j)
            model.kernel_samples[std::size_t(i) * m_eff + j] = Z(j, i);

    if (sigma) {
        require(*sigma > 0.0, "sigma must be positive");
        model.sigma = *sigma;
    } else {
        double total = 0.0;
        for (int i = 0; i < N; ++i) {
            double nearest = std::numeric_limits<double>::infinity();
            for (int j = 0; j < N; ++j)
                if (j != i) nearest = std::min(nearest, (Z.col(i) - Z.col(j)).norm());
            total += nearest;
        }
        model.sigma = total / double(N);
        require(model.sigma > 0.0,
                "degenerate kernel bandwidth (zero nearest-neighbor distance)");
    }
    return model;
}

double gaussian_energy(const std::vector<double>& z, const ShapeModel& model) {
    check_query(z, model);
    const std::int64_t d = model.dim();
    const Eigen::VectorXd dz = MapVec(z.data(), d) - MapVec(model.mu.data(), d);
    const Eigen::VectorXd zhat = mode_matrix(model).transpose() * dz;
    double energy = 0.0;
    for (int i = 0; i < model.mode_count(); ++i)
        energy += 0.5 * zhat[i] * zhat[i] / model.eigenvalues[std::size_t(i)];
    const double r2 = std::max(dz.squaredNorm() - zhat.squaredNorm(), 0.0);
    return energy + r2 / (2.0 * model.lambda_perp);
}

std::vector<double> gaussian_gradient(const std::vector<double>& z,
                                      const ShapeModel& model) {
    check_query(z, model);
    const std::int64_t d = model.dim();
    MapMat V = mode_matrix(model);
    const Eigen::VectorXd dz = MapVec(z.data(), d) - MapVec(model.mu.data(), d);
    Eigen::VectorXd zhat = V.transpose() * dz;
    Eigen::VectorXd scaled = zhat;
    for (int i = 0; i < model.mode_count(); ++i)
        scaled[i] /= model.eigenvalues[std::size_t(i)];
    const Eigen::VectorXd grad =
        V * scaled + (dz - V * zhat) / model.lambda_perp;
    return std::vector<double>(grad.data(), grad.data() + d);
}

double kde_energy(const std::vector<double>& z, const ShapeModel& model) {
    check_query(z, model);
    require(model.kind == PriorKind::kde, "model is not a kde prior");
    const std::int64_t d = model.dim();
    const Eigen::VectorXd dz = MapVec(z.data(), d) - MapVec(model.mu.data(), d);
    const Eigen::VectorXd zhat = mode_matrix(model).transpose() * dz;
    Eigen::VectorXd w;
    const double log_density = kernel_log_density(zhat, model, w);
    const double r2 = std::max(dz.squaredNorm() - zhat.squaredNorm(), 0.0);
    return -log_density + r2 / (2.0 * model.lambda_perp);
}

std::vector<double> kde_gradient(const std::vector<double>& z,
                                 const ShapeModel& model) {
    check_query(z, model);
    require(model.kind == PriorKind::kde, "model is not a kde prior");
    const std::int64_t d = model.dim();
    const int m = model.mode_count();
    MapMat V = mode_matrix(model);
    const Eigen::VectorXd dz = MapVec(z.data(), d) - MapVec(model.mu.data(), d);
    const Eigen::VectorXd zhat = V.transpose() * dz;
    Eigen::VectorXd w;
    kernel_log_density(zhat, model, w);
    const double wsum = w.sum();
    Eigen::VectorXd pull = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < model.kernel_count(); ++i) {
        MapVec zi(model.kernel_samples.data() + std::size_t(i) * m, m);
        pull += w[i] * (zhat - zi);
    }
    pull /= wsum * model.sigma * model.sigma;
    const Eigen::VectorXd grad = V * pull + (dz - V * zhat) / model.lambda_perp;
    return std::vector<double>(grad.data(), grad.data() + d);
}

std::vector<double> reconstruct_shape(const std::vector<double>& z,
                                      const ShapeModel& model) {
    check_query(z, model);
    const std::int64_t d = model.dim();
    const int m = model.mode_count();
    MapMat V = mode_matrix(model);
    MapVec mu(model.mu.data(), d);
    const Eigen::VectorXd dz = MapVec(z.data(), d) - mu;
    const Eigen::VectorXd zhat = V.transpose() * dz;
    Eigen::VectorXd coord;
    if (model.kind == PriorKind::gaussian) {
        coord = zhat;
    } else {
        Eigen::VectorXd w;
        kernel_log_density(zhat, model, w);
        coord = Eigen::VectorXd::Zero(m);
        for (int i = 0; i < model.kernel_count(); ++i) {
            MapVec zi(model.kernel_samples.data() + std::size_t(i) * m, m);
            coord += w[i] * zi;
        }
        coord /= w.sum();
    }
    const Eigen::VectorXd rec = mu + V * coord;
    return std::vector<double>(rec.data(), rec.data() + d);
}

double shape_energy(const std::vector<double>& z, const ShapeModel& model) {
    return model.kind == PriorKind::gaussian ? gaussian_energy(z, model)
                                             : kde_energy(z, model);
}

Volume3D shape_probability_map(const std::vector<double>& z, Dims canonical_dims,
                               const AlignmentRecord& alignment, Dims target_dims,
                               Spacing target_spacing, double width) {
    require(canonical_dims.count() > 0 &&
                std::int64_t(z.size()) == canonical_dims.count(),
            "shape vector does not match the canonical grid");
    require(target_dims.nx > 0 && target_dims.ny > 0 && target_dims.nz > 0,
            "target dims must be positive");
    require(std::isfinite(alignment.scale) && alignment.scale > 0.0,
            "alignment scale must be positive");
    require(std::isfinite(width) && width > 0.0, "width must be positive");

    Volume3D zvol(canonical_dims, Spacing{1.0, 1.0, 1.0});
    zvol.data = z;
    const Vec3 cc = grid_center(canonical_dims);
    const double sx0 = cc.x + alignment.shift_x;
    const double sy0 = cc.y + alignment.shift_y;
    const double sz0 = cc.z + alignment.shift_z;
    const double kappa = alignment.scale;

    Volume3D prob(target_dims, target_spacing);
    for (int tz = 0; tz < target_dims.nz; ++tz)
        for (int ty = 0; ty < target_dims.ny; ++ty)
            for (int tx = 0; tx < target_dims.nx; ++tx) {
                const double ux = cc.x + kappa * (tx - sx0);
                const double uy = cc.y + kappa * (ty - sy0);
                const double uz = cc.z + kappa * (tz - sz0);
                const double bx = std::clamp(ux, 0.0, double(canonical_dims.nx - 1));
                const double by = std::clamp(uy, 0.0, double(canonical_dims.ny - 1));
                const double bz = std::clamp(uz, 0.0, double(canonical_dims.nz - 1));
                double phi_can = sample_clamped(zvol, bx, by, bz);
                const double ox = ux - bx, oy = uy - by, oz = uz - bz;
                if (ox != 0.0 || oy != 0.0 || oz != 0.0)
                    phi_can += std::sqrt(ox * ox + oy * oy + oz * oz);
                const double phi = phi_can / kappa;
                prob.at(tx, ty, tz) = 1.0 / (1.0 + std::exp(phi / width));
            }
    return prob;
}

void save_model(const ShapeModel& model, const std::string& path) {
    check_model(model);
    KvFile kv;
    kv.set("Kind", model.kind == PriorKind::gaussian ? "gaussian" : "kde");
    kv.set_ints("CanonicalDims", {model.canonical_dims.nx, model.canonical_dims.ny,
                                  model.canonical_dims.nz});
    kv.set_int("Dim", model.dim());
    kv.set_int("Modes", model.mode_count());
    kv.set_int("Samples", model.kernel_count());
    kv.set_double("LambdaPerp", model.lambda_perp);
    if (model.kind == PriorKind::kde) kv.set_double("Sigma", model.sigma);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("shape_prior", "cannot open '" + path + "' for writing");
    out << kv.serialize() << "END_HEADER\n";
    auto dump = [&out](const std::vector<double>& a) {
        out.write(reinterpret_cast<const char*>(a.data()),
                  std::streamsize(a.size() * sizeof(double)));
    };
    dump(model.mu);
    dump(model.modes);
    dump(model.eigenvalues);
    dump(model.kernel_samples);
    if (!out) throw IoError("shape_prior", "write failed for '" + path + "'");
}

ShapeModel load_model(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("shape_prior", "missing file '" + path + "'");
    std::string blob((std::istreambuf_iterator<char>(in)),
                     std::istreambuf_iterator<char>());
    const std::string marker = "END_HEADER\n";
    const std::size_t pos = blob.find(marker);
    if (pos == std::string::npos)
        throw IoError("shape_prior", path + ": missing END_HEADER marker");
    KvFile kv = KvFile::parse_text(blob.substr(0, pos), path);

    ShapeModel model;
    const std::string kind = kv.get("Kind");
    if (kind == "gaussian")
        model.kind = PriorKind::gaussian;
    else if (kind == "kde")
        model.kind = PriorKind::kde;
    else
        throw ValidationError("shape_prior", path + ": unknown kind '" + kind + "'");
    const auto cd = kv.get_ints("CanonicalDims");
    if (cd.size() != 3)
        throw ValidationError("shape_prior", path + ": CanonicalDims needs 3 entries");
    model.canonical_dims = Dims{int(cd[0]), int(cd[1]), int(cd[2])};
    const std::int64_t d = kv.get_int("Dim");
    const std::int64_t m = kv.get_int("Modes");
    const std::int64_t N = kv.get_int("Samples");
    if (d != model.canonical_dims.count())
        throw ValidationError("shape_prior", path + ": Dim does not match CanonicalDims");
    if (m < 0 || N < 0)
        throw ValidationError("shape_prior", path + ": negative Modes/Samples");
    model.lambda_perp = kv.get_double("LambdaPerp");
    if (model.kind == PriorKind::kde) model.sigma = kv.get_double("Sigma");

    const std::size_t want =
        std::size_t(d + d * m + m + N * m) * sizeof(double);
    const std::size_t have = blob.size() - (pos + marker.size());
    if (have != want)
        throw ValidationError("shape_prior",
                              path + ": payload is " + std::to_string(have) +
                                  " bytes, expected " + std::to_string(want));
    const char* p = blob.data() + pos + marker.size();
    auto take = [&p](std::vector<double>& a, std::int64_t count) {
        a.resize(std::size_t(count));
        std::memcpy(a.data(), p, std::size_t(count) * sizeof(double));
        p += std::size_t(count) * sizeof(double);
    };
    take(model.mu, d);
    take(model.modes, d * m);
    take(model.eigenvalues, m);
    take(model.kernel_samples, N * m);
    check_model(model);
    return model;
}

} // namespace cmfseg
