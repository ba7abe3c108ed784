#pragma once

#include "cmfseg/kvfile.hpp"
#include "cmfseg/volume.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cmfseg {

// Activity sector scaled by rho, bounded by azimuth [azimuth0, azimuth1)
// around the apex axis (wrapping past 2*pi when azimuth0 > azimuth1) and a
// closed polar band measured from the apex direction.
struct DefectSpec {
    double azimuth0 = 0.0;
    double azimuth1 = 6.283185307179586;
    double polar0 = 0.0;
    double polar1 = 3.141592653589793;
    double rho = 0.0;
};

// Half-ellipsoid shell in voxel coordinates. Semi-axes a,b,c run along grid
// x,y,z; the base plane cuts perpendicular to apex_axis, keeping the
// fraction `truncation` of the axis span on the apex side.
struct PhantomConfig {
    Dims dims{48, 48, 48};
    double center_x = 23.5, center_y = 23.5, center_z = 23.5;
    double ax_a = 14.0, ax_b = 14.0, ax_c = 18.0;
    double wall = 4.5;
    Axis apex_axis = Axis::Z;
    int apex_sign = -1;
    double truncation = 0.55;
    std::optional<DefectSpec> defect;
    double blur_fwhm = 2.5;
    double mean_counts = 150.0;
    std::uint64_t seed = 1;
};

// Symmetric uniform jitters applied per training phantom; each value is the
// half-width of a centered interval (0 disables that jitter).
struct VariationRanges {
    double axes = 0.0;
    double wall = 0.0;
    double truncation = 0.0;
    double center = 0.0;
};

void validate_phantom_config(const PhantomConfig& cfg);

// Ground-truth shell mask and noiseless activity (1 on the shell, rho inside
// the defect sector, 0 elsewhere). Deterministic; no randomness involved.
std::pair<Volume3D, Volume3D> generate_lv_phantom(const PhantomConfig& cfg);

// Border-renormalized separable Gaussian blur (sigma = fwhm / (2 sqrt(2 ln 2))),
// then per-voxel Poisson counts at mean_counts * value, divided back by
// mean_counts. Reproducible from cfg.seed.
Volume3D simulate_acquisition(const Volume3D& activity, const PhantomConfig& cfg);

// Surrogate prediction map: logistic(gain * (value - midpoint)). The
// midpoint defaults to the Otsu threshold over a 256-bin histogram and is
// undefined for constant input.
Volume3D probability_from_volume(const Volume3D& noisy, double gain = 8.0,
                                 std::optional<double> midpoint = std::nullopt);

// Ground-truth masks for prior fitting: the base config with axes, wall,
// truncation, and center jittered uniformly. Deterministic in seed.
std::vector<Volume3D> generate_training_set(int n, const PhantomConfig& base,
                                            const VariationRanges& ranges,
                                            std::uint64_t seed);

// Flat key = value form used by the CLI; unknown keys are rejected.
PhantomConfig phantom_config_from_kv(const KvFile& kv);
KvFile phantom_config_to_kv(const PhantomConfig& cfg);

} // namespace cmfseg
