#pragma once

#include "cmfseg/volume.hpp"

#include <optional>
#include <string>
#include <vector>

namespace cmfseg {

// Translation and isotropic scale that carried a mask onto the canonical
// grid: canonical point u corresponds to source point
//   x = (center + shift) + (u - center) / scale,
// where center is the canonical grid center in voxel coordinates.
struct AlignmentRecord {
    double shift_x = 0.0, shift_y = 0.0, shift_z = 0.0;
    double scale = 1.0;
};

// Signed distance values on the canonical grid, x-fastest, negative inside.
struct ShapeSample {
    std::vector<double> z;
    Dims canonical_dims{};
    AlignmentRecord alignment;
};

enum class PriorKind { gaussian, kde };

// Linear-Gaussian shape prior over sample vectors, optionally extended with
// a kernel density estimate in the mode subspace. modes is d x m,
// column-major, orthonormal; eigenvalues are positive and descending.
// kernel_samples stores the N projected training coordinates back to back
// (sample-major, m values each); empty for the gaussian kind.
struct ShapeModel {
    PriorKind kind = PriorKind::gaussian;
    Dims canonical_dims{};
    std::vector<double> mu;
    std::vector<double> modes;
    std::vector<double> eigenvalues;
    double lambda_perp = 1.0;
    std::vector<double> kernel_samples;
    double sigma = 0.0;

    std::int64_t dim() const { return std::int64_t(mu.size()); }
    int mode_count() const { return int(eigenvalues.size()); }
    int kernel_count() const {
        return mode_count() == 0 ? 0
                                 : int(kernel_samples.size()) / mode_count();
    }
};

// Exact Euclidean signed distance in voxel units, negative inside, measured
// between voxel centers, so sdf(mask) == -sdf(1 - mask) exactly.
// Errors on masks without both a foreground and a background voxel.
Volume3D mask_to_sdf(const Volume3D& mask);

// Normalizes pose: moves the foreground centroid to the canonical grid
// center, scales isotropically so the foreground fills volume_fraction of
// the canonical grid, resamples the SDF trilinearly, then recomputes the SDF
// of the thresholded result so z is a genuine distance field again.
ShapeSample align_shape(const Volume3D& sdf, Dims canonical_dims,
                        double volume_fraction = 0.05);

// Mean plus top-m eigenpairs of the population covariance, computed through
// the N x N Gram matrix. m is truncated to the covariance rank when samples
// are degenerate. lambda_perp defaults to half the smallest retained
// eigenvalue (1.0 when no mode survives).
ShapeModel fit_gaussian_prior(const std::vector<ShapeSample>& samples, int m,
                              std::optional<double> lambda_perp = std::nullopt);

// Gaussian fit for the subspace, plus stored projected training coordinates
// and a kernel bandwidth; sigma defaults to the mean nearest-neighbor
// distance among the projected samples and must come out positive.
ShapeModel fit_kde_prior(const std::vector<ShapeSample>& samples, int m,
                         std::optional<double> lambda_perp = std::nullopt,
                         std::optional<double> sigma = std::nullopt);

// E(z) = 1/2 sum_i zhat_i^2/eigenvalue_i + r^2/(2 lambda_perp), where
// zhat = V^T (z - mu) and r is the residual outside the mode subspace.
double gaussian_energy(const std::vector<double>& z, const ShapeModel& model);
std::vector<double> gaussian_gradient(const std::vector<double>& z,
                                      const ShapeModel& model);

// E(z) = -log( (1/N) sum_i exp(-|zhat - zhat_i|^2 / (2 sigma^2)) )
//        + r^2/(2 lambda_perp), evaluated with a log-sum-exp shift.
double kde_energy(const std::vector<double>& z, const ShapeModel& model);
std::vector<double> kde_gradient(const std::vector<double>& z,
                                 const ShapeModel& model);

// Denoising projection: gaussian -> mu + V V^T (z - mu); kde -> mu + V times
// the kernel-weighted average of the training coordinates.
std::vector<double> reconstruct_shape(const std::vector<double>& z,
                                      const ShapeModel& model);

// gaussian_energy or kde_energy, picked by model.kind.
double shape_energy(const std::vector<double>& z, const ShapeModel& model);

// Maps a canonical-grid SDF vector back through the inverse of `alignment`
// onto the given target grid and squashes it to a foreground probability
// s(x) = logistic(-phi(x)/width), phi in target voxel units. Points falling
// outside the canonical grid read the clamped boundary value plus their
// distance to the canonical box, so s decays away from the modeled region.
Volume3D shape_probability_map(const std::vector<double>& z, Dims canonical_dims,
                               const AlignmentRecord& alignment, Dims target_dims,
                               Spacing target_spacing, double width = 1.0);

// Single-file serialization: a text header up to an END_HEADER line, then
// raw little-endian doubles (mu, modes column-major, eigenvalues, projected
// kernel samples). Round-trips bit-exactly.
void save_model(const ShapeModel& model, const std::string& path);
ShapeModel load_model(const std::string& path);

} // namespace cmfseg
