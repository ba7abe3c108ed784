#pragma once

#include "cmfseg/types.hpp"

#include <vector>

namespace cmfseg {

// Dense 3D scalar field, x-fastest order, double precision in memory.
// Disk format is 32-bit (see load_volume/save_volume); solver state stays
// in doubles.
struct Volume3D {
    Dims dims;
    Spacing spacing;
    std::vector<double> data;

    Volume3D() = default;
    Volume3D(Dims d, Spacing s, double fill = 0.0);

    std::int64_t size() const { return dims.count(); }
    std::int64_t idx(int x, int y, int z) const {
        return x + std::int64_t(dims.nx) * (y + std::int64_t(dims.ny) * z);
    }
    double& at(int x, int y, int z) { return data[idx(x, y, z)]; }
    double at(int x, int y, int z) const { return data[idx(x, y, z)]; }

    bool same_grid(const Volume3D& o) const {
        return dims == o.dims && spacing == o.spacing;
    }
};

// Three collocated component fields on one grid.
struct VectorField3D {
    Dims dims;
    Spacing spacing;
    std::vector<double> x, y, z;

    VectorField3D() = default;
    VectorField3D(Dims d, Spacing s);

    std::int64_t size() const { return dims.count(); }
};

// Throws ValidationError on bad dims/spacing, non-matching data length or
// non-finite samples.
void validate_volume(const Volume3D& v, const std::string& what);

// Throws unless every sample is exactly 0 or 1.
void validate_binary(const Volume3D& v, const std::string& what);

// MetaImage-style header + raw payload. Scalars are FLOAT32_LE on disk,
// masks UINT8 restricted to {0,1}; both load into doubles.
Volume3D load_volume(const std::string& header_path);
void save_volume(const Volume3D& v, const std::string& header_path);
void save_mask(const Volume3D& mask, const std::string& header_path);

// Trilinear resampling on the unit-cube-normalized grid; output spacing is
// rescaled so the physical extent is preserved. Reproduces affine fields
// exactly.
Volume3D resample_trilinear(const Volume3D& v, Dims target);

// Forward differences divided by spacing; the component normal to the far
// face is zero (Neumann).
VectorField3D gradient(const Volume3D& v);

// Backward differences divided by spacing; the stored far-face component is
// ignored, which makes divergence the exact negative adjoint of gradient:
// <grad u, q> = -<u, div q> for all u, q on one grid.
Volume3D divergence(const VectorField3D& f);

} // namespace cmfseg
