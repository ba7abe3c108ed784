#include "cmfseg/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace cmfseg {

namespace {

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("render", msg);
}

// Maps slice coordinates (col, row) back to the volume index for each axis.
struct SlicePlane {
    int cols = 0, rows = 0;
    Axis axis;
    int slice;
    Dims dims;

    std::int64_t voxel(int col, int row) const {
        int x = 0, y = 0, z = 0;
        switch (axis) {
        case Axis::Z: x = col; y = row; z = slice; break;
        case Axis::Y: x = col; z = row; y = slice; break;
        case Axis::X: y = col; z = row; x = slice; break;
        }
        return x + std::int64_t(dims.nx) * (y + std::int64_t(dims.ny) * z);
    }
};

SlicePlane make_plane(const Dims& dims, Axis axis, int slice_index) {
    SlicePlane p;
    p.axis = axis;
    p.slice = slice_index;
    p.dims = dims;
    int extent = 0;
    switch (axis) {
    case Axis::Z: p.cols = dims.nx; p.rows = dims.ny; extent = dims.nz; break;
    case Axis::Y: p.cols = dims.nx; p.rows = dims.nz; extent = dims.ny; break;
    case Axis::X: p.cols = dims.ny; p.rows = dims.nz; extent = dims.nx; break;
    }
    require(slice_index >= 0 && slice_index < extent,
            "slice index " + std::to_string(slice_index) +
                " out of range [0, " + std::to_string(extent) + ")");
    return p;
}

} // namespace

Image8 render_overlay(const Volume3D& volume, const Volume3D& mask, Axis axis,
                      int slice_index) {
    validate_volume(volume, "volume");
    validate_binary(mask, "mask");
    require(volume.dims == mask.dims, "volume and mask grids differ");

    const SlicePlane plane = make_plane(volume.dims, axis, slice_index);

    const auto [mn_it, mx_it] =
        std::minmax_element(volume.data.begin(), volume.data.end());
    const double lo = *mn_it, hi = *mx_it;
    const double span = hi - lo;

    Image8 img;
    img.width = plane.cols;
    img.height = plane.rows;
    img.rgb.assign(std::size_t(3) * std::size_t(plane.cols) * std::size_t(plane.rows), 0);

    auto foreground = [&](int col, int row) {
        if (col < 0 || col >= plane.cols || row < 0 || row >= plane.rows)
            return false;
        return mask.data[std::size_t(plane.voxel(col, row))] != 0.0;
    };

    for (int row = 0; row < plane.rows; ++row) {
        for (int col = 0; col < plane.cols; ++col) {
            const double v = volume.data[std::size_t(plane.voxel(col, row))];
            std::uint8_t g = 128;
            if (span > 0.0) {
                const double t = (v - lo) / span;
                g = std::uint8_t(std::lround(t * 255.0));
            }
            std::uint8_t* px = img.pixel(col, row);
            px[0] = px[1] = px[2] = g;
            if (foreground(col, row)) {
                const bool boundary =
                    !foreground(col - 1, row) || !foreground(col + 1, row) ||
                    !foreground(col, row - 1) || !foreground(col, row + 1);
                if (boundary) {
                    px[0] = 255;
                    px[1] = 0;
                    px[2] = 0;
                }
            }
        }
    }
    return img;
}

Image8 hstack(const std::vector<Image8>& images) {
    require(!images.empty(), "hstack needs at least one image");
    const int height = images.front().height;
    int width = 0;
    for (const Image8& im : images) {
        require(im.height == height, "hstack inputs must share one height");
        width += im.width;
    }

    Image8 out;
    out.width = width;
    out.height = height;
    out.rgb.assign(std::size_t(3) * std::size_t(width) * std::size_t(height), 0);
    int col0 = 0;
    for (const Image8& im : images) {
        for (int row = 0; row < height; ++row) {
            const std::uint8_t* src =
                im.rgb.data() + 3 * std::size_t(row) * std::size_t(im.width);
            std::copy(src, src + 3 * std::size_t(im.width),
                      out.pixel(col0, row));
        }
        col0 += im.width;
    }
    return out;
}

void write_ppm(const Image8& image, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("render", "cannot open " + path + " for writing");
    out << "P6\n" << image.width << " " << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.rgb.data()),
              std::streamsize(image.rgb.size()));
    if (!out) throw IoError("render", "write failed for " + path);
}

} // namespace cmfseg
