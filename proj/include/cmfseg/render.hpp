#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cmfseg/volume.hpp"

namespace cmfseg {

// 8-bit interleaved RGB raster, row-major from the top-left corner.
struct Image8 {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> rgb;

    std::uint8_t* pixel(int col, int row) {
        return rgb.data() + 3 * (std::size_t(row) * std::size_t(width) + std::size_t(col));
    }
};

// Extracts one slice of `volume` as grayscale and burns the mask boundary in
// as a red contour. A mask voxel is boundary when any of its four in-slice
// neighbors is background or lies outside the grid. Gray levels are
// normalized against the whole volume's min/max so different slices of the
// same volume share one scale; a constant volume renders mid-gray.
// Row/column layout per axis: Z slice -> (cols x, rows y); Y slice ->
// (cols x, rows z); X slice -> (cols y, rows z).
Image8 render_overlay(const Volume3D& volume, const Volume3D& mask, Axis axis,
                      int slice_index);

// Concatenates images left to right. All inputs must share one height.
Image8 hstack(const std::vector<Image8>& images);

// Binary PPM (P6, maxval 255).
void write_ppm(const Image8& image, const std::string& path);

} // namespace cmfseg
