#include "doctest.h"

#include "cmfseg/render.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

using namespace cmfseg;

namespace {

Volume3D make_volume(Dims d, const std::vector<double>& vals) {
    Volume3D v(d, Spacing{});
    REQUIRE(std::int64_t(vals.size()) == v.size());
    v.data = vals;
    return v;
}

bool is_red(const std::uint8_t* px) {
    return px[0] == 255 && px[1] == 0 && px[2] == 0;
}

bool is_gray(const std::uint8_t* px) {
    return px[0] == px[1] && px[1] == px[2];
}

std::string temp_file(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

} // namespace

TEST_SUITE("render") {

TEST_CASE("slice planes follow the axis layout") {
    const Dims d{3, 4, 5};
    const Volume3D vol(d, Spacing{}, 1.0);
    const Volume3D mask(d, Spacing{}, 0.0);

    const Image8 z = render_overlay(vol, mask, Axis::Z, 2);
    CHECK(z.width == 3);
    CHECK(z.height == 4);
    const Image8 y = render_overlay(vol, mask, Axis::Y, 1);
    CHECK(y.width == 3);
    CHECK(y.height == 5);
    const Image8 x = render_overlay(vol, mask, Axis::X, 0);
    CHECK(x.width == 4);
    CHECK(x.height == 5);

    // Constant volume: undefined span renders mid-gray everywhere.
    for (std::uint8_t b : z.rgb) CHECK(b == 128);
}

TEST_CASE("gray levels are normalized over the whole volume") {
    // Second slice spans only [5, 10]; its darkest pixel must still be
    // measured against the global minimum 0.
    const Volume3D vol = make_volume(Dims{2, 1, 2}, {0.0, 10.0, 5.0, 10.0});
    const Volume3D mask(Dims{2, 1, 2}, Spacing{}, 0.0);

    Image8 z0 = render_overlay(vol, mask, Axis::Z, 0);
    CHECK(z0.pixel(0, 0)[0] == 0);
    CHECK(z0.pixel(1, 0)[0] == 255);

    Image8 z1 = render_overlay(vol, mask, Axis::Z, 1);
    CHECK(z1.pixel(0, 0)[0] == 128); // lround(0.5 * 255)
    CHECK(z1.pixel(1, 0)[0] == 255);

    const Volume3D three = make_volume(Dims{3, 1, 1}, {1.0, 2.0, 3.0});
    const Volume3D m3(Dims{3, 1, 1}, Spacing{}, 0.0);
    Image8 im = render_overlay(three, m3, Axis::Z, 0);
    CHECK(im.pixel(0, 0)[0] == 0);
    CHECK(im.pixel(1, 0)[0] == 128);
    CHECK(im.pixel(2, 0)[0] == 255);
}

TEST_CASE("an empty mask leaves pure grayscale") {
    const Dims d{6, 5, 4};
    const Volume3D vol = cmfseg::test::random_volume(d, 9);
    const Volume3D mask(d, Spacing{}, 0.0);
    Image8 im = render_overlay(vol, mask, Axis::Z, 2);
    for (int row = 0; row < im.height; ++row)
        for (int col = 0; col < im.width; ++col) {
            CHECK(is_gray(im.pixel(col, row)));
            CHECK_FALSE(is_red(im.pixel(col, row)));
        }
}

TEST_CASE("the contour is the 4-neighbor boundary of the mask") {
    const Dims d{5, 5, 1};
    const Volume3D vol(d, Spacing{}, 2.0);
    Volume3D mask(d, Spacing{}, 0.0);
    for (int y = 1; y <= 3; ++y)
        for (int x = 1; x <= 3; ++x) mask.at(x, y, 0) = 1.0;

    Image8 im = render_overlay(vol, mask, Axis::Z, 0);
    for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 5; ++col) {
            const bool in_block =
                col >= 1 && col <= 3 && row >= 1 && row <= 3;
            const bool is_center = col == 2 && row == 2;
            if (in_block && !is_center)
                CHECK(is_red(im.pixel(col, row)));
            else
                CHECK(is_gray(im.pixel(col, row)));
        }
}

TEST_CASE("the grid edge counts as background for the contour") {
    const Dims d{5, 5, 1};
    const Volume3D vol(d, Spacing{}, 2.0);
    const Volume3D mask(d, Spacing{}, 1.0);
    Image8 im = render_overlay(vol, mask, Axis::Z, 0);
    for (int row = 0; row < 5; ++row)
        for (int col = 0; col < 5; ++col) {
            const bool border = row == 0 || row == 4 || col == 0 || col == 4;
            CHECK(is_red(im.pixel(col, row)) == border);
        }
}

TEST_CASE("isolated mask voxels are entirely contour") {
    const Dims d{4, 3, 2};
    const Volume3D vol(d, Spacing{}, 1.0);
    Volume3D mask(d, Spacing{}, 0.0);
    mask.at(1, 1, 0) = 1.0;
    mask.at(3, 0, 0) = 1.0;
    Image8 im = render_overlay(vol, mask, Axis::Z, 0);
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 4; ++col) {
            const bool fg = (col == 1 && row == 1) || (col == 3 && row == 0);
            CHECK(is_red(im.pixel(col, row)) == fg);
        }
    // The other slice holds no mask voxels at all.
    Image8 back = render_overlay(vol, mask, Axis::Z, 1);
    for (int row = 0; row < 3; ++row)
        for (int col = 0; col < 4; ++col)
            CHECK_FALSE(is_red(back.pixel(col, row)));
}

TEST_CASE("hstack concatenates left to right") {
    Image8 a;
    a.width = 2;
    a.height = 2;
    a.rgb = {1, 1, 1, 2, 2, 2, 3, 3, 3, 4, 4, 4};
    Image8 b;
    b.width = 1;
    b.height = 2;
    b.rgb = {9, 9, 9, 8, 8, 8};

    Image8 out = hstack({a, b});
    CHECK(out.width == 3);
    CHECK(out.height == 2);
    CHECK(out.pixel(0, 0)[0] == 1);
    CHECK(out.pixel(1, 0)[0] == 2);
    CHECK(out.pixel(2, 0)[0] == 9);
    CHECK(out.pixel(0, 1)[0] == 3);
    CHECK(out.pixel(1, 1)[0] == 4);
    CHECK(out.pixel(2, 1)[0] == 8);

    Image8 tall;
    tall.width = 1;
    tall.height = 3;
    tall.rgb.assign(9, 0);
    CHECK_THROWS_WITH_AS(hstack({a, tall}),
                         "render: hstack inputs must share one height",
                         ValidationError);
    CHECK_THROWS_WITH_AS(hstack({}), "render: hstack needs at least one image",
                         ValidationError);
}

TEST_CASE("ppm output is byte-frozen") {
    Image8 im;
    im.width = 2;
    im.height = 1;
    im.rgb = {1, 2, 3, 4, 5, 6};
    const std::string path = temp_file("cmfseg_render_test.ppm");
    write_ppm(im, path);

    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::string bytes((std::istreambuf_iterator<char>(in)),
                      std::istreambuf_iterator<char>());
    const std::string expect = std::string("P6\n2 1\n255\n") +
                               std::string({1, 2, 3, 4, 5, 6});
    CHECK(bytes == expect);
    std::filesystem::remove(path);

    CHECK_THROWS_AS(write_ppm(im, "/nonexistent_dir/x.ppm"), IoError);
}

TEST_CASE("bad slices and grids are rejected") {
    const Dims d{3, 4, 5};
    const Volume3D vol(d, Spacing{}, 1.0);
    const Volume3D mask(d, Spacing{}, 0.0);

    CHECK_THROWS_WITH_AS(render_overlay(vol, mask, Axis::Z, 5),
                         "render: slice index 5 out of range [0, 5)",
                         ValidationError);
    CHECK_THROWS_WITH_AS(render_overlay(vol, mask, Axis::X, 3),
                         "render: slice index 3 out of range [0, 3)",
                         ValidationError);
    CHECK_THROWS_WITH_AS(render_overlay(vol, mask, Axis::Y, -1),
                         "render: slice index -1 out of range [0, 4)",
                         ValidationError);

    const Volume3D wrong(Dims{3, 4, 4}, Spacing{}, 0.0);
    CHECK_THROWS_WITH_AS(render_overlay(vol, wrong, Axis::Z, 0),
                         "render: volume and mask grids differ", ValidationError);

    Volume3D not_binary = mask;
    not_binary.data[0] = 0.25;
    CHECK_THROWS_AS(render_overlay(vol, not_binary, Axis::Z, 0), ValidationError);
}

} // TEST_SUITE
