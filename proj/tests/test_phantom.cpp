#include "doctest.h"

#include "cmfseg/phantom.hpp"
#include "test_support.hpp"

#include <cmath>
#include <numeric>

using namespace cmfseg;
using cmfseg::test::bits_equal;

namespace {

constexpr double kPi = 3.141592653589793;

std::int64_t count_fg(const Volume3D& m) {
    std::int64_t n = 0;
    for (double v : m.data) n += v != 0.0 ? 1 : 0;
    return n;
}

} // namespace

TEST_SUITE("phantom") {

TEST_CASE("untruncated shell volume matches the analytic value") {
    PhantomConfig cfg;
    cfg.truncation = 1.0;
    auto [mask, activity] = generate_lv_phantom(cfg);
    const double outer = cfg.ax_a * cfg.ax_b * cfg.ax_c;
    const double inner =
        (cfg.ax_a - cfg.wall) * (cfg.ax_b - cfg.wall) * (cfg.ax_c - cfg.wall);
    const double analytic = 4.0 / 3.0 * kPi * (outer - inner);
    const double voxels = double(count_fg(mask));
    CHECK(std::abs(voxels - analytic) < 0.05 * analytic);
    // Without a defect the activity is the mask.
    CHECK(bits_equal(mask.data, activity.data));
}

TEST_CASE("truncation removes the far side of the apex axis") {
    PhantomConfig half;
    half.truncation = 0.5; // keep exactly the apex-side half
    auto [m_half, a_half] = generate_lv_phantom(half);
    PhantomConfig full = half;
    full.truncation = 1.0;
    auto [m_full, a_full] = generate_lv_phantom(full);
    const auto n_half = count_fg(m_half), n_full = count_fg(m_full);
    // The default shell is mirror-symmetric about the z center plane and no
    // voxel center sits on it, so the kept half is exact.
    CHECK(2 * n_half == n_full);
    // Apex points toward -z: the kept half sits below the center plane.
    for (int z = 24; z < 48; ++z)
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) CHECK(m_half.at(x, y, z) == 0.0);
}

TEST_CASE("full-sector defect scales the whole shell by rho") {
    PhantomConfig cfg;
    cfg.defect = DefectSpec{}; // whole sphere of directions
    cfg.defect->rho = 0.0;
    auto [mask, activity] = generate_lv_phantom(cfg);
    CHECK(count_fg(mask) > 0);
    for (double v : activity.data) CHECK(v == 0.0);

    cfg.defect->rho = 1.0;
    auto [mask1, activity1] = generate_lv_phantom(cfg);
    CHECK(bits_equal(mask1.data, activity1.data));

    cfg.defect->rho = 0.3;
    auto [mask3, activity3] = generate_lv_phantom(cfg);
    for (std::size_t i = 0; i < mask3.data.size(); ++i)
        CHECK(activity3.data[i] == (mask3.data[i] != 0.0 ? 0.3 : 0.0));
}

TEST_CASE("defect azimuth wraps through zero") {
    PhantomConfig cfg;
    // Sector covering azimuth [3pi/2, pi/2), i.e. the dx > 0 half-space
    // around the apex axis, crossing the 0/2pi seam.
    cfg.defect = DefectSpec{1.5 * kPi, 0.5 * kPi, 0.0, kPi, 0.25};
    auto [mask, activity] = generate_lv_phantom(cfg);
    bool saw_defect = false, saw_healthy = false;
    for (int z = 0; z < 48; ++z)
        for (int y = 0; y < 48; ++y)
            for (int x = 0; x < 48; ++x) {
                if (mask.at(x, y, z) == 0.0) continue;
                const double dx = x - cfg.center_x;
                const double dy = y - cfg.center_y;
                const double az = std::atan2(dy, dx);
                const double expect = (az >= -0.5 * kPi && az < 0.5 * kPi) ? 0.25 : 1.0;
                CHECK(activity.at(x, y, z) == expect);
                (expect == 0.25 ? saw_defect : saw_healthy) = true;
            }
    CHECK(saw_defect);
    CHECK(saw_healthy);
}

TEST_CASE("acquisition: blur preserves constants, huge counts recover activity") {
    PhantomConfig cfg;
    Volume3D flat(Dims{16, 16, 16}, Spacing{1.0, 1.0, 1.0}, 0.7);
    cfg.mean_counts = 1e8;
    Volume3D out = simulate_acquisition(flat, cfg);
    for (double v : out.data) CHECK(v == doctest::Approx(0.7).epsilon(2e-3));

    PhantomConfig sharp;
    sharp.blur_fwhm = 0.0;
    sharp.mean_counts = 1e8;
    auto [mask, activity] = generate_lv_phantom(sharp);
    Volume3D noisy = simulate_acquisition(activity, sharp);
    double rms = 0.0;
    for (std::int64_t i = 0; i < noisy.size(); ++i) {
        const double d = noisy.data[std::size_t(i)] - activity.data[std::size_t(i)];
        rms += d * d;
    }
    rms = std::sqrt(rms / double(noisy.size()));
    CHECK(rms < 1e-3);
}

TEST_CASE("acquisition: interior impulse spreads with the separable kernel") {
    PhantomConfig cfg;
    cfg.mean_counts = 1e10;
    Volume3D impulse(Dims{24, 24, 24}, Spacing{1.0, 1.0, 1.0});
    impulse.at(10, 10, 10) = 1.0;
    Volume3D out = simulate_acquisition(impulse, cfg);

    const double sigma = cfg.blur_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    const int radius = int(std::ceil(3.0 * sigma));
    std::vector<double> w(std::size_t(2 * radius + 1));
    double norm = 0.0;
    for (int j = -radius; j <= radius; ++j) {
        w[std::size_t(j + radius)] = std::exp(-0.5 * (j / sigma) * (j / sigma));
        norm += w[std::size_t(j + radius)];
    }
    auto g = [&](int j) {
        return std::abs(j) > radius ? 0.0 : w[std::size_t(j + radius)] / norm;
    };
    for (int dz = -2; dz <= 2; ++dz)
        for (int dy = -2; dy <= 2; ++dy)
            for (int dx = -2; dx <= 2; ++dx) {
                const double expect = g(dx) * g(dy) * g(dz);
                CHECK(out.at(10 + dx, 10 + dy, 10 + dz) ==
                      doctest::Approx(expect).epsilon(1e-2));
            }
}

TEST_CASE("acquisition: Poisson noise has the right scale and is seeded") {
    PhantomConfig cfg;
    cfg.blur_fwhm = 0.0;
    cfg.mean_counts = 150.0;
    Volume3D flat(Dims{32, 32, 32}, Spacing{1.0, 1.0, 1.0}, 1.0);
    Volume3D a = simulate_acquisition(flat, cfg);
    const double n = double(a.size());
    const double mean =
        std::accumulate(a.data.begin(), a.data.end(), 0.0) / n;
    double var = 0.0;
    for (double v : a.data) var += (v - mean) * (v - mean);
    var /= n - 1.0;
    CHECK(mean == doctest::Approx(1.0).epsilon(0.01));
    CHECK(var > 0.8 / cfg.mean_counts);
    CHECK(var < 1.2 / cfg.mean_counts);

    Volume3D b = simulate_acquisition(flat, cfg);
    CHECK(bits_equal(a.data, b.data));
    cfg.seed = 2;
    Volume3D c = simulate_acquisition(flat, cfg);
    CHECK(!bits_equal(a.data, c.data));

    Volume3D bad = flat;
    bad.data[0] = -0.5;
    CHECK_THROWS_AS(simulate_acquisition(bad, cfg), ValidationError);
}

TEST_CASE("probability_from_volume: bimodal input splits at the Otsu level") {
    Volume3D v(Dims{8, 8, 8}, Spacing{});
    for (std::size_t i = 0; i < v.data.size(); ++i)
        v.data[i] = i % 4 == 0 ? 0.9 : 0.1;
    Volume3D p = probability_from_volume(v);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        if (v.data[i] == 0.9)
            CHECK(p.data[i] > 0.5);
        else
            CHECK(p.data[i] < 0.5);
        CHECK(p.data[i] > 0.0);
        CHECK(p.data[i] < 1.0);
    }
}

TEST_CASE("probability_from_volume: explicit midpoint is the logistic center") {
    Volume3D v(Dims{2, 1, 1}, Spacing{});
    v.data = {0.75, 0.5};
    Volume3D p = probability_from_volume(v, 8.0, 0.5);
    CHECK(p.data[0] ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(p.data[1] == doctest::Approx(0.5).epsilon(1e-12));

    CHECK_THROWS_AS(probability_from_volume(Volume3D(Dims{3, 3, 3}, Spacing{}, 0.4)),
                    ValidationError);
    CHECK_THROWS_AS(probability_from_volume(v, 0.0), ValidationError);
}

TEST_CASE("training set: zero ranges reproduce the base mask") {
    PhantomConfig base;
    auto masks = generate_training_set(4, base, VariationRanges{}, 11);
    REQUIRE(int(masks.size()) == 4);
    Volume3D ref = generate_lv_phantom(base).first;
    for (const auto& m : masks) CHECK(bits_equal(m.data, ref.data));

    CHECK(generate_training_set(0, base, VariationRanges{}, 11).empty());
}

TEST_CASE("training set: deterministic in seed, draws always consumed") {
    PhantomConfig base;
    VariationRanges vr;
    vr.axes = 1.0;
    vr.wall = 0.4;
    auto a = generate_training_set(3, base, vr, 5);
    auto b = generate_training_set(3, base, vr, 5);
    for (int i = 0; i < 3; ++i) CHECK(bits_equal(a[std::size_t(i)].data,
                                                 b[std::size_t(i)].data));
    auto c = generate_training_set(3, base, vr, 6);
    bool any_diff = false;
    for (int i = 0; i < 3; ++i)
        any_diff = any_diff || !bits_equal(a[std::size_t(i)].data,
                                           c[std::size_t(i)].data);
    CHECK(any_diff);

    // A zero half-width consumes its draws anyway, so downstream jitters see
    // the same stream whether or not an upstream jitter is disabled.
    VariationRanges vr0 = vr;
    vr0.axes = 0.0;
    VariationRanges vr_eps = vr;
    vr_eps.axes = 1e-12;
    auto z0 = generate_training_set(3, base, vr0, 5);
    auto ze = generate_training_set(3, base, vr_eps, 5);
    for (int i = 0; i < 3; ++i) CHECK(bits_equal(z0[std::size_t(i)].data,
                                                 ze[std::size_t(i)].data));
}

TEST_CASE("phantom config validation") {
    PhantomConfig cfg;
    cfg.wall = 14.0; // equals the smallest semi-axis
    CHECK_THROWS_AS(validate_phantom_config(cfg), ValidationError);

    cfg = PhantomConfig{};
    cfg.center_x = 40.0; // shell would poke out of the grid
    CHECK_THROWS_AS(validate_phantom_config(cfg), ValidationError);

    cfg = PhantomConfig{};
    cfg.truncation = 0.0;
    CHECK_THROWS_AS(validate_phantom_config(cfg), ValidationError);

    cfg = PhantomConfig{};
    cfg.defect = DefectSpec{};
    cfg.defect->rho = 1.5;
    CHECK_THROWS_AS(validate_phantom_config(cfg), ValidationError);

    // A sliver cap too thin to contain any voxel center.
    cfg = PhantomConfig{};
    cfg.truncation = 0.001;
    CHECK_THROWS_WITH_AS(generate_lv_phantom(cfg), "phantom: empty shell",
                         ValidationError);
}

TEST_CASE("config kv round trip") {
    PhantomConfig cfg;
    cfg.dims = Dims{40, 44, 48};
    cfg.center_x = 20.0;
    cfg.center_y = 21.5;
    cfg.center_z = 24.0;
    cfg.ax_a = 12.0;
    cfg.ax_b = 13.0;
    cfg.ax_c = 16.0;
    cfg.wall = 4.0;
    cfg.apex_axis = Axis::Y;
    cfg.apex_sign = 1;
    cfg.truncation = 0.6;
    cfg.defect = DefectSpec{0.5, 2.5, 0.3, 1.9, 0.25};
    cfg.blur_fwhm = 3.0;
    cfg.mean_counts = 90.0;
    cfg.seed = 77;

    PhantomConfig back = phantom_config_from_kv(phantom_config_to_kv(cfg));
    CHECK(back.dims == cfg.dims);
    CHECK(back.center_x == cfg.center_x);
    CHECK(back.center_y == cfg.center_y);
    CHECK(back.center_z == cfg.center_z);
    CHECK(back.ax_a == cfg.ax_a);
    CHECK(back.ax_b == cfg.ax_b);
    CHECK(back.ax_c == cfg.ax_c);
    CHECK(back.wall == cfg.wall);
    CHECK(back.apex_axis == cfg.apex_axis);
    CHECK(back.apex_sign == cfg.apex_sign);
    CHECK(back.truncation == cfg.truncation);
    REQUIRE(back.defect.has_value());
    CHECK(back.defect->azimuth0 == cfg.defect->azimuth0);
    CHECK(back.defect->azimuth1 == cfg.defect->azimuth1);
    CHECK(back.defect->polar0 == cfg.defect->polar0);
    CHECK(back.defect->polar1 == cfg.defect->polar1);
    CHECK(back.defect->rho == cfg.defect->rho);
    CHECK(back.blur_fwhm == cfg.blur_fwhm);
    CHECK(back.mean_counts == cfg.mean_counts);
    CHECK(back.seed == cfg.seed);
}

TEST_CASE("config kv rejections and defaults") {
    KvFile kv;
    kv.set("bogus", "1");
    CHECK_THROWS_WITH_AS(phantom_config_from_kv(kv),
                         "phantom: unknown config key 'bogus'", ValidationError);

    KvFile ranges;
    ranges.set_doubles("defect_azimuth", {0.0, 1.0});
    CHECK_THROWS_WITH_AS(phantom_config_from_kv(ranges),
                         "phantom: defect ranges need defect_rho",
                         ValidationError);

    // Missing center defaults to the grid center.
    KvFile small;
    small.set_ints("dims", {40, 40, 40});
    small.set_doubles("axes", {12.0, 12.0, 14.0});
    PhantomConfig cfg = phantom_config_from_kv(small);
    CHECK(cfg.center_x == 19.5);
    CHECK(cfg.center_z == 19.5);

    KvFile apex;
    apex.set("apex", "+q");
    CHECK_THROWS_AS(phantom_config_from_kv(apex), ValidationError);
}

} // TEST_SUITE
