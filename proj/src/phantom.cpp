#include "cmfseg/phantom.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <string>

namespace cmfseg {

namespace {

constexpr double kPi = 3.141592653589793;
constexpr double kTwoPi = 6.283185307179586;

void require(bool ok, const std::string& msg) {
    if (!ok) throw ValidationError("phantom", msg);
}

double apex_semi_axis(const PhantomConfig& cfg) {
    switch (cfg.apex_axis) {
    case Axis::X: return cfg.ax_a;
    case Axis::Y: return cfg.ax_b;
    default: return cfg.ax_c;
    }
}

// Offset component along the apex axis and the azimuth of the remaining two
// components, taken in cyclic order so the frame stays right-handed.
void apex_frame(const PhantomConfig& cfg, double dx, double dy, double dz,
                double& along, double& azimuth) {
    switch (cfg.apex_axis) {
    case Axis::X:
        along = dx;
        azimuth = std::atan2(dz, dy);
        break;
    case Axis::Y:
        along = dy;
        azimuth = std::atan2(dx, dz);
        break;
    default:
        along = dz;
        azimuth = std::atan2(dy, dx);
        break;
    }
    if (azimuth < 0.0) azimuth += kTwoPi;
}

bool in_defect(const PhantomConfig& cfg, double dx, double dy, double dz) {
    if (!cfg.defect) return false;
    const DefectSpec& d = *cfg.defect;
    const double r = std::sqrt(dx * dx + dy * dy + dz * dz);
    if (r == 0.0) return false;
    double along, az;
    apex_frame(cfg, dx, dy, dz, along, az);
    const double polar =
        std::acos(std::clamp(cfg.apex_sign * along / r, -1.0, 1.0));
    if (polar < d.polar0 || polar > d.polar1) return false;
    if (d.azimuth0 <= d.azimuth1) return az >= d.azimuth0 && az < d.azimuth1;
    return az >= d.azimuth0 || az < d.azimuth1;
}

// One border-renormalized Gaussian pass along an axis.
void blur_axis(Volume3D& v, Axis axis, const std::vector<double>& kernel) {
    const int radius = int(kernel.size()) / 2;
    const Dims d = v.dims;
    const std::int64_t sy = d.nx, sz = std::int64_t(d.nx) * d.ny;
    std::int64_t stride;
    int n, outer1, outer2;
    switch (axis) {
    case Axis::X: stride = 1; n = d.nx; outer1 = d.ny; outer2 = d.nz; break;
    case Axis::Y: stride = sy; n = d.ny; outer1 = d.nx; outer2 = d.nz; break;
    default: stride = sz; n = d.nz; outer1 = d.nx; outer2 = d.ny; break;
    }
    std::vector<double> line(static_cast<std::size_t>(n));
    for (int o2 = 0; o2 < outer2; ++o2) {
        for (int o1 = 0; o1 < outer1; ++o1) {
            std::int64_t base;
            switch (axis) {
            case Axis::X: base = sy * o1 + sz * o2; break;
            case Axis::Y: base = o1 + sz * o2; break;
            default: base = o1 + sy * o2; break;
            }
            for (int i = 0; i < n; ++i)
                line[std::size_t(i)] = v.data[std::size_t(base + stride * i)];
            for (int i = 0; i < n; ++i) {
                double acc = 0.0, norm = 0.0;
                const int j0 = std::max(-radius, -i);
                const int j1 = std::min(radius, n - 1 - i);
                for (int j = j0; j <= j1; ++j) {
                    const double w = kernel[std::size_t(j + radius)];
                    acc += w * line[std::size_t(i + j)];
                    norm += w;
                }
                v.data[std::size_t(base + stride * i)] = acc / norm;
            }
        }
    }
}

struct AxisBounds {
    double center, semi;
    int n;
};

} // namespace

void validate_phantom_config(const PhantomConfig& cfg) {
    require(cfg.dims.nx > 0 && cfg.dims.ny > 0 && cfg.dims.nz > 0,
            "dims must be positive");
    require(std::isfinite(cfg.ax_a) && std::isfinite(cfg.ax_b) &&
                std::isfinite(cfg.ax_c) && cfg.ax_a > 0 && cfg.ax_b > 0 &&
                cfg.ax_c > 0,
            "semi-axes must be positive");
    require(std::isfinite(cfg.wall) && cfg.wall > 0, "wall thickness must be positive");
    require(cfg.wall < std::min({cfg.ax_a, cfg.ax_b, cfg.ax_c}),
            "wall thickness must be below the smallest semi-axis");
    require(cfg.apex_sign == 1 || cfg.apex_sign == -1, "apex sign must be +1 or -1");
    require(std::isfinite(cfg.truncation) && cfg.truncation > 0.0 &&
                cfg.truncation <= 1.0,
            "truncation fraction must lie in (0, 1]");
    const AxisBounds bounds[3] = {{cfg.center_x, cfg.ax_a, cfg.dims.nx},
                                  {cfg.center_y, cfg.ax_b, cfg.dims.ny},
                                  {cfg.center_z, cfg.ax_c, cfg.dims.nz}};
    for (const AxisBounds& b : bounds) {
        require(std::isfinite(b.center), "center must be finite");
        require(b.center - b.semi >= 2.0 && b.center + b.semi <= double(b.n) - 3.0,
                "shell must fit inside the grid with 2 voxels margin");
    }
    if (cfg.defect) {
        const DefectSpec& d = *cfg.defect;
        require(std::isfinite(d.rho) && d.rho >= 0.0 && d.rho <= 1.0,
                "defect rho must lie in [0, 1]");
        require(d.azimuth0 >= 0.0 && d.azimuth0 <= kTwoPi && d.azimuth1 >= 0.0 &&
                    d.azimuth1 <= kTwoPi,
                "defect azimuth bounds must lie in [0, 2*pi]");
        require(d.polar0 >= 0.0 && d.polar0 <= d.polar1 && d.polar1 <= kPi,
                "defect polar range must be ordered within [0, pi]");
    }
    require(std::isfinite(cfg.blur_fwhm) && cfg.blur_fwhm >= 0.0,
            "blur fwhm must be non-negative");
    require(std::isfinite(cfg.mean_counts) && cfg.mean_counts > 0.0,
            "mean counts must be positive");
}

std::pair<Volume3D, Volume3D> generate_lv_phantom(const PhantomConfig& cfg) {
    validate_phantom_config(cfg);
    const Dims d = cfg.dims;
    Volume3D mask(d, Spacing{1.0, 1.0, 1.0});
    Volume3D activity(d, Spacing{1.0, 1.0, 1.0});
    const double ia = cfg.ax_a - cfg.wall;
    const double ib = cfg.ax_b - cfg.wall;
    const double ic = cfg.ax_c - cfg.wall;
    const double apex_semi = apex_semi_axis(cfg);
    const double keep_from = 1.0 - 2.0 * cfg.truncation;
    std::int64_t shell = 0;
    for (int z = 0; z < d.nz; ++z)
        for (int y = 0; y < d.ny; ++y)
            for (int x = 0; x < d.nx; ++x) {
                const double dx = x - cfg.center_x;
                const double dy = y - cfg.center_y;
                const double dz = z - cfg.center_z;
                const double oq = (dx / cfg.ax_a) * (dx / cfg.ax_a) +
                                  (dy / cfg.ax_b) * (dy / cfg.ax_b) +
                                  (dz / cfg.ax_c) * (dz / cfg.ax_c);
                if (oq > 1.0) continue;
                const double iq = (dx / ia) * (dx / ia) + (dy / ib) * (dy / ib) +
                                  (dz / ic) * (dz / ic);
                if (iq <= 1.0) continue;
                double along, az;
                apex_frame(cfg, dx, dy, dz, along, az);
                if (cfg.apex_sign * along / apex_semi < keep_from) continue;
                ++shell;
                mask.at(x, y, z) = 1.0;
                activity.at(x, y, z) = in_defect(cfg, dx, dy, dz)
                                           ? cfg.defect->rho
                                           : 1.0;
            }
    if (shell == 0) throw ValidationError("phantom", "empty shell");
    return {std::move(mask), std::move(activity)};
}

Volume3D simulate_acquisition(const Volume3D& activity, const PhantomConfig& cfg) {
    validate_volume(activity, "activity");
    validate_phantom_config(cfg);
    for (double v : activity.data)
        require(v >= 0.0, "activity must be non-negative");

    Volume3D out = activity;
    const double sigma = cfg.blur_fwhm / (2.0 * std::sqrt(2.0 * std::log(2.0)));
    if (sigma > 0.0) {
        const int radius = int(std::ceil(3.0 * sigma));
        std::vector<double> kernel(std::size_t(2 * radius + 1));
        for (int j = -radius; j <= radius; ++j)
            kernel[std::size_t(j + radius)] =
                std::exp(-0.5 * (j / sigma) * (j / sigma));
        blur_axis(out, Axis::X, kernel);
        blur_axis(out, Axis::Y, kernel);
        blur_axis(out, Axis::Z, kernel);
    }

    std::mt19937_64 rng(cfg.seed);
    const double inv_counts = 1.0 / cfg.mean_counts;
    for (double& v : out.data) {
        const double mean = cfg.mean_counts * v;
        if (mean > 0.0) {
            std::poisson_distribution<std::int64_t> poisson(mean);
            v = double(poisson(rng)) * inv_counts;
        } else {
            v = 0.0;
        }
    }
    return out;
}

Volume3D probability_from_volume(const Volume3D& noisy, double gain,
                                 std::optional<double> midpoint) {
    validate_volume(noisy, "probability_from_volume");
    require(std::isfinite(gain) && gain > 0.0, "gain must be positive");

    double q;
    if (midpoint) {
        require(std::isfinite(*midpoint), "midpoint must be finite");
        q = *midpoint;
    } else {
        const auto [lo_it, hi_it] =
            std::minmax_element(noisy.data.begin(), noisy.data.end());
        const double lo = *lo_it, hi = *hi_it;
        require(hi > lo, "constant input: Otsu threshold undefined");

        constexpr int kBins = 256;
        std::int64_t hist[kBins] = {};
        const double scale = double(kBins) / (hi - lo);
        for (double v : noisy.data) {
            int b = int((v - lo) * scale);
            hist[std::min(b, kBins - 1)] += 1;
        }
        const double total = double(noisy.size());
        double global_mean = 0.0;
        for (int b = 0; b < kBins; ++b) global_mean += b * double(hist[b]);
        global_mean /= total;

        double w0 = 0.0, sum0 = 0.0, best_var = -1.0;
        int best_bin = 0;
        for (int b = 0; b < kBins - 1; ++b) {
            w0 += double(hist[b]);
            sum0 += b * double(hist[b]);
            const double w1 = total - w0;
            if (w0 == 0.0 || w1 == 0.0) continue;
            const double m0 = sum0 / w0;
            const double m1 = (global_mean * total - sum0) / w1;
            const double var = w0 * w1 * (m0 - m1) * (m0 - m1);
            if (var > best_var) {
                best_var = var;
                best_bin = b;
            }
        }
        q = lo + double(best_bin + 1) * (hi - lo) / double(kBins);
    }

    Volume3D prob(noisy.dims, noisy.spacing);
    for (std::int64_t i = 0; i < noisy.size(); ++i)
        prob.data[std::size_t(i)] =
            1.0 / (1.0 + std::exp(-gain * (noisy.data[std::size_t(i)] - q)));
    return prob;
}

std::vector<Volume3D> generate_training_set(int n, const PhantomConfig& base,
                                            const VariationRanges& ranges,
                                            std::uint64_t seed) {
    require(n >= 0, "training count must be non-negative");
    validate_phantom_config(base);
    require(ranges.axes >= 0 && ranges.wall >= 0 && ranges.truncation >= 0 &&
                ranges.center >= 0,
            "variation ranges must be non-negative");

    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    auto jitter = [&](double half_width) {
        return (2.0 * unit(rng) - 1.0) * half_width; // always consumes one draw
    };

    std::vector<Volume3D> masks;
    masks.reserve(std::size_t(n));
    for (int i = 0; i < n; ++i) {
        PhantomConfig cfg = base;
        cfg.ax_a += jitter(ranges.axes);
        cfg.ax_b += jitter(ranges.axes);
        cfg.ax_c += jitter(ranges.axes);
        cfg.wall += jitter(ranges.wall);
        cfg.truncation += jitter(ranges.truncation);
        cfg.center_x += jitter(ranges.center);
        cfg.center_y += jitter(ranges.center);
        cfg.center_z += jitter(ranges.center);
        masks.push_back(generate_lv_phantom(cfg).first);
    }
    return masks;
}

namespace {

Axis parse_apex(const std::string& text, int& sign) {
    std::string t = text;
    sign = 1;
    if (!t.empty() && (t[0] == '+' || t[0] == '-')) {
        sign = t[0] == '-' ? -1 : 1;
        t = t.substr(1);
    }
    if (t == "x") return Axis::X;
    if (t == "y") return Axis::Y;
    if (t == "z") return Axis::Z;
    throw ValidationError("phantom", "apex must be one of +x -x +y -y +z -z, got '" +
                                         text + "'");
}

std::string apex_to_string(const PhantomConfig& cfg) {
    std::string s = cfg.apex_sign < 0 ? "-" : "+";
    switch (cfg.apex_axis) {
    case Axis::X: return s + "x";
    case Axis::Y: return s + "y";
    default: return s + "z";
    }
}

} // namespace

PhantomConfig phantom_config_from_kv(const KvFile& kv) {
    static const std::set<std::string> known = {
        "dims",          "center",      "axes",       "wall",
        "apex",          "truncation",  "defect_azimuth", "defect_polar",
        "defect_rho",    "blur_fwhm",   "mean_counts", "seed"};
    for (const auto& entry : kv.entries())
        if (!known.count(entry.first))
            throw ValidationError("phantom", "unknown config key '" + entry.first + "'");

    PhantomConfig cfg;
    if (kv.has("dims")) {
        const auto d = kv.get_ints("dims");
        require(d.size() == 3, "dims needs 3 entries");
        cfg.dims = Dims{int(d[0]), int(d[1]), int(d[2])};
    }
    if (kv.has("center")) {
        const auto c = kv.get_doubles("center");
        require(c.size() == 3, "center needs 3 entries");
        cfg.center_x = c[0];
        cfg.center_y = c[1];
        cfg.center_z = c[2];
    } else {
        cfg.center_x = 0.5 * (cfg.dims.nx - 1);
        cfg.center_y = 0.5 * (cfg.dims.ny - 1);
        cfg.center_z = 0.5 * (cfg.dims.nz - 1);
    }
    if (kv.has("axes")) {
        const auto a = kv.get_doubles("axes");
        require(a.size() == 3, "axes needs 3 entries");
        cfg.ax_a = a[0];
        cfg.ax_b = a[1];
        cfg.ax_c = a[2];
    }
    cfg.wall = kv.get_double_or("wall", cfg.wall);
    if (kv.has("apex")) cfg.apex_axis = parse_apex(kv.get("apex"), cfg.apex_sign);
    cfg.truncation = kv.get_double_or("truncation", cfg.truncation);
    if (kv.has("defect_rho")) {
        DefectSpec d;
        d.rho = kv.get_double("defect_rho");
        if (kv.has("defect_azimuth")) {
            const auto a = kv.get_doubles("defect_azimuth");
            require(a.size() == 2, "defect_azimuth needs 2 entries");
            d.azimuth0 = a[0];
            d.azimuth1 = a[1];
        }
        if (kv.has("defect_polar")) {
            const auto p = kv.get_doubles("defect_polar");
            require(p.size() == 2, "defect_polar needs 2 entries");
            d.polar0 = p[0];
            d.polar1 = p[1];
        }
        cfg.defect = d;
    } else {
        require(!kv.has("defect_azimuth") && !kv.has("defect_polar"),
                "defect ranges need defect_rho");
    }
    cfg.blur_fwhm = kv.get_double_or("blur_fwhm", cfg.blur_fwhm);
    cfg.mean_counts = kv.get_double_or("mean_counts", cfg.mean_counts);
    if (kv.has("seed")) cfg.seed = std::stoull(kv.get("seed"));
    validate_phantom_config(cfg);
    return cfg;
}

KvFile phantom_config_to_kv(const PhantomConfig& cfg) {
    KvFile kv;
    kv.set_ints("dims", {cfg.dims.nx, cfg.dims.ny, cfg.dims.nz});
    kv.set_doubles("center", {cfg.center_x, cfg.center_y, cfg.center_z});
    kv.set_doubles("axes", {cfg.ax_a, cfg.ax_b, cfg.ax_c});
    kv.set_double("wall", cfg.wall);
    kv.set("apex", apex_to_string(cfg));
    kv.set_double("truncation", cfg.truncation);
    if (cfg.defect) {
        kv.set_doubles("defect_azimuth", {cfg.defect->azimuth0, cfg.defect->azimuth1});
        kv.set_doubles("defect_polar", {cfg.defect->polar0, cfg.defect->polar1});
        kv.set_double("defect_rho", cfg.defect->rho);
    }
    kv.set_double("blur_fwhm", cfg.blur_fwhm);
    kv.set_double("mean_counts", cfg.mean_counts);
    kv.set("seed", std::to_string(cfg.seed));
    return kv;
}

} // namespace cmfseg
