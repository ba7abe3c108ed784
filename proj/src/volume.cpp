#include "cmfseg/volume.hpp"

#include "cmfseg/kvfile.hpp"
#include "grid_inline.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

static_assert(std::endian::native == std::endian::little,
              "raw payload I/O assumes a little-endian host");

namespace cmfseg {

namespace fs = std::filesystem;

Volume3D::Volume3D(Dims d, Spacing s, double fill)
    : dims(d), spacing(s), data(std::size_t(d.count()), fill) {}

VectorField3D::VectorField3D(Dims d, Spacing s)
    : dims(d),
      spacing(s),
      x(std::size_t(d.count()), 0.0),
      y(std::size_t(d.count()), 0.0),
      z(std::size_t(d.count()), 0.0) {}

void validate_volume(const Volume3D& v, const std::string& what) {
    if (v.dims.nx <= 0 || v.dims.ny <= 0 || v.dims.nz <= 0)
        throw ValidationError("volume_core", what + ": non-positive dims");
    if (!(v.spacing.sx > 0.0) || !(v.spacing.sy > 0.0) || !(v.spacing.sz > 0.0))
        throw ValidationError("volume_core", what + ": non-positive spacing");
    if (std::int64_t(v.data.size()) != v.dims.count())
        throw ValidationError("volume_core", what + ": data length " +
                                                 std::to_string(v.data.size()) +
                                                 " != voxel count " +
                                                 std::to_string(v.dims.count()));
    for (std::int64_t i = 0; i < std::int64_t(v.data.size()); ++i)
        if (!std::isfinite(v.data[std::size_t(i)]))
            throw ValidationError("volume_core", what + ": non-finite sample at index " +
                                                     std::to_string(i));
}

void validate_binary(const Volume3D& v, const std::string& what) {
    for (std::int64_t i = 0; i < std::int64_t(v.data.size()); ++i) {
        double d = v.data[std::size_t(i)];
        if (d != 0.0 && d != 1.0)
            throw ValidationError("volume_core", what + ": non-binary value " +
                                                     std::to_string(d) + " at index " +
                                                     std::to_string(i));
    }
}

namespace {

std::string raw_name_for(const std::string& header_path) {
    fs::path p(header_path);
    p.replace_extension(".raw");
    return p.filename().string();
}

void write_payload_f32(const Volume3D& v, const std::string& raw_path) {
    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw IoError("volume_core", "cannot write '" + raw_path + "'");
    std::vector<float> buf(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) buf[i] = float(v.data[i]);
    out.write(reinterpret_cast<const char*>(buf.data()),
              std::streamsize(buf.size() * sizeof(float)));
    if (!out) throw IoError("volume_core", "write failed for '" + raw_path + "'");
}

void write_payload_u8(const Volume3D& v, const std::string& raw_path) {
    std::ofstream out(raw_path, std::ios::binary);
    if (!out) throw IoError("volume_core", "cannot write '" + raw_path + "'");
    std::vector<unsigned char> buf(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i)
        buf[i] = v.data[i] != 0.0 ? 1 : 0;
    out.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size()));
    if (!out) throw IoError("volume_core", "write failed for '" + raw_path + "'");
}

void write_header(const Volume3D& v, const std::string& header_path,
                  const std::string& element_type) {
    KvFile kv;
    kv.set_int("NDims", 3);
    kv.set_ints("DimSize", {v.dims.nx, v.dims.ny, v.dims.nz});
    kv.set_doubles("ElementSpacing", {v.spacing.sx, v.spacing.sy, v.spacing.sz});
    kv.set("ElementType", element_type);
    kv.set("ElementDataFile", raw_name_for(header_path));
    kv.save(header_path);
}

} // namespace

Volume3D load_volume(const std::string& header_path) {
    if (!fs::exists(header_path))
        throw IoError("volume_core", "missing file '" + header_path + "'");
    KvFile kv = KvFile::load(header_path);

    if (kv.get_int("NDims") != 3)
        throw ValidationError("volume_core", header_path + ": NDims must be 3");
    auto dsz = kv.get_ints("DimSize");
    auto spc = kv.get_doubles("ElementSpacing");
    if (dsz.size() != 3 || spc.size() != 3)
        throw ValidationError("volume_core",
                              header_path + ": DimSize/ElementSpacing need 3 entries");
    std::string etype = kv.get("ElementType");
    if (etype != "FLOAT32_LE" && etype != "UINT8")
        throw ValidationError("volume_core",
                              header_path + ": unsupported ElementType '" + etype + "'");

    Volume3D v;
    v.dims = Dims{int(dsz[0]), int(dsz[1]), int(dsz[2])};
    v.spacing = Spacing{spc[0], spc[1], spc[2]};
    if (v.dims.nx <= 0 || v.dims.ny <= 0 || v.dims.nz <= 0)
        throw ValidationError("volume_core", header_path + ": non-positive dims");
    if (!(v.spacing.sx > 0) || !(v.spacing.sy > 0) || !(v.spacing.sz > 0))
        throw ValidationError("volume_core", header_path + ": non-positive spacing");

    fs::path raw_path = fs::path(header_path).parent_path() / kv.get("ElementDataFile");
    std::ifstream in(raw_path, std::ios::binary);
    if (!in) throw IoError("volume_core", "missing payload '" + raw_path.string() + "'");
    in.seekg(0, std::ios::end);
    std::int64_t bytes = in.tellg();
    in.seekg(0, std::ios::beg);

    std::int64_t n = v.dims.count();
    std::int64_t elt = etype == "FLOAT32_LE" ? 4 : 1;
    if (bytes != n * elt)
        throw ValidationError("volume_core", header_path + ": payload is " +
                                                 std::to_string(bytes) +
                                                 " bytes, expected " +
                                                 std::to_string(n * elt));

    v.data.resize(std::size_t(n));
    if (etype == "FLOAT32_LE") {
        std::vector<float> buf(static_cast<std::size_t>(n));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n * 4));
        if (!in) throw IoError("volume_core", "read failed for '" + raw_path.string() + "'");
        for (std::int64_t i = 0; i < n; ++i) v.data[std::size_t(i)] = buf[std::size_t(i)];
    } else {
        std::vector<unsigned char> buf(static_cast<std::size_t>(n));
        in.read(reinterpret_cast<char*>(buf.data()), std::streamsize(n));
        if (!in) throw IoError("volume_core", "read failed for '" + raw_path.string() + "'");
        for (std::int64_t i = 0; i < n; ++i) {
            unsigned char b = buf[std::size_t(i)];
            if (b > 1)
                throw ValidationError("volume_core", header_path + ": mask value " +
                                                         std::to_string(int(b)) +
                                                         " outside {0,1}");
            v.data[std::size_t(i)] = b;
        }
    }
    validate_volume(v, header_path);
    return v;
}

void save_volume(const Volume3D& v, const std::string& header_path) {
    validate_volume(v, "save_volume");
    write_header(v, header_path, "FLOAT32_LE");
    fs::path raw = fs::path(header_path).parent_path() / raw_name_for(header_path);
    write_payload_f32(v, raw.string());
}

void save_mask(const Volume3D& mask, const std::string& header_path) {
    validate_volume(mask, "save_mask");
    validate_binary(mask, "save_mask");
    write_header(mask, header_path, "UINT8");
    fs::path raw = fs::path(header_path).parent_path() / raw_name_for(header_path);
    write_payload_u8(mask, raw.string());
}

Volume3D resample_trilinear(const Volume3D& v, Dims target) {
    validate_volume(v, "resample_trilinear");
    if (target.nx <= 0 || target.ny <= 0 || target.nz <= 0)
        throw ValidationError("volume_core", "resample_trilinear: non-positive target dims");
    for (int a = 0; a < 3; ++a) {
        int src = a == 0 ? v.dims.nx : a == 1 ? v.dims.ny : v.dims.nz;
        int dst = a == 0 ? target.nx : a == 1 ? target.ny : target.nz;
        if (src < 2 && dst > 1)
            throw ValidationError("volume_core",
                                  "resample_trilinear: source axis with " +
                                      std::to_string(src) +
                                      " samples cannot be interpolated");
    }

    // Map target index j to source coordinate j*(n-1)/(m-1); a single-sample
    // target axis reads the source midpoint.
    auto coord = [](int j, int m, int n) {
        if (m <= 1) return 0.5 * (n - 1);
        return double(j) * double(n - 1) / double(m - 1);
    };
    auto out_spacing = [](double s, int n, int m) {
        if (m > 1) return s * double(n - 1) / double(m - 1);
        return s * double(n);
    };

    Volume3D out(target, Spacing{out_spacing(v.spacing.sx, v.dims.nx, target.nx),
                                 out_spacing(v.spacing.sy, v.dims.ny, target.ny),
                                 out_spacing(v.spacing.sz, v.dims.nz, target.nz)});

    const int nx = v.dims.nx, ny = v.dims.ny, nz = v.dims.nz;
#pragma omp parallel for schedule(static)
    for (int zt = 0; zt < target.nz; ++zt) {
        double cz = coord(zt, target.nz, nz);
        int z0 = int(cz);
        if (z0 > nz - 2) z0 = nz >= 2 ? nz - 2 : 0;
        double wz = cz - z0;
        for (int yt = 0; yt < target.ny; ++yt) {
            double cy = coord(yt, target.ny, ny);
            int y0 = int(cy);
            if (y0 > ny - 2) y0 = ny >= 2 ? ny - 2 : 0;
            double wy = cy - y0;
            for (int xt = 0; xt < target.nx; ++xt) {
                double cx = coord(xt, target.nx, nx);
                int x0 = int(cx);
                if (x0 > nx - 2) x0 = nx >= 2 ? nx - 2 : 0;
                double wx = cx - x0;
                int x1 = nx >= 2 ? x0 + 1 : x0;
                int y1 = ny >= 2 ? y0 + 1 : y0;
                int z1 = nz >= 2 ? z0 + 1 : z0;

                double c000 = v.at(x0, y0, z0), c100 = v.at(x1, y0, z0);
                double c010 = v.at(x0, y1, z0), c110 = v.at(x1, y1, z0);
                double c001 = v.at(x0, y0, z1), c101 = v.at(x1, y0, z1);
                double c011 = v.at(x0, y1, z1), c111 = v.at(x1, y1, z1);

                double c00 = c000 + wx * (c100 - c000);
                double c10 = c010 + wx * (c110 - c010);
                double c01 = c001 + wx * (c101 - c001);
                double c11 = c011 + wx * (c111 - c011);
                double c0 = c00 + wy * (c10 - c00);
                double c1 = c01 + wy * (c11 - c01);
                out.at(xt, yt, zt) = c0 + wz * (c1 - c0);
            }
        }
    }
    return out;
}

VectorField3D gradient(const Volume3D& v) {
    validate_volume(v, "gradient");
    VectorField3D g(v.dims, v.spacing);
    const int nx = v.dims.nx, ny = v.dims.ny, nz = v.dims.nz;
    const double isx = 1.0 / v.spacing.sx;
    const double isy = 1.0 / v.spacing.sy;
    const double isz = 1.0 / v.spacing.sz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    const double* u = v.data.data();
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                g.x[std::size_t(i)] = detail::fwd_diff(u, i, 1, x + 1 < nx, isx);
                g.y[std::size_t(i)] = detail::fwd_diff(u, i, sy, y + 1 < ny, isy);
                g.z[std::size_t(i)] = detail::fwd_diff(u, i, sz, z + 1 < nz, isz);
            }
        }
    }
    return g;
}

Volume3D divergence(const VectorField3D& f) {
    Volume3D out(f.dims, f.spacing);
    const int nx = f.dims.nx, ny = f.dims.ny, nz = f.dims.nz;
    const double isx = 1.0 / f.spacing.sx;
    const double isy = 1.0 / f.spacing.sy;
    const double isz = 1.0 / f.spacing.sz;
    const std::int64_t sy = nx, sz = std::int64_t(nx) * ny;
    const double* qx = f.x.data();
    const double* qy = f.y.data();
    const double* qz = f.z.data();
#pragma omp parallel for schedule(static)
    for (int z = 0; z < nz; ++z) {
        for (int y = 0; y < ny; ++y) {
            std::int64_t i = sy * y + sz * z;
            for (int x = 0; x < nx; ++x, ++i) {
                double dx = detail::bwd_term(qx, i, 1, x + 1 < nx, x > 0);
                double dy = detail::bwd_term(qy, i, sy, y + 1 < ny, y > 0);
                double dz = detail::bwd_term(qz, i, sz, z + 1 < nz, z > 0);
                out.data[std::size_t(i)] = detail::div_value(dx, dy, dz, isx, isy, isz);
            }
        }
    }
    return out;
}

} // namespace cmfseg
