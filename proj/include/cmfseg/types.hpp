#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cmfseg {

// Grid dimensions in voxels. Linearization is x-fastest everywhere:
// index(x,y,z) = x + nx*(y + ny*z). Every module, including the discrete
// min-cut reference, uses this order so voxel indices are comparable.
struct Dims {
    int nx = 0, ny = 0, nz = 0;

    std::int64_t count() const {
        return std::int64_t(nx) * std::int64_t(ny) * std::int64_t(nz);
    }
    bool operator==(const Dims& o) const {
        return nx == o.nx && ny == o.ny && nz == o.nz;
    }
    bool operator!=(const Dims& o) const { return !(*this == o); }
};

// Physical voxel spacing in millimeters, strictly positive.
struct Spacing {
    double sx = 1.0, sy = 1.0, sz = 1.0;

    bool operator==(const Spacing& o) const {
        return sx == o.sx && sy == o.sy && sz == o.sz;
    }
};

enum class Axis { X = 0, Y = 1, Z = 2 };

// Validation failures exit the CLI with code 1, I/O failures with code 2.
class Error : public std::runtime_error {
public:
    Error(std::string module, const std::string& msg)
        : std::runtime_error(module + ": " + msg), module_(std::move(module)) {}
    const std::string& module() const { return module_; }
    virtual int exit_code() const { return 1; }

private:
    std::string module_;
};

class ValidationError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
    int exit_code() const override { return 2; }
};

} // namespace cmfseg
