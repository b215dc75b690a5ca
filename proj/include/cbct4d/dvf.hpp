#pragma once

#include <cmath>
#include <vector>

#include "cbct4d/common.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

/// Displacement field on a voxel grid, in voxel units. A field D_{i->j}
/// pulls phase-i anatomy onto the phase-j grid: warp(V_i, D)(x) = V_i(x + D(x)).
struct Dvf {
    GridShape shape;
    std::vector<float> dx, dy, dz;

    Dvf() = default;
    explicit Dvf(const GridShape& s) : shape(s), dx(s.count(), 0.0f), dy(s.count(), 0.0f), dz(s.count(), 0.0f) {
        shape.validate();
    }

    static Dvf zeros(const GridShape& s) { return Dvf(s); }

    const Dims3& dims() const { return shape.dims; }
    std::size_t size() const { return dx.size(); }
    Vec3 at(std::size_t i) const { return {dx[i], dy[i], dz[i]}; }
    void set(std::size_t i, const Vec3& v) {
        dx[i] = static_cast<float>(v.x);
        dy[i] = static_cast<float>(v.y);
        dz[i] = static_cast<float>(v.z);
    }

    bool is_zero() const {
        for (std::size_t i = 0; i < size(); ++i)
            if (dx[i] != 0.0f || dy[i] != 0.0f || dz[i] != 0.0f) return false;
        return true;
    }

    double max_abs() const {
        double m = 0.0;
        for (std::size_t i = 0; i < size(); ++i) m = std::max(m, norm(at(i)));
        return m;
    }

    void validate() const {
        shape.validate();
        if (dx.size() != shape.count() || dy.size() != shape.count() || dz.size() != shape.count())
            throw error("dvf: component length does not match dims");
        check_finite<float>(dx, "dvf");
        check_finite<float>(dy, "dvf");
        check_finite<float>(dz, "dvf");
    }

    bool operator==(const Dvf&) const = default;
};

inline Vec3 dvf_voxel_to_mm(const Vec3& d, const GridShape& s) {
    return {d.x * s.spacing.x, d.y * s.spacing.y, d.z * s.spacing.z};
}

inline Vec3 dvf_mm_to_voxel(const Vec3& d, const GridShape& s) {
    return {d.x / s.spacing.x, d.y / s.spacing.y, d.z / s.spacing.z};
}

namespace detail {

inline void check_same_grid(const Dims3& a, const Dims3& b, const char* what) {
    if (!(a == b)) throw error(std::string(what) + ": dimension mismatch");
}

/// Visits the in-grid trilinear corners of fractional index f with their weights.
template <class Fn>
inline void for_each_corner(const Dims3& d, const Vec3& f, Fn&& fn) {
    const double fx = std::floor(f.x), fy = std::floor(f.y), fz = std::floor(f.z);
    if (fx < -1.0 || fy < -1.0 || fz < -1.0 || fx >= d.x || fy >= d.y || fz >= d.z) return;
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
    const double tx = f.x - fx, ty = f.y - fy, tz = f.z - fz;
    const double wx[2] = {1.0 - tx, tx}, wy[2] = {1.0 - ty, ty}, wz[2] = {1.0 - tz, tz};
    for (int c = 0; c < 2; ++c) {
        const int z = z0 + c;
        if (z < 0 || z >= d.z || wz[c] == 0.0) continue;
        for (int b = 0; b < 2; ++b) {
            const int y = y0 + b;
            if (y < 0 || y >= d.y || wy[b] == 0.0) continue;
            for (int a = 0; a < 2; ++a) {
                const int x = x0 + a;
                if (x < 0 || x >= d.x || wx[a] == 0.0) continue;
                fn((static_cast<std::size_t>(z) * d.y + static_cast<std::size_t>(y)) * d.x + static_cast<std::size_t>(x),
                   wz[c] * wy[b] * wx[a]);
            }
        }
    }
}

}  // namespace detail

/// Backward (pull) warp: out(x) = trilinear(vol, x + d(x)), zero outside the grid.
template <class T>
basic_volume<T> warp(const basic_volume<T>& vol, const Dvf& d) {
    detail::check_same_grid(vol.dims(), d.dims(), "warp");
    basic_volume<T> out(vol.shape());
    const Dims3 dims = vol.dims();
    const auto src = vol.data();
    parallel_for(static_cast<std::size_t>(dims.z), [&](std::size_t zb, std::size_t ze, int) {
        for (int z = static_cast<int>(zb); z < static_cast<int>(ze); ++z)
            for (int y = 0; y < dims.y; ++y)
                for (int x = 0; x < dims.x; ++x) {
                    const std::size_t i = vol.shape().index(x, y, z);
                    const Vec3 f{x + static_cast<double>(d.dx[i]), y + static_cast<double>(d.dy[i]),
                                 z + static_cast<double>(d.dz[i])};
                    double acc = 0.0;
                    detail::for_each_corner(dims, f, [&](std::size_t j, double wgt) {
                        acc += wgt * static_cast<double>(src[j]);
                    });
                    out[i] = static_cast<T>(acc);
                }
    });
    return out;
}

/// Transpose of warp: each voxel's value is splatted onto the corners warp
/// would have read, with the same weights.
template <class T>
basic_volume<T> warp_adjoint(const basic_volume<T>& vol, const Dvf& d) {
    detail::check_same_grid(vol.dims(), d.dims(), "warp_adjoint");
    const Dims3 dims = vol.dims();
    std::vector<double> acc(vol.size(), 0.0);
    for (int z = 0; z < dims.z; ++z)
        for (int y = 0; y < dims.y; ++y)
            for (int x = 0; x < dims.x; ++x) {
                const std::size_t i = vol.shape().index(x, y, z);
                const double value = static_cast<double>(vol[i]);
                if (value == 0.0) continue;
                const Vec3 f{x + static_cast<double>(d.dx[i]), y + static_cast<double>(d.dy[i]),
                             z + static_cast<double>(d.dz[i])};
                detail::for_each_corner(dims, f, [&](std::size_t j, double wgt) { acc[j] += wgt * value; });
            }
    return basic_volume<T>(vol.shape(), std::vector<T>(acc.begin(), acc.end()));
}

}  // namespace cbct4d
