#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "cbct4d/common.hpp"

namespace cbct4d {

/// Placement of a voxel grid in space. origin is the centre of voxel (0,0,0);
/// voxels are stored x-fastest.
struct GridShape {
    Dims3 dims;
    Vec3 spacing{1.0, 1.0, 1.0};
    Vec3 origin;

    void validate() const {
        if (dims.x < 1 || dims.y < 1 || dims.z < 1) throw error("grid dims must all be >= 1");
        if (!(spacing.x > 0.0 && spacing.y > 0.0 && spacing.z > 0.0)) throw error("grid spacing must be > 0");
    }

    std::size_t count() const { return dims.count(); }

    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims.y) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(dims.x) +
               static_cast<std::size_t>(x);
    }

    /// Voxel-centre bounding box grown by half a voxel on every side.
    Box3 bbox() const {
        const Vec3 half = spacing * 0.5;
        return {origin - half, Vec3{origin.x + (dims.x - 0.5) * spacing.x, origin.y + (dims.y - 0.5) * spacing.y,
                                    origin.z + (dims.z - 0.5) * spacing.z}};
    }

    Vec3 to_index(const Vec3& p) const {
        return {(p.x - origin.x) / spacing.x, (p.y - origin.y) / spacing.y, (p.z - origin.z) / spacing.z};
    }

    Vec3 voxel_center(int x, int y, int z) const {
        return {origin.x + x * spacing.x, origin.y + y * spacing.y, origin.z + z * spacing.z};
    }

    /// Linear index of the voxel nearest to p (ties go to the lower index), or -1 outside.
    std::ptrdiff_t nearest_index(const Vec3& p) const {
        const Vec3 f = to_index(p);
        const double ix = std::ceil(f.x - 0.5);
        const double iy = std::ceil(f.y - 0.5);
        const double iz = std::ceil(f.z - 0.5);
        if (!(ix >= 0.0 && iy >= 0.0 && iz >= 0.0 && ix < dims.x && iy < dims.y && iz < dims.z)) return -1;
        return static_cast<std::ptrdiff_t>(index(static_cast<int>(ix), static_cast<int>(iy), static_cast<int>(iz)));
    }

    bool operator==(const GridShape&) const = default;
};

/// Grid centred on the isocentre.
inline GridShape centered_grid(Dims3 dims, Vec3 spacing) {
    GridShape g{dims, spacing, {}};
    g.origin = {-(dims.x - 1) * 0.5 * spacing.x, -(dims.y - 1) * 0.5 * spacing.y, -(dims.z - 1) * 0.5 * spacing.z};
    g.validate();
    return g;
}

template <class T>
class basic_volume {
public:
    using value_type = T;

    basic_volume() = default;
    explicit basic_volume(const GridShape& shape, T fill = T{0}) : shape_(shape) {
        shape_.validate();
        data_.assign(shape_.count(), fill);
    }
    basic_volume(const GridShape& shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
        shape_.validate();
        if (data_.size() != shape_.count()) throw error("volume data length does not match dims");
    }

    /// Converting copy, e.g. float -> double for gradient checks.
    template <class U>
    static basic_volume from(const basic_volume<U>& other) {
        std::vector<T> d(other.data().begin(), other.data().end());
        return basic_volume(other.shape(), std::move(d));
    }

    const GridShape& shape() const { return shape_; }
    const Dims3& dims() const { return shape_.dims; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }
    std::vector<T>& storage() { return data_; }

    T& operator()(int x, int y, int z) { return data_[shape_.index(x, y, z)]; }
    const T& operator()(int x, int y, int z) const { return data_[shape_.index(x, y, z)]; }
    T& operator[](std::size_t i) { return data_[i]; }
    const T& operator[](std::size_t i) const { return data_[i]; }

    bool operator==(const basic_volume&) const = default;

private:
    GridShape shape_;
    std::vector<T> data_;
};

using Volume3 = basic_volume<float>;
using Volume3d = basic_volume<double>;

/// One detector image, w-fastest.
template <class T>
class basic_view {
public:
    basic_view() = default;
    basic_view(int w, int h, T fill = T{0}) : w_(w), h_(h) {
        if (w < 1 || h < 1) throw error("view dims must be >= 1");
        data_.assign(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill);
    }
    basic_view(int w, int h, std::vector<T> data) : w_(w), h_(h), data_(std::move(data)) {
        if (w < 1 || h < 1) throw error("view dims must be >= 1");
        if (data_.size() != static_cast<std::size_t>(w) * static_cast<std::size_t>(h))
            throw error("view data length does not match dims");
    }

    int width() const { return w_; }
    int height() const { return h_; }
    std::size_t size() const { return data_.size(); }
    std::span<T> data() { return data_; }
    std::span<const T> data() const { return data_; }

    T& operator()(int w, int h) { return data_[static_cast<std::size_t>(h) * w_ + w]; }
    const T& operator()(int w, int h) const { return data_[static_cast<std::size_t>(h) * w_ + w]; }

    bool operator==(const basic_view&) const = default;

private:
    int w_ = 0, h_ = 0;
    std::vector<T> data_;
};

using View = basic_view<float>;

/// View-based representation of a volume: W x H rays of S samples each.
/// Samples are stored s-fastest within each (w,h) and kept in double so that
/// ray-dimension sums are exact.
class RayVolume {
public:
    RayVolume() = default;
    RayVolume(int w, int h, int s, double step_len = 1.0) : w_(w), h_(h), s_(s), step_len_(step_len) {
        if (w < 1 || h < 1 || s < 1) throw error("ray volume dims must be >= 1");
        data_.assign(static_cast<std::size_t>(w) * h * s, 0.0);
    }

    int width() const { return w_; }
    int height() const { return h_; }
    int steps() const { return s_; }
    double step_len() const { return step_len_; }
    void set_step_len(double v) { step_len_ = v; }

    std::span<double> data() { return data_; }
    std::span<const double> data() const { return data_; }

    std::span<double> ray(int w, int h) {
        return std::span<double>(data_).subspan((static_cast<std::size_t>(h) * w_ + w) * s_, static_cast<std::size_t>(s_));
    }
    std::span<const double> ray(int w, int h) const {
        return std::span<const double>(data_).subspan((static_cast<std::size_t>(h) * w_ + w) * s_,
                                                      static_cast<std::size_t>(s_));
    }
    double& operator()(int w, int h, int s) { return data_[(static_cast<std::size_t>(h) * w_ + w) * s_ + s]; }
    double operator()(int w, int h, int s) const { return data_[(static_cast<std::size_t>(h) * w_ + w) * s_ + s]; }

    bool operator==(const RayVolume&) const = default;

private:
    int w_ = 0, h_ = 0, s_ = 0;
    double step_len_ = 1.0;
    std::vector<double> data_;
};

/// Nearest-voxel sample at p (mm); 0 outside the half-voxel-expanded grid.
template <class T>
T sample_nearest(const basic_volume<T>& vol, const Vec3& p) {
    const auto idx = vol.shape().nearest_index(p);
    return idx < 0 ? T{0} : vol[static_cast<std::size_t>(idx)];
}

/// Trilinear sample at fractional voxel index f; neighbours outside the grid count as 0.
template <class T>
double sample_trilinear_index(const basic_volume<T>& vol, const Vec3& f) {
    const Dims3& d = vol.dims();
    const double fx = std::floor(f.x), fy = std::floor(f.y), fz = std::floor(f.z);
    if (fx < -1.0 || fy < -1.0 || fz < -1.0 || fx >= d.x || fy >= d.y || fz >= d.z) return 0.0;
    const int x0 = static_cast<int>(fx), y0 = static_cast<int>(fy), z0 = static_cast<int>(fz);
    const double tx = f.x - fx, ty = f.y - fy, tz = f.z - fz;
    const double wx[2] = {1.0 - tx, tx}, wy[2] = {1.0 - ty, ty}, wz[2] = {1.0 - tz, tz};
    double acc = 0.0;
    for (int c = 0; c < 2; ++c) {
        const int z = z0 + c;
        if (z < 0 || z >= d.z || wz[c] == 0.0) continue;
        for (int b = 0; b < 2; ++b) {
            const int y = y0 + b;
            if (y < 0 || y >= d.y || wy[b] == 0.0) continue;
            for (int a = 0; a < 2; ++a) {
                const int x = x0 + a;
                if (x < 0 || x >= d.x || wx[a] == 0.0) continue;
                acc += wz[c] * wy[b] * wx[a] * static_cast<double>(vol(x, y, z));
            }
        }
    }
    return acc;
}

template <class T>
double sample_trilinear(const basic_volume<T>& vol, const Vec3& p) {
    // mm -> index round-off would otherwise blend neighbours at exact voxel centres
    auto snap = [](double f) {
        const double r = std::round(f);
        return std::abs(f - r) < 1e-9 ? r : f;
    };
    const Vec3 f = vol.shape().to_index(p);
    return sample_trilinear_index(vol, Vec3{snap(f.x), snap(f.y), snap(f.z)});
}

template <class T>
void check_finite(std::span<const T> data, const char* what) {
    for (const T v : data)
        if (!std::isfinite(static_cast<double>(v))) throw error(std::string(what) + " contains non-finite values");
}

}  // namespace cbct4d
