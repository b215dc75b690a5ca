#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "cbct4d/common.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

inline constexpr double kTvEpsilon = 1e-8;

// Smoothed isotropic TV with forward differences; the difference across the
// last slice of each axis is zero (Neumann boundary).
//   TV(v) = sum_n sqrt(dx_n^2 + dy_n^2 + dz_n^2 + eps)

template <class T>
double tv_value(std::span<const T> v, const Dims3& d, double eps = kTvEpsilon) {
    double acc = 0.0;
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const std::size_t n = (static_cast<std::size_t>(z) * d.y + y) * d.x + x;
                const double c = static_cast<double>(v[n]);
                const double gx = x + 1 < d.x ? static_cast<double>(v[n + 1]) - c : 0.0;
                const double gy = y + 1 < d.y ? static_cast<double>(v[n + d.x]) - c : 0.0;
                const double gz = z + 1 < d.z ? static_cast<double>(v[n + static_cast<std::size_t>(d.x) * d.y]) - c : 0.0;
                acc += std::sqrt(gx * gx + gy * gy + gz * gz + eps);
            }
    return acc;
}

template <class T>
std::vector<double> tv_gradient(std::span<const T> v, const Dims3& d, double eps = kTvEpsilon) {
    std::vector<double> g(v.size(), 0.0);
    const std::size_t sx = 1, sy = static_cast<std::size_t>(d.x), sz = static_cast<std::size_t>(d.x) * d.y;
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const std::size_t n = (static_cast<std::size_t>(z) * d.y + y) * d.x + x;
                const double c = static_cast<double>(v[n]);
                const bool hx = x + 1 < d.x, hy = y + 1 < d.y, hz = z + 1 < d.z;
                const double gx = hx ? static_cast<double>(v[n + sx]) - c : 0.0;
                const double gy = hy ? static_cast<double>(v[n + sy]) - c : 0.0;
                const double gz = hz ? static_cast<double>(v[n + sz]) - c : 0.0;
                const double inv = 1.0 / std::sqrt(gx * gx + gy * gy + gz * gz + eps);
                g[n] -= (gx + gy + gz) * inv;
                if (hx) g[n + sx] += gx * inv;
                if (hy) g[n + sy] += gy * inv;
                if (hz) g[n + sz] += gz * inv;
            }
    return g;
}

template <class T>
double tv_value(const basic_volume<T>& v, double eps = kTvEpsilon) {
    return tv_value<T>(v.data(), v.dims(), eps);
}

template <class T>
std::vector<double> tv_gradient(const basic_volume<T>& v, double eps = kTvEpsilon) {
    return tv_gradient<T>(v.data(), v.dims(), eps);
}

/// Cyclic temporal TV: sum_i sum_x sqrt((V_{i+1 mod N} - V_i)^2 + eps).
/// A single phase is its own neighbour and contributes nothing.
template <class T>
double ttv_value(const std::vector<basic_volume<T>>& phases, double eps = kTvEpsilon) {
    const std::size_t n = phases.size();
    if (n < 2) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const auto a = phases[i].data();
        const auto b = phases[(i + 1) % n].data();
        for (std::size_t x = 0; x < a.size(); ++x) {
            const double dlt = static_cast<double>(b[x]) - static_cast<double>(a[x]);
            acc += std::sqrt(dlt * dlt + eps);
        }
    }
    return acc;
}

template <class T>
std::vector<std::vector<double>> ttv_gradient(const std::vector<basic_volume<T>>& phases, double eps = kTvEpsilon) {
    const std::size_t n = phases.size();
    std::vector<std::vector<double>> g(n);
    for (std::size_t i = 0; i < n; ++i) g[i].assign(phases[i].size(), 0.0);
    if (n < 2) return g;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t j = (i + 1) % n;
        const auto a = phases[i].data();
        const auto b = phases[j].data();
        for (std::size_t x = 0; x < a.size(); ++x) {
            const double dlt = static_cast<double>(b[x]) - static_cast<double>(a[x]);
            const double s = dlt / std::sqrt(dlt * dlt + eps);
            g[j][x] += s;
            g[i][x] -= s;
        }
    }
    return g;
}

}  // namespace cbct4d
