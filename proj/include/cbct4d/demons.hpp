#pragma once

#include <cmath>
#include <vector>

#include "cbct4d/dvf.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

struct DemonsConfig {
    int levels = 3;
    int iters = 50;
    double sigma_fluid = 1.0;
    double sigma_diffusion = 1.0;
};

namespace detail {

inline std::vector<double> gaussian_kernel(double sigma) {
    const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
    std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
    for (int i = -r; i <= r; ++i) k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
    return k;
}

/// Separable Gaussian blur in place; weights renormalised at the borders.
inline void gaussian_smooth(std::vector<double>& v, const Dims3& d, double sigma) {
    if (!(sigma > 0.0)) return;
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    std::vector<double> tmp(v.size());
    const std::size_t stride[3] = {1, static_cast<std::size_t>(d.x), static_cast<std::size_t>(d.x) * d.y};
    for (int axis = 0; axis < 3; ++axis) {
        const int len = d[axis];
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    const int c[3] = {x, y, z};
                    const std::size_t n = (static_cast<std::size_t>(z) * d.y + y) * d.x + x;
                    double acc = 0.0, wsum = 0.0;
                    for (int o = -r; o <= r; ++o) {
                        const int p = c[axis] + o;
                        if (p < 0 || p >= len) continue;
                        const double w = k[static_cast<std::size_t>(o + r)];
                        acc += w * v[static_cast<std::size_t>(static_cast<std::ptrdiff_t>(n) + o * static_cast<std::ptrdiff_t>(stride[axis]))];
                        wsum += w;
                    }
                    tmp[n] = acc / wsum;
                }
        v.swap(tmp);
    }
}

/// 2x2x2 block average; odd trailing samples fold into the last block.
inline Volume3d downsample2(const Volume3d& v) {
    const Dims3 d = v.dims();
    const Dims3 o{std::max(1, d.x / 2), std::max(1, d.y / 2), std::max(1, d.z / 2)};
    GridShape s{o, v.shape().spacing * 2.0, v.shape().origin};
    Volume3d out(s);
    std::vector<int> count(out.size(), 0);
    std::vector<double> acc(out.size(), 0.0);
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const std::size_t j = s.index(std::min(x / 2, o.x - 1), std::min(y / 2, o.y - 1), std::min(z / 2, o.z - 1));
                acc[j] += v(x, y, z);
                ++count[j];
            }
    for (std::size_t j = 0; j < acc.size(); ++j) out[j] = acc[j] / count[j];
    return out;
}

/// Resamples a coarse field onto a grid twice as fine (cell-centred), scaling by 2.
inline std::vector<double> upsample_component(const std::vector<double>& c, const Dims3& cd, const Dims3& fd) {
    std::vector<double> out(fd.count());
    auto clampi = [](int v, int n) { return std::clamp(v, 0, n - 1); };
    for (int z = 0; z < fd.z; ++z)
        for (int y = 0; y < fd.y; ++y)
            for (int x = 0; x < fd.x; ++x) {
                const double f[3] = {(x + 0.5) * cd.x / fd.x - 0.5, (y + 0.5) * cd.y / fd.y - 0.5,
                                     (z + 0.5) * cd.z / fd.z - 0.5};
                int i0[3];
                double t[3];
                for (int a = 0; a < 3; ++a) {
                    const double fl = std::floor(f[a]);
                    i0[a] = static_cast<int>(fl);
                    t[a] = f[a] - fl;
                }
                double acc = 0.0;
                for (int dz = 0; dz < 2; ++dz)
                    for (int dy = 0; dy < 2; ++dy)
                        for (int dx = 0; dx < 2; ++dx) {
                            const double w = (dx ? t[0] : 1 - t[0]) * (dy ? t[1] : 1 - t[1]) * (dz ? t[2] : 1 - t[2]);
                            const int xx = clampi(i0[0] + dx, cd.x), yy = clampi(i0[1] + dy, cd.y), zz = clampi(i0[2] + dz, cd.z);
                            acc += w * c[(static_cast<std::size_t>(zz) * cd.y + yy) * cd.x + xx];
                        }
                out[(static_cast<std::size_t>(z) * fd.y + y) * fd.x + x] = 2.0 * acc;
            }
    return out;
}

inline Dvf field_from(const GridShape& s, const std::vector<double> (&comp)[3]) {
    Dvf d(s);
    for (std::size_t i = 0; i < d.size(); ++i) d.set(i, {comp[0][i], comp[1][i], comp[2][i]});
    return d;
}

}  // namespace detail

/// Multi-resolution Thirion demons. Returns D with warp(moving, D) ~ fixed.
inline Dvf demons_register(const Volume3& moving, const Volume3& fixed, const DemonsConfig& cfg) {
    if (!(moving.dims() == fixed.dims())) throw error("demons: dimension mismatch");
    if (cfg.levels < 1 || cfg.iters < 0) throw error("demons: levels must be >= 1 and iters >= 0");
    const Dims3 d0 = fixed.dims();
    const int min_dim = std::min({d0.x, d0.y, d0.z});
    if (cfg.levels > static_cast<int>(std::floor(std::log2(min_dim))))
        throw error("demons: levels exceed log2 of the smallest dimension");

    std::vector<Volume3d> pm{Volume3d::from(moving)}, pf{Volume3d::from(fixed)};
    for (int l = 1; l < cfg.levels; ++l) {
        pm.push_back(detail::downsample2(pm.back()));
        pf.push_back(detail::downsample2(pf.back()));
    }

    std::vector<double> comp[3];
    Dims3 prev{};
    for (int l = cfg.levels - 1; l >= 0; --l) {
        const Volume3d& m = pm[static_cast<std::size_t>(l)];
        const Volume3d& f = pf[static_cast<std::size_t>(l)];
        const Dims3 d = f.dims();
        for (auto& c : comp) c = (l == cfg.levels - 1) ? std::vector<double>(d.count(), 0.0) : detail::upsample_component(c, prev, d);
        prev = d;

        // fixed-image gradient, central differences (one-sided at borders)
        std::vector<double> grad[3];
        for (int a = 0; a < 3; ++a) grad[a].assign(d.count(), 0.0);
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    const int c[3] = {x, y, z};
                    const std::size_t n = f.shape().index(x, y, z);
                    for (int a = 0; a < 3; ++a) {
                        int lo[3] = {x, y, z}, hi[3] = {x, y, z};
                        lo[a] = std::max(0, c[a] - 1);
                        hi[a] = std::min(d[a] - 1, c[a] + 1);
                        if (hi[a] == lo[a]) continue;
                        grad[a][n] = (f(hi[0], hi[1], hi[2]) - f(lo[0], lo[1], lo[2])) / (hi[a] - lo[a]);
                    }
                }

        std::vector<double> upd[3];
        for (int it = 0; it < cfg.iters; ++it) {
            const Dvf field = detail::field_from(f.shape(), comp);
            const Volume3d warped = warp(m, field);
            for (int a = 0; a < 3; ++a) upd[a].assign(d.count(), 0.0);
            for (std::size_t n = 0; n < d.count(); ++n) {
                const double diff = warped[n] - f[n];
                const double g2 = grad[0][n] * grad[0][n] + grad[1][n] * grad[1][n] + grad[2][n] * grad[2][n];
                const double den = g2 + diff * diff;
                if (den < 1e-12) continue;
                for (int a = 0; a < 3; ++a) upd[a][n] = -diff * grad[a][n] / den;
            }
            for (int a = 0; a < 3; ++a) {
                detail::gaussian_smooth(upd[a], d, cfg.sigma_fluid);
                for (std::size_t n = 0; n < d.count(); ++n) comp[a][n] += upd[a][n];
                detail::gaussian_smooth(comp[a], d, cfg.sigma_diffusion);
            }
        }
    }
    return detail::field_from(fixed.shape(), comp);
}

}  // namespace cbct4d
