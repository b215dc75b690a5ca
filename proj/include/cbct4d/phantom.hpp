#pragma once

#include <cmath>
#include <numbers>

#include "cbct4d/common.hpp"
#include "cbct4d/dvf.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

struct Ellipsoid {
    Vec3 center;
    Vec3 radii;
};

/// Analytic breathing thorax.
///
/// Motion is a superior-inferior shift inside two vertical columns centred
/// on the lungs: at phase i a point at lateral position (x,y) moves by
/// offset(i) * w(x,y) along z, with w = 1 in the column core and a cosine
/// falloff to 0 at the column edge. The tumour sits in a core, so it moves
/// rigidly by offset(i) = amplitude * sin(2*pi*i/N); the lung bases (the
/// diaphragm) move with the same field. Everything outside the columns is
/// static, and the inter-phase fields are known in closed form.
struct Phantom4D {
    int n_phases = 4;

    Ellipsoid body{{0.0, 0.0, 0.0}, {88.0, 64.0, 84.0}};
    Ellipsoid lung_left{{38.0, 2.0, 6.0}, {28.0, 40.0, 56.0}};
    Ellipsoid lung_right{{-38.0, 2.0, 6.0}, {28.0, 40.0, 56.0}};
    Vec3 tumor_center{-38.0, 4.0, -14.0};
    double tumor_radius = 9.0;
    /// Peak superior-inferior tumour excursion, mm.
    double tumor_amplitude = 6.0;

    double motion_core_radius = 16.0;
    double motion_outer_radius = 26.0;

    double rib_period = 24.0;
    double rib_inner_scale = 0.86;
    double rib_outer_scale = 0.95;
    /// Fraction of the body's z half-extent covered by ribs.
    double rib_band = 0.6;

    double body_value = 0.2;
    double lung_value = 0.02;
    double rib_value = 0.5;
    double tumor_value = 0.3;

    /// Half-width of the smooth edge ramp, mm.
    double edge_half_width = 1.5;

    void validate() const {
        if (n_phases < 2) throw error("phantom: need at least two phases");
        for (const auto* e : {&body, &lung_left, &lung_right})
            if (!(e->radii.x > 0 && e->radii.y > 0 && e->radii.z > 0)) throw error("phantom: radii must be > 0");
        if (!(tumor_radius > 0.0)) throw error("phantom: tumour radius must be > 0");
        if (!(motion_outer_radius > motion_core_radius && motion_core_radius > 0.0))
            throw error("phantom: motion column radii must satisfy 0 < core < outer");
        if (!(edge_half_width > 0.0)) throw error("phantom: edge width must be > 0");
        // tumour fully inside the right lung and inside a rigid core at every phase
        const double lateral = std::hypot(tumor_center.x - lung_right.center.x, tumor_center.y - lung_right.center.y);
        if (lateral + tumor_radius > motion_core_radius) throw error("phantom: tumour leaves the rigid motion core");
        for (int i = 0; i < n_phases; ++i) {
            const Vec3 c{tumor_center.x, tumor_center.y, tumor_center.z + tumor_offset(i)};
            for (const double sx : {-1.0, 1.0})
                for (const double sy : {-1.0, 1.0})
                    for (const double sz : {-1.0, 1.0}) {
                        const Vec3 p{c.x + sx * tumor_radius, c.y + sy * tumor_radius, c.z + sz * tumor_radius};
                        if (ellipsoid_level(lung_right, p) >= 1.0) throw error("phantom: tumour leaves the lung");
                    }
        }
    }

    /// Superior-inferior tumour offset at phase i, mm.
    double tumor_offset(int i) const {
        return tumor_amplitude * std::sin(2.0 * std::numbers::pi * i / n_phases);
    }

    /// Motion weight in [0,1] at lateral position (x,y).
    double motion_weight(double x, double y) const {
        double best = 0.0;
        for (const auto* lung : {&lung_left, &lung_right}) {
            const double r = std::hypot(x - lung->center.x, y - lung->center.y);
            double w = 0.0;
            if (r <= motion_core_radius) {
                w = 1.0;
            } else if (r < motion_outer_radius) {
                const double t = (r - motion_core_radius) / (motion_outer_radius - motion_core_radius);
                w = 0.5 * (1.0 + std::cos(std::numbers::pi * t));
            }
            best = std::max(best, w);
        }
        return best;
    }

    /// Reference (zero-offset) anatomy at p.
    double reference_value(const Vec3& p) const {
        double v = body_value * inside(body, p);
        v += (lung_value - v) * std::max(inside(lung_left, p), inside(lung_right, p));
        v += (rib_value - v) * rib_mask(p);
        const double dt = norm(p - tumor_center) - tumor_radius;
        v += (tumor_value - v) * soft_inside(dt);
        return v;
    }

    /// Phase-i anatomy at p.
    double value(int i, const Vec3& p) const {
        return reference_value({p.x, p.y, p.z - tumor_offset(i) * motion_weight(p.x, p.y)});
    }

    static double ellipsoid_level(const Ellipsoid& e, const Vec3& p) {
        const double ux = (p.x - e.center.x) / e.radii.x;
        const double uy = (p.y - e.center.y) / e.radii.y;
        const double uz = (p.z - e.center.z) / e.radii.z;
        return ux * ux + uy * uy + uz * uz;
    }

private:
    double soft_inside(double signed_distance) const {
        const double t = std::clamp((signed_distance + edge_half_width) / (2.0 * edge_half_width), 0.0, 1.0);
        return 1.0 - t * t * (3.0 - 2.0 * t);
    }

    /// First-order signed distance to the ellipsoid surface: F / |grad F|.
    double inside(const Ellipsoid& e, const Vec3& p) const {
        const Vec3 q = p - e.center;
        const double f = ellipsoid_level(e, p) - 1.0;
        const Vec3 g{2.0 * q.x / (e.radii.x * e.radii.x), 2.0 * q.y / (e.radii.y * e.radii.y),
                     2.0 * q.z / (e.radii.z * e.radii.z)};
        const double gn = norm(g);
        if (gn < 1e-12) return 1.0;
        return soft_inside(f / gn);
    }

    double rib_mask(const Vec3& p) const {
        if (std::abs(p.z - body.center.z) > rib_band * body.radii.z) return 0.0;
        const Ellipsoid outer{body.center, body.radii * rib_outer_scale};
        const Ellipsoid inner{body.center, body.radii * rib_inner_scale};
        const double shell = inside(outer, p) * (1.0 - inside(inner, p));
        // bands along z, roughly a third of the period wide
        const double c = std::cos(2.0 * std::numbers::pi * (p.z - body.center.z) / rib_period);
        const double band = std::clamp((c - 0.5) / 0.3 + 0.5, 0.0, 1.0);
        return shell * band * band * (3.0 - 2.0 * band);
    }
};

/// A phantom with no respiratory motion.
inline Phantom4D static_phantom(int n_phases = 4) {
    Phantom4D ph;
    ph.n_phases = n_phases;
    ph.tumor_amplitude = 0.0;
    return ph;
}

/// Renders phase i on a grid centred on the isocentre.
inline Volume3 render_phantom(const Phantom4D& ph, int phase, const GridShape& grid) {
    ph.validate();
    if (phase < 0 || phase >= ph.n_phases) throw error("phantom: phase index out of range");
    Volume3 vol(grid);
    const Dims3 d = grid.dims;
    parallel_for(static_cast<std::size_t>(d.z), [&](std::size_t zb, std::size_t ze, int) {
        for (int z = static_cast<int>(zb); z < static_cast<int>(ze); ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x)
                    vol(x, y, z) = static_cast<float>(std::clamp(ph.value(phase, grid.voxel_center(x, y, z)), 0.0, 1.0));
    });
    return vol;
}

inline Volume3 render_phantom(const Phantom4D& ph, int phase, Dims3 dims, Vec3 spacing) {
    return render_phantom(ph, phase, centered_grid(dims, spacing));
}

/// Exact inter-phase field D_{i->j} (voxel units): warp(render(i), D) reproduces render(j)
/// up to interpolation error. At the phase-j tumour centre it equals offset(i) - offset(j).
inline Dvf ground_truth_dvf(const Phantom4D& ph, int i, int j, const GridShape& grid) {
    ph.validate();
    if (i < 0 || j < 0 || i >= ph.n_phases || j >= ph.n_phases) throw error("phantom: phase index out of range");
    Dvf d(grid);
    if (i == j) return d;
    const double shift_mm = ph.tumor_offset(i) - ph.tumor_offset(j);
    for (int z = 0; z < grid.dims.z; ++z)
        for (int y = 0; y < grid.dims.y; ++y)
            for (int x = 0; x < grid.dims.x; ++x) {
                const Vec3 p = grid.voxel_center(x, y, z);
                d.dz[grid.index(x, y, z)] = static_cast<float>(shift_mm * ph.motion_weight(p.x, p.y) / grid.spacing.z);
            }
    return d;
}

inline Dvf ground_truth_dvf(const Phantom4D& ph, int i, int j, Dims3 dims, Vec3 spacing) {
    return ground_truth_dvf(ph, i, j, centered_grid(dims, spacing));
}

}  // namespace cbct4d
