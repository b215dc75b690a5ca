#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "cbct4d/common.hpp"

namespace cbct4d {

/// Circular cone-beam acquisition with a flat detector.
///
/// The gantry rotates about z. At angle 0 the source sits on +x and the
/// detector's u-axis points along +y; the v-axis is parallel to z. Lengths are
/// in mm, angles in radians.
struct ConeBeamGeometry {
    double sad = 1000.0;
    double sdd = 1500.0;
    int det_w = 1;
    int det_h = 1;
    double det_spacing_u = 1.0;
    double det_spacing_v = 1.0;
    double det_offset_u = 0.0;
    double det_offset_v = 0.0;
    std::vector<double> angles;

    int n_views() const { return static_cast<int>(angles.size()); }

    void validate() const {
        if (!(sad > 0.0)) throw error("geometry: sad must be > 0");
        if (!(sdd > sad)) throw error("geometry: sdd must exceed sad");
        if (det_w < 1 || det_h < 1) throw error("geometry: detector must have at least one pixel");
        if (!(det_spacing_u > 0.0 && det_spacing_v > 0.0)) throw error("geometry: detector spacing must be > 0");
        if (angles.empty()) throw error("geometry: angle list is empty");
        // strictly monotone; a reversed list describes the same rays
        if (angles.size() > 1) {
            const bool inc = angles[1] > angles[0];
            for (std::size_t k = 1; k < angles.size(); ++k) {
                if (inc ? !(angles[k] > angles[k - 1]) : !(angles[k] < angles[k - 1]))
                    throw error("geometry: angles must be strictly monotone");
            }
        }
        if (std::abs(angles.back() - angles.front()) >= 2.0 * std::numbers::pi + 1e-12)
            throw error("geometry: angles span more than one rotation");
    }

    /// K equally spaced angles over `span` radians starting at `start`.
    static std::vector<double> uniform_angles(int k, double span = 2.0 * std::numbers::pi, double start = 0.0) {
        if (k < 1) throw error("geometry: need at least one view");
        std::vector<double> a(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) a[static_cast<std::size_t>(i)] = start + span * i / k;
        return a;
    }
};

struct Ray {
    Vec3 origin;
    Vec3 direction;
    double t_entry = 0.0;
    double t_exit = 0.0;

    bool empty() const { return !(t_exit > t_entry); }
    double length() const { return empty() ? 0.0 : t_exit - t_entry; }
    Vec3 at(double t) const { return origin + direction * t; }
};

namespace detail {

inline void check_view(const ConeBeamGeometry& g, int k) {
    if (k < 0 || k >= g.n_views()) throw error("geometry: view index out of range");
}

inline void check_pixel(const ConeBeamGeometry& g, int w, int h) {
    if (w < 0 || w >= g.det_w || h < 0 || h >= g.det_h) throw error("geometry: detector pixel out of range");
}

struct Frame {
    Vec3 source, det_center, eu, ev;
};

inline Frame frame_at_angle(const ConeBeamGeometry& g, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    const Vec3 axis{c, s, 0.0};
    return {axis * g.sad, axis * (g.sad - g.sdd), Vec3{-s, c, 0.0}, Vec3{0.0, 0.0, 1.0}};
}

inline Vec3 pixel_on_frame(const ConeBeamGeometry& g, const Frame& f, int w, int h) {
    const double u = (w + 0.5 - g.det_w * 0.5) * g.det_spacing_u + g.det_offset_u;
    const double v = (h + 0.5 - g.det_h * 0.5) * g.det_spacing_v + g.det_offset_v;
    return f.det_center + f.eu * u + f.ev * v;
}

}  // namespace detail

inline Vec3 source_position(const ConeBeamGeometry& g, int k) {
    detail::check_view(g, k);
    return detail::frame_at_angle(g, g.angles[static_cast<std::size_t>(k)]).source;
}

/// Centre of detector pixel (w,h) for view k.
inline Vec3 detector_pixel_position(const ConeBeamGeometry& g, int k, int w, int h) {
    detail::check_view(g, k);
    detail::check_pixel(g, w, h);
    return detail::pixel_on_frame(g, detail::frame_at_angle(g, g.angles[static_cast<std::size_t>(k)]), w, h);
}

/// Slab intersection of a ray with an axis-aligned box; t_exit <= t_entry when it misses.
inline void clip_to_box(Ray& r, const Box3& box) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = r.origin[a], d = r.direction[a];
        const double lo = box.lo[a], hi = box.hi[a];
        if (d == 0.0) {
            if (o < lo || o > hi) {
                r.t_entry = r.t_exit = 0.0;
                return;
            }
            continue;
        }
        double ta = (lo - o) / d, tb = (hi - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) {
        r.t_entry = r.t_exit = 0.0;
        return;
    }
    r.t_entry = t0;
    r.t_exit = t1;
}

inline Ray ray_on_frame(const ConeBeamGeometry& g, const detail::Frame& f, int w, int h, const Box3& box) {
    const Vec3 p = detail::pixel_on_frame(g, f, w, h);
    const Vec3 d = p - f.source;
    Ray r{f.source, d * (1.0 / norm(d)), 0.0, 0.0};
    clip_to_box(r, box);
    return r;
}

/// Ray from the source through the centre of pixel (w,h), clipped to `box`.
inline Ray ray_for_pixel(const ConeBeamGeometry& g, int k, int w, int h, const Box3& box) {
    detail::check_view(g, k);
    detail::check_pixel(g, w, h);
    return ray_on_frame(g, detail::frame_at_angle(g, g.angles[static_cast<std::size_t>(k)]), w, h, box);
}

}  // namespace cbct4d
