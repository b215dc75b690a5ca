#pragma once

#include <numeric>
#include <span>
#include <vector>

#include "cbct4d/common.hpp"
#include "cbct4d/geometry.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

/// Rectangle of detector pixels [w0, w0+pw) x [h0, h0+ph).
struct PatchSpec {
    int w0 = 0, h0 = 0, pw = 1, ph = 1;
    bool operator==(const PatchSpec&) const = default;
};

struct RayPatch {
    PatchSpec where;
    RayVolume rays;
};

namespace detail {

/// Walks S equal steps across the in-volume part of `ray`, calling
/// visit(s, voxel_index_or_minus_1, step_length) at each step midpoint.
/// Midpoints are generated directly in voxel-index space and snapped to the
/// nearest voxel with ties going to the lower index. Every projector entry
/// point goes through here so that forward, RPT and backprojection visit
/// identical voxels.
template <class Visit>
void march(const GridShape& shape, const Ray& ray, int steps, Visit&& visit) {
    if (ray.empty()) return;
    const double delta = (ray.t_exit - ray.t_entry) / steps;
    const Vec3 f0 = shape.to_index(ray.at(ray.t_entry));
    const Vec3 fd{ray.direction.x * delta / shape.spacing.x, ray.direction.y * delta / shape.spacing.y,
                  ray.direction.z * delta / shape.spacing.z};
    const int nx = shape.dims.x, ny = shape.dims.y, nz = shape.dims.z;
    const std::ptrdiff_t sy = nx, sz = static_cast<std::ptrdiff_t>(nx) * ny;
    // ceil(g) for g > -1; anything at or below -1 is rejected anyway
    auto snap = [](double g) {
        return 1024 - static_cast<int>(1024.0 - g);
    };
    for (int s = 0; s < steps; ++s) {
        const double m = s + 0.5;
        const int ix = snap(f0.x + fd.x * m - 0.5);
        const int iy = snap(f0.y + fd.y * m - 0.5);
        const int iz = snap(f0.z + fd.z * m - 0.5);
        const bool inside = static_cast<unsigned>(ix) < static_cast<unsigned>(nx) &&
                            static_cast<unsigned>(iy) < static_cast<unsigned>(ny) &&
                            static_cast<unsigned>(iz) < static_cast<unsigned>(nz);
        visit(s, inside ? ix + iy * sy + iz * sz : std::ptrdiff_t{-1}, delta);
    }
}

/// One ray sample, rounded to the volume's scalar type before accumulation.
template <class T>
inline double ray_term(T value, double delta) {
    return static_cast<double>(static_cast<T>(delta * static_cast<double>(value)));
}

inline void check_steps(int steps) {
    if (steps < 1) throw error("projector: step count S must be >= 1");
}

}  // namespace detail

/// Ray Path Transformation: resamples `vol` along every detector ray of view k.
/// R(w,h,s) is the step-length-weighted nearest-voxel value at the s-th
/// midpoint of the ray's in-volume interval; rays that miss stay zero.
template <class T>
RayVolume rpt_transform(const basic_volume<T>& vol, const ConeBeamGeometry& geom, int k, int steps) {
    detail::check_steps(steps);
    detail::check_view(geom, k);
    const auto frame = detail::frame_at_angle(geom, geom.angles[static_cast<std::size_t>(k)]);
    const Box3 box = vol.shape().bbox();
    RayVolume out(geom.det_w, geom.det_h, steps);
    double delta_sum = 0.0;
    int hits = 0;
    for (int h = 0; h < geom.det_h; ++h) {
        for (int w = 0; w < geom.det_w; ++w) {
            const Ray ray = ray_on_frame(geom, frame, w, h, box);
            if (ray.empty()) continue;
            delta_sum += ray.length() / steps;
            ++hits;
            auto dst = out.ray(w, h);
            detail::march(vol.shape(), ray, steps, [&](int s, std::ptrdiff_t idx, double delta) {
                dst[static_cast<std::size_t>(s)] = idx < 0 ? 0.0 : detail::ray_term(vol[static_cast<std::size_t>(idx)], delta);
            });
        }
    }
    const Vec3 ext = box.hi - box.lo;
    out.set_step_len(hits > 0 ? delta_sum / hits : norm(ext) / steps);
    return out;
}

/// Sums every ray of R along s.
template <class T = float>
basic_view<T> project_from_rpt(const RayVolume& rays) {
    basic_view<T> view(rays.width(), rays.height());
    for (int h = 0; h < rays.height(); ++h) {
        for (int w = 0; w < rays.width(); ++w) {
            double acc = 0.0;
            for (const double v : rays.ray(w, h)) acc += v;
            view(w, h) = static_cast<T>(acc);
        }
    }
    return view;
}

/// Cone-beam forward projection of view k. Same values as
/// project_from_rpt(rpt_transform(...)) without materialising R.
template <class T>
basic_view<T> forward_project(const basic_volume<T>& vol, const ConeBeamGeometry& geom, int k, int steps) {
    detail::check_steps(steps);
    detail::check_view(geom, k);
    const auto frame = detail::frame_at_angle(geom, geom.angles[static_cast<std::size_t>(k)]);
    const Box3 box = vol.shape().bbox();
    basic_view<T> view(geom.det_w, geom.det_h);
    parallel_for(static_cast<std::size_t>(geom.det_h), [&](std::size_t hb, std::size_t he, int) {
        for (int h = static_cast<int>(hb); h < static_cast<int>(he); ++h) {
            for (int w = 0; w < geom.det_w; ++w) {
                const Ray ray = ray_on_frame(geom, frame, w, h, box);
                double acc = 0.0;
                detail::march(vol.shape(), ray, steps, [&](int, std::ptrdiff_t idx, double delta) {
                    acc += idx < 0 ? 0.0 : detail::ray_term(vol[static_cast<std::size_t>(idx)], delta);
                });
                view(w, h) = static_cast<T>(acc);
            }
        }
    });
    return view;
}

/// Adds the backprojection of `view` (view k) into a double accumulator laid out like `shape`.
template <class V>
void backproject_accumulate(const basic_view<V>& view, const ConeBeamGeometry& geom, int k, int steps,
                            const GridShape& shape, std::span<double> acc) {
    detail::check_steps(steps);
    detail::check_view(geom, k);
    if (view.width() != geom.det_w || view.height() != geom.det_h) throw error("backproject: view dims mismatch");
    if (acc.size() != shape.count()) throw error("backproject: accumulator size mismatch");
    const auto frame = detail::frame_at_angle(geom, geom.angles[static_cast<std::size_t>(k)]);
    const Box3 box = shape.bbox();

    auto scatter_rows = [&](int hb, int he, std::span<double> dst) {
        for (int h = hb; h < he; ++h) {
            for (int w = 0; w < geom.det_w; ++w) {
                const double value = static_cast<double>(view(w, h));
                if (value == 0.0) continue;
                const Ray ray = ray_on_frame(geom, frame, w, h, box);
                detail::march(shape, ray, steps, [&](int, std::ptrdiff_t idx, double delta) {
                    if (idx >= 0) dst[static_cast<std::size_t>(idx)] += delta * value;
                });
            }
        }
    };

    const int workers = std::min(thread_count(), geom.det_h);
    if (workers <= 1) {
        scatter_rows(0, geom.det_h, acc);
        return;
    }
    // per-worker buffers, reduced in worker order
    std::vector<std::vector<double>> partial(static_cast<std::size_t>(workers));
    parallel_for(
        static_cast<std::size_t>(geom.det_h),
        [&](std::size_t hb, std::size_t he, int t) {
            auto& buf = partial[static_cast<std::size_t>(t)];
            buf.assign(shape.count(), 0.0);
            scatter_rows(static_cast<int>(hb), static_cast<int>(he), buf);
        },
        workers);
    for (const auto& buf : partial) {
        if (buf.empty()) continue;
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += buf[i];
    }
}

/// Adjoint of forward_project: each ray step adds step_length * view(w,h)
/// into the voxel it sampled.
template <class T = float, class V>
basic_volume<T> backproject(const basic_view<V>& view, const ConeBeamGeometry& geom, int k, int steps,
                            const GridShape& shape) {
    std::vector<double> acc(shape.count(), 0.0);
    backproject_accumulate(view, geom, k, steps, shape, acc);
    return basic_volume<T>(shape, std::vector<T>(acc.begin(), acc.end()));
}

namespace detail {

inline void check_tiling(const std::vector<PatchSpec>& patches, int w, int h) {
    std::vector<int> cover(static_cast<std::size_t>(w) * h, 0);
    for (const auto& p : patches) {
        if (p.pw < 1 || p.ph < 1 || p.w0 < 0 || p.h0 < 0 || p.w0 + p.pw > w || p.h0 + p.ph > h)
            throw error("patches: rectangle outside the detector");
        for (int y = p.h0; y < p.h0 + p.ph; ++y)
            for (int x = p.w0; x < p.w0 + p.pw; ++x)
                if (++cover[static_cast<std::size_t>(y) * w + x] > 1) throw error("patches: overlapping tiles");
    }
    for (const int c : cover)
        if (c != 1) throw error("patches: tiles do not cover the detector");
}

}  // namespace detail

/// Regular tiling of a W x H detector into tiles of at most tile_w x tile_h.
inline std::vector<PatchSpec> grid_tiling(int w, int h, int tile_w, int tile_h) {
    if (tile_w < 1 || tile_h < 1) throw error("patches: tile size must be >= 1");
    std::vector<PatchSpec> out;
    for (int y = 0; y < h; y += tile_h)
        for (int x = 0; x < w; x += tile_w) out.push_back({x, y, std::min(tile_w, w - x), std::min(tile_h, h - y)});
    return out;
}

inline std::vector<RayPatch> split_patches(const RayVolume& rays, const std::vector<PatchSpec>& patches) {
    detail::check_tiling(patches, rays.width(), rays.height());
    std::vector<RayPatch> out;
    out.reserve(patches.size());
    for (const auto& p : patches) {
        RayPatch rp{p, RayVolume(p.pw, p.ph, rays.steps(), rays.step_len())};
        for (int y = 0; y < p.ph; ++y)
            for (int x = 0; x < p.pw; ++x) {
                auto src = rays.ray(p.w0 + x, p.h0 + y);
                std::copy(src.begin(), src.end(), rp.rays.ray(x, y).begin());
            }
        out.push_back(std::move(rp));
    }
    return out;
}

inline RayVolume merge_patches(const std::vector<RayPatch>& parts, int w, int h) {
    if (parts.empty()) throw error("patches: nothing to merge");
    std::vector<PatchSpec> specs;
    for (const auto& p : parts) {
        if (p.rays.width() != p.where.pw || p.rays.height() != p.where.ph || p.rays.steps() != parts.front().rays.steps())
            throw error("patches: tile payload does not match its rectangle");
        specs.push_back(p.where);
    }
    detail::check_tiling(specs, w, h);
    RayVolume out(w, h, parts.front().rays.steps(), parts.front().rays.step_len());
    for (const auto& p : parts)
        for (int y = 0; y < p.where.ph; ++y)
            for (int x = 0; x < p.where.pw; ++x) {
                auto src = p.rays.ray(x, y);
                std::copy(src.begin(), src.end(), out.ray(p.where.w0 + x, p.where.h0 + y).begin());
            }
    return out;
}

/// Reassembles per-tile views into one detector image.
template <class T>
basic_view<T> assemble_views(const std::vector<std::pair<PatchSpec, basic_view<T>>>& parts, int w, int h) {
    std::vector<PatchSpec> specs;
    for (const auto& [spec, v] : parts) {
        if (v.width() != spec.pw || v.height() != spec.ph) throw error("patches: sub-view does not match its rectangle");
        specs.push_back(spec);
    }
    detail::check_tiling(specs, w, h);
    basic_view<T> out(w, h);
    for (const auto& [spec, v] : parts)
        for (int y = 0; y < spec.ph; ++y)
            for (int x = 0; x < spec.pw; ++x) out(spec.w0 + x, spec.h0 + y) = v(x, y);
    return out;
}

/// Sums each run of `factor` consecutive samples along s: l_lo(x) = sum_i l_hi(factor*x + i).
inline RayVolume downsample_rays(const RayVolume& rays, int factor) {
    if (factor < 1 || rays.steps() % factor != 0) throw error("downsample_rays: S must be divisible by the factor");
    const int s_out = rays.steps() / factor;
    RayVolume out(rays.width(), rays.height(), s_out, rays.step_len() * factor);
    for (int h = 0; h < rays.height(); ++h)
        for (int w = 0; w < rays.width(); ++w) {
            auto src = rays.ray(w, h);
            auto dst = out.ray(w, h);
            for (int x = 0; x < s_out; ++x) {
                double acc = 0.0;
                for (int i = 0; i < factor; ++i) acc += src[static_cast<std::size_t>(factor * x + i)];
                dst[static_cast<std::size_t>(x)] = acc;
            }
        }
    return out;
}

/// Default marching resolution: 2 * max(dims) rounded up to a power of two.
inline int default_steps(const Dims3& dims) {
    const int target = 2 * std::max({dims.x, dims.y, dims.z});
    int s = 1;
    while (s < target) s *= 2;
    return s;
}

}  // namespace cbct4d
