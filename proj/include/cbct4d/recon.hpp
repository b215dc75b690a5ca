#pragma once

#include <span>
#include <string>
#include <vector>

#include "cbct4d/acquisition.hpp"
#include "cbct4d/projector.hpp"
#include "cbct4d/tv.hpp"

namespace cbct4d {

struct ReconConfig {
    int n_iters = 30;
    int n_subsets = 10;
    double relaxation = 0.2;
    double tv_weight = 2e-4;
    double ttv_weight = 5e-4;
    bool nonneg = true;
    int steps = 128;

    void validate() const {
        if (n_iters < 1) throw error("recon: n_iters must be >= 1");
        if (n_subsets < 1) throw error("recon: n_subsets must be >= 1");
        if (!(relaxation > 0.0 && relaxation < 2.0)) throw error("recon: relaxation must lie in (0, 2)");
        if (!(tv_weight >= 0.0) || !(ttv_weight >= 0.0)) throw error("recon: regulariser weights must be >= 0");
        if (steps < 1) throw error("recon: step count S must be >= 1");
    }
};

/// Per-iteration monitor; filled only when passed in.
struct ReconLog {
    /// sum over views of ||A V - P||^2, after each full iteration
    std::vector<double> residual_sq;
};

/// Round-robin ordered subsets: subset s holds ids[m] for m % n_subsets == s.
inline std::vector<std::vector<int>> ordered_subsets(std::span<const int> view_ids, int n_subsets) {
    std::vector<std::vector<int>> out(static_cast<std::size_t>(n_subsets));
    for (std::size_t m = 0; m < view_ids.size(); ++m) out[m % static_cast<std::size_t>(n_subsets)].push_back(view_ids[m]);
    return out;
}

/// Half the squared data misfit, 0.5 * sum_k ||A_k V - P_k||^2.
template <class T>
double data_term(const basic_volume<T>& vol, const ConeBeamGeometry& geom, std::span<const View> views,
                 std::span<const int> view_ids, int steps) {
    double acc = 0.0;
    for (const int k : view_ids) {
        const auto fp = forward_project(vol, geom, k, steps);
        const auto& p = views[static_cast<std::size_t>(k)];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double r = static_cast<double>(fp.data()[i]) - static_cast<double>(p.data()[i]);
            acc += r * r;
        }
    }
    return 0.5 * acc;
}

namespace detail {

struct SartSubset {
    std::vector<int> views;
    std::vector<float> inv_col;  // 1 / max(A^T 1, 1e-6) over this subset
};

inline constexpr double kSartFloor = 1e-6;

inline void apply_tv_step(Volume3& v, double weight) {
    if (weight <= 0.0) return;
    const auto g = tv_gradient(v);
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(static_cast<double>(v[i]) - weight * g[i]);
}

inline void clamp_nonneg(Volume3& v) {
    for (auto& x : v.data()) x = std::max(x, 0.0f);
}

/// Joint OS-SART over several phases, each using its own views, with
/// optional spatial TV and cyclic temporal TV steps after each iteration.
inline std::vector<Volume3> ossart_joint(const ConeBeamGeometry& geom, std::span<const View> views,
                                         const std::vector<std::vector<int>>& phase_views, const ReconConfig& cfg,
                                         std::vector<Volume3> vols, ReconLog* log) {
    cfg.validate();
    geom.validate();
    if (vols.size() != phase_views.size()) throw error("ossart: one initial volume per phase required");
    for (std::size_t p = 0; p < vols.size(); ++p) {
        if (phase_views[p].empty()) throw error("ossart: phase " + std::to_string(p) + " has no views");
        if (!(vols[p].shape() == vols.front().shape())) throw error("ossart: initial volumes differ in shape");
        for (const int k : phase_views[p]) {
            if (k < 0 || k >= geom.n_views() || static_cast<std::size_t>(k) >= views.size())
                throw error("ossart: view index out of range");
            if (views[static_cast<std::size_t>(k)].width() != geom.det_w ||
                views[static_cast<std::size_t>(k)].height() != geom.det_h)
                throw error("ossart: view dims do not match the detector");
        }
    }
    const GridShape shape = vols.front().shape();
    const int steps = cfg.steps;

    // row sums A 1 per view
    const Volume3 ones(shape, 1.0f);
    std::vector<View> row_sums(views.size());
    std::vector<std::vector<SartSubset>> subsets(vols.size());
    for (std::size_t p = 0; p < vols.size(); ++p) {
        for (auto& ids : ordered_subsets(phase_views[p], cfg.n_subsets)) {
            if (ids.empty()) continue;
            std::vector<double> col(shape.count(), 0.0);
            for (const int k : ids) {
                auto& rs = row_sums[static_cast<std::size_t>(k)];
                if (rs.size() == 0) rs = forward_project(ones, geom, k, steps);
                backproject_accumulate(View(geom.det_w, geom.det_h, 1.0f), geom, k, steps, shape, col);
            }
            SartSubset sub{std::move(ids), std::vector<float>(shape.count())};
            for (std::size_t i = 0; i < col.size(); ++i)
                sub.inv_col[i] = static_cast<float>(1.0 / std::max(col[i], kSartFloor));
            subsets[p].push_back(std::move(sub));
        }
    }

    std::size_t max_subsets = 0;
    for (const auto& s : subsets) max_subsets = std::max(max_subsets, s.size());

    std::vector<double> acc(shape.count());
    for (int it = 0; it < cfg.n_iters; ++it) {
        for (std::size_t s = 0; s < max_subsets; ++s) {
            for (std::size_t p = 0; p < vols.size(); ++p) {
                if (s >= subsets[p].size()) continue;
                const SartSubset& sub = subsets[p][s];
                Volume3& v = vols[p];
                std::fill(acc.begin(), acc.end(), 0.0);
                for (const int k : sub.views) {
                    const View fp = forward_project(v, geom, k, steps);
                    const View& obs = views[static_cast<std::size_t>(k)];
                    const View& rs = row_sums[static_cast<std::size_t>(k)];
                    basic_view<double> resid(geom.det_w, geom.det_h);
                    for (std::size_t i = 0; i < resid.size(); ++i)
                        resid.data()[i] = (static_cast<double>(obs.data()[i]) - static_cast<double>(fp.data()[i])) /
                                          std::max(static_cast<double>(rs.data()[i]), kSartFloor);
                    backproject_accumulate(resid, geom, k, steps, shape, acc);
                }
                for (std::size_t i = 0; i < acc.size(); ++i)
                    v[i] = static_cast<float>(static_cast<double>(v[i]) +
                                              cfg.relaxation * acc[i] * static_cast<double>(sub.inv_col[i]));
                if (cfg.nonneg) clamp_nonneg(v);
            }
        }

        for (auto& v : vols) apply_tv_step(v, cfg.tv_weight);
        if (cfg.ttv_weight > 0.0 && vols.size() > 1) {
            const auto g = ttv_gradient(vols);
            for (std::size_t p = 0; p < vols.size(); ++p)
                for (std::size_t i = 0; i < vols[p].size(); ++i)
                    vols[p][i] = static_cast<float>(static_cast<double>(vols[p][i]) - cfg.ttv_weight * g[p][i]);
        }
        if (cfg.nonneg)
            for (auto& v : vols) clamp_nonneg(v);

        if (log) {
            double r = 0.0;
            for (std::size_t p = 0; p < vols.size(); ++p) r += 2.0 * data_term(vols[p], geom, views, phase_views[p], steps);
            log->residual_sq.push_back(r);
        }
    }
    return vols;
}

}  // namespace detail

/// OS-SART on the views listed in view_ids, followed each iteration by a
/// spatial-TV gradient step and an optional non-negativity clamp.
inline Volume3 ossart(const ConeBeamGeometry& geom, std::span<const View> views, std::span<const int> view_ids,
                      const ReconConfig& cfg, const Volume3& init, ReconLog* log = nullptr) {
    if (view_ids.empty()) throw error("ossart: empty view set");
    std::vector<std::vector<int>> pv{std::vector<int>(view_ids.begin(), view_ids.end())};
    return detail::ossart_joint(geom, views, pv, cfg, {init}, log).front();
}

/// Phase-by-phase OS-SART coupled by cyclic temporal TV. Each phase uses only
/// its own bin; inits default to zero volumes on `grid`.
inline std::vector<Volume3> ossart_ttv(const AcquisitionSet& acq, const ReconConfig& cfg, const GridShape& grid,
                                       std::vector<Volume3> inits = {}, ReconLog* log = nullptr) {
    acq.validate();
    for (int p = 0; p < acq.binning.n_phases; ++p)
        if (acq.binning.bins[static_cast<std::size_t>(p)].empty())
            throw error("ossart_ttv: phase " + std::to_string(p) + " has no views");
    if (inits.empty()) inits.assign(static_cast<std::size_t>(acq.binning.n_phases), Volume3(grid));
    return detail::ossart_joint(acq.geom, acq.views, acq.binning.bins, cfg, std::move(inits), log);
}

/// Independent per-phase OS-SART (no temporal coupling).
inline std::vector<Volume3> ossart_per_phase(const AcquisitionSet& acq, const ReconConfig& cfg, const GridShape& grid) {
    std::vector<Volume3> out;
    for (int p = 0; p < acq.binning.n_phases; ++p) {
        const auto& bin = acq.binning.bins[static_cast<std::size_t>(p)];
        if (bin.empty()) throw error("ossart: phase " + std::to_string(p) + " has no views");
        out.push_back(ossart(acq.geom, acq.views, bin, cfg, Volume3(grid)));
    }
    return out;
}

/// Mean absolute difference between a synthesised and an observed view.
template <class A, class B>
double loss_rec(const basic_view<A>& syn, const basic_view<B>& obs) {
    if (syn.width() != obs.width() || syn.height() != obs.height()) throw error("loss_rec: view dims mismatch");
    double acc = 0.0;
    for (std::size_t i = 0; i < syn.size(); ++i)
        acc += std::abs(static_cast<double>(syn.data()[i]) - static_cast<double>(obs.data()[i]));
    return acc / static_cast<double>(syn.size());
}

/// Mean absolute difference between the phase-average ray volume and the
/// motion-affected one: ||(1/N) sum_i R_i - R_ma||_1 / (W*H*S).
inline double loss_ma(const std::vector<RayVolume>& phases, const RayVolume& motion_affected) {
    if (phases.empty()) throw error("loss_ma: need at least one phase");
    for (const auto& r : phases)
        if (r.width() != motion_affected.width() || r.height() != motion_affected.height() ||
            r.steps() != motion_affected.steps())
            throw error("loss_ma: ray volume dims mismatch");
    const double inv_n = 1.0 / static_cast<double>(phases.size());
    const auto ma = motion_affected.data();
    double acc = 0.0;
    for (std::size_t i = 0; i < ma.size(); ++i) {
        double mean = 0.0;
        for (const auto& r : phases) mean += r.data()[i];
        acc += std::abs(mean * inv_n - ma[i]);
    }
    return acc / static_cast<double>(ma.size());
}

}  // namespace cbct4d
