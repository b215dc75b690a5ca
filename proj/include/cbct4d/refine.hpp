#pragma once

#include <cstdint>
#include <limits>
#include <map>
#include <random>
#include <span>
#include <vector>

#include "cbct4d/acquisition.hpp"
#include "cbct4d/dvf.hpp"
#include "cbct4d/metrics.hpp"
#include "cbct4d/projector.hpp"
#include "cbct4d/tv.hpp"

namespace cbct4d {

struct RefineConfig {
    int n_iters = 50;
    /// > 0: plain gradient descent with this fixed step; <= 0: conjugate gradient
    /// with exact line search.
    double step = 0.0;
    bool use_all_phases = true;
    double tv_weight = 0.0;
    int steps = 128;

    void validate() const {
        if (n_iters < 1) throw error("refine: n_iters must be >= 1");
        if (!(tv_weight >= 0.0)) throw error("refine: tv_weight must be >= 0");
        if (steps < 1) throw error("refine: step count S must be >= 1");
    }
};

/// Target phase j -> D_{i->j} for a fixed moving phase i.
using DvfMap = std::map<int, Dvf>;

struct RefineLog {
    struct Row {
        int iter = 0;
        double objective = 0.0;
        double psnr = std::numeric_limits<double>::quiet_NaN();
    };
    std::vector<Row> rows;
};

namespace detail {

struct RefineTerm {
    int phase;
    const Dvf* dvf;  // nullptr = identity
    const std::vector<int>* views;
};

inline std::vector<RefineTerm> refine_terms(int phase, const DvfMap& dvfs, const AcquisitionSet& acq,
                                            const RefineConfig& cfg, const GridShape& grid) {
    if (phase < 0 || phase >= acq.binning.n_phases) throw error("refine: phase index out of range");
    std::vector<RefineTerm> terms;
    for (int j = 0; j < acq.binning.n_phases; ++j) {
        const auto& bin = acq.binning.bins[static_cast<std::size_t>(j)];
        if (bin.empty()) continue;
        if (!cfg.use_all_phases && j != phase) continue;
        const auto it = dvfs.find(j);
        const Dvf* d = nullptr;
        if (it != dvfs.end()) {
            if (!(it->second.dims() == grid.dims)) throw error("refine: DVF dims do not match the volume");
            d = &it->second;
        } else if (j != phase) {
            throw error("refine: missing DVF for phase " + std::to_string(j));
        }
        terms.push_back({j, d, &bin});
    }
    return terms;
}

}  // namespace detail

/// F(V) = 1/2 sum_j sum_{k in bin j} ||A_k warp(V, D_{i->j}) - P_k||^2 + tv_weight * TV(V).
/// Returns F and, when `grad` is non-null, dF/dV = sum warp^T A^T (A warp V - P) + tv_weight * dTV.
template <class T>
double refine_objective(const basic_volume<T>& v, int phase, const DvfMap& dvfs, const AcquisitionSet& acq,
                        const RefineConfig& cfg, std::vector<double>* grad = nullptr) {
    const auto terms = detail::refine_terms(phase, dvfs, acq, cfg, v.shape());
    const GridShape& shape = v.shape();
    const auto& geom = acq.geom;
    if (grad) grad->assign(shape.count(), 0.0);
    double f = 0.0;
    std::vector<double> acc;
    for (const auto& t : terms) {
        const basic_volume<T> moved = t.dvf ? warp(v, *t.dvf) : v;
        if (grad) acc.assign(shape.count(), 0.0);
        for (const int k : *t.views) {
            const auto fp = forward_project(moved, geom, k, cfg.steps);
            const View& obs = acq.views[static_cast<std::size_t>(k)];
            basic_view<double> r(geom.det_w, geom.det_h);
            for (std::size_t i = 0; i < r.size(); ++i) {
                r.data()[i] = static_cast<double>(fp.data()[i]) - static_cast<double>(obs.data()[i]);
                f += 0.5 * r.data()[i] * r.data()[i];
            }
            if (grad) backproject_accumulate(r, geom, k, cfg.steps, shape, acc);
        }
        if (grad) {
            if (t.dvf) {
                const auto back = warp_adjoint(Volume3d(shape, acc), *t.dvf);
                for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += back[i];
            } else {
                for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += acc[i];
            }
        }
    }
    if (cfg.tv_weight > 0.0) {
        f += cfg.tv_weight * tv_value(v);
        if (grad) {
            const auto g = tv_gradient(v);
            for (std::size_t i = 0; i < grad->size(); ++i) (*grad)[i] += cfg.tv_weight * g[i];
        }
    }
    return f;
}

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

/// Per-view images of the linear map J = A_k W_j, one entry per (term, view).
inline std::vector<std::vector<double>> apply_forward(const Volume3d& x, const std::vector<RefineTerm>& terms,
                                                      const ConeBeamGeometry& geom, int steps) {
    std::vector<std::vector<double>> out;
    for (const auto& t : terms) {
        const Volume3d moved = t.dvf ? warp(x, *t.dvf) : x;
        for (const int k : *t.views) {
            const auto fp = forward_project(moved, geom, k, steps);
            out.emplace_back(fp.data().begin(), fp.data().end());
        }
    }
    return out;
}

/// J^T applied to per-view images laid out as apply_forward returns them.
inline std::vector<double> apply_adjoint(const std::vector<std::vector<double>>& images,
                                         const std::vector<RefineTerm>& terms, const ConeBeamGeometry& geom,
                                         int steps, const GridShape& shape) {
    std::vector<double> grad(shape.count(), 0.0);
    std::vector<double> acc(shape.count());
    std::size_t n = 0;
    for (const auto& t : terms) {
        std::fill(acc.begin(), acc.end(), 0.0);
        for (const int k : *t.views) {
            const basic_view<double> r(geom.det_w, geom.det_h, images[n++]);
            backproject_accumulate(r, geom, k, steps, shape, acc);
        }
        if (t.dvf) {
            const auto back = warp_adjoint(Volume3d(shape, acc), *t.dvf);
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += back[i];
        } else {
            for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += acc[i];
        }
    }
    return grad;
}

inline double half_sq(const std::vector<std::vector<double>>& r) {
    double acc = 0.0;
    for (const auto& img : r)
        for (const double v : img) acc += v * v;
    return 0.5 * acc;
}

}  // namespace detail

/// Refines phase `phase` so that its warped copies agree with the views of
/// every phase: minimises F(V) = 1/2 sum_j sum_{k in bin j} ||A_k warp(V, D_{i->j}) - P_k||^2
/// (+ tv_weight * TV(V)) from v_init.
///
/// With cfg.step <= 0 the minimiser is Polak-Ribiere+ conjugate gradient with
/// an exact line search on the quadratic data term (Armijo backtracking when
/// TV is on); with cfg.step > 0 it is plain gradient descent with that step.
/// Residuals are carried along by r += alpha * J p, so each iteration costs one
/// forward and one backprojection per view. The iterate with the lowest
/// objective is returned.
inline Volume3 dvf_refine(const Volume3& v_init, int phase, const DvfMap& dvfs, const AcquisitionSet& acq,
                          const RefineConfig& cfg, RefineLog* log = nullptr, const Volume3* gt = nullptr) {
    cfg.validate();
    acq.validate();
    const GridShape& shape = v_init.shape();
    if (gt && !(gt->dims() == shape.dims)) throw error("refine: ground-truth dims mismatch");
    const auto terms = detail::refine_terms(phase, dvfs, acq, cfg, shape);
    const auto& geom = acq.geom;
    const double gt_range = gt ? std::max(value_range(*gt), 1e-12) : 1.0;

    Volume3d x = Volume3d::from(v_init);
    auto r = detail::apply_forward(x, terms, geom, cfg.steps);
    {
        std::size_t n = 0;
        for (const auto& t : terms)
            for (const int k : *t.views) {
                const auto obs = acq.views[static_cast<std::size_t>(k)].data();
                for (std::size_t i = 0; i < obs.size(); ++i) r[n][i] -= static_cast<double>(obs[i]);
                ++n;
            }
    }
    auto objective_of = [&](const Volume3d& v, const std::vector<std::vector<double>>& res) {
        double f = detail::half_sq(res);
        if (cfg.tv_weight > 0.0) f += cfg.tv_weight * tv_value(v);
        return f;
    };

    double f = objective_of(x, r);
    auto record = [&](int iter, const Volume3d& v, double obj) {
        if (!log) return;
        RefineLog::Row row{iter, obj, std::numeric_limits<double>::quiet_NaN()};
        if (gt) row.psnr = psnr(v, *gt, gt_range);
        log->rows.push_back(row);
    };
    record(0, x, f);

    Volume3d best = x;
    double best_f = f;
    std::vector<double> g_prev, p;
    for (int it = 1; it <= cfg.n_iters; ++it) {
        auto g = detail::apply_adjoint(r, terms, geom, cfg.steps, shape);
        if (cfg.tv_weight > 0.0) {
            const auto gtv = tv_gradient(x);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += cfg.tv_weight * gtv[i];
        }
        if (cfg.step > 0.0 || g_prev.empty()) {
            p.assign(g.size(), 0.0);
            for (std::size_t i = 0; i < g.size(); ++i) p[i] = -g[i];
        } else {
            const double den = detail::dot(g_prev, g_prev);
            double num = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) num += g[i] * (g[i] - g_prev[i]);
            const double beta = den > 0.0 ? std::max(0.0, num / den) : 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) p[i] = -g[i] + beta * p[i];
            if (detail::dot(g, p) >= 0.0)
                for (std::size_t i = 0; i < g.size(); ++i) p[i] = -g[i];
        }
        const double gp = detail::dot(g, p);
        if (!(gp < 0.0)) break;  // stationary

        const auto q = detail::apply_forward(Volume3d(shape, p), terms, geom, cfg.steps);
        auto trial = [&](double alpha, Volume3d& xn, std::vector<std::vector<double>>& rn) {
            xn = x;
            for (std::size_t i = 0; i < xn.size(); ++i) xn[i] += alpha * p[i];
            rn = r;
            for (std::size_t v = 0; v < rn.size(); ++v)
                for (std::size_t i = 0; i < rn[v].size(); ++i) rn[v][i] += alpha * q[v][i];
            return objective_of(xn, rn);
        };

        double alpha = cfg.step;
        if (cfg.step <= 0.0) {
            const double curv = 2.0 * detail::half_sq(q);
            if (!(curv > 0.0)) break;
            alpha = -gp / curv;
        }
        Volume3d xn;
        std::vector<std::vector<double>> rn;
        double fn = trial(alpha, xn, rn);
        if (cfg.step <= 0.0 && cfg.tv_weight > 0.0) {
            for (int bt = 0; bt < 30 && !(fn <= f + 1e-4 * alpha * gp); ++bt) {
                alpha *= 0.5;
                fn = trial(alpha, xn, rn);
            }
        }
        x = std::move(xn);
        r = std::move(rn);
        f = fn;
        g_prev = std::move(g);
        record(it, x, f);
        if (f < best_f) {
            best_f = f;
            best = x;
        }
        if (!std::isfinite(f)) break;
    }
    return Volume3::from(best);
}

/// dvf_refine for every phase i with its own field map dvfs[i].
inline std::vector<Volume3> refine_all_phases(const std::vector<Volume3>& v_inits, const std::vector<DvfMap>& dvfs,
                                              const AcquisitionSet& acq, const RefineConfig& cfg,
                                              std::vector<RefineLog>* logs = nullptr,
                                              const std::vector<Volume3>* gts = nullptr) {
    if (dvfs.size() != v_inits.size()) throw error("refine: one DVF map per phase required");
    if (gts && gts->size() != v_inits.size()) throw error("refine: one ground truth per phase required");
    if (logs) logs->assign(v_inits.size(), {});
    std::vector<Volume3> out;
    out.reserve(v_inits.size());
    for (std::size_t i = 0; i < v_inits.size(); ++i)
        out.push_back(dvf_refine(v_inits[i], static_cast<int>(i), dvfs[i], acq, cfg, logs ? &(*logs)[i] : nullptr,
                                 gts ? &(*gts)[i] : nullptr));
    return out;
}

struct GradientCheckReport {
    double max_rel_error = 0.0;
    int n_probes = 0;
};

/// Compares the analytic refinement gradient against central finite
/// differences at up to n_probes random voxels.
inline GradientCheckReport gradient_check(const Volume3d& v, int phase, const DvfMap& dvfs, const AcquisitionSet& acq,
                                          const RefineConfig& cfg, int n_probes = 20, std::uint64_t seed = 0,
                                          double h = 1e-4) {
    std::vector<double> g;
    refine_objective(v, phase, dvfs, acq, cfg, &g);
    double gmax = 0.0;
    for (const double x : g) gmax = std::max(gmax, std::abs(x));
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick(0, v.size() - 1);
    GradientCheckReport rep;
    const int n = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(std::max(n_probes, 0)), v.size()));
    for (int i = 0; i < n; ++i) {
        const std::size_t idx = pick(rng);
        Volume3d plus = v, minus = v;
        plus[idx] += h;
        minus[idx] -= h;
        const double fd =
            (refine_objective(plus, phase, dvfs, acq, cfg) - refine_objective(minus, phase, dvfs, acq, cfg)) / (2.0 * h);
        const double scale = std::max({std::abs(fd), std::abs(g[idx]), 1e-6 * gmax, 1e-300});
        rep.max_rel_error = std::max(rep.max_rel_error, std::abs(fd - g[idx]) / scale);
        ++rep.n_probes;
    }
    return rep;
}

}  // namespace cbct4d
