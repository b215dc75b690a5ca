#pragma once

#include <map>
#include <random>
#include <vector>

#include "cbct4d/gating.hpp"
#include "cbct4d/geometry.hpp"
#include "cbct4d/phantom.hpp"
#include "cbct4d/projector.hpp"

namespace cbct4d {

/// One gated CBCT scan: a view per angle plus the phase each view belongs to.
struct AcquisitionSet {
    ConeBeamGeometry geom;
    std::vector<View> views;
    PhaseBinning binning;

    int n_views() const { return static_cast<int>(views.size()); }

    void validate() const {
        geom.validate();
        binning.validate();
        if (views.size() != geom.angles.size()) throw error("acquisition: view count does not match the angle list");
        if (binning.n_views() != n_views()) throw error("acquisition: binning length does not match the view count");
        for (const auto& v : views)
            if (v.width() != geom.det_w || v.height() != geom.det_h)
                throw error("acquisition: view dims do not match the detector");
    }
};

/// Gated DRR acquisition: view k is the forward projection of phase
/// phase_of_view[k] plus optional Gaussian noise. Each view draws from its own
/// generator seeded from (seed, k), so the result does not depend on thread count.
inline AcquisitionSet simulate_acquisition(const Phantom4D& ph, const ConeBeamGeometry& geom, const PhaseBinning& binning,
                                           const GridShape& grid, int steps, double noise_sigma, std::uint64_t seed) {
    geom.validate();
    binning.validate();
    if (binning.n_views() != geom.n_views()) throw error("simulate: binning length does not match the angle list");
    if (binning.n_phases > ph.n_phases) throw error("simulate: binning has more phases than the phantom");
    if (noise_sigma < 0.0) throw error("simulate: noise sigma must be >= 0");

    std::map<int, Volume3> phases;
    for (int p = 0; p < binning.n_phases; ++p)
        if (!binning.bins[static_cast<std::size_t>(p)].empty()) phases.emplace(p, render_phantom(ph, p, grid));

    AcquisitionSet acq{geom, std::vector<View>(static_cast<std::size_t>(geom.n_views())), binning};
    for (int k = 0; k < geom.n_views(); ++k) {
        View v = forward_project(phases.at(binning.phase_of_view[static_cast<std::size_t>(k)]), geom, k, steps);
        if (noise_sigma > 0.0) {
            std::mt19937_64 rng(mix_seed(seed ^ mix_seed(static_cast<std::uint64_t>(k))));
            std::normal_distribution<double> noise(0.0, noise_sigma);
            for (auto& px : v.data()) px = static_cast<float>(px + noise(rng));
        }
        acq.views[static_cast<std::size_t>(k)] = std::move(v);
    }
    return acq;
}

}  // namespace cbct4d
