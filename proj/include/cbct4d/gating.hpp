#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "cbct4d/common.hpp"

namespace cbct4d {

/// Assignment of every view to one respiratory phase.
struct PhaseBinning {
    int n_phases = 0;
    std::vector<int> phase_of_view;
    std::vector<std::vector<int>> bins;
    /// Set when the surrogate signal carried no amplitude information.
    bool degenerate = false;

    int n_views() const { return static_cast<int>(phase_of_view.size()); }

    /// Rebuilds bins from phase_of_view (views ascending within each bin).
    void rebuild_bins() {
        bins.assign(static_cast<std::size_t>(n_phases), {});
        for (int k = 0; k < n_views(); ++k) {
            const int p = phase_of_view[static_cast<std::size_t>(k)];
            if (p < 0 || p >= n_phases) throw error("binning: phase index out of range");
            bins[static_cast<std::size_t>(p)].push_back(k);
        }
    }

    /// Checks the exactly-one law and consistency with phase_of_view.
    void validate() const {
        if (n_phases < 1) throw error("binning: need at least one phase");
        if (static_cast<int>(bins.size()) != n_phases) throw error("binning: wrong number of bins");
        std::vector<int> seen(phase_of_view.size(), 0);
        for (int p = 0; p < n_phases; ++p)
            for (const int k : bins[static_cast<std::size_t>(p)]) {
                if (k < 0 || k >= n_views()) throw error("binning: view index out of range");
                if (seen[static_cast<std::size_t>(k)]++) throw error("binning: view appears in more than one bin");
                if (phase_of_view[static_cast<std::size_t>(k)] != p) throw error("binning: bins disagree with phase map");
            }
        for (const int s : seen)
            if (s != 1) throw error("binning: view missing from every bin");
    }

    /// Single-phase binning holding every view.
    static PhaseBinning single(int n_views) {
        PhaseBinning b;
        b.n_phases = 1;
        b.phase_of_view.assign(static_cast<std::size_t>(n_views), 0);
        b.rebuild_bins();
        return b;
    }
};

/// Amplitude binning with inhale/exhale separation.
///
/// The normalised amplitude a in [0,1] and the breathing direction give a
/// cyclic coordinate c = a/2 while inhaling and 1 - a/2 while exhaling, so
/// phase 0 starts at maximum exhale and phase N/2 at maximum inhale. Equal
/// amplitude bands mean views pile up in the bins near the extremes.
inline PhaseBinning bin_by_amplitude(std::span<const double> signal, std::span<const std::uint8_t> inhaling, int n_phases) {
    if (n_phases < 1) throw error("binning: need at least one phase");
    if (signal.size() != inhaling.size()) throw error("binning: signal/direction length mismatch");
    PhaseBinning b;
    b.n_phases = n_phases;
    b.phase_of_view.assign(signal.size(), 0);
    if (!signal.empty()) {
        const auto [lo_it, hi_it] = std::minmax_element(signal.begin(), signal.end());
        const double lo = *lo_it, hi = *hi_it;
        if (!(hi > lo)) {
            b.degenerate = true;
        } else {
            for (std::size_t k = 0; k < signal.size(); ++k) {
                const double a = std::clamp((signal[k] - lo) / (hi - lo), 0.0, 1.0);
                const double c = inhaling[k] ? 0.5 * a : 1.0 - 0.5 * a;
                b.phase_of_view[k] = std::clamp(static_cast<int>(std::floor(c * n_phases)), 0, n_phases - 1);
            }
        }
    }
    b.rebuild_bins();
    return b;
}

/// Bins K views of a sinusoidal surrogate sin(2*pi*k/period_views + phase_shift).
inline PhaseBinning breathing_phase_assignment(int n_phases, int n_views, double period_views, double phase_shift) {
    if (n_views < 1) throw error("binning: need at least one view");
    if (!(period_views > n_phases)) throw error("binning: breathing period must exceed the number of phases");
    std::vector<double> signal(static_cast<std::size_t>(n_views));
    std::vector<std::uint8_t> rising(static_cast<std::size_t>(n_views));
    for (int k = 0; k < n_views; ++k) {
        const double arg = 2.0 * std::numbers::pi * k / period_views + phase_shift;
        signal[static_cast<std::size_t>(k)] = std::sin(arg);
        rising[static_cast<std::size_t>(k)] = std::cos(arg) >= 0.0 ? 1 : 0;
    }
    return bin_by_amplitude(signal, rising, n_phases);
}

}  // namespace cbct4d
