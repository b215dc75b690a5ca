#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "cbct4d/common.hpp"
#include "cbct4d/volume.hpp"

namespace cbct4d {

inline constexpr int kSsimWindow = 7;

template <class A, class B>
void check_same_dims(const basic_volume<A>& a, const basic_volume<B>& b, const char* what) {
    if (!(a.dims() == b.dims())) throw error(std::string(what) + ": volume dims mismatch");
}

template <class A, class B>
double mse(const basic_volume<A>& a, const basic_volume<B>& b) {
    check_same_dims(a, b, "mse");
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

/// 10 log10(range^2 / MSE) in dB; +infinity when the volumes are identical.
template <class A, class B>
double psnr(const basic_volume<A>& a, const basic_volume<B>& b, double data_range) {
    if (!(data_range > 0.0)) throw error("psnr: data range must be > 0");
    const double m = mse(a, b);
    if (m == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(data_range * data_range / m);
}

/// max - min of a volume; the evaluation range convention.
template <class T>
double value_range(const basic_volume<T>& v) {
    if (v.empty()) return 0.0;
    const auto [lo, hi] = std::minmax_element(v.data().begin(), v.data().end());
    return static_cast<double>(*hi) - static_cast<double>(*lo);
}

namespace detail {

/// Inclusive 3D prefix sums with a zero border: S(x+1,y+1,z+1) = sum over [0..x]x[0..y]x[0..z].
class PrefixSum3 {
public:
    template <class F>
    PrefixSum3(const Dims3& d, F&& value) : nx_(d.x + 1), ny_(d.y + 1), s_(static_cast<std::size_t>(d.x + 1) * (d.y + 1) * (d.z + 1), 0.0) {
        for (int z = 0; z < d.z; ++z)
            for (int y = 0; y < d.y; ++y)
                for (int x = 0; x < d.x; ++x) {
                    const double v = value((static_cast<std::size_t>(z) * d.y + y) * d.x + x);
                    at(x + 1, y + 1, z + 1) = v + at(x, y + 1, z + 1) + at(x + 1, y, z + 1) + at(x + 1, y + 1, z) -
                                              at(x, y, z + 1) - at(x, y + 1, z) - at(x + 1, y, z) + at(x, y, z);
                }
    }

    /// Sum over the box [x0, x0+n) x [y0, y0+n) x [z0, z0+n).
    double box(int x0, int y0, int z0, int n) const {
        const int x1 = x0 + n, y1 = y0 + n, z1 = z0 + n;
        return at(x1, y1, z1) - at(x0, y1, z1) - at(x1, y0, z1) - at(x1, y1, z0) + at(x0, y0, z1) + at(x0, y1, z0) +
               at(x1, y0, z0) - at(x0, y0, z0);
    }

private:
    double& at(int x, int y, int z) { return s_[(static_cast<std::size_t>(z) * ny_ + y) * nx_ + x]; }
    double at(int x, int y, int z) const { return s_[(static_cast<std::size_t>(z) * ny_ + y) * nx_ + x]; }

    int nx_, ny_;
    std::vector<double> s_;
};

}  // namespace detail

/// Mean SSIM over every fully contained 7x7x7 uniform window, with
/// C1 = (0.01 range)^2, C2 = (0.03 range)^2 and population (1/n) moments.
template <class A, class B>
double ssim(const basic_volume<A>& a, const basic_volume<B>& b, double data_range) {
    check_same_dims(a, b, "ssim");
    if (!(data_range > 0.0)) throw error("ssim: data range must be > 0");
    const Dims3 d = a.dims();
    const int n = kSsimWindow;
    if (d.x < n || d.y < n || d.z < n) throw error("ssim: volume smaller than the 7x7x7 window");
    const double c1 = (0.01 * data_range) * (0.01 * data_range);
    const double c2 = (0.03 * data_range) * (0.03 * data_range);

    auto va = [&](std::size_t i) { return static_cast<double>(a[i]); };
    auto vb = [&](std::size_t i) { return static_cast<double>(b[i]); };
    const detail::PrefixSum3 sa(d, va), sb(d, vb);
    const detail::PrefixSum3 saa(d, [&](std::size_t i) { return va(i) * va(i); });
    const detail::PrefixSum3 sbb(d, [&](std::size_t i) { return vb(i) * vb(i); });
    const detail::PrefixSum3 sab(d, [&](std::size_t i) { return va(i) * vb(i); });

    const double inv = 1.0 / (static_cast<double>(n) * n * n);
    double total = 0.0;
    std::size_t count = 0;
    for (int z = 0; z + n <= d.z; ++z)
        for (int y = 0; y + n <= d.y; ++y)
            for (int x = 0; x + n <= d.x; ++x) {
                const double ma = sa.box(x, y, z, n) * inv;
                const double mb = sb.box(x, y, z, n) * inv;
                const double vaa = saa.box(x, y, z, n) * inv - ma * ma;
                const double vbb = sbb.box(x, y, z, n) * inv - mb * mb;
                const double vab = sab.box(x, y, z, n) * inv - ma * mb;
                total += ((2.0 * ma * mb + c1) * (2.0 * vab + c2)) / ((ma * ma + mb * mb + c1) * (vaa + vbb + c2));
                ++count;
            }
    return total / static_cast<double>(count);
}

struct PhaseMetric {
    double psnr = 0.0;
    double ssim = 0.0;
};

struct MetricReport {
    std::vector<PhaseMetric> per_phase;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;
};

/// Per-phase PSNR/SSIM against ground truth and their unweighted means.
/// data_range <= 0 selects max - min of each ground-truth volume.
template <class T>
MetricReport evaluate_phases(const std::vector<basic_volume<T>>& recons, const std::vector<basic_volume<T>>& gts,
                             double data_range = 0.0) {
    if (recons.size() != gts.size() || recons.empty()) throw error("evaluate: need one reconstruction per phase");
    MetricReport r;
    for (std::size_t i = 0; i < recons.size(); ++i) {
        double range = data_range > 0.0 ? data_range : value_range(gts[i]);
        if (!(range > 0.0)) range = 1.0;
        r.per_phase.push_back({psnr(recons[i], gts[i], range), ssim(recons[i], gts[i], range)});
    }
    for (const auto& m : r.per_phase) {
        r.mean_psnr += m.psnr;
        r.mean_ssim += m.ssim;
    }
    r.mean_psnr /= static_cast<double>(r.per_phase.size());
    r.mean_ssim /= static_cast<double>(r.per_phase.size());
    return r;
}

}  // namespace cbct4d
