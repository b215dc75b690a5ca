#include <gtest/gtest.h>

#include <cbct4d/tv.hpp>

#include <random>

using namespace cbct4d;

namespace {

Volume3d random_volume(Dims3 d, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Volume3d v(GridShape{d, {1, 1, 1}, {}});
    for (auto& x : v.data()) x = u(rng);
    return v;
}

}  // namespace

TEST(Tv, ConstantVolumeHasOnlyEpsilonTerms) {
    const Volume3d v(GridShape{{4, 3, 2}, {1, 1, 1}, {}}, 0.5);
    EXPECT_NEAR(tv_value(v), 24 * std::sqrt(kTvEpsilon), 1e-15);
    for (const double g : tv_gradient(v)) EXPECT_EQ(g, 0.0);
}

TEST(Tv, StepEdgeValue) {
    // a unit step along x in a 4x1x1 line: one jump of 1
    Volume3d v(GridShape{{4, 1, 1}, {1, 1, 1}, {}});
    v(2, 0, 0) = v(3, 0, 0) = 1.0;
    EXPECT_NEAR(tv_value(v, 0.0), 1.0, 1e-15);
}

TEST(Tv, GradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        Volume3d v = random_volume({8, 8, 8}, seed);
        const auto g = tv_gradient(v);
        const double h = 1e-6;
        std::mt19937_64 rng(seed + 100);
        for (int t = 0; t < 30; ++t) {
            const std::size_t i = rng() % v.size();
            const double x0 = v[i];
            v[i] = x0 + h;
            const double fp = tv_value(v);
            v[i] = x0 - h;
            const double fm = tv_value(v);
            v[i] = x0;
            const double fd = (fp - fm) / (2 * h);
            EXPECT_LE(std::abs(fd - g[i]), 1e-4 * std::max(1.0, std::abs(g[i]))) << seed << ' ' << i;
        }
    }
}

TEST(Tv, TemporalValueAndGradient) {
    std::vector<Volume3d> ph{random_volume({4, 4, 4}, 1), random_volume({4, 4, 4}, 2), random_volume({4, 4, 4}, 3)};
    // naive cyclic oracle
    double want = 0.0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t x = 0; x < 64; ++x) {
            const double d = ph[(i + 1) % 3][x] - ph[i][x];
            want += std::sqrt(d * d + kTvEpsilon);
        }
    EXPECT_NEAR(ttv_value(ph), want, 1e-12 * want);

    const auto g = ttv_gradient(ph);
    const double h = 1e-6;
    for (std::size_t p = 0; p < 3; ++p)
        for (std::size_t x = 0; x < 64; x += 7) {
            const double x0 = ph[p][x];
            ph[p][x] = x0 + h;
            const double fp = ttv_value(ph);
            ph[p][x] = x0 - h;
            const double fm = ttv_value(ph);
            ph[p][x] = x0;
            EXPECT_NEAR((fp - fm) / (2 * h), g[p][x], 1e-5);
        }
}

TEST(Tv, TemporalSinglePhaseVanishes) {
    std::vector<Volume3d> one{random_volume({3, 3, 3}, 4)};
    EXPECT_EQ(ttv_value(one), 0.0);
    const auto grad = ttv_gradient(one);
    for (const double g : grad[0]) EXPECT_EQ(g, 0.0);
}
