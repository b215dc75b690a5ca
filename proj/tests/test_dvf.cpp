#include <gtest/gtest.h>

#include <cbct4d/dvf.hpp>

#include <random>

using namespace cbct4d;

namespace {

const GridShape kGrid{{9, 8, 7}, {2, 2, 3}, {0, 0, 0}};

Volume3d random_volume(const GridShape& s, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Volume3d v(s);
    for (auto& x : v.data()) x = u(rng);
    return v;
}

Dvf random_field(const GridShape& s, double amp, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-amp, amp);
    Dvf d(s);
    for (std::size_t i = 0; i < d.size(); ++i) d.set(i, {u(rng), u(rng), u(rng)});
    return d;
}

Dvf constant_field(const GridShape& s, Vec3 v) {
    Dvf d(s);
    for (std::size_t i = 0; i < d.size(); ++i) d.set(i, v);
    return d;
}

}  // namespace

TEST(Dvf, ZeroFieldIsIdentity) {
    const Volume3d v = random_volume(kGrid, 1);
    const Dvf z = Dvf::zeros(kGrid);
    EXPECT_TRUE(z.is_zero());
    EXPECT_EQ(warp(v, z), v);
    EXPECT_EQ(warp_adjoint(v, z), v);
}

TEST(Dvf, IntegerShiftMovesSlices) {
    const Volume3d v = random_volume(kGrid, 2);
    const Volume3d w = warp(v, constant_field(kGrid, {0, 0, 1}));
    const Dims3 d = kGrid.dims;
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) EXPECT_EQ(w(x, y, z), z + 1 < d.z ? v(x, y, z + 1) : 0.0);

    const Volume3d b = warp(v, constant_field(kGrid, {-2, 1, 0}));
    for (int z = 0; z < d.z; ++z)
        for (int y = 0; y < d.y; ++y)
            for (int x = 0; x < d.x; ++x) {
                const bool in = x - 2 >= 0 && y + 1 < d.y;
                EXPECT_EQ(b(x, y, z), in ? v(x - 2, y + 1, z) : 0.0);
            }
}

TEST(Dvf, MatchesNaiveTrilinearOracle) {
    const Volume3d v = random_volume(kGrid, 3);
    const Dvf d = random_field(kGrid, 1.5, 4);
    const Volume3d w = warp(v, d);
    for (int z = 0; z < 7; ++z)
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 9; ++x) {
                const std::size_t i = kGrid.index(x, y, z);
                const Vec3 f = Vec3{double(x), double(y), double(z)} + d.at(i);
                EXPECT_EQ(w[i], sample_trilinear_index(v, f));
            }
}

TEST(Dvf, WarpIsLinear) {
    const Volume3d a = random_volume(kGrid, 5), b = random_volume(kGrid, 6);
    const Dvf d = random_field(kGrid, 2.0, 7);
    Volume3d c(kGrid);
    const double alpha = 0.5, beta = -2.0;  // powers of two keep the comparison exact
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = alpha * a[i] + beta * b[i];
    const Volume3d wa = warp(a, d), wb = warp(b, d), wc = warp(c, d);
    for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(wc[i], alpha * wa[i] + beta * wb[i], 1e-14);
}

TEST(Dvf, AdjointDotProduct) {
    std::mt19937_64 rng(8);
    for (int t = 0; t < 20; ++t) {
        const Volume3d v = random_volume(kGrid, rng()), u = random_volume(kGrid, rng());
        const Dvf d = random_field(kGrid, 3.0, rng());
        const Volume3d wv = warp(v, d), wtu = warp_adjoint(u, d);
        double lhs = 0.0, rhs = 0.0, scale = 0.0;
        for (std::size_t i = 0; i < v.size(); ++i) {
            lhs += wv[i] * u[i];
            rhs += v[i] * wtu[i];
            scale += std::abs(wv[i] * u[i]);
        }
        EXPECT_LE(std::abs(lhs - rhs), 1e-6 * scale) << t;
    }
}

TEST(Dvf, AdjointOfIntegerShiftMovesSingleVoxel) {
    Volume3d u(kGrid);
    u(4, 4, 3) = 1.0;
    const Volume3d a = warp_adjoint(u, constant_field(kGrid, {1, 0, -1}));
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], i == kGrid.index(5, 4, 2) ? 1.0 : 0.0);
}

TEST(Dvf, UnitConversionsAndValidation) {
    const Vec3 mm = dvf_voxel_to_mm({1, 2, 3}, kGrid);
    EXPECT_EQ(mm, (Vec3{2, 4, 9}));
    EXPECT_EQ(dvf_mm_to_voxel(mm, kGrid), (Vec3{1, 2, 3}));

    Dvf d = random_field(kGrid, 1.0, 9);
    EXPECT_NO_THROW(d.validate());
    d.dx.pop_back();
    EXPECT_THROW(d.validate(), error);
    const Volume3d other(GridShape{{3, 3, 3}, {1, 1, 1}, {}});
    EXPECT_THROW(warp(other, Dvf::zeros(kGrid)), error);
    EXPECT_THROW(warp_adjoint(other, Dvf::zeros(kGrid)), error);
}

TEST(Dvf, ParallelWarpMatchesSequential) {
    const Volume3d v = random_volume(kGrid, 10);
    const Dvf d = random_field(kGrid, 2.0, 11);
    set_thread_count(1);
    const Volume3d a = warp(v, d);
    set_thread_count(4);
    const Volume3d b = warp(v, d);
    set_thread_count(0);
    EXPECT_EQ(a, b);
}
