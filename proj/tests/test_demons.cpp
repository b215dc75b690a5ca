#include <gtest/gtest.h>

#include <cbct4d/demons.hpp>
#include <cbct4d/metrics.hpp>
#include <cbct4d/phantom.hpp>

using namespace cbct4d;

namespace {

Volume3 blob(const GridShape& s, Vec3 centre, double sigma) {
    Volume3 v(s);
    for (int z = 0; z < s.dims.z; ++z)
        for (int y = 0; y < s.dims.y; ++y)
            for (int x = 0; x < s.dims.x; ++x) {
                const Vec3 d = Vec3{double(x), double(y), double(z)} - centre;
                v(x, y, z) = static_cast<float>(std::exp(-0.5 * dot(d, d) / (sigma * sigma)));
            }
    return v;
}

}  // namespace

TEST(Demons, IdenticalImagesGiveNearZeroField) {
    const GridShape s{{24, 24, 24}, {1, 1, 1}, {}};
    const Volume3 v = blob(s, {11.5, 12, 12.5}, 4.0);
    const Dvf d = demons_register(v, v, DemonsConfig{});
    EXPECT_LE(d.max_abs(), 1e-3);
}

TEST(Demons, RecoversTranslation) {
    const GridShape s{{32, 32, 32}, {1, 1, 1}, {}};
    const Vec3 c{15.5, 16.0, 15.0};
    const Volume3 fixed = blob(s, c, 4.0);
    const Volume3 moving = blob(s, c + Vec3{2, 0, 0}, 4.0);
    const Dvf d = demons_register(moving, fixed, DemonsConfig{});
    // pull convention: moving(x + d) ~ fixed(x), so d ~ (+2, 0, 0) inside the blob
    Vec3 mean;
    int n = 0;
    for (std::size_t i = 0; i < fixed.size(); ++i)
        if (fixed[i] > 0.5f) {
            mean = mean + d.at(i);
            ++n;
        }
    mean = mean * (1.0 / n);
    EXPECT_NEAR(mean.x, 2.0, 0.5);
    EXPECT_NEAR(mean.y, 0.0, 0.5);
    EXPECT_NEAR(mean.z, 0.0, 0.5);
}

TEST(Demons, Deterministic) {
    const GridShape s{{16, 16, 16}, {1, 1, 1}, {}};
    const Volume3 a = blob(s, {7, 8, 8}, 3.0), b = blob(s, {8, 8, 7}, 3.0);
    DemonsConfig cfg;
    cfg.levels = 2;
    cfg.iters = 10;
    EXPECT_EQ(demons_register(a, b, cfg), demons_register(a, b, cfg));
}

TEST(Demons, Errors) {
    const Volume3 a(GridShape{{16, 16, 16}, {1, 1, 1}, {}}), b(GridShape{{16, 16, 8}, {1, 1, 1}, {}});
    EXPECT_THROW(demons_register(a, b, DemonsConfig{}), error);
    DemonsConfig cfg;
    cfg.levels = 5;  // log2(16) = 4
    EXPECT_THROW(demons_register(a, a, cfg), error);
    cfg.levels = 4;
    cfg.iters = 1;
    EXPECT_NO_THROW(demons_register(a, a, cfg));
}

TEST(Demons, PhantomPhasesAlign) {
    const Phantom4D ph;
    const GridShape s = centered_grid({64, 64, 64}, {3, 3, 3});
    const Volume3 v0 = render_phantom(ph, 0, s), v1 = render_phantom(ph, 1, s);
    const double range = value_range(v1);
    const Dvf d = demons_register(v0, v1, DemonsConfig{});
    const double before = psnr(v0, v1, range);
    const double after = psnr(warp(v0, d), v1, range);
    EXPECT_GE(after, before + 3.0) << before << " -> " << after;
}
