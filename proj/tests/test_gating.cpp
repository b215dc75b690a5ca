#include <gtest/gtest.h>

#include <cbct4d/gating.hpp>

#include <algorithm>
#include <numeric>
#include <random>

using namespace cbct4d;

namespace {

void expect_partition(const PhaseBinning& b, int k) {
    ASSERT_EQ(b.n_views(), k);
    ASSERT_EQ(static_cast<int>(b.bins.size()), b.n_phases);
    std::vector<int> all;
    for (int p = 0; p < b.n_phases; ++p)
        for (const int v : b.bins[static_cast<std::size_t>(p)]) {
            all.push_back(v);
            EXPECT_EQ(b.phase_of_view[static_cast<std::size_t>(v)], p);
        }
    std::sort(all.begin(), all.end());
    std::vector<int> want(static_cast<std::size_t>(k));
    std::iota(want.begin(), want.end(), 0);
    EXPECT_EQ(all, want);
}

}  // namespace

TEST(Gating, PartitionForDeskDefaults) {
    const auto b = breathing_phase_assignment(4, 120, 20, 0.0);
    expect_partition(b, 120);
    EXPECT_FALSE(b.degenerate);
    for (const auto& bin : b.bins) EXPECT_FALSE(bin.empty());
}

TEST(Gating, RandomConfigurationsArePartitions) {
    std::mt19937_64 rng(2024);
    for (int t = 0; t < 500; ++t) {
        const int n = 1 + static_cast<int>(rng() % 12);
        const int k = 1 + static_cast<int>(rng() % 400);
        const double period = n + 0.5 + std::uniform_real_distribution<double>(0, 100)(rng);
        const double shift = std::uniform_real_distribution<double>(-10, 10)(rng);
        const auto b = breathing_phase_assignment(n, k, period, shift);
        expect_partition(b, k);
        EXPECT_NO_THROW(b.validate());
    }
}

TEST(Gating, ExtremeDwellMakesBinsUneven) {
    const auto b = breathing_phase_assignment(10, 680, 68, 0.0);
    expect_partition(b, 680);
    std::vector<int> counts;
    for (const auto& bin : b.bins) counts.push_back(static_cast<int>(bin.size()));
    const int mx = *std::max_element(counts.begin(), counts.end());
    const int mn = *std::min_element(counts.begin(), counts.end());
    ASSERT_GT(mn, 0);
    EXPECT_GE(static_cast<double>(mx) / mn, 1.5);
    // regression baseline
    EXPECT_EQ(counts, (std::vector<int>{102, 40, 50, 40, 100, 110, 40, 50, 40, 108}));
}

TEST(Gating, ConstantSignalIsDegenerate) {
    const std::vector<double> sig(30, 0.25);
    const std::vector<std::uint8_t> dir(30, 1);
    const auto b = bin_by_amplitude(sig, dir, 5);
    EXPECT_TRUE(b.degenerate);
    EXPECT_EQ(b.bins[0].size(), 30u);
    for (int p = 1; p < 5; ++p) EXPECT_TRUE(b.bins[static_cast<std::size_t>(p)].empty());
    expect_partition(b, 30);
}

TEST(Gating, InhaleExhaleSeparation) {
    // same amplitude, opposite directions, land in mirrored bins
    const std::vector<double> sig{0.0, 1.0, 0.3, 0.3};
    const std::vector<std::uint8_t> dir{1, 0, 1, 0};
    const auto b = bin_by_amplitude(sig, dir, 4);
    EXPECT_EQ(b.phase_of_view[0], 0);  // maximum exhale
    EXPECT_EQ(b.phase_of_view[1], 2);  // maximum inhale
    EXPECT_EQ(b.phase_of_view[2], 0);  // c = 0.15
    EXPECT_EQ(b.phase_of_view[3], 3);  // c = 0.85
}

TEST(Gating, Deterministic) {
    EXPECT_EQ(breathing_phase_assignment(6, 300, 37.5, 0.4).phase_of_view,
              breathing_phase_assignment(6, 300, 37.5, 0.4).phase_of_view);
}

TEST(Gating, Errors) {
    EXPECT_THROW(breathing_phase_assignment(4, 100, 4.0, 0.0), error);
    EXPECT_THROW(breathing_phase_assignment(4, 0, 20.0, 0.0), error);
    const std::vector<double> sig(3, 0.0);
    const std::vector<std::uint8_t> dir(2, 0);
    EXPECT_THROW(bin_by_amplitude(sig, dir, 2), error);

    PhaseBinning b = PhaseBinning::single(4);
    EXPECT_NO_THROW(b.validate());
    b.bins[0].push_back(2);
    EXPECT_THROW(b.validate(), error);
    b = PhaseBinning::single(4);
    b.bins[0].pop_back();
    EXPECT_THROW(b.validate(), error);
}
