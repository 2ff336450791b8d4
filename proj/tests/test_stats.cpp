#include <cstdint>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "tiershard/stats.hpp"
#include "tiershard/trace.hpp"

namespace fs = std::filesystem;
using namespace tiershard;

namespace {

// One table, lookups delivered in a single sample per row with the requested
// multiplicity.
AccessTrace trace_with_counts(std::int64_t rows, const std::vector<std::uint32_t>& counts) {
    AccessTrace trace;
    trace.tables.push_back(EmbTableSpec{0, rows, 4, 4, 1.0});
    trace.samples.assign(1, std::vector<Lookups>(1));
    for (std::size_t r = 0; r < counts.size(); ++r) {
        for (std::uint32_t c = 0; c < counts[r]; ++c) {
            trace.samples[0][0].push_back(static_cast<std::uint32_t>(r));
        }
    }
    return trace;
}

}  // namespace

TEST(Icdf, HandInvertedExample) {
    const AccessTrace trace = trace_with_counts(4, {80, 10, 5, 5});
    const TableStats stats = compute_cdf(trace, 0);
    ASSERT_EQ(stats.step, 4);
    ASSERT_EQ(stats.icdf.size(), 5u);
    EXPECT_DOUBLE_EQ(stats.icdf[0], 0.0);
    EXPECT_DOUBLE_EQ(stats.icdf[1], 0.25);  // one row covers 25% (it covers 80%)
    EXPECT_DOUBLE_EQ(stats.icdf[2], 0.25);
    EXPECT_DOUBLE_EQ(stats.icdf[3], 0.25);
    EXPECT_DOUBLE_EQ(stats.icdf[4], 1.0);
    EXPECT_DOUBLE_EQ(icdf_fraction(trace, 0, 0.8), 0.25);
    EXPECT_DOUBLE_EQ(icdf_fraction(trace, 0, 1.0), 1.0);
}

TEST(Icdf, SingleHotRowNeedsOneRowEverywhere) {
    std::vector<std::uint32_t> counts(1000, 0);
    counts[7] = 100;
    const AccessTrace trace = trace_with_counts(1000, counts);
    const TableStats stats = compute_cdf(trace, 0);
    ASSERT_EQ(stats.step, 100);
    EXPECT_DOUBLE_EQ(stats.icdf[0], 0.0);
    for (int i = 1; i <= stats.step; ++i) {
        EXPECT_DOUBLE_EQ(stats.icdf[static_cast<std::size_t>(i)], 0.001) << "grid point " << i;
    }
}

TEST(Icdf, UniformAccessIsTheIdentity) {
    for (std::int64_t rows : {100, 1000}) {
        const AccessTrace trace =
            trace_with_counts(rows, std::vector<std::uint32_t>(static_cast<std::size_t>(rows), 3));
        const TableStats stats = compute_cdf(trace, 0);
        for (int i = 0; i <= stats.step; ++i) {
            EXPECT_NEAR(stats.icdf[static_cast<std::size_t>(i)], static_cast<double>(i) / stats.step, 1e-12)
                << "rows " << rows << " grid " << i;
        }
    }
}

TEST(Icdf, ColdTableIsFlagged) {
    AccessTrace trace;
    trace.tables.push_back(EmbTableSpec{0, 10, 4, 4, 1.0});
    trace.tables.push_back(EmbTableSpec{1, 10, 4, 4, 1.0});
    trace.samples.assign(2, std::vector<Lookups>(2));
    trace.samples[0][0] = {1};
    const TableStats cold = compute_cdf(trace, 1);
    EXPECT_TRUE(cold.cold);
    for (double v : cold.icdf) EXPECT_DOUBLE_EQ(v, 0.0);
    EXPECT_FALSE(compute_cdf(trace, 0).cold);
}

// With step == rows there is no interpolation: the selected hottest rows must
// cover the grid fraction, and one row fewer must not.
TEST(Icdf, MinimalityPropertyOnSmallTables) {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 20; ++trial) {
        const std::int64_t rows = 3 + static_cast<std::int64_t>(rng() % 98);
        std::vector<std::uint32_t> counts(static_cast<std::size_t>(rows));
        for (auto& c : counts) c = static_cast<std::uint32_t>(rng() % 50);
        const AccessTrace trace = trace_with_counts(rows, counts);
        const TableStats stats = compute_cdf(trace, 0);
        if (stats.cold) continue;

        std::vector<std::uint64_t> sorted(counts.begin(), counts.end());
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        std::vector<std::uint64_t> prefix(sorted.size() + 1, 0);
        for (std::size_t k = 0; k < sorted.size(); ++k) prefix[k + 1] = prefix[k] + sorted[k];
        const std::uint64_t total = prefix.back();

        ASSERT_EQ(stats.step, rows);
        for (int i = 0; i <= stats.step; ++i) {
            const auto k = static_cast<std::size_t>(stats.icdf_rows(i, rows));
            // coverage of the k hottest rows reaches i/step of all accesses
            EXPECT_GE(prefix[k] * static_cast<std::uint64_t>(stats.step),
                      static_cast<std::uint64_t>(i) * total);
            if (k > 0) {
                EXPECT_LT(prefix[k - 1] * static_cast<std::uint64_t>(stats.step),
                          static_cast<std::uint64_t>(i) * total);
            }
        }
        EXPECT_TRUE(std::is_sorted(stats.icdf.begin(), stats.icdf.end()));
    }
}

TEST(PoolingFactor, MatchesBruteForceMean) {
    AccessTrace trace;
    trace.tables.push_back(EmbTableSpec{0, 8, 4, 4, 1.0});
    trace.samples.assign(2, std::vector<Lookups>(1));
    trace.samples[0][0] = {0, 1};
    trace.samples[1][0] = {3};
    EXPECT_DOUBLE_EQ(compute_pf(trace, 0), 1.5);

    AccessTrace empty;
    empty.tables.push_back(EmbTableSpec{0, 8, 4, 4, 1.0});
    empty.samples.assign(5, std::vector<Lookups>(1));
    EXPECT_DOUBLE_EQ(compute_pf(empty, 0), 0.0);

    std::mt19937_64 rng(4);
    AccessTrace random;
    random.tables.push_back(EmbTableSpec{0, 16, 4, 4, 1.0});
    random.samples.assign(64, std::vector<Lookups>(1));
    std::uint64_t total = 0;
    for (auto& s : random.samples) {
        const std::size_t n = rng() % 6;
        for (std::size_t i = 0; i < n; ++i) s[0].push_back(static_cast<std::uint32_t>(rng() % 16));
        total += n;
    }
    EXPECT_DOUBLE_EQ(compute_pf(random, 0), static_cast<double>(total) / 64.0);
}

TEST(Hotness, OrderBreaksTiesByAscendingIndex) {
    const AccessTrace trace = trace_with_counts(6, {5, 9, 5, 0, 9, 0});
    const auto order = hotness_order(trace, 0);
    EXPECT_EQ(order, (std::vector<std::uint32_t>{1, 4, 0, 2, 3, 5}));
}

TEST(TtCurve, CompressionFixture4096x64) {
    EmbTableSpec spec{0, 4096, 64, 4, 1.0};
    TableStats stats;
    stats.step = 100;
    stats.icdf.assign(101, 0.0);
    compute_tt_cm_curve(spec, stats, 4, 3);

    // Shape-enumeration oracle: factors 16^3 and 4^3, ranks 1,4,4,1.
    const std::int64_t I[3] = {16, 16, 16};
    const std::int64_t J[3] = {4, 4, 4};
    const std::int64_t R[4] = {1, 4, 4, 1};
    std::int64_t params = 0;
    for (int k = 0; k < 3; ++k) params += R[k] * I[k] * J[k] * R[k + 1];
    ASSERT_EQ(params, 1536);
    EXPECT_DOUBLE_EQ(stats.tt_cm[100], static_cast<double>(params * 4));
    EXPECT_DOUBLE_EQ(stats.tt_cm[100], 6144.0);

    // Element-count compression ratio of the full table.
    const double cr = static_cast<double>(4096 * 64) / static_cast<double>(params);
    EXPECT_NEAR(cr, 170.7, 0.1);
}

TEST(TtCurve, StartsAtZeroAndGrowsMonotonically) {
    std::mt19937_64 rng(12);
    for (int trial = 0; trial < 30; ++trial) {
        EmbTableSpec spec{0, 1 + static_cast<std::int64_t>(rng() % 50000), 1 << (rng() % 7), 4, 1.0};
        TableStats stats;
        stats.step = static_cast<int>(std::min<std::int64_t>(spec.rows, 100));
        stats.icdf.assign(static_cast<std::size_t>(stats.step) + 1, 0.0);
        const std::int64_t rank = 1 + static_cast<std::int64_t>(rng() % 8);
        const int d = 2 + static_cast<int>(rng() % 3);
        compute_tt_cm_curve(spec, stats, rank, d);
        ASSERT_EQ(stats.tt_cm.size(), static_cast<std::size_t>(stats.step) + 1);
        EXPECT_DOUBLE_EQ(stats.tt_cm[0], 0.0);
        for (int i = 1; i <= stats.step; ++i) {
            EXPECT_GE(stats.tt_cm[static_cast<std::size_t>(i)], stats.tt_cm[static_cast<std::size_t>(i) - 1])
                << "rows " << spec.rows << " rank " << rank << " d " << d << " at " << i;
        }
    }
}

TEST(TtCurve, RankOneDegenerateFactorsCollapse) {
    TTShape shape;
    shape.row_factors = {9, 1, 1};
    shape.col_factors = {5, 1, 1};
    shape.ranks = {1, 1, 1, 1};
    std::int64_t expected = 0;
    for (int k = 0; k < 3; ++k) expected += shape.row_factors[k] * shape.col_factors[k];
    EXPECT_EQ(shape.param_count(), expected);
}

TEST(TtCurve, UnbalancedDimFallsBackToUnitFactors) {
    // 13 is prime: the exact factorization degrades to {13,1,1}.
    const auto f = factor_exact(13, 3);
    EXPECT_EQ(f, (std::vector<std::int64_t>{13, 1, 1}));
    EmbTableSpec spec{0, 64, 13, 4, 1.0};
    TableStats stats;
    stats.step = 64;
    stats.icdf.assign(65, 0.0);
    compute_tt_cm_curve(spec, stats, 2, 3);
    EXPECT_GT(stats.tt_cm[64], 0.0);
}

TEST(StatsFile, JsonRoundTrip) {
    const AccessTrace trace = trace_with_counts(40, std::vector<std::uint32_t>(40, 2));
    auto stats = analyze_trace(trace, 4, 3);
    ASSERT_EQ(stats.size(), 1u);
    const auto path = fs::path(::testing::TempDir()) / "stats.json";
    save_stats(stats, path);
    const auto loaded = load_stats(path);
    ASSERT_EQ(loaded.size(), 1u);
    EXPECT_EQ(loaded[0].table_id, stats[0].table_id);
    EXPECT_EQ(loaded[0].step, stats[0].step);
    EXPECT_EQ(loaded[0].icdf, stats[0].icdf);
    EXPECT_EQ(loaded[0].tt_cm, stats[0].tt_cm);
    EXPECT_EQ(loaded[0].total_accesses, stats[0].total_accesses);
    EXPECT_DOUBLE_EQ(loaded[0].avg_pf, stats[0].avg_pf);
}

TEST(HotCapPolicy, SmallTablesAreFullyCacheable) {
    // Shaped like the larger production sets: hundreds of tables, a multi-
    // million-row maximum, and a long tail of tiny tables.
    std::vector<EmbTableSpec> specs;
    for (int t = 0; t < 856; ++t) {
        specs.push_back(EmbTableSpec{t, 100 + 3000 * static_cast<std::int64_t>(t), 64, 4, 0.5});
    }
    specs.back().rows = 2720716;
    apply_hot_cap_policy(specs);
    const double cutoff = 1e-4 * 2720716.0;
    for (const auto& s : specs) {
        if (static_cast<double>(s.rows) < cutoff) {
            EXPECT_DOUBLE_EQ(s.hot_cap, 1.0) << "rows " << s.rows;
        } else {
            EXPECT_DOUBLE_EQ(s.hot_cap, 0.99) << "rows " << s.rows;
        }
    }
}
