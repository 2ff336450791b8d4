#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "tiershard/stats.hpp"
#include "tiershard/tt.hpp"

namespace fs = std::filesystem;
using namespace tiershard;

namespace {

std::vector<float> random_matrix(std::int64_t rows, std::int64_t cols, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<float> dist(-1.0f, 1.0f);
    std::vector<float> m(static_cast<std::size_t>(rows * cols));
    for (auto& v : m) v = dist(rng);
    return m;
}

double max_abs_row_diff(const std::vector<float>& mat, std::int64_t dim, std::int64_t row,
                        const std::vector<float>& rec) {
    double worst = 0.0;
    for (std::int64_t j = 0; j < dim; ++j) {
        worst = std::max(worst, std::abs(static_cast<double>(mat[static_cast<std::size_t>(row * dim + j)]) -
                                         rec[static_cast<std::size_t>(j)]));
    }
    return worst;
}

// Independent scalar evaluator: one element at a time, multiplying the
// rank-by-rank core slices selected by the row and column digits. Shares no
// code with the library's chain reconstruction.
double naive_element(const TTCores& tt, std::int64_t row, std::int64_t col) {
    const auto& s = tt.shape;
    const int d = s.order();
    std::vector<std::int64_t> id(static_cast<std::size_t>(d)), jd(static_cast<std::size_t>(d));
    std::int64_t r = row, c = col;
    for (int k = d - 1; k >= 0; --k) {
        id[static_cast<std::size_t>(k)] = r % s.row_factors[static_cast<std::size_t>(k)];
        r /= s.row_factors[static_cast<std::size_t>(k)];
        jd[static_cast<std::size_t>(k)] = c % s.col_factors[static_cast<std::size_t>(k)];
        c /= s.col_factors[static_cast<std::size_t>(k)];
    }
    std::vector<double> vec{1.0};  // running 1 x R_k product
    for (int k = 0; k < d; ++k) {
        const std::int64_t rk_prev = s.ranks[static_cast<std::size_t>(k)];
        const std::int64_t rk = s.ranks[static_cast<std::size_t>(k) + 1];
        const std::int64_t ik = id[static_cast<std::size_t>(k)];
        const std::int64_t jk = jd[static_cast<std::size_t>(k)];
        std::vector<double> next(static_cast<std::size_t>(rk), 0.0);
        for (std::int64_t a = 0; a < rk_prev; ++a) {
            for (std::int64_t b = 0; b < rk; ++b) {
                const std::size_t idx = static_cast<std::size_t>(
                    (((a * s.row_factors[static_cast<std::size_t>(k)] + ik) *
                          s.col_factors[static_cast<std::size_t>(k)] +
                      jk) *
                     rk) +
                    b);
                next[static_cast<std::size_t>(b)] += vec[static_cast<std::size_t>(a)] *
                                                     tt.cores[static_cast<std::size_t>(k)][idx];
            }
        }
        vec = std::move(next);
    }
    return vec[0];
}

}  // namespace

TEST(TtShape, FactorHelpersProduceValidShapes) {
    EXPECT_EQ(factor_near_equal(4096, 3), (std::vector<std::int64_t>{16, 16, 16}));
    EXPECT_EQ(factor_exact(64, 3), (std::vector<std::int64_t>{4, 4, 4}));
    const auto f = factor_near_equal(4097, 3);
    std::int64_t prod = 1;
    for (auto v : f) prod *= v;
    EXPECT_GE(prod, 4097);

    const TTShape shape = make_tt_shape(4096, 64, 3, 4);
    EXPECT_EQ(shape.param_count(), 1536);
    EXPECT_EQ(shape.padded_rows(), 4096);
    EXPECT_EQ(shape.dim(), 64);
}

TEST(TtShape, DigitsAreABijection) {
    std::mt19937_64 rng(17);
    for (int trial = 0; trial < 10; ++trial) {
        TTShape shape = make_tt_shape(1 + static_cast<std::int64_t>(rng() % 500), 8, 2 + static_cast<int>(rng() % 3), 3);
        const std::int64_t n = shape.padded_rows();
        std::vector<bool> seen(static_cast<std::size_t>(n), false);
        for (std::int64_t i = 0; i < n; ++i) {
            const auto digits = row_digits(shape, i);
            for (int k = 0; k < shape.order(); ++k) {
                ASSERT_LT(digits[static_cast<std::size_t>(k)], shape.row_factors[static_cast<std::size_t>(k)]);
                ASSERT_GE(digits[static_cast<std::size_t>(k)], 0);
            }
            const std::int64_t back = row_from_digits(shape, digits);
            ASSERT_EQ(back, i);
            ASSERT_FALSE(seen[static_cast<std::size_t>(back)]);
            seen[static_cast<std::size_t>(back)] = true;
        }
    }
}

TEST(TtDecompose, FullRankReconstructsExactly) {
    const std::int64_t rows = 30, dim = 8;
    const auto mat = random_matrix(rows, dim, 1);
    const TTCores tt = decompose(mat, rows, dim, 3, 1024);
    EXPECT_LT(reconstruction_error(mat, rows, dim, tt), 1e-5);
    for (std::int64_t i = 0; i < rows; ++i) {
        EXPECT_LT(max_abs_row_diff(mat, dim, i, reconstruct_row(tt, i)), 1e-5) << "row " << i;
    }
}

// Rank-1 structure is TT-rank-1 representable when it is separable over the
// digit factorization; exponential profiles are separable for any split.
TEST(TtDecompose, SeparableRankOneMatrixNeedsRankOne) {
    const std::int64_t rows = 16, dim = 4;
    std::vector<float> mat(static_cast<std::size_t>(rows * dim));
    for (std::int64_t i = 0; i < rows; ++i) {
        for (std::int64_t j = 0; j < dim; ++j) {
            mat[static_cast<std::size_t>(i * dim + j)] =
                static_cast<float>(std::pow(0.9, static_cast<double>(i)) * std::pow(1.5, static_cast<double>(j)));
        }
    }
    const TTCores tt = decompose(mat, rows, dim, 2, 1);
    EXPECT_EQ(tt.shape.ranks, (std::vector<std::int64_t>{1, 1, 1}));
    EXPECT_LT(reconstruction_error(mat, rows, dim, tt), 1e-5);
}

TEST(TtDecompose, ZeroMatrixGivesZeroCores) {
    const std::vector<float> zeros(24 * 4, 0.0f);
    const TTCores tt = decompose(zeros, 24, 4, 3, 4);
    for (const auto& core : tt.cores) {
        for (float x : core) EXPECT_EQ(x, 0.0f);
    }
    EXPECT_NEAR(reconstruction_error(zeros, 24, 4, tt), 0.0, 1e-9);
}

TEST(TtReconstruct, SingleCoreReturnsRowsVerbatim) {
    const std::int64_t rows = 6, dim = 4;
    const auto mat = random_matrix(rows, dim, 3);
    TTShape shape;
    shape.row_factors = {rows};
    shape.col_factors = {dim};
    shape.ranks = {1, 1};
    const TTCores tt = decompose(mat, rows, dim, shape);
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto rec = reconstruct_row(tt, i);
        for (std::int64_t j = 0; j < dim; ++j) {
            EXPECT_FLOAT_EQ(rec[static_cast<std::size_t>(j)], mat[static_cast<std::size_t>(i * dim + j)]);
        }
    }
}

TEST(TtReconstruct, EightByFourAllRows) {
    const auto mat = random_matrix(8, 4, 4);
    const TTCores tt = decompose(mat, 8, 4, 2, 64);
    for (std::int64_t i = 0; i < 8; ++i) {
        EXPECT_LT(max_abs_row_diff(mat, 4, i, reconstruct_row(tt, i)), 1e-5);
    }
}

TEST(TtReconstruct, MaxIndexDigitsDoNotOverflow) {
    const auto mat = random_matrix(27, 8, 5);
    const TTCores tt = decompose(mat, 27, 8, 3, 64);
    const std::int64_t last = tt.shape.padded_rows() - 1;
    const auto digits = row_digits(tt.shape, last);
    for (int k = 0; k < tt.shape.order(); ++k) {
        EXPECT_EQ(digits[static_cast<std::size_t>(k)], tt.shape.row_factors[static_cast<std::size_t>(k)] - 1);
    }
    EXPECT_NO_THROW(reconstruct_row(tt, last));
    EXPECT_THROW(reconstruct_row(tt, last + 1), bounds_error);
}

TEST(TtBatch, DuplicatesEmptyAndFullAgree) {
    const std::int64_t rows = 12, dim = 4;
    const auto mat = random_matrix(rows, dim, 6);
    const TTCores tt = decompose(mat, rows, dim, 2, 64);

    const std::vector<std::int64_t> dup{5, 5};
    const auto two = reconstruct_batch(tt, dup);
    for (std::int64_t j = 0; j < dim; ++j) {
        EXPECT_FLOAT_EQ(two[static_cast<std::size_t>(j)], two[static_cast<std::size_t>(dim + j)]);
    }

    std::vector<std::int64_t> all(static_cast<std::size_t>(rows));
    for (std::int64_t i = 0; i < rows; ++i) all[static_cast<std::size_t>(i)] = i;
    const auto full = reconstruct_batch(tt, all);
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto row = reconstruct_row(tt, i);
        for (std::int64_t j = 0; j < dim; ++j) {
            EXPECT_FLOAT_EQ(full[static_cast<std::size_t>(i * dim + j)], row[static_cast<std::size_t>(j)]);
       }
    }

    const auto empty = reconstruct_batch(tt, std::vector<std::int64_t>{});
    EXPECT_TRUE(empty.empty());

    EXPECT_THROW(reconstruct_batch(tt, std::vector<std::int64_t>{0, tt.shape.padded_rows()}), bounds_error);
}

TEST(TtError, ExactAndMonotoneOverRankSweep) {
    const std::int64_t rows = 32, dim = 8;
    const auto mat = random_matrix(rows, dim, 7);

    const TTCores exact = decompose(mat, rows, dim, 3, 1024);
    EXPECT_NEAR(reconstruction_error(mat, rows, dim, exact), 0.0, 1e-6);

    double prev = std::numeric_limits<double>::infinity();
    for (std::int64_t rank = 1; rank <= 32; rank *= 2) {
        const double err = reconstruction_error(mat, rows, dim, decompose(mat, rows, dim, 3, rank));
        EXPECT_LE(err, prev + 1e-9) << "rank " << rank;
        prev = err;
    }

    const double err4 = reconstruction_error(mat, rows, dim, decompose(mat, rows, dim, 3, 4));
    const double err32 = reconstruction_error(mat, rows, dim, decompose(mat, rows, dim, 3, 32));
    EXPECT_LE(err32, err4 + 1e-9);
}

TEST(TtAlgorithm, ChainProductMatchesNaiveScalarEvaluation) {
    std::mt19937_64 rng(8);
    for (int trial = 0; trial < 5; ++trial) {
        const std::int64_t rows = 2 + static_cast<std::int64_t>(rng() % 63);
        const std::int64_t dim = 1 + static_cast<std::int64_t>(rng() % 16);
        const auto mat = random_matrix(rows, dim, 100 + static_cast<std::uint64_t>(trial));
        const int d = 2 + static_cast<int>(rng() % 2);
        const std::int64_t rank = 1 + static_cast<std::int64_t>(rng() % 6);
        const TTCores tt = decompose(mat, rows, dim, d, rank);
        for (std::int64_t i = 0; i < rows; ++i) {
            const auto rec = reconstruct_row(tt, i);
            for (std::int64_t j = 0; j < dim; ++j) {
                EXPECT_NEAR(rec[static_cast<std::size_t>(j)], naive_element(tt, i, j), 1e-5)
                    << "rows " << rows << " dim " << dim << " d " << d << " rank " << rank << " at (" << i
                    << "," << j << ")";
            }
        }
    }
}

TEST(TtSize, CoreBytesMatchTheSizeCurve) {
    EmbTableSpec spec{0, 500, 16, 4, 1.0};
    TableStats stats;
    stats.step = 100;
    stats.icdf.assign(101, 0.0);
    compute_tt_cm_curve(spec, stats, 4, 3);

    const auto mat = random_matrix(500, 16, 9);
    const TTCores tt = decompose(mat, 500, 16, 3, 4);
    EXPECT_DOUBLE_EQ(static_cast<double>(tt.param_count() * spec.elem_bytes), stats.tt_cm[100]);
    EXPECT_EQ(tt.param_count(), tt.shape.param_count());
}

TEST(TtFile, RoundTripIsBitExact) {
    const auto mat = random_matrix(40, 8, 10);
    const TTCores tt = decompose(mat, 40, 8, 3, 4);
    const auto path = fs::path(::testing::TempDir()) / "cores.ttc";
    save_tt_cores(tt, path);
    const TTCores loaded = load_tt_cores(path);
    EXPECT_EQ(loaded.shape.row_factors, tt.shape.row_factors);
    EXPECT_EQ(loaded.shape.col_factors, tt.shape.col_factors);
    EXPECT_EQ(loaded.shape.ranks, tt.shape.ranks);
    ASSERT_EQ(loaded.cores.size(), tt.cores.size());
    for (std::size_t k = 0; k < tt.cores.size(); ++k) {
        ASSERT_EQ(loaded.cores[k].size(), tt.cores[k].size());
        for (std::size_t i = 0; i < tt.cores[k].size(); ++i) {
            EXPECT_EQ(loaded.cores[k][i], tt.cores[k][i]);
        }
    }
}
