#pragma once

// Tensor-train compression of embedding-table regions.
//
// A rows x dim table region is reshaped into a d-way tensor whose mode k
// combines a row factor I_k with a column factor J_k (mode size I_k*J_k),
// then decomposed into d cores G_k of extents (R_{k-1}, I_k, J_k, R_k) by
// sequential truncated SVD. A single row is rebuilt as the chain product of
// the per-core slices selected by the row's mixed-radix digits, reshaping the
// running product to (-1, rank) between stages. Storage is 32-bit float,
// accumulation 64-bit.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <span>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/SVD>

#include "tiershard/common.hpp"

namespace tiershard {

namespace detail {

inline std::int64_t ipow_at_least(std::int64_t base, int exp, std::int64_t limit) {
    std::int64_t v = 1;
    for (int i = 0; i < exp; ++i) {
        v *= base;
        if (v >= limit) return limit;
    }
    return v;
}

inline std::int64_t sat_mul(std::int64_t a, std::int64_t b) {
    constexpr std::int64_t cap = std::int64_t{1} << 40;
    if (a > cap / std::max<std::int64_t>(b, 1)) return cap;
    return std::min(a * b, cap);
}

}  // namespace detail

// d near-equal integer factors with product >= n: each factor is the ceiling
// d'-th root of what remains.
inline std::vector<std::int64_t> factor_near_equal(std::int64_t n, int d) {
    if (n < 1 || d < 1) throw config_error("factor_near_equal: need n >= 1, d >= 1");
    std::vector<std::int64_t> f(static_cast<std::size_t>(d), 1);
    std::int64_t remaining = n;
    for (int k = 0; k < d; ++k) {
        const int left = d - k;
        auto root = static_cast<std::int64_t>(
            std::ceil(std::pow(static_cast<double>(remaining), 1.0 / left) - 1e-9));
        root = std::max<std::int64_t>(root, 1);
        while (detail::ipow_at_least(root, left, remaining) < remaining) ++root;
        f[static_cast<std::size_t>(k)] = root;
        remaining = (remaining + root - 1) / root;
    }
    return f;
}

// d integer factors with product exactly n, as balanced as the divisor
// structure allows (prime n degrades to n,1,...,1).
inline std::vector<std::int64_t> factor_exact(std::int64_t n, int d) {
    if (n < 1 || d < 1) throw config_error("factor_exact: need n >= 1, d >= 1");
    std::vector<std::int64_t> f(static_cast<std::size_t>(d), 1);
    std::int64_t remaining = n;
    for (int k = 0; k < d; ++k) {
        const int left = d - k;
        if (left == 1) {
            f[static_cast<std::size_t>(k)] = remaining;
            break;
        }
        auto target = static_cast<std::int64_t>(
            std::ceil(std::pow(static_cast<double>(remaining), 1.0 / left) - 1e-9));
        target = std::max<std::int64_t>(target, 1);
        std::int64_t pick = remaining;
        for (std::int64_t c = target; c < remaining; ++c) {
            if (remaining % c == 0) {
                pick = c;
                break;
            }
        }
        f[static_cast<std::size_t>(k)] = pick;
        remaining /= pick;
    }
    return f;
}

struct TTShape {
    std::vector<std::int64_t> row_factors;  // I_k, product >= region rows
    std::vector<std::int64_t> col_factors;  // J_k, product == dim
    std::vector<std::int64_t> ranks;        // R_0..R_d with R_0 = R_d = 1

    int order() const { return static_cast<int>(row_factors.size()); }

    std::int64_t padded_rows() const {
        return std::accumulate(row_factors.begin(), row_factors.end(), std::int64_t{1}, std::multiplies<>());
    }

    std::int64_t dim() const {
        return std::accumulate(col_factors.begin(), col_factors.end(), std::int64_t{1}, std::multiplies<>());
    }

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (int k = 0; k < order(); ++k) {
            total += ranks[k] * row_factors[k] * col_factors[k] * ranks[k + 1];
        }
        return total;
    }

    void validate() const {
        const auto d = row_factors.size();
        if (d == 0) throw config_error("TTShape: empty");
        if (col_factors.size() != d || ranks.size() != d + 1)
            throw config_error("TTShape: factor/rank length mismatch");
        if (ranks.front() != 1 || ranks.back() != 1)
            throw config_error("TTShape: boundary ranks must be 1");
        for (std::size_t k = 0; k < d; ++k) {
            if (row_factors[k] < 1 || col_factors[k] < 1 || ranks[k + 1] < 1)
                throw config_error("TTShape: factors and ranks must be >= 1");
        }
    }
};

// Canonical shape for a region: near-equal row factors (padded), exact column
// factors, internal ranks clamped to what sequential SVD can actually attain.
inline TTShape make_tt_shape(std::int64_t region_rows, std::int64_t dim, int d, std::int64_t max_rank) {
    if (d < 1) throw config_error("make_tt_shape: d must be >= 1");
    if (max_rank < 1) throw config_error("make_tt_shape: max_rank must be >= 1");
    TTShape s;
    s.row_factors = factor_near_equal(std::max<std::int64_t>(region_rows, 1), d);
    s.col_factors = factor_exact(dim, d);
    s.ranks.assign(static_cast<std::size_t>(d) + 1, 1);
    for (int k = 1; k < d; ++k) {
        // Attainable rank at this boundary: the stage matrix is
        // (R_{k-1} * I_k * J_k) x (product of the remaining mode sizes).
        const std::int64_t left =
            detail::sat_mul(s.ranks[static_cast<std::size_t>(k - 1)], s.row_factors[k - 1] * s.col_factors[k - 1]);
        std::int64_t right = 1;
        for (int l = k; l < d; ++l) right = detail::sat_mul(right, s.row_factors[l] * s.col_factors[l]);
        s.ranks[static_cast<std::size_t>(k)] = std::min({max_rank, left, right});
    }
    return s;
}

// Big-endian mixed-radix digits of a row index over the row factors.
inline std::vector<std::int64_t> row_digits(const TTShape& shape, std::int64_t row) {
    const int d = shape.order();
    std::vector<std::int64_t> digits(static_cast<std::size_t>(d));
    std::int64_t rem = row;
    for (int k = d - 1; k >= 0; --k) {
        digits[static_cast<std::size_t>(k)] = rem % shape.row_factors[static_cast<std::size_t>(k)];
        rem /= shape.row_factors[static_cast<std::size_t>(k)];
    }
    return digits;
}

inline std::int64_t row_from_digits(const TTShape& shape, std::span<const std::int64_t> digits) {
    std::int64_t row = 0;
    for (int k = 0; k < shape.order(); ++k) {
        row = row * shape.row_factors[static_cast<std::size_t>(k)] + digits[static_cast<std::size_t>(k)];
    }
    return row;
}

struct TTCores {
    TTShape shape;
    // cores[k] holds G_k row-major over (R_{k-1}, I_k, J_k, R_k).
    std::vector<std::vector<float>> cores;

    std::int64_t param_count() const {
        std::int64_t total = 0;
        for (const auto& c : cores) total += static_cast<std::int64_t>(c.size());
        return total;
    }
};

namespace detail {

using RowMajorMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace detail

// TT-SVD. The region is zero-padded up to the factor product; per stage the
// working matrix is SVD'd, the left factor becomes a core, and the truncated
// S*V^T carries on.
inline TTCores decompose(std::span<const float> region, std::int64_t rows, std::int64_t dim,
                         const TTShape& shape) {
    shape.validate();
    if (dim != shape.dim())
        throw config_error("decompose: dim " + std::to_string(dim) + " does not match shape dim " +
                           std::to_string(shape.dim()));
    if (rows > shape.padded_rows())
        throw config_error("decompose: rows " + std::to_string(rows) + " exceed shape capacity " +
                           std::to_string(shape.padded_rows()));
    if (static_cast<std::int64_t>(region.size()) != rows * dim)
        throw config_error("decompose: region size does not equal rows*dim");

    const int d = shape.order();
    const std::int64_t padded = shape.padded_rows();

    // Scatter E(i, j) into the mode-major tensor layout: mode digit
    // m_k = i_k * J_k + j_k, linearized big-endian.
    std::vector<std::int64_t> mode_size(static_cast<std::size_t>(d));
    for (int k = 0; k < d; ++k) mode_size[k] = shape.row_factors[k] * shape.col_factors[k];

    std::vector<double> work(static_cast<std::size_t>(padded * dim), 0.0);
    {
        std::vector<std::int64_t> istride(static_cast<std::size_t>(d)), jstride(static_cast<std::size_t>(d)),
            mstride(static_cast<std::size_t>(d));
        std::int64_t acc = 1;
        for (int k = d - 1; k >= 0; --k) {
            istride[k] = acc;
            acc *= shape.row_factors[k];
        }
        acc = 1;
        for (int k = d - 1; k >= 0; --k) {
            jstride[k] = acc;
            acc *= shape.col_factors[k];
        }
        acc = 1;
        for (int k = d - 1; k >= 0; --k) {
            mstride[k] = acc;
            acc *= mode_size[k];
        }
        for (std::int64_t i = 0; i < rows; ++i) {
            for (std::int64_t j = 0; j < dim; ++j) {
                std::int64_t lin = 0;
                for (int k = 0; k < d; ++k) {
                    const std::int64_t ik = (i / istride[k]) % shape.row_factors[k];
                    const std::int64_t jk = (j / jstride[k]) % shape.col_factors[k];
                    lin += (ik * shape.col_factors[k] + jk) * mstride[k];
                }
                work[static_cast<std::size_t>(lin)] = static_cast<double>(region[static_cast<std::size_t>(i * dim + j)]);
            }
        }
    }

    TTCores result;
    result.shape = shape;
    result.cores.resize(static_cast<std::size_t>(d));

    std::int64_t r_prev = 1;
    std::int64_t rest = padded * dim;
    bool zero_tail = false;
    for (int k = 0; k < d - 1; ++k) {
        const std::int64_t nrows = r_prev * mode_size[k];
        rest /= mode_size[k];
        const std::int64_t r_k = shape.ranks[k + 1];
        auto& core = result.cores[static_cast<std::size_t>(k)];
        core.assign(static_cast<std::size_t>(nrows * r_k), 0.0f);

        if (!zero_tail) {
            Eigen::Map<const detail::RowMajorMatrix> m(work.data(), nrows, rest);
            if (m.norm() == 0.0) {
                zero_tail = true;
            } else {
                Eigen::MatrixXd dense = m;
                Eigen::BDCSVD<Eigen::MatrixXd> svd(dense, Eigen::ComputeThinU | Eigen::ComputeThinV);
                const std::int64_t take = std::min<std::int64_t>(r_k, svd.singularValues().size());
                for (std::int64_t r = 0; r < nrows; ++r) {
                    for (std::int64_t c = 0; c < take; ++c) {
                        core[static_cast<std::size_t>(r * r_k + c)] = static_cast<float>(svd.matrixU()(r, c));
                    }
                }
                Eigen::MatrixXd carry = svd.singularValues().head(take).asDiagonal() *
                                        svd.matrixV().leftCols(take).transpose();
                work.assign(static_cast<std::size_t>(r_k * rest), 0.0);
                for (std::int64_t r = 0; r < take; ++r) {
                    for (std::int64_t c = 0; c < rest; ++c) {
                        work[static_cast<std::size_t>(r * rest + c)] = carry(r, c);
                    }
                }
            }
        }
        if (zero_tail) {
            work.assign(static_cast<std::size_t>(r_k * rest), 0.0);
        }
        r_prev = r_k;
    }
    // Last core is whatever remains.
    {
        auto& core = result.cores[static_cast<std::size_t>(d - 1)];
        const std::int64_t n = r_prev * mode_size[static_cast<std::size_t>(d - 1)];
        core.resize(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) core[static_cast<std::size_t>(i)] = static_cast<float>(work[static_cast<std::size_t>(i)]);
    }
    return result;
}

inline TTCores decompose(std::span<const float> region, std::int64_t rows, std::int64_t dim, int d,
                         std::int64_t max_rank) {
    return decompose(region, rows, dim, make_tt_shape(rows, dim, d, max_rank));
}

// Sequential per-slice matrix products; the running product is reshaped to
// (-1, rank) between stages and to (dim) at the end.
inline std::vector<float> reconstruct_row(const TTCores& tt, std::int64_t row) {
    const TTShape& shape = tt.shape;
    const int d = shape.order();
    if (row < 0 || row >= shape.padded_rows())
        throw bounds_error("reconstruct_row: index " + std::to_string(row) + " out of range " +
                           std::to_string(shape.padded_rows()));
    const auto digits = row_digits(shape, row);

    // acc starts as the first slice, (J_1 x R_1).
    std::vector<double> acc;
    std::int64_t acc_rows = shape.col_factors[0];
    std::int64_t acc_cols = shape.ranks[1];
    acc.resize(static_cast<std::size_t>(acc_rows * acc_cols));
    {
        const auto& core = tt.cores[0];
        const std::int64_t i1 = digits[0];
        for (std::int64_t j = 0; j < acc_rows; ++j) {
            for (std::int64_t b = 0; b < acc_cols; ++b) {
                acc[static_cast<std::size_t>(j * acc_cols + b)] =
                    core[static_cast<std::size_t>(((i1 * shape.col_factors[0]) + j) * shape.ranks[1] + b)];
            }
        }
    }

    for (int k = 1; k < d; ++k) {
        const std::int64_t rk_prev = shape.ranks[k];
        const std::int64_t jk = shape.col_factors[k];
        const std::int64_t rk = shape.ranks[k + 1];
        const std::int64_t slice_cols = jk * rk;
        const auto& core = tt.cores[static_cast<std::size_t>(k)];
        const std::int64_t ik = digits[static_cast<std::size_t>(k)];
        // slice (R_{k-1} x J_k*R_k) at digit ik, row-major within the core.
        const auto slice_at = [&](std::int64_t a, std::int64_t c) -> double {
            const std::int64_t j = c / rk;
            const std::int64_t b = c % rk;
            return core[static_cast<std::size_t>((((a * shape.row_factors[k]) + ik) * jk + j) * rk + b)];
        };
        std::vector<double> next(static_cast<std::size_t>(acc_rows * slice_cols), 0.0);
        for (std::int64_t r = 0; r < acc_rows; ++r) {
            for (std::int64_t a = 0; a < rk_prev; ++a) {
                const double v = acc[static_cast<std::size_t>(r * acc_cols + a)];
                if (v == 0.0) continue;
                for (std::int64_t c = 0; c < slice_cols; ++c) {
                    next[static_cast<std::size_t>(r * slice_cols + c)] += v * slice_at(a, c);
                }
            }
        }
        acc = std::move(next);
        acc_rows *= jk;  // reshape (acc_rows*J_k, R_k)
        acc_cols = rk;
    }

    std::vector<float> out(static_cast<std::size_t>(shape.dim()));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(acc[i]);
    return out;
}

// Bounds are checked for the whole batch before any row is produced.
inline std::vector<float> reconstruct_batch(const TTCores& tt, std::span<const std::int64_t> indices) {
    const std::int64_t limit = tt.shape.padded_rows();
    for (std::int64_t idx : indices) {
        if (idx < 0 || idx >= limit)
            throw bounds_error("reconstruct_batch: index " + std::to_string(idx) + " out of range " +
                               std::to_string(limit));
    }
    const std::int64_t dim = tt.shape.dim();
    std::vector<float> out(indices.size() * static_cast<std::size_t>(dim));
    for (std::size_t r = 0; r < indices.size(); ++r) {
        const auto row = reconstruct_row(tt, indices[r]);
        std::copy(row.begin(), row.end(), out.begin() + static_cast<std::ptrdiff_t>(r * static_cast<std::size_t>(dim)));
    }
    return out;
}

// Relative Frobenius error over the real (unpadded) rows; absolute norm when
// the reference region is all zeros.
inline double reconstruction_error(std::span<const float> region, std::int64_t rows, std::int64_t dim,
                                   const TTCores& tt) {
    if (static_cast<std::int64_t>(region.size()) != rows * dim)
        throw config_error("reconstruction_error: region size does not equal rows*dim");
    if (dim != tt.shape.dim()) throw config_error("reconstruction_error: dim mismatch");
    double num = 0.0;
    double den = 0.0;
    for (std::int64_t i = 0; i < rows; ++i) {
        const auto rec = reconstruct_row(tt, i);
        for (std::int64_t j = 0; j < dim; ++j) {
            const double ref = region[static_cast<std::size_t>(i * dim + j)];
            const double diff = ref - rec[static_cast<std::size_t>(j)];
            num += diff * diff;
            den += ref * ref;
        }
    }
    if (den == 0.0) return std::sqrt(num);
    return std::sqrt(num / den);
}

// File layout: d u32 | I[] u32 | J[] u32 | R[] u32 (d+1 entries) | cores as
// little-endian f32, each row-major over (R_{k-1}, I_k, J_k, R_k).
inline void save_tt_cores(const TTCores& tt, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot open " + path.string() + " for writing");
    const int d = tt.shape.order();
    detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
    for (auto v : tt.shape.row_factors) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    for (auto v : tt.shape.col_factors) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    for (auto v : tt.shape.ranks) detail::put_le<std::uint32_t>(os, static_cast<std::uint32_t>(v));
    for (const auto& core : tt.cores) {
        for (float f : core) detail::put_le<float>(os, f);
    }
}

inline TTCores load_tt_cores(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open " + path.string());
    TTCores tt;
    const auto d = detail::get_le<std::uint32_t>(is);
    if (d == 0 || d > 64) throw parse_error(path.string() + ": implausible core count");
    tt.shape.row_factors.resize(d);
    tt.shape.col_factors.resize(d);
    tt.shape.ranks.resize(d + 1);
    for (auto& v : tt.shape.row_factors) v = detail::get_le<std::uint32_t>(is);
    for (auto& v : tt.shape.col_factors) v = detail::get_le<std::uint32_t>(is);
    for (auto& v : tt.shape.ranks) v = detail::get_le<std::uint32_t>(is);
    tt.shape.validate();
    tt.cores.resize(d);
    for (std::uint32_t k = 0; k < d; ++k) {
        const std::int64_t n = tt.shape.ranks[k] * tt.shape.row_factors[k] * tt.shape.col_factors[k] *
                               tt.shape.ranks[k + 1];
        tt.cores[k].resize(static_cast<std::size_t>(n));
        for (auto& f : tt.cores[k]) f = detail::get_le<float>(is);
    }
    return tt;
}

}  // namespace tiershard
