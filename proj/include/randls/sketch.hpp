#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <utility>
#include <variant>
#include <vector>

#include "randls/errors.hpp"
#include "randls/matrix.hpp"
#include "randls/rng.hpp"

namespace randls {

// ---------------------------------------------------------------------------
// Sketch distributions. Every family satisfies E(W W^T) = beta I_m; beta_of()
// reports the family's beta.
// ---------------------------------------------------------------------------

/// i.i.d. entries: +-sqrt(beta/(ell*psi)) with probability psi/2 each, zero
/// otherwise. psi = 1, beta = ell is the Rademacher distribution; psi = 1/3,
/// beta = ell is the Achlioptas distribution.
struct SparseRandomSpec {
    Index m = 0;
    Index ell = 0;
    double psi = 1.0;
    double beta = 0.0; // 0 = default beta = ell
};

/// Half-open range [begin, end) of columns of an orthogonal matrix Q.
struct BlockRange {
    Index begin = 0;
    Index end = 0;
    Index size() const { return end - begin; }
};

/// W drawn uniformly from the blocks {Q_1, ..., Q_p} of a column partition of
/// an orthogonal Q. Absent Q means the identity; size-1 identity blocks give
/// the classical randomized Kaczmarz method, larger blocks its block variant.
struct GeneralizedKaczmarzSpec {
    std::optional<Matrix> q; // m x m orthogonal; absent = identity
    std::vector<BlockRange> blocks;
    Index m = 0;
    Index p() const { return Index(blocks.size()); }
};

/// ell distinct columns of the identity, uniform without replacement.
struct KaczmarzUniformColumnsSpec {
    Index m = 0;
    Index ell = 0;
};

/// i.i.d. columns with exactly p nonzero entries at uniform positions, each
/// entry an independent sign. p = m recovers full Rademacher columns.
struct SparseRademacherSpec {
    Index m = 0;
    Index ell = 0;
    Index p = 0;
};

using SketchSpec =
    std::variant<SparseRandomSpec, GeneralizedKaczmarzSpec, KaczmarzUniformColumnsSpec, SparseRademacherSpec>;

inline constexpr double kOrthogonalityTol = 1e-10;

inline void validate_spec(const SketchSpec& spec) {
    std::visit(
        [](const auto& s) {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SparseRandomSpec>) {
                if (s.m < 1 || s.ell < 1) throw ArgumentError("sparse random: need m >= 1, ell >= 1");
                if (!(s.psi > 0.0 && s.psi <= 1.0)) throw ArgumentError("sparse random: psi must be in (0, 1]");
                if (s.beta < 0.0) throw ArgumentError("sparse random: beta must be positive (or 0 for default)");
            } else if constexpr (std::is_same_v<T, GeneralizedKaczmarzSpec>) {
                if (s.blocks.empty()) throw ArgumentError("kaczmarz: no blocks");
                Index cursor = 0;
                for (const auto& blk : s.blocks) {
                    if (blk.begin != cursor || blk.size() < 1)
                        throw ArgumentError("kaczmarz: blocks must be a contiguous partition of the columns");
                    cursor = blk.end;
                }
                if (cursor != s.m) throw ArgumentError("kaczmarz: block sizes do not sum to m");
                if (s.q) {
                    if (s.q->rows() != s.m || s.q->cols() != s.m) throw ArgumentError("kaczmarz: Q must be m x m");
                    if (orthogonality_defect(*s.q) > kOrthogonalityTol)
                        throw ArgumentError("kaczmarz: Q is not orthogonal within tolerance");
                }
            } else if constexpr (std::is_same_v<T, KaczmarzUniformColumnsSpec>) {
                if (s.m < 1 || s.ell < 1 || s.ell > s.m)
                    throw ArgumentError("uniform-column kaczmarz: need 1 <= ell <= m");
            } else {
                if (s.m < 1 || s.ell < 1) throw ArgumentError("sparse rademacher: need m >= 1, ell >= 1");
                if (s.p < 1 || s.p > s.m) throw ArgumentError("sparse rademacher: need 1 <= p <= m");
            }
        },
        spec);
}

inline Index sketch_rows(const SketchSpec& spec) {
    return std::visit([](const auto& s) { return s.m; }, spec);
}

/// The constant beta in E(W W^T) = beta I_m.
inline double beta_of(const SketchSpec& spec) {
    return std::visit(
        [](const auto& s) -> double {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, SparseRandomSpec>)
                return s.beta > 0 ? s.beta : double(s.ell);
            else if constexpr (std::is_same_v<T, GeneralizedKaczmarzSpec>)
                return 1.0 / double(s.p());
            else if constexpr (std::is_same_v<T, KaczmarzUniformColumnsSpec>)
                return double(s.ell) / double(s.m);
            else
                return double(s.ell) * double(s.p) / double(s.m);
        },
        spec);
}

/// Builds a generalized Kaczmarz spec from contiguous block sizes and an
/// optional orthogonal Q.
inline SketchSpec kaczmarz_partition(std::optional<Matrix> q, const std::vector<Index>& sizes) {
    GeneralizedKaczmarzSpec s;
    Index m = 0;
    for (Index sz : sizes) {
        if (sz < 1) throw ArgumentError("kaczmarz_partition: block sizes must be positive");
        s.blocks.push_back({m, m + sz});
        m += sz;
    }
    s.m = m;
    if (q) {
        if (q->rows() != m) throw ArgumentError("kaczmarz_partition: block sizes do not sum to Q's dimension");
        s.q = std::move(q);
    }
    SketchSpec spec = std::move(s);
    validate_spec(spec);
    return spec;
}

/// Equal identity blocks of the given size (plus a remainder block when the
/// size does not divide m): the block Kaczmarz sketch of Experiment 1.
inline SketchSpec block_kaczmarz(Index m, Index block_size) {
    if (block_size < 1 || block_size > m) throw ArgumentError("block_kaczmarz: need 1 <= block_size <= m");
    std::vector<Index> sizes(std::size_t(m / block_size), block_size);
    if (m % block_size != 0) sizes.push_back(m % block_size);
    return kaczmarz_partition(std::nullopt, sizes);
}

// ---------------------------------------------------------------------------
// Samples
// ---------------------------------------------------------------------------

/// One sparse realization of W (m x ell), stored column-wise as
/// (row, value) pairs. touched_rows is the sorted union of column supports.
struct SketchSample {
    Index m = 0;
    Index ell = 0;
    std::vector<std::vector<std::pair<Index, double>>> columns;
    std::vector<Index> touched_rows;

    void finalize_touched_rows() {
        touched_rows.clear();
        for (const auto& col : columns)
            for (const auto& [row, value] : col) {
                (void)value;
                touched_rows.push_back(row);
            }
        std::sort(touched_rows.begin(), touched_rows.end());
        touched_rows.erase(std::unique(touched_rows.begin(), touched_rows.end()), touched_rows.end());
    }
};

namespace detail {

/// First k entries of a uniform partial Fisher-Yates shuffle of 0..m-1.
inline std::vector<Index> sample_without_replacement(Index m, Index k, Rng& rng) {
    std::vector<Index> pool(static_cast<std::size_t>(m));
    std::iota(pool.begin(), pool.end(), Index(0));
    for (Index i = 0; i < k; ++i) {
        const Index j = i + Index(rng.next_below(std::uint64_t(m - i)));
        std::swap(pool[std::size_t(i)], pool[std::size_t(j)]);
    }
    pool.resize(std::size_t(k));
    return pool;
}

} // namespace detail

/// Draws one realization of W. Entry order is fixed (columns outer, rows
/// inner) so a given rng state always yields the same sample.
inline SketchSample draw(const SketchSpec& spec, Rng& rng) {
    SketchSample sample;
    if (const auto* sr = std::get_if<SparseRandomSpec>(&spec)) {
        sample.m = sr->m;
        sample.ell = sr->ell;
        sample.columns.resize(std::size_t(sr->ell));
        const double beta = beta_of(spec);
        const double magnitude = std::sqrt(beta / (double(sr->ell) * sr->psi));
        const double half = sr->psi / 2.0;
        for (auto& col : sample.columns)
            for (Index i = 0; i < sr->m; ++i) {
                const double u = rng.next_unit();
                if (u < half)
                    col.emplace_back(i, magnitude);
                else if (u < sr->psi)
                    col.emplace_back(i, -magnitude);
            }
    } else if (const auto* gk = std::get_if<GeneralizedKaczmarzSpec>(&spec)) {
        sample.m = gk->m;
        const auto& blk = gk->blocks[std::size_t(rng.next_below(std::uint64_t(gk->p())))];
        sample.ell = blk.size();
        sample.columns.resize(std::size_t(blk.size()));
        for (Index c = blk.begin; c < blk.end; ++c) {
            auto& col = sample.columns[std::size_t(c - blk.begin)];
            if (gk->q) {
                for (Index i = 0; i < gk->m; ++i)
                    if ((*gk->q)(i, c) != 0.0) col.emplace_back(i, (*gk->q)(i, c));
            } else {
                col.emplace_back(c, 1.0);
            }
        }
    } else if (const auto* kc = std::get_if<KaczmarzUniformColumnsSpec>(&spec)) {
        sample.m = kc->m;
        sample.ell = kc->ell;
        sample.columns.resize(std::size_t(kc->ell));
        const auto rows = detail::sample_without_replacement(kc->m, kc->ell, rng);
        for (Index j = 0; j < kc->ell; ++j) sample.columns[std::size_t(j)].emplace_back(rows[std::size_t(j)], 1.0);
    } else {
        const auto& sp = std::get<SparseRademacherSpec>(spec);
        sample.m = sp.m;
        sample.ell = sp.ell;
        sample.columns.resize(std::size_t(sp.ell));
        for (auto& col : sample.columns) {
            auto rows = detail::sample_without_replacement(sp.m, sp.p, rng);
            std::sort(rows.begin(), rows.end());
            for (Index r : rows) col.emplace_back(r, (rng.next_u64() & 1ULL) ? 1.0 : -1.0);
        }
    }
    sample.finalize_touched_rows();
    return sample;
}

/// Result of applying one sketch: wa = W^T A, wb = W^T b, and the number of
/// distinct rows of A that were read.
struct SketchedSystem {
    Matrix wa; // ell x n
    Matrix wb; // ell x r
    Index rows_touched = 0;
};

/// Computes W^T A and W^T b touching only the rows in the sample's support.
inline SketchedSystem sketch_apply(const SketchSample& sample, const Matrix& a, const Matrix& b) {
    if (a.rows() != sample.m || b.rows() != sample.m)
        throw DimensionError("sketch_apply: matrix row count does not match sketch dimension");
    SketchedSystem out;
    out.wa = Matrix::Zero(sample.ell, a.cols());
    out.wb = Matrix::Zero(sample.ell, b.cols());
    for (Index j = 0; j < sample.ell; ++j)
        for (const auto& [row, value] : sample.columns[std::size_t(j)]) {
            out.wa.row(j) += value * a.row(row);
            out.wb.row(j) += value * b.row(row);
        }
    out.rows_touched = Index(sample.touched_rows.size());
    return out;
}

/// Max-abs entry of (1/(beta N)) sum_k W_k W_k^T - I_m.
///
/// For generalized Kaczmarz specs with N a multiple of the block count, the
/// finite sample space is enumerated stratified (each block N/p times), so the
/// estimate carries no sampling error.
inline double empirical_moment_deviation(const SketchSpec& spec, long n_samples, Rng& rng) {
    if (n_samples < 1) throw ArgumentError("empirical_moment_deviation: need at least one sample");
    validate_spec(spec);
    const Index m = sketch_rows(spec);
    Matrix accum = Matrix::Zero(m, m);
    auto add_sample = [&accum](const SketchSample& s) {
        for (const auto& col : s.columns)
            for (const auto& [i, vi] : col)
                for (const auto& [j, vj] : col) accum(i, j) += vi * vj;
    };

    const auto* gk = std::get_if<GeneralizedKaczmarzSpec>(&spec);
    if (gk && n_samples % gk->p() == 0) {
        const long reps = n_samples / gk->p();
        Matrix cycle = Matrix::Zero(m, m);
        for (const auto& blk : gk->blocks) {
            for (Index c = blk.begin; c < blk.end; ++c) {
                if (gk->q) {
                    for (Index i = 0; i < m; ++i)
                        for (Index j = 0; j < m; ++j) cycle(i, j) += (*gk->q)(i, c) * (*gk->q)(j, c);
                } else {
                    cycle(c, c) += 1.0;
                }
            }
        }
        accum = double(reps) * cycle;
    } else {
        for (long k = 0; k < n_samples; ++k) add_sample(draw(spec, rng));
    }

    accum /= beta_of(spec) * double(n_samples);
    accum.diagonal().array() -= 1.0;
    return max_abs(accum);
}

} // namespace randls
