#pragma once

// Low-rank estimation from entry observations: nuclear-norm penalized least
// squares by proximal gradient with singular value soft-thresholding, then
// per-row re-fitting inside the estimated right singular subspace.

#include "blab/matrix_core.hpp"
#include "blab/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace blab {

struct Observation {
    ArmIndex arm;
    double value = 0.0;
    std::int64_t t = 0;
};

/// Ordered log of (arm, value, round). Rounds strictly increase.
class ObservationSet {
public:
    ObservationSet(Index rows, Index cols) : rows_(rows), cols_(cols)
    {
        if (rows < 1 || cols < 1) throw InvalidArgument("observation grid must be nonempty");
    }

    void add(ArmIndex arm, double value, std::int64_t t)
    {
        if (arm.row < 0 || arm.row >= rows_ || arm.col < 0 || arm.col >= cols_)
            throw OutOfRange("observed arm outside the declared grid");
        if (!std::isfinite(value)) throw InvalidArgument("observation value must be finite");
        if (t < 1 || (!items_.empty() && t <= items_.back().t))
            throw InvalidArgument("observation rounds must be positive and strictly increasing");
        items_.push_back({arm, value, t});
    }

    Index rows() const noexcept { return rows_; }
    Index cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return items_.size(); }
    bool empty() const noexcept { return items_.empty(); }
    const std::vector<Observation>& items() const noexcept { return items_; }
    const Observation& operator[](std::size_t i) const { return items_[i]; }
    auto begin() const noexcept { return items_.begin(); }
    auto end() const noexcept { return items_.end(); }

    /// Items [first, last) as a new set over the same grid.
    ObservationSet slice(std::size_t first, std::size_t last) const
    {
        ObservationSet out(rows_, cols_);
        out.items_.assign(items_.begin() + static_cast<std::ptrdiff_t>(first),
                          items_.begin() + static_cast<std::ptrdiff_t>(last));
        return out;
    }

private:
    Index rows_;
    Index cols_;
    std::vector<Observation> items_;
};

/// Penalty weight. Fixed, or scale * sqrt(1/n) with n the number of observations fed.
struct LambdaRule {
    enum class Kind { Fixed, InverseSqrtN };
    Kind kind = Kind::InverseSqrtN;
    double value = 1.0;

    static LambdaRule fixed(double lambda) { return {Kind::Fixed, lambda}; }
    static LambdaRule inverse_sqrt_n(double scale = 1.0) { return {Kind::InverseSqrtN, scale}; }

    double resolve(std::size_t n) const
    {
        return kind == Kind::Fixed ? value : value * std::sqrt(1.0 / static_cast<double>(n));
    }
};

struct SolverConfig {
    LambdaRule lambda = LambdaRule::inverse_sqrt_n();
    double rel_tol = 1e-6;
    int max_iters = 500;
    bool accelerate = true;

    void validate() const
    {
        if (!(rel_tol > 0.0)) throw InvalidArgument("rel_tol must be positive");
        if (max_iters < 1) throw InvalidArgument("max_iters must be at least 1");
        if (!(lambda.value >= 0.0)) throw InvalidArgument("lambda must be nonnegative");
    }
};

struct LowRankEstimate {
    Matrix matrix;
    Index rank_used = 0;
    std::vector<double> objective_trace;
    bool converged = false;
    int iterations = 0;
    // Unenhanced solver output; reusable as a warm start for the next solve.
    Matrix warm_start;
};

/// Result of the proximal map of tau * nuclear norm.
struct ShrinkResult {
    Matrix matrix;
    double nuclear_norm = 0.0; // of the output
};

inline ShrinkResult svt_shrink_with_norm(const Matrix& m, double tau)
{
    if (!(tau >= 0.0)) throw InvalidArgument("shrinkage threshold must be nonnegative");
    const SvdFactors svd = compute_svd(m);
    const Vector shrunk = (svd.D.array() - tau).max(0.0).matrix();
    const Index keep = (shrunk.array() > 0.0).count();
    ShrinkResult out;
    out.nuclear_norm = shrunk.sum();
    if (keep == 0) {
        out.matrix = Matrix::Zero(m.rows(), m.cols());
    } else {
        out.matrix = svd.U.leftCols(keep) * shrunk.head(keep).asDiagonal() * svd.V.leftCols(keep).transpose();
    }
    return out;
}

/// U diag(max(sigma - tau, 0)) V^T.
inline Matrix svt_shrink(const Matrix& m, double tau) { return svt_shrink_with_norm(m, tau).matrix; }

inline double nuclear_norm(const Matrix& m)
{
    return singular_values(m).sum();
}

namespace detail {

struct CellStats {
    Matrix counts;
    Matrix sums;
    double max_count = 0.0;
};

inline CellStats cell_stats(const ObservationSet& obs)
{
    CellStats s{Matrix::Zero(obs.rows(), obs.cols()), Matrix::Zero(obs.rows(), obs.cols()), 0.0};
    for (const auto& o : obs) {
        s.counts(o.arm.row, o.arm.col) += 1.0;
        s.sums(o.arm.row, o.arm.col) += o.value;
    }
    s.max_count = s.counts.maxCoeff();
    return s;
}

inline double squared_loss(const ObservationSet& obs, const Matrix& b)
{
    double acc = 0.0;
    for (const auto& o : obs) {
        const double r = o.value - b(o.arm.row, o.arm.col);
        acc += r * r;
    }
    return acc / static_cast<double>(obs.size());
}

} // namespace detail

/// Smallest penalty at which the zero matrix is optimal: (2/n) * sigma_1(S)
/// where S holds the per-cell sums of observed values.
inline double lambda_max(const ObservationSet& obs)
{
    if (obs.empty()) throw EmptyObservations("lambda_max needs observations");
    const auto stats = detail::cell_stats(obs);
    return 2.0 / static_cast<double>(obs.size()) * singular_values(stats.sums)(0);
}

/// argmin_B (1/n)||Y - X(B)||^2 + lambda ||B||_*.
///
/// Accelerated proximal gradient with a monotone restart: whenever the
/// momentum step would raise the objective, momentum is dropped and a plain
/// proximal step is taken from the last accepted iterate. The step is the
/// inverse Lipschitz constant n / (2 * max cell multiplicity).
inline LowRankEstimate solve_nuclear_norm(const ObservationSet& obs, const SolverConfig& cfg,
                                          const Matrix* warm_start = nullptr)
{
    if (obs.empty()) throw EmptyObservations("nuclear-norm solver needs at least one observation");
    cfg.validate();
    const auto stats = detail::cell_stats(obs);
    const double n = static_cast<double>(obs.size());
    const double lambda = cfg.lambda.resolve(obs.size());
    const double step = n / (2.0 * stats.max_count);
    const double tau = step * lambda;

    Matrix x = Matrix::Zero(obs.rows(), obs.cols());
    if (warm_start && warm_start->rows() == x.rows() && warm_start->cols() == x.cols() && warm_start->allFinite())
        x = *warm_start;

    auto prox_step = [&](const Matrix& y) {
        const Matrix grad = (2.0 / n) * (stats.counts.cwiseProduct(y) - stats.sums);
        return svt_shrink_with_norm(y - step * grad, tau);
    };

    double fx = detail::squared_loss(obs, x) + lambda * nuclear_norm(x);
    LowRankEstimate out;
    out.objective_trace.push_back(fx);

    Matrix y = x;
    double momentum = 1.0;
    for (int it = 0; it < cfg.max_iters; ++it) {
        out.iterations = it + 1;
        auto z = prox_step(y);
        double fz = detail::squared_loss(obs, z.matrix) + lambda * z.nuclear_norm;
        if (cfg.accelerate && fz > fx) {
            momentum = 1.0;
            z = prox_step(x);
            fz = detail::squared_loss(obs, z.matrix) + lambda * z.nuclear_norm;
        }
        if (fz > fx) {
            // Rounding at a stationary point; keep the accepted iterate.
            out.converged = true;
            break;
        }
        const double decrease = fx - fz;
        if (cfg.accelerate) {
            const double next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * momentum * momentum));
            y = z.matrix + ((momentum - 1.0) / next) * (z.matrix - x);
            momentum = next;
        } else {
            y = z.matrix;
        }
        const double previous = fx;
        x = std::move(z.matrix);
        fx = fz;
        out.objective_trace.push_back(fx);
        if (decrease <= cfg.rel_tol * std::max(std::abs(previous), std::numeric_limits<double>::min())) {
            out.converged = true;
            break;
        }
    }
    out.rank_used = numerical_rank(x);
    out.warm_start = x;
    out.matrix = std::move(x);
    return out;
}

/// Largest r with sigma_r / sigma_1 >= ratio (at least 1 for a nonzero matrix).
inline Index estimate_rank(const Vector& singular_values, double ratio = 0.05)
{
    if (singular_values.size() == 0 || singular_values(0) <= 0.0) return 0;
    Index r = 0;
    for (Index i = 0; i < singular_values.size(); ++i)
        if (singular_values(i) >= ratio * singular_values(0)) r = i + 1;
    return r;
}

/// Singular values of a row design below this are treated as zero.
inline constexpr double kRowDesignTolerance = 1e-8;

/// Re-fits every row observed in `second_half` inside the span of the first
/// `rank` right singular vectors of `base`. Unobserved rows are copied.
inline LowRankEstimate row_enhance(const LowRankEstimate& base, const ObservationSet& second_half, Index rank)
{
    const Matrix& b = base.matrix;
    if (!b.allFinite()) throw InvalidArgument("base estimate must be finite");
    if (b.rows() != second_half.rows() || b.cols() != second_half.cols())
        throw DimensionMismatch("base estimate and observations disagree on the grid size");
    if (rank < 1 || rank > std::min(b.rows(), b.cols()))
        throw InvalidArgument("rank must lie in [1, min(rows, cols)]");

    const SvdFactors svd = compute_svd(b);
    if (numerical_rank(svd.D) < rank)
        throw RankDeficient("base estimate has fewer than " + std::to_string(rank) + " nonzero singular values");
    const Matrix vr = svd.V.leftCols(rank);

    std::vector<std::vector<const Observation*>> per_row(static_cast<std::size_t>(b.rows()));
    for (const auto& o : second_half) per_row[static_cast<std::size_t>(o.arm.row)].push_back(&o);

    LowRankEstimate out = base;
    out.rank_used = rank;
    for (Index j = 0; j < b.rows(); ++j) {
        const auto& row_obs = per_row[static_cast<std::size_t>(j)];
        if (row_obs.empty()) continue;
        const auto m = static_cast<Index>(row_obs.size());
        Matrix design(m, rank);
        Vector y(m);
        for (Index i = 0; i < m; ++i) {
            design.row(i) = vr.row(row_obs[static_cast<std::size_t>(i)]->arm.col);
            y(i) = row_obs[static_cast<std::size_t>(i)]->value;
        }
        // Minimum-norm least squares; exact LS whenever the design is well conditioned.
        Eigen::JacobiSVD<Matrix> dsvd(design, Eigen::ComputeThinU | Eigen::ComputeThinV);
        const Vector& s = dsvd.singularValues();
        const Vector uty = dsvd.matrixU().transpose() * y;
        Vector theta = Vector::Zero(rank);
        for (Index i = 0; i < s.size(); ++i)
            if (s(i) >= kRowDesignTolerance) theta += dsvd.matrixV().col(i) * (uty(i) / s(i));
        out.matrix.row(j) = (vr * theta).transpose();
    }
    return out;
}

/// Chronological split: the first ceil(n/2) items feed the solver, the rest
/// re-fit the rows.
inline std::pair<ObservationSet, ObservationSet> split_forced_samples(const ObservationSet& forced)
{
    const std::size_t first = (forced.size() + 1) / 2;
    return {forced.slice(0, first), forced.slice(first, forced.size())};
}

/// Forced-sample estimator. `rank` = 0 picks the rank from the solver output.
inline LowRankEstimate forced_sample_estimate(const ObservationSet& forced, Index rank, const SolverConfig& cfg,
                                              const Matrix* warm_start = nullptr)
{
    if (forced.size() < 2) throw TooFewSamples("forced-sample estimator needs at least two observations");
    auto [first, second] = split_forced_samples(forced);
    LowRankEstimate base = solve_nuclear_norm(first, cfg, warm_start);
    if (rank == 0) {
        rank = estimate_rank(singular_values(base.matrix));
        if (rank == 0) throw RankDeficient("solver returned the zero matrix");
    }
    return row_enhance(base, second, rank);
}

// CSV ------------------------------------------------------------------------

inline void write_observations_csv(std::ostream& out, const ObservationSet& obs)
{
    out << "t,row,col,y\n";
    for (const auto& o : obs)
        out << o.t << ',' << o.arm.row + 1 << ',' << o.arm.col + 1 << ',' << detail::format_double(o.value) << '\n';
}

inline ObservationSet read_observations_csv(std::istream& in, Index rows, Index cols)
{
    ObservationSet obs(rows, cols);
    std::string line;
    if (!std::getline(in, line) || detail::trim(line) != "t,row,col,y")
        throw ParseError("observation file must start with header t,row,col,y");
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split(line, ',');
        if (fields.size() != 4) throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields");
        try {
            const auto t = static_cast<std::int64_t>(detail::parse_double(fields[0]));
            const auto r = static_cast<Index>(detail::parse_double(fields[1]));
            const auto c = static_cast<Index>(detail::parse_double(fields[2]));
            obs.add({r - 1, c - 1}, detail::parse_double(fields[3]), t);
        } catch (const Error& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return obs;
}

} // namespace blab
