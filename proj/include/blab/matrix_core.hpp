#pragma once

// Ground-truth reward matrices and their structural statistics: row norms,
// row-incoherence, the near-optimal set and count g(h), and the subsampling
// cost psi with exact and Monte-Carlo evaluators.

#include "blab/linalg.hpp"
#include "blab/random.hpp"
#include "blab/types.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace blab {

/// Singular values below this fraction of the largest one count as zero.
inline constexpr double kRelativeRankTolerance = 1e-10;

/// Dense grid of mean rewards.
class RewardMatrix {
public:
    RewardMatrix() = default;

    explicit RewardMatrix(Matrix values, std::optional<double> b_star = std::nullopt)
        : values_(std::move(values)), b_star_(b_star)
    {
        if (values_.rows() < 1 || values_.cols() < 1)
            throw InvalidArgument("reward matrix must have at least one row and one column");
        if (!values_.allFinite()) throw InvalidArgument("reward matrix entries must be finite");
        if (b_star_) {
            const double norm = values_.rowwise().norm().maxCoeff();
            if (norm > *b_star_)
                throw InvalidArgument("max row l2 norm " + std::to_string(norm) +
                                      " exceeds declared bound " + std::to_string(*b_star_));
        }
    }

    Index rows() const noexcept { return values_.rows(); }
    Index cols() const noexcept { return values_.cols(); }
    Index size() const noexcept { return values_.size(); }
    double operator()(Index j, Index k) const { return values_(j, k); }
    double operator()(const ArmIndex& a) const { return values_(a.row, a.col); }
    const Matrix& values() const noexcept { return values_; }
    std::optional<double> b_star() const noexcept { return b_star_; }

    bool contains(const ArmIndex& a) const noexcept
    {
        return a.row >= 0 && a.row < rows() && a.col >= 0 && a.col < cols();
    }

private:
    Matrix values_;
    std::optional<double> b_star_;
};

/// Count of singular values above kRelativeRankTolerance * sigma_1.
inline Index numerical_rank(const Vector& singular_values)
{
    if (singular_values.size() == 0 || singular_values(0) <= 0.0) return 0;
    const double cut = kRelativeRankTolerance * singular_values(0);
    return (singular_values.array() > cut).count();
}

inline Index numerical_rank(const Matrix& m) { return numerical_rank(singular_values(m)); }

/// Largest l2 norm among the rows (the boundedness statistic).
inline double max_row_l2_norm(const Matrix& b) { return b.rowwise().norm().maxCoeff(); }
inline double max_row_l2_norm(const RewardMatrix& b) { return max_row_l2_norm(b.values()); }

/// sqrt(d_r / r) * max_row_norm / sigma_r.
inline double row_incoherence(const RewardMatrix& b, Index rank)
{
    if (rank < 1 || rank > std::min(b.rows(), b.cols()))
        throw InvalidArgument("rank must lie in [1, min(rows, cols)]");
    const Vector sv = singular_values(b.values());
    const double sigma_r = sv(rank - 1);
    if (sv(0) <= 0.0 || sigma_r <= kRelativeRankTolerance * sv(0))
        throw RankDeficient("singular value " + std::to_string(rank) + " is numerically zero");
    return std::sqrt(static_cast<double>(b.rows()) / static_cast<double>(rank)) *
           max_row_l2_norm(b) / sigma_r;
}

/// Rows and columns of a submatrix, each sorted and duplicate free.
struct SubmatrixIndex {
    std::vector<Index> row_ids;
    std::vector<Index> col_ids;

    static SubmatrixIndex full(Index rows, Index cols)
    {
        SubmatrixIndex idx;
        idx.row_ids.resize(static_cast<std::size_t>(rows));
        idx.col_ids.resize(static_cast<std::size_t>(cols));
        std::iota(idx.row_ids.begin(), idx.row_ids.end(), Index{0});
        std::iota(idx.col_ids.begin(), idx.col_ids.end(), Index{0});
        return idx;
    }

    Index m_r() const noexcept { return static_cast<Index>(row_ids.size()); }
    Index m_c() const noexcept { return static_cast<Index>(col_ids.size()); }

    void validate(Index rows, Index cols) const
    {
        auto check = [](const std::vector<Index>& ids, Index limit, const char* what) {
            if (ids.empty() || static_cast<Index>(ids.size()) > limit)
                throw InvalidArgument(std::string(what) + " index set has invalid size");
            std::vector<Index> sorted = ids;
            std::sort(sorted.begin(), sorted.end());
            if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
                throw InvalidArgument(std::string(what) + " index set has duplicates");
            if (sorted.front() < 0 || sorted.back() >= limit)
                throw OutOfRange(std::string(what) + " index out of range");
        };
        check(row_ids, rows, "row");
        check(col_ids, cols, "column");
    }
};

/// Draws k distinct values from [0, n) uniformly (partial Fisher-Yates), sorted.
template <class Engine>
std::vector<Index> sample_without_replacement(Index n, Index k, Engine& rng)
{
    if (k < 0 || k > n) throw InvalidArgument("cannot sample more items than available");
    std::vector<Index> pool(static_cast<std::size_t>(n));
    std::iota(pool.begin(), pool.end(), Index{0});
    for (Index i = 0; i < k; ++i) {
        std::uniform_int_distribution<Index> pick(i, n - 1);
        std::swap(pool[static_cast<std::size_t>(i)], pool[static_cast<std::size_t>(pick(rng))]);
    }
    pool.resize(static_cast<std::size_t>(k));
    std::sort(pool.begin(), pool.end());
    return pool;
}

template <class Engine>
SubmatrixIndex sample_submatrix(Index rows, Index cols, Index m_r, Index m_c, Engine& rng)
{
    SubmatrixIndex idx;
    idx.row_ids = sample_without_replacement(rows, m_r, rng);
    idx.col_ids = sample_without_replacement(cols, m_c, rng);
    return idx;
}

inline double submatrix_max(const Matrix& b, const SubmatrixIndex& idx)
{
    double best = -std::numeric_limits<double>::infinity();
    for (Index j : idx.row_ids)
        for (Index k : idx.col_ids) best = std::max(best, b(j, k));
    return best;
}

/// Arms in idx whose reward is at least (max over idx) - h. Ties at the
/// boundary are included. Row-major order over idx.
inline std::vector<ArmIndex> near_optimal_set(const Matrix& b, double h, const SubmatrixIndex& idx)
{
    if (!(h >= 0.0)) throw InvalidArgument("h must be nonnegative");
    const double threshold = submatrix_max(b, idx) - h;
    std::vector<ArmIndex> out;
    for (Index j : idx.row_ids)
        for (Index k : idx.col_ids)
            if (b(j, k) >= threshold) out.push_back({j, k});
    return out;
}

inline std::vector<ArmIndex> near_optimal_set(const RewardMatrix& b, double h, const SubmatrixIndex& idx)
{
    idx.validate(b.rows(), b.cols());
    return near_optimal_set(b.values(), h, idx);
}

inline std::vector<ArmIndex> near_optimal_set(const RewardMatrix& b, double h)
{
    return near_optimal_set(b.values(), h, SubmatrixIndex::full(b.rows(), b.cols()));
}

/// g(h; I_r, I_c).
inline Index near_optimal_count(const Matrix& b, double h, const SubmatrixIndex& idx)
{
    if (!(h >= 0.0)) throw InvalidArgument("h must be nonnegative");
    const double threshold = submatrix_max(b, idx) - h;
    Index count = 0;
    for (Index j : idx.row_ids)
        for (Index k : idx.col_ids) count += b(j, k) >= threshold ? 1 : 0;
    return count;
}

inline Index near_optimal_count(const RewardMatrix& b, double h, const SubmatrixIndex& idx)
{
    idx.validate(b.rows(), b.cols());
    return near_optimal_count(b.values(), h, idx);
}

inline Index near_optimal_count(const RewardMatrix& b, double h)
{
    if (!(h >= 0.0)) throw InvalidArgument("h must be nonnegative");
    const double threshold = b.values().maxCoeff() - h;
    return (b.values().array() >= threshold).count();
}

/// E[g(h)] for i.i.d. Uniform[0,1] entries.
inline double expected_g_uniform(double h, Index rows, Index cols)
{
    if (!(h >= 0.0 && h <= 1.0)) throw DomainError("expected_g_uniform requires h in [0, 1]");
    const double n = static_cast<double>(rows) * static_cast<double>(cols);
    return 1.0 + h * n - std::pow(h, n);
}

/// A Monte-Carlo mean with its standard error.
struct McEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

/// Running mean/variance (Welford).
class RunningStats {
public:
    void push(double x) noexcept
    {
        ++n_;
        const double delta = x - mean_;
        mean_ += delta / static_cast<double>(n_);
        m2_ += delta * (x - mean_);
    }
    std::size_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double variance() const noexcept { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }
    double std_error() const noexcept
    {
        return n_ > 1 ? std::sqrt(variance() / static_cast<double>(n_)) : 0.0;
    }

private:
    std::size_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
};

inline constexpr double kPsiEnumerationBudget = 1e6;

inline double binomial(Index n, Index k)
{
    if (k < 0 || k > n) return 0.0;
    k = std::min(k, n - k);
    double r = 1.0;
    for (Index i = 1; i <= k; ++i) r = r * static_cast<double>(n - k + i) / static_cast<double>(i);
    return r;
}

namespace detail {

// Calls fn(indices) for every k-subset of [0, n) in lexicographic order.
template <class Fn>
void for_each_combination(Index n, Index k, Fn&& fn)
{
    std::vector<Index> c(static_cast<std::size_t>(k));
    std::iota(c.begin(), c.end(), Index{0});
    while (true) {
        fn(c);
        Index i = k - 1;
        while (i >= 0 && c[static_cast<std::size_t>(i)] == n - k + i) --i;
        if (i < 0) return;
        ++c[static_cast<std::size_t>(i)];
        for (Index j = i + 1; j < k; ++j) c[static_cast<std::size_t>(j)] = c[static_cast<std::size_t>(j - 1)] + 1;
    }
}

} // namespace detail

struct PsiExact {};
struct PsiMonteCarlo {
    std::size_t n_samples = 10000;
    std::uint64_t seed = 0;
};

/// psi(m_r, m_c) for a fixed matrix: max B minus the expected max of a
/// uniformly drawn m_r x m_c submatrix. Exact mode enumerates every pair of
/// index sets and refuses above kPsiEnumerationBudget pairs.
inline McEstimate subsampling_cost(const Matrix& b, Index m_r, Index m_c, PsiExact)
{
    if (m_r < 1 || m_r > b.rows() || m_c < 1 || m_c > b.cols())
        throw InvalidArgument("submatrix size out of range");
    const double pairs = binomial(b.rows(), m_r) * binomial(b.cols(), m_c);
    if (pairs > kPsiEnumerationBudget)
        throw EnumerationTooLarge("exact psi would enumerate " + std::to_string(pairs) + " index-set pairs");

    double total = 0.0;
    Vector col_max(b.cols());
    detail::for_each_combination(b.rows(), m_r, [&](const std::vector<Index>& rows) {
        col_max.setConstant(-std::numeric_limits<double>::infinity());
        for (Index j : rows) col_max = col_max.cwiseMax(b.row(j).transpose());
        detail::for_each_combination(b.cols(), m_c, [&](const std::vector<Index>& cols) {
            double best = -std::numeric_limits<double>::infinity();
            for (Index k : cols) best = std::max(best, col_max(k));
            total += best;
        });
    });
    const double psi = b.maxCoeff() - total / pairs;
    return {std::max(psi, 0.0), 0.0, static_cast<std::size_t>(pairs)};
}

inline McEstimate subsampling_cost(const Matrix& b, Index m_r, Index m_c, PsiMonteCarlo mc)
{
    if (m_r < 1 || m_r > b.rows() || m_c < 1 || m_c > b.cols())
        throw InvalidArgument("submatrix size out of range");
    if (mc.n_samples < 1) throw InvalidArgument("n_samples must be positive");
    SplitMix64 rng(mc.seed);
    const double top = b.maxCoeff();
    RunningStats stats;
    for (std::size_t s = 0; s < mc.n_samples; ++s) {
        const auto idx = sample_submatrix(b.rows(), b.cols(), m_r, m_c, rng);
        stats.push(top - submatrix_max(b, idx));
    }
    return {stats.mean(), stats.std_error(), stats.count()};
}

inline McEstimate subsampling_cost(const RewardMatrix& b, Index m_r, Index m_c, PsiExact mode)
{
    return subsampling_cost(b.values(), m_r, m_c, mode);
}

inline McEstimate subsampling_cost(const RewardMatrix& b, Index m_r, Index m_c, PsiMonteCarlo mode)
{
    return subsampling_cost(b.values(), m_r, m_c, mode);
}

/// psi averaged over a random matrix family: each sample draws a fresh matrix
/// from `sampler(rng)` and a fresh submatrix.
template <class Sampler>
McEstimate subsampling_cost_family(Sampler&& sampler, Index m_r, Index m_c, std::size_t n_samples,
                                   std::uint64_t seed)
{
    Rng rng(seed);
    RunningStats stats;
    for (std::size_t s = 0; s < n_samples; ++s) {
        const Matrix b = sampler(rng);
        const auto idx = sample_submatrix(b.rows(), b.cols(), m_r, m_c, rng);
        stats.push(b.maxCoeff() - submatrix_max(b, idx));
    }
    return {stats.mean(), stats.std_error(), stats.count()};
}

enum class EntryDistribution { Uniform, Gaussian, Exponential };

/// psi(eta*d_r, eta*d_c) for i.i.d. entries of a common distribution.
inline double psi_closed_form(EntryDistribution dist, Index rows, Index cols, double eta)
{
    if (!(eta > 0.0 && eta <= 1.0)) throw DomainError("eta must lie in (0, 1]");
    const double n = static_cast<double>(rows) * static_cast<double>(cols);
    const double sub = eta * eta * n;
    switch (dist) {
    case EntryDistribution::Uniform:
        return n / (1.0 + n) - sub / (1.0 + sub);
    case EntryDistribution::Gaussian:
        if (sub <= 1.0) throw DomainError("gaussian psi requires eta^2 * d_r * d_c > 1");
        return std::sqrt(std::log(n)) - std::sqrt(std::log(sub));
    case EntryDistribution::Exponential:
        return -2.0 * std::log(eta);
    }
    throw InvalidArgument("unknown distribution");
}

enum class FactorDistribution { Uniform01, StdNormal };

template <class Engine>
Matrix random_factor(Index rows, Index cols, FactorDistribution dist, Engine& rng)
{
    Matrix f(rows, cols);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (Index i = 0; i < rows; ++i)
        for (Index j = 0; j < cols; ++j)
            f(i, j) = dist == FactorDistribution::Uniform01 ? unif(rng) : normal(rng);
    return f;
}

/// U V^T with U: rows x rank, V: cols x rank, i.i.d. factor entries.
inline RewardMatrix generate_low_rank(Index rows, Index cols, Index rank, FactorDistribution dist,
                                      std::uint64_t seed)
{
    if (rows < 1 || cols < 1) throw InvalidArgument("dimensions must be positive");
    if (rank < 1 || rank > std::min(rows, cols)) throw InvalidArgument("rank must lie in [1, min(rows, cols)]");
    Rng rng(seed);
    const Matrix u = random_factor(rows, rank, dist, rng);
    const Matrix v = random_factor(cols, rank, dist, rng);
    return RewardMatrix(u * v.transpose());
}

// CSV ------------------------------------------------------------------------

namespace detail {

inline std::string_view trim(std::string_view s)
{
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
    return s;
}

inline double parse_double(std::string_view s)
{
    s = trim(s);
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size())
        throw ParseError("not a number: '" + std::string(s) + "'");
    return v;
}

inline std::vector<std::string_view> split(std::string_view line, char sep)
{
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(sep, start);
        if (pos == std::string_view::npos) {
            out.push_back(line.substr(start));
            return out;
        }
        out.push_back(line.substr(start, pos - start));
        start = pos + 1;
    }
}

inline std::string format_double(double v)
{
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

} // namespace detail

/// Headerless CSV, one matrix row per line. Blank lines are skipped; ragged
/// rows are rejected.
inline RewardMatrix read_reward_matrix_csv(std::istream& in)
{
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        std::vector<double> row;
        for (auto field : detail::split(line, ',')) {
            try {
                row.push_back(detail::parse_double(field));
            } catch (const ParseError& e) {
                throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
            }
        }
        if (!rows.empty() && row.size() != rows.front().size())
            throw ParseError("line " + std::to_string(line_no) + ": ragged row (" + std::to_string(row.size()) +
                             " columns, expected " + std::to_string(rows.front().size()) + ")");
        rows.push_back(std::move(row));
    }
    if (rows.empty()) throw ParseError("empty reward matrix file");
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(rows.front().size()));
    for (Index j = 0; j < m.rows(); ++j)
        for (Index k = 0; k < m.cols(); ++k) m(j, k) = rows[static_cast<std::size_t>(j)][static_cast<std::size_t>(k)];
    if (!m.allFinite()) throw ParseError("reward matrix contains non-finite values");
    return RewardMatrix(std::move(m));
}

inline RewardMatrix load_reward_matrix_csv(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open " + path);
    return read_reward_matrix_csv(in);
}

inline void write_reward_matrix_csv(std::ostream& out, const RewardMatrix& b)
{
    for (Index j = 0; j < b.rows(); ++j) {
        for (Index k = 0; k < b.cols(); ++k) {
            if (k) out << ',';
            out << detail::format_double(b(j, k));
        }
        out << '\n';
    }
}

} // namespace blab
