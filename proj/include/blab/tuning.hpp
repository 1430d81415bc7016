#pragma once

// Parameter selection from regret-bound surrogates: the phi1/phi2 trade-off
// in the filtering resolution h, the submatrix size, and the horizon beyond
// which subsampling stops paying. Also the log-linear fits of g(h) and psi.

#include "blab/matrix_core.hpp"
#include "blab/random.hpp"
#include "blab/types.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <string>
#include <vector>

namespace blab {

/// Constants of the bound surrogates for one (m_r, m_c) problem.
struct CostModel {
    double omega1 = 1.0;
    double omega2 = 1.0;
    double b_star = 1.0;
    double mu_star = 1.0;
    Index rank = 3;
    Index m_r = 100;
    Index m_c = 100;
    double c1 = 1.0;
    double c2 = 1.0;

    void validate() const
    {
        if (!(omega1 > 0.0 && omega2 > 0.0 && b_star > 0.0 && mu_star > 0.0 && c1 > 0.0 && c2 > 0.0))
            throw InvalidArgument("cost model constants must be positive");
        if (rank < 1 || m_r < 1 || m_c < 1) throw InvalidArgument("cost model dimensions must be positive");
    }

    CostModel with_dims(Index rows, Index cols) const
    {
        CostModel m = *this;
        m.m_r = rows;
        m.m_c = cols;
        return m;
    }
};

/// h -> E[sqrt(g(h))] for the problem at hand.
using SqrtGFn = std::function<double(double)>;

/// gamma(h) = sqrt(m_r / r) h / (64 mu*).
inline double gamma_of_h(double h, const CostModel& m)
{
    return std::sqrt(static_cast<double>(m.m_r) / static_cast<double>(m.rank)) * h / (64.0 * m.mu_star);
}

inline double phi1(double h, double t, const CostModel& m)
{
    const double g = gamma_of_h(h, m);
    return m.omega1 * (1.0 + 1.0 / (g * g)) * static_cast<double>(m.rank) * static_cast<double>(m.m_r + m.m_c) *
           std::log(t);
}

inline double phi2(double h, double t, const CostModel& m, const SqrtGFn& sqrt_g)
{
    return m.omega2 * std::sqrt(2.0 * t * std::log(t)) * sqrt_g(h);
}

inline double h_lower_bound(double horizon, const CostModel& m)
{
    const double first = 64.0 * m.mu_star *
                         std::sqrt(2.0 * m.c1 * static_cast<double>(m.rank) / (horizon * static_cast<double>(m.m_r)));
    return std::max(first, 2.0 * m.c2 / horizon);
}

enum class HCase { LowerBound = 1, Crossing = 2, UpperBound = 3, Degenerate = 4 };

inline std::string to_string(HCase c)
{
    switch (c) {
    case HCase::LowerBound: return "lower_bound";
    case HCase::Crossing: return "crossing";
    case HCase::UpperBound: return "upper_bound";
    case HCase::Degenerate: return "degenerate";
    }
    return "unknown";
}

struct HSelection {
    double h = 0.0;
    HCase which = HCase::Degenerate;
    double bound = 0.0; // phi1(h) + phi2(h) at T
};

inline constexpr double kBisectionRelWidth = 1e-6;

/// Picks h on [lowh(T), 2 b*] by balancing phi1 against phi2 at t = T.
inline HSelection select_h(const CostModel& m, double horizon, const SqrtGFn& sqrt_g)
{
    m.validate();
    if (!(horizon >= 2.0)) throw InvalidArgument("horizon must be at least 2");
    auto total = [&](double h) { return phi1(h, horizon, m) + phi2(h, horizon, m, sqrt_g); };
    auto diff = [&](double h) { return phi1(h, horizon, m) - phi2(h, horizon, m, sqrt_g); };

    const double hi = 2.0 * m.b_star;
    const double lo = h_lower_bound(horizon, m);
    if (lo > hi) return {hi, HCase::Degenerate, total(hi)};
    if (diff(lo) <= 0.0) return {lo, HCase::LowerBound, total(lo)};
    if (diff(hi) >= 0.0) return {hi, HCase::UpperBound, total(hi)};

    double a = lo;
    double b = hi;
    while (b - a > kBisectionRelWidth * b) {
        const double mid = 0.5 * (a + b);
        if (diff(mid) > 0.0) a = mid;
        else b = mid;
    }
    const double h = 0.5 * (a + b);
    return {h, HCase::Crossing, total(h)};
}

// g and psi models -------------------------------------------------------------------

/// g(h) = exp(a1 h + b1), the same for every submatrix size.
inline SqrtGFn sqrt_g_exponential(double a1, double b1)
{
    return [a1, b1](double h) { return std::exp(0.5 * (a1 * h + b1)); };
}

/// E over random m_r x m_c submatrices of sqrt(g(h)), from `draws` fixed
/// index sets. Each draw keeps its shortfalls sorted so a query is a search.
inline SqrtGFn sqrt_g_empirical(const Matrix& b, Index m_r, Index m_c, std::size_t draws, std::uint64_t seed)
{
    if (draws < 1) throw InvalidArgument("need at least one draw");
    SplitMix64 rng(seed);
    const bool full = m_r == b.rows() && m_c == b.cols();
    const std::size_t n = full ? 1 : draws;
    auto gaps = std::make_shared<std::vector<std::vector<double>>>();
    gaps->reserve(n);
    for (std::size_t s = 0; s < n; ++s) {
        const auto idx = full ? SubmatrixIndex::full(b.rows(), b.cols()) : sample_submatrix(b.rows(), b.cols(), m_r, m_c, rng);
        const double top = submatrix_max(b, idx);
        std::vector<double> d;
        d.reserve(static_cast<std::size_t>(m_r * m_c));
        for (Index j : idx.row_ids)
            for (Index k : idx.col_ids) d.push_back(top - b(j, k));
        std::sort(d.begin(), d.end());
        gaps->push_back(std::move(d));
    }
    return [gaps](double h) {
        double acc = 0.0;
        for (const auto& d : *gaps) {
            const auto count = std::upper_bound(d.begin(), d.end(), h) - d.begin();
            acc += std::sqrt(static_cast<double>(count));
        }
        return acc / static_cast<double>(gaps->size());
    };
}

/// (m_r, m_c) -> psi.
using PsiFn = std::function<double(Index, Index)>;

/// psi(eta) = max(a2 log eta + b2, 0) with eta the geometric-mean sampling
/// fraction; exactly zero for the full matrix.
inline PsiFn psi_log_fit(double a2, double b2, Index d_r, Index d_c)
{
    return [=](Index m_r, Index m_c) {
        if (m_r >= d_r && m_c >= d_c) return 0.0;
        const double eta = std::sqrt(static_cast<double>(m_r) / static_cast<double>(d_r) *
                                     static_cast<double>(m_c) / static_cast<double>(d_c));
        return std::max(a2 * std::log(eta) + b2, 0.0);
    };
}

inline PsiFn psi_monte_carlo(const Matrix& b, std::size_t samples, std::uint64_t seed)
{
    return [b, samples, seed](Index m_r, Index m_c) {
        if (m_r == b.rows() && m_c == b.cols()) return 0.0;
        return subsampling_cost(b, m_r, m_c, PsiMonteCarlo{samples, seed}).value;
    };
}

// Submatrix selection ------------------------------------------------------------------

struct SubmatrixChoice {
    Index m_r = 0;
    Index m_c = 0;
    double h = 0.0;
    HCase which = HCase::Degenerate;
    double bound = 0.0; // psi T + phi1 + phi2
};

/// Square fractions eta = 0.1, ..., 1.0 of (d_r, d_c), deduplicated.
inline std::vector<std::pair<Index, Index>> default_submatrix_grid(Index d_r, Index d_c)
{
    std::vector<std::pair<Index, Index>> grid;
    for (int i = 1; i <= 10; ++i) {
        const double eta = 0.1 * i;
        const Index r = std::max<Index>(1, static_cast<Index>(std::lround(eta * static_cast<double>(d_r))));
        const Index c = std::max<Index>(1, static_cast<Index>(std::lround(eta * static_cast<double>(d_c))));
        if (grid.empty() || grid.back() != std::make_pair(r, c)) grid.emplace_back(r, c);
    }
    return grid;
}

/// (m_r, m_c) -> E[sqrt g] model for that size.
using SqrtGFactory = std::function<SqrtGFn(Index, Index)>;

inline SubmatrixChoice evaluate_submatrix(const CostModel& base, Index m_r, Index m_c, const PsiFn& psi,
                                          double horizon, const SqrtGFactory& g_for)
{
    const CostModel m = base.with_dims(m_r, m_c);
    const auto sel = select_h(m, horizon, g_for(m_r, m_c));
    return {m_r, m_c, sel.h, sel.which, psi(m_r, m_c) * horizon + sel.bound};
}

/// Minimizes psi T + phi1 + phi2 over `grid`; ties go to the larger m_r + m_c.
inline SubmatrixChoice select_submatrix(const CostModel& base, const std::vector<std::pair<Index, Index>>& grid,
                                        const PsiFn& psi, double horizon, const SqrtGFactory& g_for)
{
    if (grid.empty()) throw InvalidArgument("submatrix grid is empty");
    SubmatrixChoice best;
    bool first = true;
    for (const auto& [r, c] : grid) {
        const auto cand = evaluate_submatrix(base, r, c, psi, horizon, g_for);
        const bool better = cand.bound < best.bound ||
                            (cand.bound == best.bound && cand.m_r + cand.m_c > best.m_r + best.m_c);
        if (first || better) {
            best = cand;
            first = false;
        }
    }
    return best;
}

inline std::vector<double> geometric_grid(double from, double to, double ratio = 1.2)
{
    if (!(from > 0.0 && to >= from && ratio > 1.0)) throw InvalidArgument("invalid geometric grid");
    std::vector<double> out;
    for (double t = from; t <= to * (1.0 + 1e-12); t *= ratio) out.push_back(std::floor(t));
    return out;
}

inline constexpr double kNeverSwitches = std::numeric_limits<double>::infinity();

/// Smallest grid horizon from which on the full (d_r, d_c) matrix is always
/// selected; infinity if the last grid point still prefers a submatrix.
inline double estimate_T_ss(const CostModel& base, Index d_r, Index d_c, const PsiFn& psi, const SqrtGFactory& g_for,
                            const std::vector<double>& horizons,
                            std::vector<std::pair<Index, Index>> grid = {})
{
    if (horizons.empty()) throw InvalidArgument("horizon grid is empty");
    if (grid.empty()) grid = default_submatrix_grid(d_r, d_c);
    double threshold = kNeverSwitches;
    for (auto it = horizons.rbegin(); it != horizons.rend(); ++it) {
        const auto choice = select_submatrix(base, grid, psi, *it, g_for);
        if (choice.m_r != d_r || choice.m_c != d_c) break;
        threshold = *it;
    }
    return threshold;
}

// Fits ----------------------------------------------------------------------------------

struct LinearFit {
    double slope = 0.0;
    double intercept = 0.0;
    double r_squared = 0.0;
};

inline LinearFit ols(const std::vector<double>& x, const std::vector<double>& y)
{
    if (x.size() != y.size()) throw DimensionMismatch("fit inputs differ in length");
    if (x.size() < 3) throw TooFewSamples("a fit needs at least three points");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw InvalidArgument("fit abscissae are all equal");
    LinearFit f;
    f.slope = sxy / sxx;
    f.intercept = my - f.slope * mx;
    f.r_squared = syy == 0.0 ? 1.0 : std::clamp(sxy * sxy / (sxx * syy), 0.0, 1.0);
    return f;
}

struct FitCoefficients {
    double a1 = 0.0, b1 = 0.0, r2_g = 0.0;
    double a2 = 0.0, b2 = 0.0, r2_psi = 0.0;
};

/// log g = a1 h + b1 and psi = a2 log(eta) + b2 by least squares.
inline FitCoefficients fit_g_and_psi(const std::vector<std::pair<double, double>>& h_g,
                                     const std::vector<std::pair<double, double>>& eta_psi)
{
    std::vector<double> x, y;
    for (const auto& [h, g] : h_g) {
        if (!(g > 0.0)) throw DomainError("g samples must be positive");
        x.push_back(h);
        y.push_back(std::log(g));
    }
    const auto fg = ols(x, y);
    x.clear();
    y.clear();
    for (const auto& [eta, psi] : eta_psi) {
        if (!(eta > 0.0)) throw DomainError("eta samples must be positive");
        x.push_back(std::log(eta));
        y.push_back(psi);
    }
    const auto fp = ols(x, y);
    return {fg.slope, fg.intercept, fg.r_squared, fp.slope, fp.intercept, fp.r_squared};
}

/// Empirical g(h) and psi(eta) averaged over a random low-rank family.
struct FamilyCurves {
    std::vector<std::pair<double, double>> h_g;
    std::vector<std::pair<double, double>> eta_psi;
};

inline FamilyCurves family_curves(Index rows, Index cols, Index rank, FactorDistribution dist,
                                  const std::vector<double>& hs, const std::vector<double>& etas,
                                  std::size_t g_matrices, std::size_t psi_samples, std::uint64_t seed)
{
    FamilyCurves out;
    std::vector<double> g_sum(hs.size(), 0.0);
    for (std::size_t s = 0; s < g_matrices; ++s) {
        const auto b = generate_low_rank(rows, cols, rank, dist, derive_seed(seed, {1, s}));
        for (std::size_t i = 0; i < hs.size(); ++i) g_sum[i] += static_cast<double>(near_optimal_count(b, hs[i]));
    }
    for (std::size_t i = 0; i < hs.size(); ++i) out.h_g.emplace_back(hs[i], g_sum[i] / static_cast<double>(g_matrices));

    for (std::size_t i = 0; i < etas.size(); ++i) {
        const Index m_r = std::max<Index>(1, static_cast<Index>(std::lround(etas[i] * static_cast<double>(rows))));
        const Index m_c = std::max<Index>(1, static_cast<Index>(std::lround(etas[i] * static_cast<double>(cols))));
        std::uint64_t k = 0;
        const auto est = subsampling_cost_family(
            [&](Rng&) { return generate_low_rank(rows, cols, rank, dist, derive_seed(seed, {2, i, k++})).values(); },
            m_r, m_c, psi_samples, derive_seed(seed, {3, i}));
        out.eta_psi.emplace_back(etas[i], est.value);
    }
    return out;
}

} // namespace blab
