#pragma once

// Brute-force reference computations that cross-check the fast paths.

#include "blab/estimator.hpp"
#include "blab/matrix_core.hpp"
#include "blab/random.hpp"
#include "blab/tuning.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace blab {

struct OracleReport {
    std::string name;
    std::vector<std::string> lines;
    bool pass = true;
};

namespace detail {

inline Index brute_near_optimal_count(const Matrix& b, double h)
{
    double top = b(0, 0);
    for (Index j = 0; j < b.rows(); ++j)
        for (Index k = 0; k < b.cols(); ++k) top = std::max(top, b(j, k));
    Index n = 0;
    for (Index j = 0; j < b.rows(); ++j)
        for (Index k = 0; k < b.cols(); ++k)
            if (b(j, k) >= top - h) ++n;
    return n;
}

/// Every size-k subset of [0, n) as a bitmask.
inline std::vector<unsigned> subsets(int n, int k)
{
    std::vector<unsigned> out;
    for (unsigned mask = 0; mask < (1u << n); ++mask)
        if (__builtin_popcount(mask) == k) out.push_back(mask);
    return out;
}

inline double brute_psi(const Matrix& b, int m_r, int m_c)
{
    const auto rs = subsets(static_cast<int>(b.rows()), m_r);
    const auto cs = subsets(static_cast<int>(b.cols()), m_c);
    double total = 0.0;
    for (unsigned r : rs)
        for (unsigned c : cs) {
            double best = -1e300;
            for (Index j = 0; j < b.rows(); ++j)
                for (Index k = 0; k < b.cols(); ++k)
                    if ((r >> j & 1u) && (c >> k & 1u)) best = std::max(best, b(j, k));
            total += best;
        }
    return b.maxCoeff() - total / static_cast<double>(rs.size() * cs.size());
}

} // namespace detail

inline OracleReport oracle_g(std::size_t matrices = 20, std::uint64_t seed = 1)
{
    OracleReport rep{"g", {}, true};
    Rng rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t mismatches = 0;
    for (std::size_t s = 0; s < matrices; ++s) {
        Matrix b(6, 5);
        for (Index i = 0; i < b.size(); ++i) b.data()[i] = u(rng);
        for (double h : {0.0, 0.05, 0.2, 0.5, u(rng), 1.0}) {
            const Index fast = near_optimal_count(RewardMatrix(b), h);
            if (fast != detail::brute_near_optimal_count(b, h)) ++mismatches;
        }
    }
    rep.lines.push_back("matrices=" + std::to_string(matrices) + " mismatches=" + std::to_string(mismatches));
    rep.pass = mismatches == 0;
    return rep;
}

inline OracleReport oracle_psi(std::uint64_t seed = 2)
{
    OracleReport rep{"psi", {}, true};
    const Matrix b = generate_low_rank(5, 5, 2, FactorDistribution::Uniform01, seed).values();
    const double brute = detail::brute_psi(b, 2, 2);
    const double exact = subsampling_cost(b, 2, 2, PsiExact{}).value;
    const auto mc = subsampling_cost(b, 2, 2, PsiMonteCarlo{20000, seed});
    rep.lines.push_back("enumeration=" + detail::format_double(brute));
    rep.lines.push_back("exact=" + detail::format_double(exact) + " diff=" + detail::format_double(exact - brute));
    rep.lines.push_back("monte_carlo=" + detail::format_double(mc.value) + " se=" + detail::format_double(mc.std_error) +
                        " z=" + detail::format_double(mc.std_error > 0 ? (mc.value - brute) / mc.std_error : 0.0));
    rep.pass = std::abs(exact - brute) <= 1e-12 && std::abs(mc.value - brute) <= 4.0 * mc.std_error + 1e-12;
    return rep;
}

/// svt_shrink(M, tau) minimizes 0.5 ||Z - M||_F^2 + tau ||Z||_*; random
/// perturbations of the output must not lower that objective.
inline OracleReport oracle_prox(std::size_t candidates = 200, std::uint64_t seed = 3)
{
    OracleReport rep{"prox", {}, true};
    Rng rng(seed);
    std::normal_distribution<double> n01(0.0, 1.0);
    double worst = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < candidates; ++c) {
        Matrix m(4, 3);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
        const double tau = std::abs(n01(rng));
        const Matrix z = svt_shrink(m, tau);
        auto obj = [&](const Matrix& x) { return 0.5 * (x - m).squaredNorm() + tau * nuclear_norm(x); };
        const double base = obj(z);
        for (int p = 0; p < 20; ++p) {
            Matrix d(4, 3);
            for (Index i = 0; i < d.size(); ++i) d.data()[i] = n01(rng);
            const double eps = 1e-3 * std::pow(10.0, -(p % 3));
            worst = std::min(worst, obj(z + eps * d) - base);
        }
    }
    rep.lines.push_back("candidates=" + std::to_string(candidates) + " min_margin=" + detail::format_double(worst));
    rep.pass = worst >= -1e-12;
    return rep;
}

inline OracleReport oracle_lambda_max(std::uint64_t seed = 4)
{
    OracleReport rep{"lambda_max", {}, true};
    const auto b = generate_low_rank(5, 5, 2, FactorDistribution::Uniform01, seed);
    ObservationSet obs(5, 5);
    Rng rng(seed);
    std::int64_t t = 0;
    for (Index j = 0; j < 5; ++j)
        for (Index k = 0; k < 5; ++k)
            if ((j + k) % 2 == 0) obs.add({j, k}, b(j, k), ++t);
    const double lmax = lambda_max(obs);
    SolverConfig at;
    at.lambda = LambdaRule::fixed(lmax);
    SolverConfig below = at;
    below.lambda = LambdaRule::fixed(0.9 * lmax);
    const double zero_norm = solve_nuclear_norm(obs, at).matrix.cwiseAbs().maxCoeff();
    const double below_norm = solve_nuclear_norm(obs, below).matrix.cwiseAbs().maxCoeff();
    // Zero is optimal iff the smooth gradient at zero lies in lambda times the
    // unit spectral-norm ball.
    Matrix grad = Matrix::Zero(5, 5);
    for (const auto& o : obs) grad(o.arm.row, o.arm.col) -= 2.0 * o.value / static_cast<double>(obs.size());
    const double spectral = Eigen::JacobiSVD<Matrix>(grad).singularValues()(0);
    rep.lines.push_back("lambda_max=" + detail::format_double(lmax) + " spectral_grad=" + detail::format_double(spectral));
    rep.lines.push_back("max|B| at lambda_max=" + detail::format_double(zero_norm) +
                        " at 0.9 lambda_max=" + detail::format_double(below_norm));
    rep.pass = zero_norm <= 1e-8 && below_norm > 1e-8 && std::abs(spectral - lmax) <= 1e-12 * std::max(1.0, lmax);
    return rep;
}

inline OracleReport oracle_formulas()
{
    OracleReport rep{"formulas", {}, true};
    CostModel m;
    m.rank = 3;
    m.m_r = m.m_c = 100;
    const double t = 2000.0;
    const double gamma = std::sqrt(100.0 / 3.0) * 1.0 / 64.0;
    const double p1_ref = (1.0 + 1.0 / (gamma * gamma)) * 3.0 * 200.0 * std::log(t);
    const double p2_ref = std::sqrt(2.0 * t * std::log(t)) * std::exp(0.5 * (1.719 + 0.057));
    const double p1 = phi1(1.0, t, m);
    const double p2 = phi2(1.0, t, m, sqrt_g_exponential(1.719, 0.057));
    const double lowh = h_lower_bound(1000.0, m);
    rep.lines.push_back("phi1(1)=" + detail::format_double(p1) + " reference=" + detail::format_double(p1_ref));
    rep.lines.push_back("phi2(1)=" + detail::format_double(p2) + " reference=" + detail::format_double(p2_ref));
    rep.lines.push_back("lowh(1000)=" + detail::format_double(lowh) + " reference=" +
                        detail::format_double(64.0 * std::sqrt(6.0 / 1e5)));
    rep.pass = std::abs(p1 - p1_ref) <= 1e-9 * p1_ref && std::abs(p2 - p2_ref) <= 1e-9 * p2_ref &&
               std::abs(lowh - 64.0 * std::sqrt(6.0 / 1e5)) <= 1e-12;
    return rep;
}

inline std::vector<std::string> oracle_names() { return {"g", "psi", "prox", "lambda_max", "formulas"}; }

inline OracleReport run_oracle(const std::string& name)
{
    if (name == "g") return oracle_g();
    if (name == "psi") return oracle_psi();
    if (name == "prox") return oracle_prox();
    if (name == "lambda_max") return oracle_lambda_max();
    if (name == "formulas") return oracle_formulas();
    throw InvalidArgument("unknown oracle '" + name + "'");
}

} // namespace blab
