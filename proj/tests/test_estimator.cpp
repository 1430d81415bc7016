#include "blab/estimator.hpp"
#include "blab/policies.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <sstream>

using namespace blab;

namespace {

double rel_error(const Matrix& est, const Matrix& truth) { return (est - truth).norm() / truth.norm(); }

bool nonincreasing(const std::vector<double>& v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] > v[i - 1]) return false;
    return true;
}

// n distinct cells, observed once each with Gaussian noise.
ObservationSet observe_cells(const Matrix& b, Index n, double sd, Rng& rng)
{
    std::normal_distribution<double> noise(0.0, sd);
    ObservationSet obs(b.rows(), b.cols());
    std::int64_t t = 0;
    for (Index c : sample_without_replacement(b.size(), n, rng)) {
        const Index j = c / b.cols(), k = c % b.cols();
        obs.add({j, k}, b(j, k) + (sd > 0 ? noise(rng) : 0.0), ++t);
    }
    return obs;
}

SolverConfig with_lambda(LambdaRule rule)
{
    SolverConfig cfg;
    cfg.lambda = rule;
    return cfg;
}

} // namespace

TEST(SvtShrink, Examples)
{
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = 3;
    m(1, 1) = 1;
    Matrix want = Matrix::Zero(2, 2);
    want(0, 0) = 2;
    EXPECT_LE((svt_shrink(m, 1.0) - want).cwiseAbs().maxCoeff(), 1e-12);

    Rng rng(3);
    std::normal_distribution<double> n01;
    Matrix r(5, 4);
    for (Index i = 0; i < r.size(); ++i) r.data()[i] = n01(rng);
    EXPECT_LE((svt_shrink(r, 0.0) - r).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_EQ(svt_shrink(r, singular_values(r)(0)).cwiseAbs().maxCoeff(), 0.0);
    EXPECT_THROW(svt_shrink(r, -1.0), InvalidArgument);
}

TEST(SvtShrink, IsProximalMap)
{
    Rng rng(41);
    std::normal_distribution<double> n01;
    for (int c = 0; c < 20; ++c) {
        Matrix m(6, 6);
        for (Index i = 0; i < m.size(); ++i) m.data()[i] = n01(rng);
        const double tau = std::abs(n01(rng)) * 2.0;
        const Matrix z = svt_shrink(m, tau);
        auto obj = [&](const Matrix& x) { return 0.5 * (x - m).squaredNorm() + tau * nuclear_norm(x); };
        const double base = obj(z);
        for (int p = 0; p < 200; ++p) {
            Matrix d(6, 6);
            for (Index i = 0; i < d.size(); ++i) d.data()[i] = n01(rng);
            const double eps = std::pow(10.0, -1.0 - (p % 4));
            ASSERT_GE(obj(z + eps * d) - base, -1e-12);
        }
    }
}

TEST(ObservationSet, RejectsBadInput)
{
    ObservationSet obs(2, 2);
    EXPECT_THROW(obs.add({2, 0}, 1.0, 1), OutOfRange);
    EXPECT_THROW(obs.add({0, 0}, std::nan(""), 1), InvalidArgument);
    obs.add({0, 0}, 1.0, 3);
    EXPECT_THROW(obs.add({0, 1}, 1.0, 3), InvalidArgument);
    EXPECT_THROW(solve_nuclear_norm(ObservationSet(2, 2), SolverConfig{}), EmptyObservations);
    SolverConfig bad;
    bad.max_iters = 0;
    EXPECT_THROW(solve_nuclear_norm(obs, bad), InvalidArgument);
}

TEST(ObservationSet, CsvRoundTrip)
{
    ObservationSet obs(3, 3);
    obs.add({0, 2}, 0.25, 1);
    obs.add({2, 1}, -1.5, 4);
    std::stringstream ss;
    write_observations_csv(ss, obs);
    EXPECT_EQ(ss.str().substr(0, 11), "t,row,col,y");
    const auto back = read_observations_csv(ss, 3, 3);
    ASSERT_EQ(back.size(), 2u);
    EXPECT_EQ(back[1].arm, (ArmIndex{2, 1}));
    EXPECT_EQ(back[1].t, 4);
    EXPECT_EQ(back[1].value, -1.5);
}

TEST(Solver, NoiselessFullObservationRankOne)
{
    Vector u(4), v(4);
    u << 1, 2, -1, 0.5;
    v << 0.3, -1, 2, 1;
    const Matrix b = u * v.transpose();
    ObservationSet obs(4, 4);
    std::int64_t t = 0;
    for (Index j = 0; j < 4; ++j)
        for (Index k = 0; k < 4; ++k) obs.add({j, k}, b(j, k), ++t);
    auto cfg = with_lambda(LambdaRule::fixed(1e-8));
    cfg.max_iters = 5000;
    cfg.rel_tol = 1e-12;
    const auto est = solve_nuclear_norm(obs, cfg);
    EXPECT_LE(rel_error(est.matrix, b), 1e-4);
    EXPECT_TRUE(nonincreasing(est.objective_trace));
}

TEST(Solver, ZeroAboveLambdaMax)
{
    const Matrix b = generate_low_rank(5, 5, 2, FactorDistribution::StdNormal, 9).values();
    Rng rng(10);
    const auto obs = observe_cells(b, 15, 0.0, rng);
    const double lmax = lambda_max(obs);

    // Subgradient oracle: zero is optimal iff the loss gradient at zero has
    // spectral norm at most lambda.
    Matrix grad = Matrix::Zero(5, 5);
    for (const auto& o : obs) grad(o.arm.row, o.arm.col) -= 2.0 * o.value / static_cast<double>(obs.size());
    EXPECT_NEAR(Eigen::JacobiSVD<Matrix>(grad).singularValues()(0), lmax, 1e-12 * lmax);

    EXPECT_LE(solve_nuclear_norm(obs, with_lambda(LambdaRule::fixed(lmax))).matrix.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_LE(solve_nuclear_norm(obs, with_lambda(LambdaRule::fixed(2 * lmax))).matrix.cwiseAbs().maxCoeff(), 1e-8);
    EXPECT_GT(solve_nuclear_norm(obs, with_lambda(LambdaRule::fixed(0.8 * lmax))).matrix.cwiseAbs().maxCoeff(), 1e-8);
}

// Regression pin: the default penalty sqrt(1/n) on this instance. The value
// was recorded from a converged run.
TEST(Solver, DefaultPenaltyRegression)
{
    const Matrix b = generate_low_rank(50, 50, 3, FactorDistribution::Uniform01, 11).values();
    Rng rng(12);
    std::normal_distribution<double> nz(0.0, 0.1);
    ObservationSet obs(50, 50);
    std::int64_t t = 0;
    for (Index c : sample_without_replacement(2500, 1000, rng)) obs.add({c / 50, c % 50}, b(c / 50, c % 50) + nz(rng), ++t);
    SolverConfig cfg;
    cfg.max_iters = 5000;
    cfg.rel_tol = 1e-10;
    const auto est = solve_nuclear_norm(obs, cfg);
    EXPECT_TRUE(est.converged);
    const double recorded = 0.908820;
    EXPECT_NEAR(rel_error(est.matrix, b), recorded, 0.2 * recorded);

    cfg.lambda = LambdaRule::inverse_sqrt_n(0.1);
    EXPECT_NEAR(rel_error(solve_nuclear_norm(obs, cfg).matrix, b), 0.154590, 0.2 * 0.154590);
}

TEST(Solver, ObjectiveTraceNonincreasing)
{
    for (std::uint64_t s = 0; s < 10; ++s) {
        const Matrix b = generate_low_rank(20, 15, 2, FactorDistribution::StdNormal, s).values();
        Rng rng(s + 100);
        const auto obs = observe_cells(b, 120, 0.1, rng);
        for (double scale : {1.0, 0.1, 0.01}) {
            auto cfg = with_lambda(LambdaRule::inverse_sqrt_n(scale));
            EXPECT_TRUE(nonincreasing(solve_nuclear_norm(obs, cfg).objective_trace));
            cfg.accelerate = false;
            EXPECT_TRUE(nonincreasing(solve_nuclear_norm(obs, cfg).objective_trace));
        }
    }
}

TEST(Solver, NuclearNormBelowExactFit)
{
    const Matrix b = generate_low_rank(8, 7, 3, FactorDistribution::StdNormal, 5).values();
    ObservationSet obs(8, 7);
    std::int64_t t = 0;
    for (Index j = 0; j < 8; ++j)
        for (Index k = 0; k < 7; ++k) obs.add({j, k}, b(j, k), ++t);
    for (double lam : {1e-3, 1e-2, 0.1}) {
        const auto est = solve_nuclear_norm(obs, with_lambda(LambdaRule::fixed(lam)));
        EXPECT_LE(nuclear_norm(est.matrix), nuclear_norm(b) + 1e-9);
    }
}

TEST(Solver, ErrorDecreasesWithSamples)
{
    auto median_error = [](Index n) {
        std::vector<double> errs;
        for (std::uint64_t s = 0; s < 10; ++s) {
            const Matrix b = generate_low_rank(50, 50, 3, FactorDistribution::Uniform01, 200 + s).values();
            Rng rng(300 + s);
            const auto obs = observe_cells(b, n, 0.1, rng);
            errs.push_back(rel_error(solve_nuclear_norm(obs, with_lambda(LambdaRule::inverse_sqrt_n(0.1))).matrix, b));
        }
        std::nth_element(errs.begin(), errs.begin() + 5, errs.end());
        return errs[5];
    };
    EXPECT_LT(median_error(1000), median_error(300));
}

TEST(Solver, Deterministic)
{
    const Matrix b = generate_low_rank(20, 20, 3, FactorDistribution::Uniform01, 1).values();
    Rng r1(2), r2(2);
    const auto o1 = observe_cells(b, 150, 0.1, r1);
    const auto o2 = observe_cells(b, 150, 0.1, r2);
    const auto cfg = with_lambda(LambdaRule::inverse_sqrt_n(0.1));
    EXPECT_TRUE(solve_nuclear_norm(o1, cfg).matrix == solve_nuclear_norm(o2, cfg).matrix);
    EXPECT_TRUE(forced_sample_estimate(o1, 3, cfg).matrix == forced_sample_estimate(o2, 3, cfg).matrix);
}

TEST(RowEnhance, ExactBaseIsFixedPoint)
{
    const Matrix b = generate_low_rank(10, 8, 3, FactorDistribution::StdNormal, 7).values();
    LowRankEstimate base;
    base.matrix = b;
    ObservationSet second(10, 8);
    std::int64_t t = 0;
    for (Index j = 0; j < 10; ++j)
        for (Index k : {0, 3, 5, 7}) second.add({j, k}, b(j, k), ++t);
    const auto out = row_enhance(base, second, 3);
    EXPECT_LE((out.matrix - b).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(RowEnhance, UnobservedRowsCopiedAndRowSpace)
{
    const Matrix b = generate_low_rank(10, 8, 3, FactorDistribution::StdNormal, 8).values();
    Rng rng(1);
    std::normal_distribution<double> nz(0.0, 0.3);
    LowRankEstimate base;
    base.matrix = b;
    for (Index i = 0; i < b.size(); ++i) base.matrix.data()[i] += nz(rng);
    ObservationSet second(10, 8);
    std::int64_t t = 0;
    for (Index j = 0; j < 10; j += 2)
        for (Index k = 0; k < 8; k += 2) second.add({j, k}, b(j, k) + nz(rng), ++t);
    const auto out = row_enhance(base, second, 3);

    const Matrix vr = Eigen::JacobiSVD<Matrix>(base.matrix, Eigen::ComputeThinV).matrixV().leftCols(3);
    for (Index j = 0; j < 10; ++j) {
        if (j % 2) {
            EXPECT_TRUE(out.matrix.row(j) == base.matrix.row(j));
        } else {
            const Vector row = out.matrix.row(j).transpose();
            EXPECT_LE((row - vr * (vr.transpose() * row)).norm(), 1e-9);
        }
    }
    EXPECT_THROW(row_enhance(base, second, 9), InvalidArgument);
    LowRankEstimate zero;
    zero.matrix = Matrix::Zero(10, 8);
    EXPECT_THROW(row_enhance(zero, second, 1), RankDeficient);
}

TEST(RowEnhance, ImprovesMaxRowErrorMostly)
{
    int wins = 0;
    for (std::uint64_t s = 0; s < 20; ++s) {
        const Matrix b = generate_low_rank(30, 30, 3, FactorDistribution::Uniform01, 500 + s).values();
        Rng rng(600 + s);
        const auto first = observe_cells(b, 540, 0.1, rng);
        ObservationSet second(30, 30);
        std::int64_t t = 1000;
        for (Index j = 0; j < 30; ++j)
            for (Index k : sample_without_replacement(30, 10, rng)) second.add({j, k}, b(j, k), ++t);
        const auto base = solve_nuclear_norm(first, with_lambda(LambdaRule::inverse_sqrt_n(0.03)));
        const auto enh = row_enhance(base, second, 3);
        wins += max_row_l2_norm(Matrix(enh.matrix - b)) <= max_row_l2_norm(Matrix(base.matrix - b));
    }
    EXPECT_GE(wins, 16);
}

TEST(ForcedSampleEstimate, SplitRule)
{
    ObservationSet obs(2, 2);
    for (std::int64_t t = 1; t <= 4; ++t) obs.add({0, 0}, static_cast<double>(t), t);
    auto [a, b] = split_forced_samples(obs);
    ASSERT_EQ(a.size(), 2u);
    ASSERT_EQ(b.size(), 2u);
    EXPECT_EQ(a[1].t, 2);
    EXPECT_EQ(b[0].t, 3);
    obs.add({1, 1}, 5.0, 5);
    EXPECT_EQ(split_forced_samples(obs).first.size(), 3u);
    ObservationSet one(2, 2);
    one.add({0, 0}, 1.0, 1);
    EXPECT_THROW(forced_sample_estimate(one, 1, SolverConfig{}), TooFewSamples);
}

TEST(ForcedSampleEstimate, NoiselessFullCoverageRankOne)
{
    Vector u(5), v(4);
    u << 1, 0.5, 2, 1.5, 0.8;
    v << 0.7, 1.2, 0.4, 1;
    const Matrix b = u * v.transpose();
    ObservationSet obs(5, 4);
    std::int64_t t = 0;
    for (int pass = 0; pass < 2; ++pass)
        for (Index j = 0; j < 5; ++j)
            for (Index k = 0; k < 4; ++k) obs.add({j, k}, b(j, k), ++t);
    const auto est = forced_sample_estimate(obs, 1, with_lambda(LambdaRule::fixed(1e-3)));
    EXPECT_LE(rel_error(est.matrix, b), 1e-6);
}

// Regression pin: the forced-sample estimate from 225 uniform samples on a
// 100 x 100 rank-3 matrix, at the bandit policies' penalty scale. With about
// one second-half sample per row the row refits are badly underdetermined.
TEST(ForcedSampleEstimate, SparseBudgetRegression)
{
    const auto b = generate_low_rank(100, 100, 3, FactorDistribution::Uniform01, 21);
    Rng rng(22);
    std::normal_distribution<double> nz(0.0, 0.1);
    ObservationSet obs(100, 100);
    for (std::int64_t t = 1; t <= 225; ++t) {
        const auto a = uniform_arm(100, 100, rng);
        obs.add(a, b(a) + nz(rng), t);
    }
    const auto est = forced_sample_estimate(obs, 3, with_lambda(LambdaRule::inverse_sqrt_n(0.1)));
    const double err = max_row_l2_norm(Matrix(est.matrix - b.values()));
    EXPECT_NEAR(err, 287.522125, 0.2 * 287.522125);
}

TEST(EstimateRank, RatioRule)
{
    Vector sv(4);
    sv << 10, 2, 0.6, 0.1;
    EXPECT_EQ(estimate_rank(sv), 3);
    EXPECT_EQ(estimate_rank(sv, 0.3), 1);
    EXPECT_EQ(estimate_rank(Vector::Zero(3)), 0);
}
