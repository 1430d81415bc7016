#include "blab/bandit_env.hpp"
#include "blab/experiment.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace blab;

TEST(Environment, NoiselessPullIsTruth)
{
    const auto b = generate_low_rank(5, 4, 2, FactorDistribution::Uniform01, 1);
    const Environment env(b, 0.0, 2);
    for (std::int64_t t = 1; t <= 20; ++t) EXPECT_EQ(env.pull({2, 3}, t), b(2, 3));
    EXPECT_THROW(env.pull({5, 0}, 1), OutOfRange);
    EXPECT_THROW(Environment(b, -1.0, 1), InvalidArgument);
}

TEST(Environment, NoisyMeanWithinClt)
{
    const auto b = generate_low_rank(5, 4, 2, FactorDistribution::Uniform01, 1);
    const Environment env(b, 0.1, 3);
    const int n = 100000;
    double sum = 0.0;
    for (int t = 1; t <= n; ++t) sum += env.pull({1, 1}, t);
    EXPECT_LE(std::abs(sum / n - b(1, 1)), 3.0 * 0.1 / std::sqrt(static_cast<double>(n)));
}

TEST(Environment, DeterministicAndShared)
{
    const auto b = generate_low_rank(5, 4, 2, FactorDistribution::Uniform01, 1);
    const Environment e1(b, 0.1, 4), e2(b, 0.1, 4), e3(b, 0.1, 5);
    EXPECT_EQ(e1.pull({0, 0}, 7), e2.pull({0, 0}, 7));
    EXPECT_NE(e1.pull({0, 0}, 7), e3.pull({0, 0}, 7));
    // Same round, different arms: the noise draw is shared.
    EXPECT_DOUBLE_EQ(e1.pull({0, 0}, 9) - b(0, 0), e1.pull({3, 2}, 9) - b(3, 2));
}

TEST(Environment, NoiseAutocorrelationSmall)
{
    const Environment env(RewardMatrix(Matrix::Zero(1, 1)), 1.0, 6);
    const int n = 10000;
    std::vector<double> x(n);
    for (int t = 1; t <= n; ++t) x[t - 1] = env.pull({0, 0}, t);
    const double mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double num = 0.0, den = 0.0;
    for (int i = 0; i < n; ++i) {
        den += (x[i] - mean) * (x[i] - mean);
        if (i + 1 < n) num += (x[i] - mean) * (x[i + 1] - mean);
    }
    EXPECT_LE(std::abs(num / den), 3.0 / std::sqrt(static_cast<double>(n)));
}

TEST(GapReport, Examples)
{
    Matrix b(2, 2);
    b << 1, 2, 3, 4;
    const auto r = oracle_gap_and_best(RewardMatrix(b));
    ASSERT_EQ(r.best.size(), 1u);
    EXPECT_EQ(r.best[0], (ArmIndex{1, 1}));
    EXPECT_DOUBLE_EQ(*r.gap, 1.0);
    const auto c = oracle_gap_and_best(RewardMatrix(Matrix::Constant(2, 3, 0.5)));
    EXPECT_EQ(c.best.size(), 6u);
    EXPECT_FALSE(c.gap.has_value());
}

TEST(GapReport, MatchesEnumeration)
{
    Rng rng(8);
    std::uniform_int_distribution<int> level(0, 4);
    for (int s = 0; s < 30; ++s) {
        Matrix b(6, 6);
        for (Index i = 0; i < b.size(); ++i) b.data()[i] = level(rng) * 0.25;
        const auto r = oracle_gap_and_best(RewardMatrix(b));
        double top = -1e300;
        for (Index j = 0; j < 6; ++j)
            for (Index k = 0; k < 6; ++k) top = std::max(top, b(j, k));
        std::vector<ArmIndex> best;
        double gap = 1e300;
        for (Index j = 0; j < 6; ++j)
            for (Index k = 0; k < 6; ++k) {
                if (b(j, k) == top) best.push_back({j, k});
                else gap = std::min(gap, top - b(j, k));
            }
        EXPECT_EQ(r.best, best);
        if (gap < 1e300) EXPECT_DOUBLE_EQ(*r.gap, gap);
        else EXPECT_FALSE(r.gap.has_value());
    }
}

TEST(Contextual, Shapes)
{
    const auto inst = generate_contextual(8, 10, 3, 7, 0.1, 5);
    EXPECT_EQ(inst.truth.rows(), 8);
    EXPECT_EQ(inst.truth.cols(), 10);
    EXPECT_LE(numerical_rank(inst.truth.values()), 3);
    EXPECT_EQ(inst.theta().size(), 560);
    // Lifted features reproduce the reward matrix.
    const Vector th = inst.theta();
    const auto arms = inst.lifted_arms();
    for (Index j = 0; j < 8; ++j)
        for (Index k = 0; k < 10; ++k) {
            const auto& f = arms[static_cast<std::size_t>(j * 10 + k)];
            double v = 0.0;
            for (std::size_t i = 0; i < f.index.size(); ++i) v += f.value[i] * th(f.index[i]);
            EXPECT_NEAR(v, inst.truth(j, k), 1e-10);
        }
    EXPECT_EQ(numerical_rank(generate_contextual(4, 5, 1, 1, 0.1, 6).truth.values()), 1);
    EXPECT_THROW(generate_contextual(2, 5, 3, 1, 0.1, 6), InvalidArgument);
}

TEST(RegretTrace, OracleZeroAndBounds)
{
    const auto b = generate_low_rank(6, 6, 2, FactorDistribution::Uniform01, 3);
    const Environment env(b, 0.1, 4);
    OraclePolicy oracle(b);
    EXPECT_EQ(play(oracle, env, 200, "oracle", 0).final_regret(), 0.0);

    UcbPolicy ucb(6, 6, UcbRule{}, 5);
    const auto tr = play(ucb, env, 300, "ucb", 0);
    ASSERT_EQ(tr.rounds.size(), 300u);
    const double range = b.values().maxCoeff() - b.values().minCoeff();
    double prev = 0.0;
    for (const auto& r : tr.rounds) {
        EXPECT_GE(r.inst_regret, 0.0);
        EXPECT_GE(r.cum_regret, prev);
        EXPECT_LE(r.cum_regret, static_cast<double>(r.t) * range + 1e-9);
        prev = r.cum_regret;
    }
}

TEST(RegretTrace, CsvRows)
{
    RegretTrace tr;
    tr.policy = "lrb(h=1,f=2)";
    tr.replicate = 3;
    tr.record(1, {0, 4}, 0.5, 0.25, true);
    tr.record(2, {1, 1}, 1.0, 0.0, false);
    std::ostringstream os;
    write_trace_rows(os, tr);
    EXPECT_EQ(std::string(kTraceCsvHeader), "replicate,t,policy,row,col,reward,inst_regret,cum_regret");
    EXPECT_EQ(os.str(), "3,1,\"lrb(h=1,f=2)\",1,5,0.5,0.25,0.25\n3,2,\"lrb(h=1,f=2)\",2,2,1,0,0.25\n");
}
