#include "blab/experiment.hpp"
#include "blab/oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace blab;

namespace {

ExperimentConfig from_text(const std::string& text)
{
    std::istringstream in(text);
    return experiment_from_config(parse_config(in));
}

const char* kSmall = R"(
[env]
generator = low_rank
rows = 12
cols = 10
rank = 2
noise_sd = 0.1

[experiment]
horizon = 150
replications = 3
master_seed = 42

[policies]
lrb(h=0.8,f=30)
sslrb(m=6,h=0.8,f=20)
ucb
ssucb(n=auto)
oful(delta=0.01)
oracle
)";

std::string traces_of(const RunResult& r)
{
    std::ostringstream os;
    write_traces_csv(os, r);
    return os.str();
}

std::string summary_of(const RunResult& r)
{
    std::ostringstream os;
    write_summary_csv(os, r.summary);
    return os.str();
}

std::string expect_config_error(const std::string& text)
{
    try {
        from_text(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    ADD_FAILURE() << "no ConfigError for:\n" << text;
    return {};
}

} // namespace

TEST(PolicySpec, Parse)
{
    const auto s = parse_policy_spec(" sslrb( m=40, h=0.9 ,f=100) ");
    EXPECT_EQ(s.name, "sslrb");
    ASSERT_EQ(s.params.size(), 3u);
    EXPECT_EQ(*s.get("h"), "0.9");
    EXPECT_EQ(s.label(), "sslrb(m=40,h=0.9,f=100)");
    EXPECT_EQ(parse_policy_spec("ucb").label(), "ucb");
    EXPECT_THROW(parse_policy_spec("lrb(h=1"), ConfigError);
    EXPECT_THROW(parse_policy_spec("lrb(h)"), ConfigError);
    EXPECT_THROW(parse_policy_spec("lrb(h=1,h=2)"), ConfigError);
    EXPECT_THROW(parse_policy_spec("l rb"), ConfigError);
}

TEST(PolicySpec, ScheduleAndBudget)
{
    auto c = lrb_config_from_spec(parse_policy_spec("lrb(h=1,f=rho:8)"), 0.1, 1000);
    EXPECT_EQ(c.forced.mode, ForcedSamplingConfig::Mode::Schedule);
    EXPECT_EQ(c.forced.rho, 8.0);
    c = lrb_config_from_spec(parse_policy_spec("lrb(h=1,f=225)"), 0.1, 1000);
    EXPECT_EQ(c.forced.budget, 225);
    EXPECT_EQ(c.ucb.sigma, 0.1);
    EXPECT_THROW(lrb_config_from_spec(parse_policy_spec("lrb(f=2000)"), 0.1, 1000), ConfigError);
    EXPECT_THROW(lrb_config_from_spec(parse_policy_spec("lrb(h=0)"), 0.1, 1000), ConfigError);
}

TEST(Config, ParsesSections)
{
    const auto x = from_text(kSmall);
    EXPECT_EQ(x.env.rows, 12);
    EXPECT_EQ(x.horizon, 150);
    EXPECT_EQ(x.replications, 3u);
    EXPECT_EQ(x.master_seed, 42u);
    ASSERT_EQ(x.policies.size(), 6u);
    EXPECT_EQ(x.policies[1].name, "sslrb");
}

TEST(Config, ErrorsNameTheLine)
{
    EXPECT_NE(expect_config_error("[env]\nrows = ten\n[policies]\nucb\n").find("line 2"), std::string::npos);
    EXPECT_NE(expect_config_error("[experiment]\nhorizon = 0\n[policies]\nucb\n").find("horizon"), std::string::npos);
    EXPECT_NE(expect_config_error("[env]\nrows = 5\nrows = 6\n").find("line 3"), std::string::npos);
    EXPECT_NE(expect_config_error("[policies]\nucb\nlrb(h=1\n").find("line 3"), std::string::npos);
    expect_config_error("rows = 5\n");
    expect_config_error("[env]\nrows = 4\nrank = 5\n[policies]\nucb\n");
    expect_config_error("[env]\n[policies]\n");
}

TEST(MakePolicy, RejectsUnknown)
{
    const auto x = from_text(kSmall);
    const auto inst = make_env_instance(x.env, 1);
    EXPECT_THROW(make_policy(parse_policy_spec("thompson"), inst, 100, 1), ConfigError);
    EXPECT_THROW(make_policy(parse_policy_spec("ucb(h=1)"), inst, 100, 1), ConfigError);
    EXPECT_THROW(make_policy(parse_policy_spec("sslrb(h=1)"), inst, 100, 1), ConfigError);
    EXPECT_THROW(make_policy(parse_policy_spec("sslrb(m=13)"), inst, 100, 1), ConfigError);
}

TEST(Run, DeterministicAcrossThreadCounts)
{
    auto x = from_text(kSmall);
    x.threads = 1;
    const auto a = run(x);
    x.threads = 3;
    const auto b = run(x);
    const auto c = run(x);
    EXPECT_EQ(traces_of(a), traces_of(b));
    EXPECT_EQ(traces_of(b), traces_of(c));
    EXPECT_EQ(summary_of(a), summary_of(b));
}

TEST(Run, SummaryInvariants)
{
    auto x = from_text(kSmall);
    x.threads = 2;
    const auto r = run(x);
    ASSERT_EQ(r.summary.size(), 6u);
    EXPECT_EQ(r.summary.back().name, "oracle");
    EXPECT_EQ(r.summary.back().mean_final_regret, 0.0);
    for (const auto& s : r.summary) {
        EXPECT_EQ(s.reps, 3u);
        EXPECT_DOUBLE_EQ(s.ci95, 1.96 * s.se);
        EXPECT_NEAR(s.mean_part1 + s.mean_part2, s.mean_final_regret, 1e-9);
    }
    for (const auto& rep : r.traces)
        for (const auto& tr : rep) {
            ASSERT_EQ(tr.rounds.size(), 150u);
            double prev = 0.0;
            for (const auto& rd : tr.rounds) {
                ASSERT_GE(rd.cum_regret, prev);
                prev = rd.cum_regret;
            }
        }
    const auto summary = summary_of(r);
    EXPECT_EQ(summary.substr(0, summary.find('\n')), "policy,params,mean_final_regret,se,ci95,reps");
}

TEST(Run, PairedPoliciesShareNoise)
{
    auto x = from_text(kSmall);
    x.policies = {parse_policy_spec("ucb"), parse_policy_spec("ucb(w=empirical)")};
    const auto r = run(x);
    for (const auto& rep : r.traces) {
        const auto& a = rep[0].rounds;
        const auto& b = rep[1].rounds;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (a[i].arm == b[i].arm) EXPECT_EQ(a[i].reward, b[i].reward);
    }
}

TEST(Decompose, Parts)
{
    auto x = from_text(kSmall);
    x.policies = {parse_policy_spec("lrb(h=0.8,f=0)"), parse_policy_spec("lrb(h=0.8,f=150)")};
    const auto r = run(x);
    for (const auto& rep : r.traces) {
        EXPECT_EQ(decompose(rep[0]).forced, 0.0);
        EXPECT_EQ(decompose(rep[1]).other, 0.0);
        EXPECT_NEAR(decompose(rep[1]).forced, rep[1].final_regret(), 1e-9);
    }
}

TEST(Sweep, GridExpansion)
{
    std::istringstream in("template = lrb(f={f},h={h})\nf = 45, 70, 100, 225\nh = 0.9, 1, 1.1\nalso = ssucb\n");
    const auto g = parse_grid(in);
    const auto cells = expand_grid(g);
    ASSERT_EQ(cells.size(), 13u);
    EXPECT_EQ(cells[0].label(), "lrb(f=45,h=0.9)");
    EXPECT_EQ(cells[11].label(), "lrb(f=225,h=1.1)");
    EXPECT_EQ(cells[12].label(), "ssucb");

    std::istringstream bad("template = lrb(h={h})\nf = 1, 2\n");
    EXPECT_THROW(parse_grid(bad), ConfigError);
    std::istringstream none("h = 1\n");
    EXPECT_THROW(parse_grid(none), ConfigError);
}

TEST(Sweep, SingleCellEqualsRun)
{
    auto x = from_text(kSmall);
    x.policies = {parse_policy_spec("lrb(h=0.8,f=30)")};
    std::istringstream in("template = lrb(h={h},f=30)\nh = 0.8\n");
    EXPECT_EQ(traces_of(run(x)), traces_of(sweep(x, parse_grid(in))));
}

TEST(Run, ContextualAndCsvEnvironments)
{
    auto x = from_text("[env]\ngenerator = contextual\nrows = 4\ncols = 5\nrank = 2\np = 3\n"
                       "[experiment]\nhorizon = 60\nreplications = 2\n[policies]\noful\nlrb(h=5,f=10)\n");
    const auto r = run(x);
    EXPECT_EQ(r.summary.size(), 2u);

    const auto path = std::filesystem::temp_directory_path() / "blab_test_matrix.csv";
    {
        std::ofstream f(path);
        f << "0.1,0.9\n0.5,0.2\n";
    }
    auto y = from_text("[env]\ngenerator = csv\npath = " + path.string() +
                       "\n[experiment]\nhorizon = 40\n[policies]\nucb\noracle\n");
    const auto rc = run(y);
    EXPECT_EQ(rc.summary[1].mean_final_regret, 0.0);
    EXPECT_GT(rc.summary[0].mean_final_regret, 0.0);
    std::filesystem::remove(path);
}

TEST(Run, WritesOutputs)
{
    auto x = from_text(kSmall);
    x.decompose = true;
    x.output = (std::filesystem::temp_directory_path() / "blab_test_out").string();
    write_outputs(x, run(x));
    for (const char* f : {"traces.csv", "summary.csv", "parts.csv"})
        EXPECT_TRUE(std::filesystem::exists(std::filesystem::path(x.output) / f)) << f;
    std::filesystem::remove_all(x.output);
}

TEST(Oracles, AllPass)
{
    for (const auto& name : oracle_names()) {
        const auto rep = run_oracle(name);
        EXPECT_TRUE(rep.pass) << name;
    }
    EXPECT_THROW(run_oracle("nope"), InvalidArgument);
}
