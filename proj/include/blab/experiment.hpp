#pragma once

// Experiment orchestration: config files, policy specifications, seeded
// replicate-parallel runs, sweeps and CSV summaries.

#include "blab/bandit_env.hpp"
#include "blab/policies.hpp"
#include "blab/random.hpp"
#include "blab/types.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace blab {

// Config files ---------------------------------------------------------------------------

/// key=value lines grouped under [section] headers. '#' starts a comment.
/// Lines of the [policies] section are kept verbatim in `lists`.
struct ConfigFile {
    struct Entry {
        std::string value;
        int line = 0;
    };
    std::map<std::string, std::map<std::string, Entry>> values;
    std::map<std::string, std::vector<Entry>> lists;

    bool has(const std::string& section, const std::string& key) const
    {
        auto s = values.find(section);
        return s != values.end() && s->second.count(key) > 0;
    }

    std::optional<Entry> find(const std::string& section, const std::string& key) const
    {
        auto s = values.find(section);
        if (s == values.end()) return std::nullopt;
        auto e = s->second.find(key);
        if (e == s->second.end()) return std::nullopt;
        return e->second;
    }
};

inline const std::vector<std::string>& list_sections()
{
    static const std::vector<std::string> names{"policies"};
    return names;
}

inline ConfigFile parse_config(std::istream& in)
{
    ConfigFile cfg;
    std::string section;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']' || line.size() < 3)
                throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
            section = std::string(detail::trim(line.substr(1, line.size() - 2)));
            continue;
        }
        if (section.empty()) throw ConfigError("line " + std::to_string(line_no) + ": entry outside any section");
        const auto& lists = list_sections();
        if (std::find(lists.begin(), lists.end(), section) != lists.end()) {
            cfg.lists[section].push_back({std::string(line), line_no});
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (cfg.values[section].count(key))
            throw ConfigError("line " + std::to_string(line_no) + ": duplicate key '" + key + "'");
        cfg.values[section][key] = {value, line_no};
    }
    return cfg;
}

inline ConfigFile load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    return parse_config(in);
}

namespace detail {

inline std::string where(const std::string& section, const std::string& key, int line)
{
    return "line " + std::to_string(line) + " [" + section + "] " + key;
}

inline double config_double(const ConfigFile& c, const std::string& section, const std::string& key, double fallback)
{
    const auto e = c.find(section, key);
    if (!e) return fallback;
    try {
        return parse_double(e->value);
    } catch (const Error&) {
        throw ConfigError(where(section, key, e->line) + ": expected a number, got '" + e->value + "'");
    }
}

inline std::int64_t config_int(const ConfigFile& c, const std::string& section, const std::string& key,
                               std::int64_t fallback)
{
    const auto e = c.find(section, key);
    if (!e) return fallback;
    std::int64_t v = 0;
    const auto* first = e->value.data();
    const auto* last = first + e->value.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ConfigError(where(section, key, e->line) + ": expected an integer, got '" + e->value + "'");
    return v;
}

inline std::uint64_t config_uint(const ConfigFile& c, const std::string& section, const std::string& key,
                                 std::uint64_t fallback)
{
    const auto e = c.find(section, key);
    if (!e) return fallback;
    std::uint64_t v = 0;
    const auto* first = e->value.data();
    const auto* last = first + e->value.size();
    const auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ConfigError(where(section, key, e->line) + ": expected an unsigned integer, got '" + e->value + "'");
    return v;
}

inline std::string config_string(const ConfigFile& c, const std::string& section, const std::string& key,
                                 const std::string& fallback)
{
    const auto e = c.find(section, key);
    return e ? e->value : fallback;
}

inline bool config_bool(const ConfigFile& c, const std::string& section, const std::string& key, bool fallback)
{
    const auto e = c.find(section, key);
    if (!e) return fallback;
    if (e->value == "true" || e->value == "1" || e->value == "yes") return true;
    if (e->value == "false" || e->value == "0" || e->value == "no") return false;
    throw ConfigError(where(section, key, e->line) + ": expected true or false");
}

} // namespace detail

// Policy specifications ---------------------------------------------------------------------

/// `name(key=value,...)`; the parentheses are optional when there are no
/// parameters.
struct PolicySpec {
    std::string name;
    std::vector<std::pair<std::string, std::string>> params;

    std::optional<std::string> get(const std::string& key) const
    {
        for (const auto& [k, v] : params)
            if (k == key) return v;
        return std::nullopt;
    }

    std::string params_string() const
    {
        std::string out;
        for (const auto& [k, v] : params) {
            if (!out.empty()) out += ',';
            out += k + '=' + v;
        }
        return out;
    }

    std::string label() const { return params.empty() ? name : name + '(' + params_string() + ')'; }
};

inline PolicySpec parse_policy_spec(std::string_view text)
{
    text = detail::trim(text);
    PolicySpec spec;
    const auto open = text.find('(');
    if (open == std::string_view::npos) {
        spec.name = std::string(text);
    } else {
        if (text.back() != ')') throw ConfigError("policy spec '" + std::string(text) + "' lacks a closing ')'");
        spec.name = std::string(detail::trim(text.substr(0, open)));
        const auto body = detail::trim(text.substr(open + 1, text.size() - open - 2));
        if (!body.empty()) {
            for (auto part : detail::split(body, ',')) {
                part = detail::trim(part);
                const auto eq = part.find('=');
                if (eq == std::string_view::npos)
                    throw ConfigError("policy parameter '" + std::string(part) + "' is not key=value");
                const std::string key(detail::trim(part.substr(0, eq)));
                const std::string value(detail::trim(part.substr(eq + 1)));
                if (key.empty() || value.empty())
                    throw ConfigError("policy parameter '" + std::string(part) + "' is incomplete");
                if (spec.get(key)) throw ConfigError("policy parameter '" + key + "' given twice");
                spec.params.emplace_back(key, value);
            }
        }
    }
    if (spec.name.empty()) throw ConfigError("empty policy name");
    for (char ch : spec.name)
        if (!(std::isalnum(static_cast<unsigned char>(ch)) || ch == '_' || ch == '-'))
            throw ConfigError("invalid policy name '" + spec.name + "'");
    return spec;
}

// Environments -------------------------------------------------------------------------------

struct EnvSpec {
    enum class Generator { LowRank, Contextual, Csv };
    Generator generator = Generator::LowRank;
    Index rows = 100;
    Index cols = 100;
    Index rank = 3;
    Index p = 7;
    FactorDistribution factors = FactorDistribution::Uniform01;
    double noise_sd = 0.1;
    std::string path;
};

/// What a policy factory may look at: the instance of one replicate.
struct EnvInstance {
    RewardMatrix truth;
    double noise_sd = 0.0;
    std::optional<ContextualInstance> contextual;
};

inline EnvInstance make_env_instance(const EnvSpec& env, std::uint64_t seed, const RewardMatrix* csv_truth = nullptr)
{
    EnvInstance out;
    out.noise_sd = env.noise_sd;
    switch (env.generator) {
    case EnvSpec::Generator::LowRank:
        out.truth = generate_low_rank(env.rows, env.cols, env.rank, env.factors, seed);
        break;
    case EnvSpec::Generator::Contextual:
        out.contextual = generate_contextual(env.rows, env.cols, env.rank, env.p, env.noise_sd, seed);
        out.truth = out.contextual->truth;
        break;
    case EnvSpec::Generator::Csv:
        out.truth = csv_truth ? *csv_truth : load_reward_matrix_csv(env.path);
        break;
    }
    return out;
}

// Policy factory ------------------------------------------------------------------------------

namespace detail {

inline double spec_double(const PolicySpec& s, const std::string& key, double fallback)
{
    const auto v = s.get(key);
    if (!v) return fallback;
    try {
        return parse_double(*v);
    } catch (const Error&) {
        throw ConfigError(s.label() + ": parameter " + key + " must be a number");
    }
}

inline std::int64_t spec_int(const PolicySpec& s, const std::string& key, std::int64_t fallback)
{
    const auto v = s.get(key);
    if (!v) return fallback;
    std::int64_t out = 0;
    const auto res = std::from_chars(v->data(), v->data() + v->size(), out);
    if (res.ec != std::errc() || res.ptr != v->data() + v->size())
        throw ConfigError(s.label() + ": parameter " + key + " must be an integer");
    return out;
}

inline void check_keys(const PolicySpec& s, std::initializer_list<const char*> allowed)
{
    for (const auto& [k, v] : s.params) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || k == a;
        if (!ok) throw ConfigError(s.label() + ": unknown parameter '" + k + "'");
    }
}

inline UcbRule spec_ucb_rule(const PolicySpec& s, double noise_sd)
{
    UcbRule rule;
    const auto w = s.get("w").value_or("empirical");
    if (w == "empirical") rule.w = WRule::Empirical;
    else if (w == "analysis") rule.w = WRule::Analysis;
    else throw ConfigError(s.label() + ": w must be empirical or analysis");
    rule.sigma = spec_double(s, "sigma", noise_sd > 0.0 ? noise_sd : 1.0);
    if (!(rule.sigma >= 0.0)) throw ConfigError(s.label() + ": sigma must be nonnegative");
    return rule;
}

} // namespace detail

/// Default penalty scale for bandit policies: lambda = 0.1 sqrt(1/n).
inline constexpr double kPolicyLambdaScale = 0.1;

inline LrbConfig lrb_config_from_spec(const PolicySpec& s, double noise_sd, std::int64_t horizon)
{
    LrbConfig c;
    c.h = detail::spec_double(s, "h", 1.0);
    const auto f = s.get("f").value_or("0");
    if (f.rfind("rho:", 0) == 0) {
        c.forced = ForcedSamplingConfig::schedule(detail::parse_double(f.substr(4)));
    } else {
        c.forced = ForcedSamplingConfig::with_budget(detail::spec_int(s, "f", 0));
    }
    const auto rank = s.get("rank").value_or("3");
    c.rank = rank == "auto" ? 0 : detail::spec_int(s, "rank", 3);
    if (auto fixed = s.get("lamfix")) c.solver.lambda = LambdaRule::fixed(detail::parse_double(*fixed));
    else c.solver.lambda = LambdaRule::inverse_sqrt_n(detail::spec_double(s, "lam", kPolicyLambdaScale));
    c.ucb = detail::spec_ucb_rule(s, noise_sd);
    if (auto k = s.get("every")) {
        c.recompute = LrbConfig::Recompute::EveryK;
        c.recompute_every = detail::spec_int(s, "every", 1);
    }
    try {
        c.validate();
        c.forced.validate(horizon);
    } catch (const InvalidArgument& e) {
        throw ConfigError(s.label() + ": " + e.what());
    }
    return c;
}

/// Builds the policy named by `spec` for one replicate.
inline std::unique_ptr<Policy> make_policy(const PolicySpec& s, const EnvInstance& env, std::int64_t horizon,
                                           std::uint64_t seed)
{
    const Index rows = env.truth.rows();
    const Index cols = env.truth.cols();
    if (s.name == "lrb") {
        detail::check_keys(s, {"h", "f", "rank", "lam", "lamfix", "w", "sigma", "every"});
        return std::make_unique<LrbPolicy>(rows, cols, lrb_config_from_spec(s, env.noise_sd, horizon), seed);
    }
    if (s.name == "sslrb") {
        detail::check_keys(s, {"m", "mr", "mc", "h", "f", "rank", "lam", "lamfix", "w", "sigma", "every"});
        const auto m = detail::spec_int(s, "m", 0);
        const Index m_r = detail::spec_int(s, "mr", m);
        const Index m_c = detail::spec_int(s, "mc", m);
        if (m_r < 1 || m_c < 1 || m_r > rows || m_c > cols)
            throw ConfigError(s.label() + ": submatrix size must be within the grid (give m or mr/mc)");
        return std::make_unique<SsLrbPolicy>(rows, cols, m_r, m_c, lrb_config_from_spec(s, env.noise_sd, horizon),
                                             seed);
    }
    if (s.name == "ucb") {
        detail::check_keys(s, {"w", "sigma"});
        return std::make_unique<UcbPolicy>(rows, cols, detail::spec_ucb_rule(s, env.noise_sd), seed);
    }
    if (s.name == "ssucb") {
        detail::check_keys(s, {"n", "w", "sigma"});
        const auto n = s.get("n").value_or("auto");
        const Index arms = n == "auto" ? default_subsample_arms(horizon) : detail::spec_int(s, "n", 1);
        if (arms < 1) throw ConfigError(s.label() + ": n must be positive");
        return make_ss_ucb(rows, cols, arms, detail::spec_ucb_rule(s, env.noise_sd), seed);
    }
    if (s.name == "oful") {
        detail::check_keys(s, {"delta", "ridge", "S", "L", "beta", "sigma"});
        OfulConfig c;
        c.delta = detail::spec_double(s, "delta", 0.01);
        c.ridge = detail::spec_double(s, "ridge", 1.0);
        c.noise_sd = detail::spec_double(s, "sigma", env.noise_sd);
        if (auto b = s.get("beta")) c.beta_override = detail::parse_double(*b);
        std::vector<SparseFeature> arms;
        Index dim = 0;
        if (env.contextual) {
            const auto& ci = *env.contextual;
            arms = ci.lifted_arms();
            dim = ci.ambient_dim();
            c.reward_bound = std::sqrt(static_cast<double>(dim * ci.rank));
            c.feature_bound = ci.X.norm();
        } else {
            dim = rows * cols;
            for (Index j = 0; j < rows; ++j)
                for (Index k = 0; k < cols; ++k) arms.push_back({{j * cols + k}, {1.0}});
            c.reward_bound = env.truth.values().cwiseAbs().maxCoeff() * std::sqrt(static_cast<double>(dim));
            c.feature_bound = 1.0;
        }
        c.reward_bound = detail::spec_double(s, "S", c.reward_bound);
        c.feature_bound = detail::spec_double(s, "L", c.feature_bound);
        try {
            c.validate();
        } catch (const InvalidArgument& e) {
            throw ConfigError(s.label() + ": " + e.what());
        }
        return std::make_unique<OfulPolicy>(rows, cols, std::move(arms), dim, c, seed);
    }
    if (s.name == "oracle") {
        detail::check_keys(s, {});
        return std::make_unique<OraclePolicy>(env.truth);
    }
    throw ConfigError("unknown policy '" + s.name + "'");
}

// Experiment config --------------------------------------------------------------------------

struct ExperimentConfig {
    EnvSpec env;
    std::int64_t horizon = 1000;
    std::size_t replications = 1;
    std::uint64_t master_seed = 1;
    std::vector<PolicySpec> policies;
    std::string output = "out";
    std::size_t threads = 0; // 0: hardware concurrency
    bool decompose = false;
    bool write_traces = true;

    void validate() const
    {
        if (horizon < 1) throw ConfigError("[experiment] horizon must be >= 1");
        if (replications < 1) throw ConfigError("[experiment] replications must be >= 1");
        if (policies.empty()) throw ConfigError("[policies] lists no policy");
        if (env.generator != EnvSpec::Generator::Csv) {
            if (env.rows < 1 || env.cols < 1 || env.rank < 1)
                throw ConfigError("[env] rows, cols and rank must be positive");
            if (env.rank > std::min(env.rows, env.cols)) throw ConfigError("[env] rank exceeds min(rows, cols)");
        } else if (env.path.empty()) {
            throw ConfigError("[env] generator=csv needs a path");
        }
        if (!(env.noise_sd >= 0.0)) throw ConfigError("[env] noise_sd must be nonnegative");
        for (const auto& p : policies)
            if (p.name == "oful" && env.generator != EnvSpec::Generator::Contextual && env.rows * env.cols > 2000)
                throw ConfigError("oful on a non-contextual environment is limited to 2000 arms");
    }
};

inline ExperimentConfig experiment_from_config(const ConfigFile& c)
{
    ExperimentConfig x;
    const auto gen = detail::config_string(c, "env", "generator", "low_rank");
    if (gen == "low_rank") x.env.generator = EnvSpec::Generator::LowRank;
    else if (gen == "contextual") x.env.generator = EnvSpec::Generator::Contextual;
    else if (gen == "csv") x.env.generator = EnvSpec::Generator::Csv;
    else throw ConfigError(detail::where("env", "generator", c.find("env", "generator")->line) + ": unknown generator '" + gen + "'");
    x.env.rows = detail::config_int(c, "env", "rows", 100);
    x.env.cols = detail::config_int(c, "env", "cols", 100);
    x.env.rank = detail::config_int(c, "env", "rank", 3);
    x.env.p = detail::config_int(c, "env", "p", 7);
    const auto factors = detail::config_string(c, "env", "factors", "uniform01");
    if (factors == "uniform01") x.env.factors = FactorDistribution::Uniform01;
    else if (factors == "std_normal") x.env.factors = FactorDistribution::StdNormal;
    else throw ConfigError(detail::where("env", "factors", c.find("env", "factors")->line) + ": unknown factor law '" + factors + "'");
    x.env.noise_sd = detail::config_double(c, "env", "noise_sd", 0.1);
    x.env.path = detail::config_string(c, "env", "path", "");

    x.horizon = detail::config_int(c, "experiment", "horizon", 1000);
    const auto reps = detail::config_int(c, "experiment", "replications", 1);
    if (reps < 1) throw ConfigError("[experiment] replications must be >= 1");
    x.replications = static_cast<std::size_t>(reps);
    x.master_seed = detail::config_uint(c, "experiment", "master_seed", 1);
    x.output = detail::config_string(c, "experiment", "output", "out");
    const auto threads = detail::config_int(c, "experiment", "threads", 0);
    if (threads < 0) throw ConfigError("[experiment] threads must be >= 0");
    x.threads = static_cast<std::size_t>(threads);
    x.decompose = detail::config_bool(c, "experiment", "decompose", false);
    x.write_traces = detail::config_bool(c, "experiment", "traces", true);

    if (auto it = c.lists.find("policies"); it != c.lists.end()) {
        for (const auto& e : it->second) {
            try {
                x.policies.push_back(parse_policy_spec(e.value));
            } catch (const ConfigError& err) {
                throw ConfigError("line " + std::to_string(e.line) + " [policies]: " + err.what());
            }
        }
    }
    x.validate();
    return x;
}

// Running ---------------------------------------------------------------------------------

struct RegretParts {
    double forced = 0.0; // part (1): rounds spent forced-sampling
    double other = 0.0;  // part (2): every other round
};

inline RegretParts decompose(const RegretTrace& trace)
{
    RegretParts p;
    for (const auto& r : trace.rounds) (r.forced ? p.forced : p.other) += r.inst_regret;
    return p;
}

struct PolicySummary {
    std::string name;
    std::string params;
    std::string label;
    double mean_final_regret = 0.0;
    double se = 0.0;
    double ci95 = 0.0;
    std::size_t reps = 0;
    double mean_part1 = 0.0;
    double mean_part2 = 0.0;
};

struct RunResult {
    std::vector<PolicySpec> policies;
    std::vector<std::vector<RegretTrace>> traces; // [replicate][policy]
    std::vector<PolicySummary> summary;
};

/// Seeds: the environment of replicate r uses (master, r, EnvMatrix/EnvNoise);
/// policy i uses (master, r, Policy, i).
inline std::uint64_t env_matrix_seed(std::uint64_t master, std::size_t r)
{
    return derive_seed(master, r, StreamRole::EnvMatrix, 0);
}

inline std::uint64_t env_noise_seed(std::uint64_t master, std::size_t r)
{
    return derive_seed(master, r, StreamRole::EnvNoise, 0);
}

inline std::uint64_t policy_seed(std::uint64_t master, std::size_t r, std::size_t policy_id)
{
    return derive_seed(master, r, StreamRole::Policy, policy_id);
}

inline RegretTrace play(Policy& policy, const Environment& env, std::int64_t horizon, std::string label,
                        std::size_t replicate)
{
    RegretTrace trace;
    trace.policy = std::move(label);
    trace.replicate = replicate;
    trace.rounds.reserve(static_cast<std::size_t>(horizon));
    for (std::int64_t t = 1; t <= horizon; ++t) {
        const ArmIndex arm = policy.select(t);
        const double reward = env.pull(arm, t);
        policy.update(arm, reward);
        trace.record(t, arm, reward, env.regret(arm), policy.last_round_forced());
    }
    return trace;
}

/// Worker count: the configured value (0 = hardware), capped by BLAB_THREADS
/// and by the number of replicates.
inline std::size_t worker_count(std::size_t configured, std::size_t jobs)
{
    std::size_t n = configured ? configured : std::max<unsigned>(1u, std::thread::hardware_concurrency());
    if (const char* cap = std::getenv("BLAB_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(cap, &end, 10);
        if (end != cap && *end == '\0' && v >= 1) n = std::min<std::size_t>(n, static_cast<std::size_t>(v));
    }
    return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Calls fn(i) for i in [0, jobs) on `workers` threads. The first exception
/// is rethrown after all workers stop.
template <class Fn>
void parallel_for(std::size_t jobs, std::size_t workers, Fn&& fn)
{
    if (workers <= 1) {
        for (std::size_t i = 0; i < jobs; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::exception_ptr error;
    std::mutex error_mutex;
    std::vector<std::thread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (;;) {
                const std::size_t i = next.fetch_add(1);
                if (i >= jobs) return;
                {
                    std::lock_guard lock(error_mutex);
                    if (error) return;
                }
                try {
                    fn(i);
                } catch (...) {
                    std::lock_guard lock(error_mutex);
                    if (!error) error = std::current_exception();
                }
            }
        });
    }
    for (auto& t : pool) t.join();
    if (error) std::rethrow_exception(error);
}

inline std::vector<PolicySummary> summarize(const std::vector<PolicySpec>& policies,
                                            const std::vector<std::vector<RegretTrace>>& traces)
{
    std::vector<PolicySummary> out;
    for (std::size_t i = 0; i < policies.size(); ++i) {
        RunningStats total;
        double p1 = 0.0, p2 = 0.0;
        for (const auto& rep : traces) {
            const auto& tr = rep[i];
            total.push(tr.final_regret());
            const auto parts = decompose(tr);
            p1 += parts.forced;
            p2 += parts.other;
        }
        PolicySummary s;
        s.name = policies[i].name;
        s.params = policies[i].params_string();
        s.label = policies[i].label();
        s.reps = total.count();
        s.mean_final_regret = total.mean();
        s.se = s.reps > 1 ? total.std_error() : 0.0;
        s.ci95 = 1.96 * s.se;
        s.mean_part1 = p1 / static_cast<double>(s.reps);
        s.mean_part2 = p2 / static_cast<double>(s.reps);
        out.push_back(s);
    }
    return out;
}

/// Plays every policy on every replicate. Replicates run in parallel; each
/// replicate's policies run sequentially against one shared environment.
inline RunResult run(const ExperimentConfig& cfg)
{
    cfg.validate();
    std::optional<RewardMatrix> csv_truth;
    if (cfg.env.generator == EnvSpec::Generator::Csv) csv_truth = load_reward_matrix_csv(cfg.env.path);

    RunResult result;
    result.policies = cfg.policies;
    result.traces.resize(cfg.replications);
    parallel_for(cfg.replications, worker_count(cfg.threads, cfg.replications), [&](std::size_t r) {
        const EnvInstance inst =
            make_env_instance(cfg.env, env_matrix_seed(cfg.master_seed, r), csv_truth ? &*csv_truth : nullptr);
        const Environment env(inst.truth, inst.noise_sd, env_noise_seed(cfg.master_seed, r));
        std::vector<RegretTrace> rep;
        for (std::size_t i = 0; i < cfg.policies.size(); ++i) {
            auto policy = make_policy(cfg.policies[i], inst, cfg.horizon, policy_seed(cfg.master_seed, r, i));
            rep.push_back(play(*policy, env, cfg.horizon, cfg.policies[i].label(), r));
        }
        result.traces[r] = std::move(rep);
    });
    result.summary = summarize(result.policies, result.traces);
    return result;
}

// Output ----------------------------------------------------------------------------------

inline constexpr const char* kSummaryCsvHeader = "policy,params,mean_final_regret,se,ci95,reps";
inline constexpr const char* kPartsCsvHeader = "policy,params,mean_part1,mean_part2,mean_final_regret";

inline void write_traces_csv(std::ostream& out, const RunResult& res)
{
    out << kTraceCsvHeader << '\n';
    for (const auto& rep : res.traces)
        for (const auto& tr : rep) write_trace_rows(out, tr);
}

inline void write_summary_csv(std::ostream& out, const std::vector<PolicySummary>& rows)
{
    out << kSummaryCsvHeader << '\n';
    for (const auto& s : rows)
        out << detail::csv_field(s.name) << ',' << detail::csv_field(s.params) << ','
            << detail::format_double(s.mean_final_regret) << ',' << detail::format_double(s.se) << ','
            << detail::format_double(s.ci95) << ',' << s.reps << '\n';
}

inline void write_parts_csv(std::ostream& out, const std::vector<PolicySummary>& rows)
{
    out << kPartsCsvHeader << '\n';
    for (const auto& s : rows)
        out << detail::csv_field(s.name) << ',' << detail::csv_field(s.params) << ','
            << detail::format_double(s.mean_part1) << ',' << detail::format_double(s.mean_part2) << ','
            << detail::format_double(s.mean_final_regret) << '\n';
}

/// Writes traces.csv (optional), summary.csv and parts.csv (when decompose
/// is on) into cfg.output.
inline void write_outputs(const ExperimentConfig& cfg, const RunResult& res)
{
    namespace fs = std::filesystem;
    fs::create_directories(cfg.output);
    auto open = [&](const char* name) {
        std::ofstream f(fs::path(cfg.output) / name, std::ios::binary);
        if (!f) throw Error(std::string("cannot write ") + (fs::path(cfg.output) / name).string());
        return f;
    };
    if (cfg.write_traces) {
        auto f = open("traces.csv");
        write_traces_csv(f, res);
    }
    {
        auto f = open("summary.csv");
        write_summary_csv(f, res.summary);
    }
    if (cfg.decompose) {
        auto f = open("parts.csv");
        write_parts_csv(f, res.summary);
    }
}

// Sweeps ----------------------------------------------------------------------------------

/// A grid file: one `template = spec` line with {axis} placeholders, one
/// `axis = v1, v2, ...` line per axis, and optional `also = spec` lines for
/// fixed companion policies.
struct SweepGrid {
    std::string templ;
    std::vector<std::pair<std::string, std::vector<std::string>>> axes;
    std::vector<std::string> also;
};

inline SweepGrid parse_grid(std::istream& in)
{
    SweepGrid g;
    std::string raw;
    int line_no = 0;
    while (std::getline(in, raw)) {
        ++line_no;
        std::string_view line = raw;
        if (auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("grid line " + std::to_string(line_no) + ": expected key = value");
        const std::string key(detail::trim(line.substr(0, eq)));
        const std::string value(detail::trim(line.substr(eq + 1)));
        if (key == "template") {
            if (!g.templ.empty()) throw ConfigError("grid line " + std::to_string(line_no) + ": second template");
            g.templ = value;
        } else if (key == "also") {
            g.also.push_back(value);
        } else {
            std::vector<std::string> vals;
            for (auto v : detail::split(value, ',')) {
                v = detail::trim(v);
                if (v.empty()) throw ConfigError("grid line " + std::to_string(line_no) + ": empty value");
                vals.emplace_back(v);
            }
            g.axes.emplace_back(key, std::move(vals));
        }
    }
    if (g.templ.empty()) throw ConfigError("grid file has no template line");
    for (const auto& [name, vals] : g.axes)
        if (g.templ.find('{' + name + '}') == std::string::npos)
            throw ConfigError("grid axis '" + name + "' does not appear in the template");
    return g;
}

inline SweepGrid load_grid(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open grid file: " + path);
    return parse_grid(in);
}

/// Cartesian product of the axes substituted into the template, first axis
/// varying slowest.
inline std::vector<PolicySpec> expand_grid(const SweepGrid& g)
{
    std::vector<std::string> specs{g.templ};
    for (const auto& [name, vals] : g.axes) {
        std::vector<std::string> next;
        const std::string key = '{' + name + '}';
        for (const auto& s : specs)
            for (const auto& v : vals) {
                std::string t = s;
                for (auto pos = t.find(key); pos != std::string::npos; pos = t.find(key, pos + v.size()))
                    t.replace(pos, key.size(), v);
                next.push_back(std::move(t));
            }
        specs = std::move(next);
    }
    std::vector<PolicySpec> out;
    for (const auto& s : specs) out.push_back(parse_policy_spec(s));
    for (const auto& s : g.also) out.push_back(parse_policy_spec(s));
    return out;
}

/// Runs every grid cell against the config's environments. Cells share
/// environment seeds, so comparisons are paired.
inline RunResult sweep(ExperimentConfig cfg, const SweepGrid& grid)
{
    cfg.policies = expand_grid(grid);
    return run(cfg);
}

} // namespace blab
