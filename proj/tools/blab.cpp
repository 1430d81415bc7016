// blab: command-line front end for experiments, tuning and oracles.

#include "blab/experiment.hpp"
#include "blab/oracles.hpp"
#include "blab/tuning.hpp"

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

using namespace blab;

int cmd_run(const std::string& config_path, const std::optional<std::size_t>& threads,
            const std::optional<std::string>& output)
{
    auto cfg = experiment_from_config(load_config(config_path));
    if (threads) cfg.threads = *threads;
    if (output) cfg.output = *output;
    const auto res = run(cfg);
    write_outputs(cfg, res);
    write_summary_csv(std::cout, res.summary);
    if (cfg.decompose) write_parts_csv(std::cout, res.summary);
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& grid_path, const std::optional<std::size_t>& threads,
              const std::optional<std::string>& output)
{
    auto cfg = experiment_from_config(load_config(config_path));
    if (threads) cfg.threads = *threads;
    if (output) cfg.output = *output;
    const auto grid = load_grid(grid_path);
    cfg.policies = expand_grid(grid);
    const auto res = run(cfg);
    write_outputs(cfg, res);
    write_summary_csv(std::cout, res.summary);
    if (cfg.decompose) write_parts_csv(std::cout, res.summary);
    return 0;
}

struct TuneSetup {
    CostModel model;
    Index d_r = 0;
    Index d_c = 0;
    double horizon = 0.0;
    PsiFn psi;
    SqrtGFactory g_for;
    double t_max = 1e7;
};

TuneSetup tune_setup(const ConfigFile& file)
{
    const auto cfg = experiment_from_config(file);
    TuneSetup s;
    s.d_r = cfg.env.rows;
    s.d_c = cfg.env.cols;
    s.horizon = static_cast<double>(cfg.horizon);
    auto& m = s.model;
    m.rank = cfg.env.rank;
    m.m_r = s.d_r;
    m.m_c = s.d_c;
    m.omega1 = detail::config_double(file, "tune", "omega1", 1.0);
    m.omega2 = detail::config_double(file, "tune", "omega2", 1.0);
    m.mu_star = detail::config_double(file, "tune", "mu_star", 1.0);
    m.c1 = detail::config_double(file, "tune", "c1", 1.0);
    m.c2 = detail::config_double(file, "tune", "c2", 1.0);
    s.t_max = detail::config_double(file, "tune", "t_max", 1e7);

    const auto g_model = detail::config_string(file, "tune", "g_model", "fit");
    if (g_model == "fit") {
        const double a1 = detail::config_double(file, "tune", "a1", 1.719);
        const double b1 = detail::config_double(file, "tune", "b1", 0.057);
        const double a2 = detail::config_double(file, "tune", "a2", -2.074);
        const double b2 = detail::config_double(file, "tune", "b2", -0.002);
        m.b_star = detail::config_double(file, "tune", "b_star", 1.0);
        s.psi = psi_log_fit(a2, b2, s.d_r, s.d_c);
        s.g_for = [a1, b1](Index, Index) { return sqrt_g_exponential(a1, b1); };
    } else if (g_model == "empirical") {
        const EnvInstance inst = make_env_instance(cfg.env, env_matrix_seed(cfg.master_seed, 0));
        const Matrix b = inst.truth.values();
        m.b_star = detail::config_double(file, "tune", "b_star", b.cwiseAbs().maxCoeff());
        const auto draws = static_cast<std::size_t>(detail::config_int(file, "tune", "draws", 200));
        const auto psi_samples = static_cast<std::size_t>(detail::config_int(file, "tune", "psi_samples", 2000));
        const std::uint64_t seed = derive_seed(cfg.master_seed, 0, StreamRole::MonteCarlo, 0);
        s.psi = psi_monte_carlo(b, psi_samples, seed);
        s.g_for = [b, draws, seed](Index r, Index c) { return sqrt_g_empirical(b, r, c, draws, seed); };
    } else {
        throw ConfigError("[tune] g_model must be fit or empirical");
    }
    m.validate();
    return s;
}

int cmd_tune(const std::string& config_path, const std::optional<std::string>& curves)
{
    const auto file = load_config(config_path);
    const auto s = tune_setup(file);
    const auto full = select_h(s.model, s.horizon, s.g_for(s.d_r, s.d_c));
    const auto grid = default_submatrix_grid(s.d_r, s.d_c);
    const auto sub = select_submatrix(s.model, grid, s.psi, s.horizon, s.g_for);
    const auto t_ss = estimate_T_ss(s.model, s.d_r, s.d_c, s.psi, s.g_for, geometric_grid(10.0, s.t_max));

    std::cout << "horizon=" << s.horizon << '\n'
              << "h=" << detail::format_double(full.h) << '\n'
              << "case=" << to_string(full.which) << '\n'
              << "h_lower_bound=" << detail::format_double(h_lower_bound(s.horizon, s.model)) << '\n'
              << "m_r=" << sub.m_r << '\n'
              << "m_c=" << sub.m_c << '\n'
              << "h_submatrix=" << detail::format_double(sub.h) << '\n'
              << "bound=" << detail::format_double(sub.bound) << '\n'
              << "T_ss=" << (std::isinf(t_ss) ? std::string("inf") : detail::format_double(t_ss)) << '\n';

    if (curves) {
        std::ofstream out(*curves);
        if (!out) throw Error("cannot write " + *curves);
        const auto g = s.g_for(s.d_r, s.d_c);
        out << "h,phi1,phi2\n";
        const double lo = h_lower_bound(s.horizon, s.model);
        const double hi = 2.0 * s.model.b_star;
        for (int i = 0; i <= 200; ++i) {
            const double h = lo + (hi - lo) * i / 200.0;
            out << detail::format_double(h) << ',' << detail::format_double(phi1(h, s.horizon, s.model)) << ','
                << detail::format_double(phi2(h, s.horizon, s.model, g)) << '\n';
        }
    }
    return 0;
}

int cmd_oracle(const std::string& name)
{
    std::vector<std::string> names = name == "all" ? oracle_names() : std::vector<std::string>{name};
    bool ok = true;
    for (const auto& n : names) {
        const auto rep = run_oracle(n);
        for (const auto& line : rep.lines) std::cout << rep.name << ": " << line << '\n';
        std::cout << rep.name << ": " << (rep.pass ? "PASS" : "FAIL") << '\n';
        ok = ok && rep.pass;
    }
    return ok ? 0 : 1;
}

int cmd_fitgh(const std::string& config_path, const std::optional<std::string>& csv)
{
    const auto file = load_config(config_path);
    const auto cfg = experiment_from_config(file);
    std::vector<double> hs, etas;
    for (int i = 0; i <= 12; ++i) hs.push_back(0.25 * i);
    for (int i = 1; i <= 10; ++i) etas.push_back(0.1 * i);
    const auto g_matrices = static_cast<std::size_t>(detail::config_int(file, "fitgh", "g_matrices", 100));
    const auto psi_samples = static_cast<std::size_t>(detail::config_int(file, "fitgh", "psi_samples", 10000));
    const auto curves = family_curves(cfg.env.rows, cfg.env.cols, cfg.env.rank, cfg.env.factors, hs, etas, g_matrices,
                                      psi_samples, derive_seed(cfg.master_seed, 0, StreamRole::MonteCarlo, 1));
    const auto fit = fit_g_and_psi(curves.h_g, curves.eta_psi);
    std::cout << "a1=" << detail::format_double(fit.a1) << '\n'
              << "b1=" << detail::format_double(fit.b1) << '\n'
              << "r2_g=" << detail::format_double(fit.r2_g) << '\n'
              << "a2=" << detail::format_double(fit.a2) << '\n'
              << "b2=" << detail::format_double(fit.b2) << '\n'
              << "r2_psi=" << detail::format_double(fit.r2_psi) << '\n';
    if (csv) {
        std::ofstream out(*csv);
        if (!out) throw Error("cannot write " + *csv);
        out << "kind,x,y\n";
        for (const auto& [h, g] : curves.h_g) out << "g," << detail::format_double(h) << ',' << detail::format_double(g) << '\n';
        for (const auto& [e, p] : curves.eta_psi)
            out << "psi," << detail::format_double(e) << ',' << detail::format_double(p) << '\n';
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Low-rank bandit experiments"};
    app.require_subcommand(1);

    std::string config, grid, oracle_name;
    std::optional<std::size_t> threads;
    std::optional<std::string> output, curves, csv;

    auto* run_cmd = app.add_subcommand("run", "Play every configured policy on every replicate");
    run_cmd->add_option("config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--threads", threads, "Worker threads (BLAB_THREADS still caps)");
    run_cmd->add_option("--output", output, "Output directory");

    auto* sweep_cmd = app.add_subcommand("sweep", "Run a grid of policy parameters");
    sweep_cmd->add_option("config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--grid", grid, "Grid file")->required()->check(CLI::ExistingFile);
    sweep_cmd->add_option("--threads", threads, "Worker threads");
    sweep_cmd->add_option("--output", output, "Output directory");

    auto* tune_cmd = app.add_subcommand("tune", "Select h, the submatrix size and T_ss from the bound surrogates");
    tune_cmd->add_option("config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
    tune_cmd->add_option("--curves", curves, "Write phi1/phi2 curves to this CSV");

    auto* oracle_cmd = app.add_subcommand("oracle", "Cross-check fast paths against brute force");
    oracle_cmd->add_option("name", oracle_name, "g, psi, prox, lambda_max, formulas or all")->required();

    auto* fit_cmd = app.add_subcommand("fitgh", "Fit log g(h) and psi(eta) on the configured matrix family");
    fit_cmd->add_option("config", config, "Experiment config file")->required()->check(CLI::ExistingFile);
    fit_cmd->add_option("--csv", csv, "Write the averaged curves to this CSV");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*run_cmd) return cmd_run(config, threads, output);
        if (*sweep_cmd) return cmd_sweep(config, grid, threads, output);
        if (*tune_cmd) return cmd_tune(config, curves);
        if (*oracle_cmd) return cmd_oracle(oracle_name);
        if (*fit_cmd) return cmd_fitgh(config, csv);
    } catch (const blab::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
