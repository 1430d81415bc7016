#pragma once

// Sequential decision rules behind one select/update interface: the
// forced-sampling schedule, Low-Rank Bandit (LRB), submatrix-sampled LRB,
// UCB, subsampled UCB, OFUL and a clairvoyant oracle.

#include "blab/bandit_env.hpp"
#include "blab/estimator.hpp"
#include "blab/matrix_core.hpp"
#include "blab/random.hpp"
#include "blab/types.hpp"

#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace blab {

// Forced sampling ----------------------------------------------------------------

struct ForcedSamplingConfig {
    enum class Mode { Schedule, Budget };
    Mode mode = Mode::Budget;
    double rho = 1.0;          // schedule mode
    std::int64_t budget = 0;   // budget mode: rounds 1..budget are forced

    static ForcedSamplingConfig schedule(double rho) { return {Mode::Schedule, rho, 0}; }
    static ForcedSamplingConfig with_budget(std::int64_t f) { return {Mode::Budget, 1.0, f}; }

    void validate(std::optional<std::int64_t> horizon = std::nullopt) const
    {
        if (mode == Mode::Schedule && !(rho >= 1.0)) throw InvalidArgument("schedule mode requires rho >= 1");
        if (mode == Mode::Budget) {
            if (budget < 0) throw InvalidArgument("forced-sample budget must be nonnegative");
            if (horizon && budget > *horizon) throw InvalidArgument("forced-sample budget exceeds the horizon");
        }
    }

    /// Rounds up to this point are always forced in schedule mode (2 rho log rho).
    double warmup() const { return 2.0 * rho * std::log(rho); }
};

/// Probability that round t is a forced round. Each forced round then picks
/// an arm uniformly, so the per-arm probability is this over d_r * d_c.
inline double forcing_probability(const ForcedSamplingConfig& cfg, std::int64_t t)
{
    if (cfg.mode == ForcedSamplingConfig::Mode::Budget) return t <= cfg.budget ? 1.0 : 0.0;
    const auto td = static_cast<double>(t);
    if (td <= cfg.warmup()) return 1.0;
    return std::min(1.0, cfg.rho / (td - cfg.rho * std::log(cfg.rho) + 1.0));
}

template <class Engine>
ArmIndex uniform_arm(Index rows, Index cols, Engine& rng)
{
    std::uniform_int_distribution<Index> pick(0, rows * cols - 1);
    const Index lin = pick(rng);
    return {lin / cols, lin % cols};
}

/// The forced arm of round t, or none.
template <class Engine>
std::optional<ArmIndex> forced_sampling_draw(const ForcedSamplingConfig& cfg, std::int64_t t, Index rows, Index cols,
                                             Engine& rng)
{
    if (t < 1) throw InvalidArgument("rounds start at 1");
    const double p = forcing_probability(cfg, t);
    if (p <= 0.0) return std::nullopt;
    if (p < 1.0) {
        std::uniform_real_distribution<double> coin(0.0, 1.0);
        if (coin(rng) >= p) return std::nullopt;
    }
    return uniform_arm(rows, cols, rng);
}

// UCB index ------------------------------------------------------------------------

enum class WRule { Empirical, Analysis };

/// w(t) = 1 + t log^2 t (empirical) or t (analysis).
inline double exploration_weight(std::int64_t t, WRule rule)
{
    const auto td = static_cast<double>(t);
    if (rule == WRule::Analysis) return td;
    const double lt = std::log(td);
    return 1.0 + td * lt * lt;
}

/// Mean plus sigma * sqrt(2 log w(t) / n); +inf for an unpulled arm. sigma
/// is the subgaussian scale of the reward noise (1 for 1-subgaussian noise).
inline double ucb_index(std::int64_t n, double sum, std::int64_t t, WRule rule, double sigma = 1.0)
{
    if (n < 0) throw InvalidArgument("pull count must be nonnegative");
    if (n == 0) return std::numeric_limits<double>::infinity();
    const auto nd = static_cast<double>(n);
    return sum / nd + sigma * std::sqrt(2.0 * std::log(exploration_weight(t, rule)) / nd);
}

struct UcbRule {
    WRule w = WRule::Empirical;
    double sigma = 1.0;
};

/// Per-arm pull counts and reward sums over a linear (row-major) arm index.
struct ArmStats {
    std::vector<std::int64_t> counts;
    std::vector<double> sums;

    explicit ArmStats(std::size_t n_arms = 0) : counts(n_arms, 0), sums(n_arms, 0.0) {}

    void add(std::size_t arm, double reward)
    {
        ++counts[arm];
        sums[arm] += reward;
    }
    std::int64_t total() const
    {
        std::int64_t s = 0;
        for (auto c : counts) s += c;
        return s;
    }
};

/// argmax over `candidates` (linear indices) of the UCB index. Ties are
/// broken uniformly with `rng`; exactly one draw is taken per call.
template <class Engine>
std::size_t select_ucb(const std::vector<std::size_t>& candidates, const ArmStats& stats, std::int64_t t,
                       const UcbRule& rule, Engine& rng)
{
    if (candidates.empty()) throw InvalidArgument("UCB needs at least one candidate arm");
    const double scale = rule.sigma * std::sqrt(2.0 * std::log(exploration_weight(t, rule.w)));
    double best = -std::numeric_limits<double>::infinity();
    std::vector<std::size_t> ties;
    for (std::size_t arm : candidates) {
        const auto n = stats.counts[arm];
        const double idx = n == 0 ? std::numeric_limits<double>::infinity()
                                  : stats.sums[arm] / static_cast<double>(n) +
                                        scale / std::sqrt(static_cast<double>(n));
        if (idx > best) {
            best = idx;
            ties.assign(1, arm);
        } else if (idx == best) {
            ties.push_back(arm);
        }
    }
    std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
    return ties[pick(rng)];
}

// Policy interface ---------------------------------------------------------------

class Policy {
public:
    virtual ~Policy() = default;
    /// Arm to play in round t (rounds are consecutive from 1).
    virtual ArmIndex select(std::int64_t t) = 0;
    /// Reward observed for the arm returned by the last select.
    virtual void update(const ArmIndex& arm, double reward) = 0;
    /// Whether the last selected arm came from forced sampling.
    virtual bool last_round_forced() const { return false; }
};

// Low-Rank Bandit ------------------------------------------------------------------

struct LrbConfig {
    enum class Recompute { OnNewForcedSample, EveryK };

    double h = 1.0;
    ForcedSamplingConfig forced;
    Index rank = 3; // 0 estimates the rank from each solver output
    SolverConfig solver;
    UcbRule ucb;
    Recompute recompute = Recompute::OnNewForcedSample;
    std::int64_t recompute_every = 1;

    void validate() const
    {
        if (!(h > 0.0)) throw InvalidArgument("filtering resolution h must be positive");
        if (rank < 0) throw InvalidArgument("rank must be nonnegative");
        if (recompute == Recompute::EveryK && recompute_every < 1) throw InvalidArgument("recompute interval must be >= 1");
        forced.validate();
        solver.validate();
    }
};

/// Arms whose estimate is within h/2 of the estimated maximum, row-major.
inline std::vector<ArmIndex> targeted_set(const Matrix& estimate, double h)
{
    const double threshold = estimate.maxCoeff() - h / 2.0;
    std::vector<ArmIndex> out;
    for (Index j = 0; j < estimate.rows(); ++j)
        for (Index k = 0; k < estimate.cols(); ++k)
            if (estimate(j, k) >= threshold) out.push_back({j, k});
    return out;
}

struct LrbState {
    explicit LrbState(Index rows, Index cols)
        : forced_log(rows, cols), stats(static_cast<std::size_t>(rows * cols))
    {
    }

    ObservationSet forced_log;
    ArmStats stats;
    std::optional<LowRankEstimate> cached_estimate;
    std::optional<std::vector<std::size_t>> targeted; // linear indices; none = all arms
    std::int64_t round = 0;
    std::size_t estimate_size = 0;     // |forced_log| when the estimate was computed
    std::int64_t estimate_round = 0;
    Matrix warm_start;
};

class LrbPolicy final : public Policy {
public:
    LrbPolicy(Index rows, Index cols, LrbConfig cfg, std::uint64_t seed)
        : rows_(rows), cols_(cols), cfg_(std::move(cfg)), rng_(seed), state_(rows, cols)
    {
        if (rows < 1 || cols < 1) throw InvalidArgument("grid must be nonempty");
        cfg_.validate();
        all_arms_.resize(static_cast<std::size_t>(rows * cols));
        for (std::size_t i = 0; i < all_arms_.size(); ++i) all_arms_[i] = i;
    }

    ArmIndex select(std::int64_t t) override
    {
        if (t != state_.round + 1) throw InvalidArgument("LRB rounds must be consecutive");
        current_t_ = t;
        if (auto forced = forced_sampling_draw(cfg_.forced, t, rows_, cols_, rng_)) {
            last_forced_ = true;
            return *forced;
        }
        last_forced_ = false;
        refresh_estimate(t);
        const auto& candidates = state_.targeted ? *state_.targeted : all_arms_;
        const std::size_t lin = select_ucb(candidates, state_.stats, t, cfg_.ucb, rng_);
        return {static_cast<Index>(lin) / cols_, static_cast<Index>(lin) % cols_};
    }

    void update(const ArmIndex& arm, double reward) override
    {
        if (arm.row < 0 || arm.row >= rows_ || arm.col < 0 || arm.col >= cols_)
            throw OutOfRange("updated arm outside the grid");
        state_.stats.add(static_cast<std::size_t>(arm.row * cols_ + arm.col), reward);
        if (last_forced_) state_.forced_log.add(arm, reward, current_t_);
        state_.round = current_t_;
    }

    bool last_round_forced() const override { return last_forced_; }

    /// Replaces the forced-sample estimate, e.g. with a synthetic one in tests.
    /// It stays in use until the forced log grows.
    void set_estimate(const Matrix& estimate)
    {
        if (estimate.rows() != rows_ || estimate.cols() != cols_) throw DimensionMismatch("estimate has wrong shape");
        LowRankEstimate e;
        e.matrix = estimate;
        state_.cached_estimate = std::move(e);
        state_.targeted = to_linear(targeted_set(estimate, cfg_.h));
        state_.estimate_size = state_.forced_log.size();
        state_.estimate_round = state_.round;
    }

    const LrbState& state() const noexcept { return state_; }
    const LrbConfig& config() const noexcept { return cfg_; }

private:
    std::vector<std::size_t> to_linear(const std::vector<ArmIndex>& arms) const
    {
        std::vector<std::size_t> out;
        out.reserve(arms.size());
        for (const auto& a : arms) out.push_back(static_cast<std::size_t>(a.row * cols_ + a.col));
        return out;
    }

    void refresh_estimate(std::int64_t t)
    {
        const std::size_t n = state_.forced_log.size();
        if (n < 2 || n == state_.estimate_size) return;
        if (cfg_.recompute == LrbConfig::Recompute::EveryK && state_.estimate_size > 0 &&
            t - state_.estimate_round < cfg_.recompute_every)
            return;
        state_.estimate_size = n;
        state_.estimate_round = t;
        try {
            const Matrix* warm = state_.warm_start.size() ? &state_.warm_start : nullptr;
            auto est = forced_sample_estimate(state_.forced_log, cfg_.rank, cfg_.solver, warm);
            state_.warm_start = est.warm_start;
            state_.targeted = to_linear(targeted_set(est.matrix, cfg_.h));
            state_.cached_estimate = std::move(est);
        } catch (const Error&) {
            // No usable estimate yet: fall back to UCB over every arm.
            state_.cached_estimate.reset();
            state_.targeted.reset();
        }
    }

    Index rows_;
    Index cols_;
    LrbConfig cfg_;
    Rng rng_;
    LrbState state_;
    std::vector<std::size_t> all_arms_;
    std::int64_t current_t_ = 0;
    bool last_forced_ = false;
};

/// LRB on a uniformly drawn m_r x m_c submatrix. Index sets are sorted, so
/// the full-size case reduces to plain LRB with the same seed.
class SsLrbPolicy final : public Policy {
public:
    SsLrbPolicy(Index rows, Index cols, Index m_r, Index m_c, LrbConfig cfg, std::uint64_t seed)
        : index_(draw_index(rows, cols, m_r, m_c, seed)), inner_(m_r, m_c, std::move(cfg), seed)
    {
    }

    ArmIndex select(std::int64_t t) override
    {
        inner_arm_ = inner_.select(t);
        return to_full(inner_arm_);
    }

    void update(const ArmIndex& arm, double reward) override
    {
        if (arm != to_full(inner_arm_)) throw InvalidArgument("update must follow the selected arm");
        inner_.update(inner_arm_, reward);
    }

    bool last_round_forced() const override { return inner_.last_round_forced(); }

    const SubmatrixIndex& index() const noexcept { return index_; }
    const LrbPolicy& inner() const noexcept { return inner_; }

private:
    static SubmatrixIndex draw_index(Index rows, Index cols, Index m_r, Index m_c, std::uint64_t seed)
    {
        if (m_r < 1 || m_r > rows || m_c < 1 || m_c > cols) throw InvalidArgument("submatrix size out of range");
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamRole::Subsample)}));
        return sample_submatrix(rows, cols, m_r, m_c, rng);
    }

    ArmIndex to_full(const ArmIndex& a) const
    {
        return {index_.row_ids[static_cast<std::size_t>(a.row)], index_.col_ids[static_cast<std::size_t>(a.col)]};
    }

    SubmatrixIndex index_;
    LrbPolicy inner_;
    ArmIndex inner_arm_;
};

/// UCB over an explicit subset of arms (all arms by default).
class UcbPolicy final : public Policy {
public:
    UcbPolicy(Index rows, Index cols, UcbRule rule, std::uint64_t seed)
        : UcbPolicy(rows, cols, all_arms(rows, cols), rule, seed)
    {
    }

    UcbPolicy(Index rows, Index cols, std::vector<std::size_t> arms, UcbRule rule, std::uint64_t seed)
        : rows_(rows), cols_(cols), arms_(std::move(arms)), rule_(rule), rng_(seed),
          stats_(static_cast<std::size_t>(rows * cols))
    {
        if (arms_.empty()) throw InvalidArgument("UCB needs at least one arm");
        for (auto a : arms_)
            if (a >= static_cast<std::size_t>(rows * cols)) throw OutOfRange("UCB arm outside the grid");
    }

    ArmIndex select(std::int64_t t) override
    {
        const std::size_t lin = select_ucb(arms_, stats_, t, rule_, rng_);
        return {static_cast<Index>(lin) / cols_, static_cast<Index>(lin) % cols_};
    }

    void update(const ArmIndex& arm, double reward) override
    {
        stats_.add(static_cast<std::size_t>(arm.row * cols_ + arm.col), reward);
    }

    const std::vector<std::size_t>& arms() const noexcept { return arms_; }
    const ArmStats& stats() const noexcept { return stats_; }

    static std::vector<std::size_t> all_arms(Index rows, Index cols)
    {
        std::vector<std::size_t> a(static_cast<std::size_t>(rows * cols));
        for (std::size_t i = 0; i < a.size(); ++i) a[i] = i;
        return a;
    }

private:
    Index rows_;
    Index cols_;
    std::vector<std::size_t> arms_;
    UcbRule rule_;
    Rng rng_;
    ArmStats stats_;
};

/// floor(4 sqrt(T)).
inline Index default_subsample_arms(std::int64_t horizon)
{
    return static_cast<Index>(std::floor(4.0 * std::sqrt(static_cast<double>(horizon))));
}

/// UCB on n_arms distinct arms drawn uniformly from the grid.
inline std::unique_ptr<UcbPolicy> make_ss_ucb(Index rows, Index cols, Index n_arms, UcbRule rule, std::uint64_t seed)
{
    if (n_arms < 1) throw InvalidArgument("ss-UCB needs at least one arm");
    n_arms = std::min(n_arms, rows * cols);
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(StreamRole::Subsample)}));
    std::vector<std::size_t> arms;
    for (Index lin : sample_without_replacement(rows * cols, n_arms, rng)) arms.push_back(static_cast<std::size_t>(lin));
    return std::make_unique<UcbPolicy>(rows, cols, std::move(arms), rule, seed);
}

// OFUL -----------------------------------------------------------------------------

struct OfulConfig {
    double ridge = 1.0;
    double delta = 0.01;
    double noise_sd = 0.1;
    double reward_bound = 1.0;   // S, bound on ||Theta||_2
    double feature_bound = 1.0;  // L, bound on ||A~||_2
    std::optional<double> beta_override;

    void validate() const
    {
        if (!(ridge > 0.0 && delta > 0.0 && delta < 1.0 && noise_sd >= 0.0 && reward_bound > 0.0 && feature_bound > 0.0))
            throw InvalidArgument("OFUL parameters must be positive (delta in (0, 1))");
    }
};

/// Optimistic linear bandit over sparse arm features. The inverse Gram matrix
/// is maintained by Sherman-Morrison updates.
class OfulPolicy final : public Policy {
public:
    OfulPolicy(Index rows, Index cols, std::vector<SparseFeature> arms, Index dim, OfulConfig cfg, std::uint64_t seed)
        : rows_(rows), cols_(cols), arms_(std::move(arms)), dim_(dim), cfg_(cfg), rng_(seed)
    {
        cfg_.validate();
        if (static_cast<Index>(arms_.size()) != rows * cols)
            throw DimensionMismatch("OFUL needs one feature vector per arm");
        for (const auto& a : arms_) {
            if (a.index.size() != a.value.size()) throw DimensionMismatch("sparse feature index/value size mismatch");
            for (Index i : a.index)
                if (i < 0 || i >= dim_) throw DimensionMismatch("feature coordinate outside the ambient dimension");
        }
        v_inv_ = Matrix::Identity(dim_, dim_) / cfg_.ridge;
        b_ = Vector::Zero(dim_);
        theta_ = Vector::Zero(dim_);
    }

    double beta() const
    {
        if (cfg_.beta_override) return *cfg_.beta_override;
        const double d = static_cast<double>(dim_);
        const double L2 = cfg_.feature_bound * cfg_.feature_bound;
        return std::sqrt(cfg_.ridge) * cfg_.reward_bound +
               cfg_.noise_sd * std::sqrt(2.0 * std::log(1.0 / cfg_.delta) +
                                         d * std::log(1.0 + static_cast<double>(n_obs_) * L2 / (cfg_.ridge * d)));
    }

    ArmIndex select(std::int64_t) override
    {
        const double b = beta();
        double best = -std::numeric_limits<double>::infinity();
        std::vector<std::size_t> ties;
        for (std::size_t a = 0; a < arms_.size(); ++a) {
            const auto& f = arms_[a];
            double mean = 0.0, quad = 0.0;
            for (std::size_t i = 0; i < f.index.size(); ++i) {
                mean += f.value[i] * theta_(f.index[i]);
                for (std::size_t l = 0; l < f.index.size(); ++l)
                    quad += f.value[i] * f.value[l] * v_inv_(f.index[i], f.index[l]);
            }
            const double score = mean + b * std::sqrt(std::max(quad, 0.0));
            if (score > best) {
                best = score;
                ties.assign(1, a);
            } else if (score == best) {
                ties.push_back(a);
            }
        }
        std::uniform_int_distribution<std::size_t> pick(0, ties.size() - 1);
        const std::size_t lin = ties[pick(rng_)];
        return {static_cast<Index>(lin) / cols_, static_cast<Index>(lin) % cols_};
    }

    void update(const ArmIndex& arm, double reward) override
    {
        const auto& f = arms_[static_cast<std::size_t>(arm.row * cols_ + arm.col)];
        Vector va = Vector::Zero(dim_);
        for (std::size_t i = 0; i < f.index.size(); ++i) va += f.value[i] * v_inv_.col(f.index[i]);
        double denom = 1.0;
        for (std::size_t i = 0; i < f.index.size(); ++i) denom += f.value[i] * va(f.index[i]);
        v_inv_.noalias() -= (va * va.transpose()) / denom;
        for (std::size_t i = 0; i < f.index.size(); ++i) b_(f.index[i]) += f.value[i] * reward;
        theta_.noalias() = v_inv_ * b_;
        ++n_obs_;
    }

    const Vector& theta_hat() const noexcept { return theta_; }

private:
    Index rows_;
    Index cols_;
    std::vector<SparseFeature> arms_;
    Index dim_;
    OfulConfig cfg_;
    Rng rng_;
    Matrix v_inv_;
    Vector b_;
    Vector theta_;
    std::int64_t n_obs_ = 0;
};

/// Always plays a best arm of the ground truth.
class OraclePolicy final : public Policy {
public:
    explicit OraclePolicy(const RewardMatrix& truth) : best_(oracle_gap_and_best(truth).best.front()) {}
    ArmIndex select(std::int64_t) override { return best_; }
    void update(const ArmIndex&, double) override {}

private:
    ArmIndex best_;
};

} // namespace blab
