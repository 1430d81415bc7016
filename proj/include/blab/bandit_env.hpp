#pragma once

// Simulation environments: the noisy reward oracle, the contextual instance
// generator with its flattened linear-bandit view, and regret accounting.

#include "blab/matrix_core.hpp"
#include "blab/random.hpp"
#include "blab/types.hpp"

#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace blab {

/// Rewards B*_{jk} + sigma * eps_t. The noise of round t depends only on
/// (seed, t), so two policies facing the same environment see identical
/// rewards whenever they pull the same arm in the same round.
class Environment {
public:
    Environment(RewardMatrix truth, double noise_sd, std::uint64_t seed)
        : truth_(std::move(truth)), noise_sd_(noise_sd), seed_(seed)
    {
        if (!(noise_sd >= 0.0)) throw InvalidArgument("noise_sd must be nonnegative");
        best_value_ = truth_.values().maxCoeff();
    }

    const RewardMatrix& truth() const noexcept { return truth_; }
    double noise_sd() const noexcept { return noise_sd_; }
    std::uint64_t seed() const noexcept { return seed_; }
    Index rows() const noexcept { return truth_.rows(); }
    Index cols() const noexcept { return truth_.cols(); }
    double best_value() const noexcept { return best_value_; }

    double noise(std::int64_t t) const
    {
        if (noise_sd_ == 0.0) return 0.0;
        SplitMix64 rng(derive_seed(seed_, {static_cast<std::uint64_t>(t)}));
        std::normal_distribution<double> normal(0.0, 1.0);
        return noise_sd_ * normal(rng);
    }

    double pull(const ArmIndex& arm, std::int64_t t) const
    {
        if (!truth_.contains(arm)) throw OutOfRange("pulled arm outside the reward grid");
        return truth_(arm) + noise(t);
    }

    double regret(const ArmIndex& arm) const { return best_value_ - truth_(arm); }

private:
    RewardMatrix truth_;
    double noise_sd_;
    std::uint64_t seed_;
    double best_value_ = 0.0;
};

struct GapReport {
    std::vector<ArmIndex> best;  // every argmax, row-major
    std::optional<double> gap;   // none when all entries tie
};

/// All maximizers of B* and the smallest positive shortfall.
inline GapReport oracle_gap_and_best(const RewardMatrix& b)
{
    const double top = b.values().maxCoeff();
    GapReport out;
    for (Index j = 0; j < b.rows(); ++j)
        for (Index k = 0; k < b.cols(); ++k) {
            const double d = top - b(j, k);
            if (d == 0.0) {
                out.best.push_back({j, k});
            } else if (!out.gap || d < *out.gap) {
                out.gap = d;
            }
        }
    return out;
}

/// A sparse feature vector: values at the listed coordinates, zero elsewhere.
struct SparseFeature {
    std::vector<Index> index;
    std::vector<double> value;

    double squared_norm() const
    {
        double s = 0.0;
        for (double v : value) s += v * v;
        return s;
    }
};

/// Low-rank instance built from a known context X: column k of B* is
/// U V_k^T X. Also exposes the flattened linear-bandit view (Theta, A~).
struct ContextualInstance {
    Index rows = 0;
    Index cols = 0;
    Index rank = 0;
    Index p = 0;
    double noise_sd = 0.0;
    Matrix U;                  // rows x rank
    std::vector<Matrix> V;     // cols entries, each p x rank
    Vector X;                  // p
    RewardMatrix truth;

    Index ambient_dim() const noexcept { return rows * cols * p; }

    /// Row j of U V_k^T, the latent arm feature A*_{jk}.
    Vector arm_feature(Index j, Index k) const
    {
        return V[static_cast<std::size_t>(k)] * U.row(j).transpose();
    }

    Index block_offset(Index j, Index k) const noexcept { return (j * cols + k) * p; }

    /// Stacked A*_{jk} in row-major arm order.
    Vector theta() const
    {
        Vector th(ambient_dim());
        for (Index j = 0; j < rows; ++j)
            for (Index k = 0; k < cols; ++k) th.segment(block_offset(j, k), p) = arm_feature(j, k);
        return th;
    }

    /// X placed at block (j, k); zero elsewhere.
    SparseFeature lifted_arm(Index j, Index k) const
    {
        SparseFeature f;
        for (Index i = 0; i < p; ++i) {
            f.index.push_back(block_offset(j, k) + i);
            f.value.push_back(X(i));
        }
        return f;
    }

    std::vector<SparseFeature> lifted_arms() const
    {
        std::vector<SparseFeature> arms;
        arms.reserve(static_cast<std::size_t>(rows * cols));
        for (Index j = 0; j < rows; ++j)
            for (Index k = 0; k < cols; ++k) arms.push_back(lifted_arm(j, k));
        return arms;
    }
};

/// U, then V_1..V_{cols}, then X, all i.i.d. N(0, 1) from one seeded stream.
inline ContextualInstance generate_contextual(Index rows, Index cols, Index rank, Index p, double noise_sd,
                                              std::uint64_t seed)
{
    if (rows < 1 || cols < 1 || rank < 1 || p < 1) throw InvalidArgument("contextual dimensions must be positive");
    if (rank > std::min(rows, cols)) throw InvalidArgument("rank must not exceed min(rows, cols)");
    Rng rng(seed);
    ContextualInstance inst;
    inst.rows = rows;
    inst.cols = cols;
    inst.rank = rank;
    inst.p = p;
    inst.noise_sd = noise_sd;
    inst.U = random_factor(rows, rank, FactorDistribution::StdNormal, rng);
    for (Index k = 0; k < cols; ++k) inst.V.push_back(random_factor(p, rank, FactorDistribution::StdNormal, rng));
    inst.X = random_factor(p, 1, FactorDistribution::StdNormal, rng).col(0);

    Matrix b(rows, cols);
    for (Index k = 0; k < cols; ++k)
        b.col(k) = inst.U * (inst.V[static_cast<std::size_t>(k)].transpose() * inst.X);
    inst.truth = RewardMatrix(std::move(b));
    return inst;
}

struct RoundRecord {
    std::int64_t t = 0;
    ArmIndex arm;
    double reward = 0.0;
    double inst_regret = 0.0;
    double cum_regret = 0.0;
    bool forced = false;
};

/// Per-round log of one policy on one replicate.
struct RegretTrace {
    std::string policy;
    std::size_t replicate = 0;
    std::vector<RoundRecord> rounds;

    double final_regret() const noexcept { return rounds.empty() ? 0.0 : rounds.back().cum_regret; }

    void record(std::int64_t t, const ArmIndex& arm, double reward, double inst_regret, bool forced)
    {
        const double cum = final_regret() + inst_regret;
        rounds.push_back({t, arm, reward, inst_regret, cum, forced});
    }
};

namespace detail {

inline std::string csv_field(const std::string& s)
{
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + '"';
}

} // namespace detail

inline constexpr const char* kTraceCsvHeader = "replicate,t,policy,row,col,reward,inst_regret,cum_regret";

inline void write_trace_rows(std::ostream& out, const RegretTrace& trace)
{
    const std::string label = detail::csv_field(trace.policy);
    for (const auto& r : trace.rounds) {
        out << trace.replicate << ',' << r.t << ',' << label << ',' << r.arm.row + 1 << ',' << r.arm.col + 1 << ','
            << detail::format_double(r.reward) << ',' << detail::format_double(r.inst_regret) << ','
            << detail::format_double(r.cum_regret) << '\n';
    }
}

} // namespace blab
