#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace blab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// One cell of the reward grid. 0-based internally; printed 1-based.
struct ArmIndex {
    Index row = 0;
    Index col = 0;

    friend bool operator==(const ArmIndex&, const ArmIndex&) = default;
    friend auto operator<=>(const ArmIndex&, const ArmIndex&) = default;
};

struct ArmIndexHash {
    std::size_t operator()(const ArmIndex& a) const noexcept
    {
        return std::hash<std::uint64_t>{}(
            (static_cast<std::uint64_t>(a.row) << 32) ^ static_cast<std::uint64_t>(a.col));
    }
};

// Error hierarchy. Every failure the library reports derives from blab::Error.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define BLAB_DEFINE_ERROR(name)              \
    class name : public Error {              \
    public:                                  \
        using Error::Error;                  \
    }

BLAB_DEFINE_ERROR(InvalidArgument);
BLAB_DEFINE_ERROR(RankDeficient);
BLAB_DEFINE_ERROR(EnumerationTooLarge);
BLAB_DEFINE_ERROR(DomainError);
BLAB_DEFINE_ERROR(EmptyObservations);
BLAB_DEFINE_ERROR(TooFewSamples);
BLAB_DEFINE_ERROR(OutOfRange);
BLAB_DEFINE_ERROR(DimensionMismatch);
BLAB_DEFINE_ERROR(ParseError);
BLAB_DEFINE_ERROR(ConfigError);

#undef BLAB_DEFINE_ERROR

} // namespace blab
