#pragma once

#include <stdexcept>

namespace scl {

// Base class for every error thrown by this library. Callers that do not
// care about the precise failure can catch this one type.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch final : Error { using Error::Error; };
struct DuplicateSimplex final : Error { using Error::Error; };
struct MissingFace final : Error { using Error::Error; };
struct IndexOutOfRange final : Error { using Error::Error; };
struct NoConvergence final : Error { using Error::Error; };

struct DegenerateVector final : Error { using Error::Error; };
struct AllZeroScores final : Error { using Error::Error; };
struct EmptyNegatives final : Error { using Error::Error; };
struct BatchTooSmall final : Error { using Error::Error; };
struct WeightDimensionMismatch final : Error { using Error::Error; };

struct NonFiniteActivation final : Error { using Error::Error; };
struct NonFiniteLoss final : Error { using Error::Error; };
struct NonFiniteObjective final : Error { using Error::Error; };
struct TapeMismatch final : Error { using Error::Error; };

struct SingleClassInput final : Error { using Error::Error; };
struct InsufficientData final : Error { using Error::Error; };

struct ParseError final : Error { using Error::Error; };
struct UnknownLabel final : Error { using Error::Error; };
struct InvalidHolePlacement final : Error { using Error::Error; };
struct NoPath final : Error { using Error::Error; };

}  // namespace scl
