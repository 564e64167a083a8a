#pragma once

#include <stdexcept>
#include <string>

namespace cfgraph {

/// Validation failures: bad shapes, missing targets, malformed files.
/// CLI maps these to exit code 2.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Numerical failures (e.g. Cholesky on an indefinite matrix).
/// CLI maps these to exit code 3.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DimensionMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct TargetMissing : ValidationError {
    using ValidationError::ValidationError;
};
struct NoTrainEdges : ValidationError {
    using ValidationError::ValidationError;
};
struct MissingFile : ValidationError {
    using ValidationError::ValidationError;
};
struct MaskOverlap : ValidationError {
    using ValidationError::ValidationError;
};
struct SingleClassAuc : ValidationError {
    using ValidationError::ValidationError;
};
struct NotLocalityEligible : ValidationError {
    using ValidationError::ValidationError;
};
struct KindMismatch : ValidationError {
    using ValidationError::ValidationError;
};
struct NotPositiveDefinite : NumericalError {
    using NumericalError::NumericalError;
};

}  // namespace cfgraph
