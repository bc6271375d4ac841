#pragma once

#include <stdexcept>
#include <string>

namespace polyspec {

/// Base type for every error thrown by this library.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct InvalidInputError : Error { using Error::Error; };
struct DimensionError : Error { using Error::Error; };
// Homophily ratios divide by the edge count; an empty edge set has no value.
struct UndefinedHomophilyError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct PromptError : Error { using Error::Error; };
struct TransportError : Error { using Error::Error; };
struct EdgeVoteError : Error { using Error::Error; };
struct EstimationError : Error { using Error::Error; };
struct TrainingError : Error { using Error::Error; };
struct EvaluationError : Error { using Error::Error; };

}  // namespace polyspec
