#pragma once

#include <stdexcept>
#include <string>

namespace byel {

// Exit codes used by every CLI command. Stable; documented in README.
enum ExitCode : int {
  kExitOk = 0,
  kExitConfigError = 1,
  kExitIoError = 2,
  kExitMissingArtifact = 3,
  kExitNumericError = 4,
};

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingArtifactError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Non-finite losses, degenerate zero-norm inputs and the like.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace byel
