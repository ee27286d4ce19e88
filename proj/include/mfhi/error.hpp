#pragma once

#include <stdexcept>
#include <string>

namespace mfhi {

// Error taxonomy shared across the library. The CLI maps each family to a
// distinct process exit code.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shape or dimension mismatch between operands.
struct DimensionError : Error { using Error::Error; };
// Argument outside its documented range (bad index, bad count, ...).
struct ArgumentError : Error { using Error::Error; };
// Input that is formally valid but numerically degenerate (near-zero norm).
struct DegenerateInputError : Error { using Error::Error; };
// Non-finite value produced, or a numeric oracle failed.
struct NumericError : Error { using Error::Error; };
// Malformed file content (tensor container, manifest, config).
struct FormatError : Error { using Error::Error; };
// Invalid or impossible configuration.
struct ConfigError : Error { using Error::Error; };
// Filesystem-level failure; message carries the offending path.
struct IoError : Error { using Error::Error; };
// Evaluation-protocol violation (train/test identity overlap).
struct ProtocolError : Error { using Error::Error; };

}  // namespace mfhi
