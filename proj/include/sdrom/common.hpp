#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace sdrom {

// Thrown when an argument violates an operation's preconditions
// (bad sizes, values outside the admissible box, malformed layouts).
struct ParameterError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a run configuration is inconsistent or incomplete
// (missing files, unknown keys, incompatible mesh/bundle pairs).
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when linear algebra breaks down (singular systems, residuals
// above tolerance). The message carries the diagnostic the caller needs.
struct NumericsError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when a mesh is too coarse for the requested interface width.
struct RefinementRequiredError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown when measurement data is unusable (zero measured flows, size
// mismatches against the site).
struct MeasurementError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Thrown on malformed on-disk artifacts (bad magic, checksum mismatch).
struct FormatError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// FNV-1a, used for mesh hashes and file checksums.
inline std::uint64_t fnv1a64(const void* data, std::size_t n,
                             std::uint64_t seed = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = seed;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a64(const std::string& s) {
  return fnv1a64(s.data(), s.size());
}

}  // namespace sdrom
