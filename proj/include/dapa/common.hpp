#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dapa {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Tensor/parameter shapes do not line up.
struct DimensionError : Error {
  using Error::Error;
};

// An API precondition was violated (non-scalar loss, bad argument range).
struct ContractError : Error {
  using Error::Error;
};

// Run configuration is invalid (unknown key, bad value). CLI exit code 2.
struct ConfigError : Error {
  using Error::Error;
};

// Input file violates its documented schema. CLI exit code 2.
struct SchemaError : Error {
  using Error::Error;
};

// A required artifact (dataset, checkpoint) is missing. CLI exit code 3.
struct MissingPrerequisiteError : Error {
  using Error::Error;
};

// Training diverged or produced non-finite values. CLI exit code 4.
struct NumericalError : Error {
  using Error::Error;
};

struct IoError : Error {
  using Error::Error;
};

inline bool all_finite(std::span<const double> xs) {
  for (double x : xs)
    if (!std::isfinite(x)) return false;
  return true;
}

// FNV-1a, used for checkpoint section checksums and config fingerprints.
inline std::uint64_t fnv1a(std::span<const unsigned char> bytes,
                           std::uint64_t seed = 0xcbf29ce484222325ull) {
  std::uint64_t h = seed;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::uint64_t fnv1a(const std::string& s) {
  return fnv1a(std::span<const unsigned char>(
      reinterpret_cast<const unsigned char*>(s.data()), s.size()));
}

}  // namespace dapa
