#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace claps {

/// Base class for all errors raised by the toolkit.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Invalid argument / domain violation (maps to usage errors at the CLI).
struct DomainError : Error {
  using Error::Error;
};

/// Malformed or unreadable input (config files, weight files, manifests).
struct FormatError : Error {
  using Error::Error;
};

/// A computation exceeded its configured resource budget.
struct ResourceError : Error {
  using Error::Error;
};

// -- deterministic RNG helpers ---------------------------------------------

/// splitmix64 mix; used to derive independent per-episode seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

/// mt19937_64 seeded through splitmix so nearby seeds decorrelate.
std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0);

// -- hashing ----------------------------------------------------------------

/// SHA-256 of a byte buffer, lowercase hex.
std::string sha256_hex(const void* data, std::size_t len);
std::string sha256_hex(const std::string& data);

/// SHA-256 of a file's contents. Throws FormatError if unreadable.
std::string sha256_file_hex(const std::filesystem::path& path);

// -- files ------------------------------------------------------------------

/// Write-then-rename so readers never observe a partial file.
void atomic_write_file(const std::filesystem::path& path, const std::string& contents);

std::string read_file(const std::filesystem::path& path);

// -- formatting -------------------------------------------------------------

/// Shortest decimal form that round-trips a double exactly.
std::string format_double(double v);

std::vector<std::string> split_ws(const std::string& s);

/// Worker count for parallel sweeps: CLAPS_THREADS env var, else
/// hardware_concurrency, clamped to [1, 64].
unsigned thread_count();

}  // namespace claps
