#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace hkd {

enum class ErrorKind { validation, config, io, runtime };

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error validation_error(const std::string& msg) { return Error(ErrorKind::validation, msg); }
inline Error config_error(const std::string& msg) { return Error(ErrorKind::config, msg); }
inline Error io_error(const std::string& msg) { return Error(ErrorKind::io, msg); }
inline Error runtime_error(const std::string& msg) { return Error(ErrorKind::runtime, msg); }

/// Deterministic, serializable PRNG (xoshiro256**), seeded via splitmix64.
/// All randomness in the project flows through explicit Rng instances so
/// that every stage is reproducible from its seed alone.
class Rng {
 public:
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  /// Uniform double in [0, 1).
  double next_double();
  /// Uniform integer in [0, n), n > 0.
  uint64_t next_below(uint64_t n);
  /// Uniform integer in [lo, hi] inclusive.
  int next_int(int lo, int hi);
  /// Fresh seed for a child generator.
  uint64_t next_seed() { return next_u64(); }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(next_below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

  /// k distinct indices drawn from [0, n) without replacement.
  std::vector<size_t> sample_without_replacement(size_t n, size_t k);

  std::array<uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<uint64_t, 4>& s) { s_ = s; }

 private:
  std::array<uint64_t, 4> s_;
};

/// Stable seed derivation: one master seed fans out to per-stage seeds
/// keyed by a domain string ("teachers/a1", "upsample/student", ...).
uint64_t derive_seed(uint64_t master, std::string_view domain);

/// Runs fn(0..count-1) on up to `jobs` worker threads; rethrows the first
/// exception. Items must be independent.
void parallel_for(size_t count, int jobs, const std::function<void(size_t)>& fn);

// ---- small file helpers ----

std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);
/// Writes via a temp file + rename so readers never observe partial content.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace hkd
