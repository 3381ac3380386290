#pragma once

#include <cstdint>
#include <map>
#include <random>
#include <string>
#include <string_view>

namespace fpsr {

/// 64-bit FNV-1a.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t seed = 0xcbf29ce484222325ULL);

/// Seed for the stream `name` of a run seeded with `master`.
std::uint64_t derive_seed(std::uint64_t master, std::string_view name);

/// Seedable generator whose whole state is the engine, so a text snapshot of
/// it restores the exact sequence. Draw helpers avoid the implementation-
/// defined std distributions.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [lo, hi].
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  /// Standard normal (Box-Muller, no cached second draw).
  double normal();

  std::string state() const;
  void set_state(const std::string& text);

 private:
  std::mt19937_64 engine_;
};

/// Independent named streams derived from one master seed.
class RngStreams {
 public:
  explicit RngStreams(std::uint64_t master = 0) : master_(master) {}

  Rng& stream(const std::string& name);
  std::uint64_t master() const { return master_; }

  std::map<std::string, std::string> snapshot() const;
  void restore(const std::map<std::string, std::string>& states);

 private:
  std::uint64_t master_;
  std::map<std::string, Rng> streams_;
};

}  // namespace fpsr
