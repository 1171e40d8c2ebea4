#pragma once

#include <cmath>
#include <cstdarg>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <stdexcept>
#include <string>

namespace stbr {

// Error taxonomy. The CLI maps kinds onto exit codes, everything else just
// throws and lets the caller decide.
enum class ErrorKind {
  Config,         // bad settings / violated configuration constraint
  Parse,          // malformed input file
  Validation,     // well-formed input with invalid content
  Alignment,      // two inputs that must agree do not
  Dimension,      // tensor shape mismatch
  Contract,       // API precondition violated
  Degenerate,     // zero-norm vector where a direction is required
  Divergence,     // non-finite values during training
  Coverage,       // not enough data to proceed
  Compatibility,  // artifact does not match the requesting configuration
  Io,             // filesystem failure
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

// ---------------------------------------------------------------------------
// Logging. Verbosity comes from the STBR_LOG environment variable
// (error, warn, info, debug); default is info.

enum class LogLevel : int { Error = 0, Warn = 1, Info = 2, Debug = 3 };

inline LogLevel log_level() {
  static LogLevel level = [] {
    const char* env = std::getenv("STBR_LOG");
    if (!env) return LogLevel::Info;
    if (std::strcmp(env, "error") == 0) return LogLevel::Error;
    if (std::strcmp(env, "warn") == 0) return LogLevel::Warn;
    if (std::strcmp(env, "debug") == 0) return LogLevel::Debug;
    return LogLevel::Info;
  }();
  return level;
}

inline void logf(LogLevel level, const char* fmt, ...) {
  if (static_cast<int>(level) > static_cast<int>(log_level())) return;
  static const char* tags[] = {"error", "warn", "info", "debug"};
  std::fprintf(stderr, "[stbr:%s] ", tags[static_cast<int>(level)]);
  va_list args;
  va_start(args, fmt);
  std::vfprintf(stderr, fmt, args);
  va_end(args);
  std::fputc('\n', stderr);
}

#define STBR_LOG_ERROR(...) ::stbr::logf(::stbr::LogLevel::Error, __VA_ARGS__)
#define STBR_LOG_WARN(...) ::stbr::logf(::stbr::LogLevel::Warn, __VA_ARGS__)
#define STBR_LOG_INFO(...) ::stbr::logf(::stbr::LogLevel::Info, __VA_ARGS__)
#define STBR_LOG_DEBUG(...) ::stbr::logf(::stbr::LogLevel::Debug, __VA_ARGS__)

// ---------------------------------------------------------------------------
// Deterministic RNG. splitmix64 core with explicit uniform mappings so that
// every sampled quantity is reproducible from a single 64-bit seed,
// independent of standard-library distribution internals.

class Rng {
 public:
  explicit Rng(uint64_t seed) : state_(seed) {}

  uint64_t next_u64() {
    state_ += 0x9e3779b97f4a7c15ull;
    uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // Uniform integer in [0, n). n must be positive.
  uint64_t next_below(uint64_t n) {
    return static_cast<uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
  }

  // Uniform double in [0, 1) with 53 random bits.
  double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Standard normal via Box-Muller; consumes two uniforms per call.
  double normal() {
    double u1 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    double u2 = next_double();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
  }

  // Derives an independent child stream; deterministic in (current seed, tag).
  Rng fork(uint64_t tag) const {
    Rng mixer(state_ ^ (tag * 0xd1b54a32d192ed03ull));
    return Rng(mixer.next_u64());
  }

 private:
  uint64_t state_;
};

}  // namespace stbr
