#pragma once

// Shared basics for the NI stratum service: logical time, error codes,
// semantic versions, and deterministic randomness helpers.
//
// Randomness policy: every stochastic ingredient (metric noise, training
// curves) is derived from explicit 64-bit seeds through std::mt19937_64 or
// splitmix64, with uniform mapping done by hand via ldexp. The standard
// distributions and std::hash are implementation-defined, which would break
// the bitwise log-determinism this project promises, so they are not used.

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>

namespace nist {

// Logical simulation time in integer milliseconds.
using LogicalTime = std::int64_t;

// ── errors ──────────────────────────────────────────────────────────────────

enum class ErrorCode {
  ParseError,
  UnknownClass,
  MissingField,
  DanglingLink,
  IntegrityMismatch,
  InvalidDescriptor,
  VersionConflict,
  InvalidImage,
  UnknownModel,
  UnknownNifd,
  UnknownNisd,
  UnknownNif,
  UnknownInstance,
  UnknownNode,
  UnknownService,
  UnknownSource,
  UnknownReservation,
  AlreadyCommitted,
  UnknownPolicy,
  UnknownRun,
  UnknownRequest,
  UnknownLink,
  DuplicatePolicy,
  DuplicateRequest,
  Unauthorized,
  InsufficientResources,
  ConflictUnresolvable,
  PipelineFailed,
  InvalidSpec,
  InvalidState,
  TimeReversal,
  OrderViolation,
  ConfigError,
};

const char* error_code_name(ErrorCode code);

// Single exception type for hard failures; recoverable outcomes are plain
// result structs on the operations that produce them.
class NistError : public std::runtime_error {
 public:
  NistError(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const { return code_; }

 private:
  ErrorCode code_;
};

// ── semantic versions ───────────────────────────────────────────────────────

struct SemVer {
  int major = 0;
  int minor = 0;
  int patch = 0;

  static SemVer parse(const std::string& text);  // throws ParseError
  std::string str() const;

  auto operator<=>(const SemVer&) const = default;
};

// Constraint language is deliberately small: exact match and minimum version.
// An empty constraint (or "*") matches any version; a bare version means "==".
struct VersionConstraint {
  enum class Op { Any, Eq, Ge };
  Op op = Op::Any;
  SemVer version;

  static VersionConstraint parse(const std::string& text);  // throws ParseError
  bool satisfied_by(const SemVer& v) const;
  std::string str() const;
};

// ── deterministic hashing and randomness ────────────────────────────────────

// FNV-1a, used wherever a portable string hash is needed (seed derivation).
std::uint64_t fnv1a64(const std::string& text);

// splitmix64 step; used as a counter-based generator for per-sample noise.
std::uint64_t splitmix64(std::uint64_t x);

// Maps 64 random bits to a double in [0, 1).
inline double unit_double(std::uint64_t bits) {
  return std::ldexp(static_cast<double>(bits >> 11), -53);
}

// Thin wrapper around mt19937_64 with portable uniform mappings.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}

  std::uint64_t next() { return gen_(); }

  double uniform(double lo, double hi) {
    return lo + (hi - lo) * unit_double(next());
  }

  // Inclusive bounds.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    return lo + static_cast<std::int64_t>(next() % static_cast<std::uint64_t>(hi - lo + 1));
  }

 private:
  std::mt19937_64 gen_;
};

// "pfx-000042" style identifiers from per-run counters.
std::string format_id(const std::string& prefix, std::uint64_t n);

}  // namespace nist
