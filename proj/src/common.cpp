#include "nist/common.hpp"

#include <charconv>
#include <cstdio>

namespace nist {

const char* error_code_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::ParseError: return "ParseError";
    case ErrorCode::UnknownClass: return "UnknownClass";
    case ErrorCode::MissingField: return "MissingField";
    case ErrorCode::DanglingLink: return "DanglingLink";
    case ErrorCode::IntegrityMismatch: return "IntegrityMismatch";
    case ErrorCode::InvalidDescriptor: return "InvalidDescriptor";
    case ErrorCode::VersionConflict: return "VersionConflict";
    case ErrorCode::InvalidImage: return "InvalidImage";
    case ErrorCode::UnknownModel: return "UnknownModel";
    case ErrorCode::UnknownNifd: return "UnknownNifd";
    case ErrorCode::UnknownNisd: return "UnknownNisd";
    case ErrorCode::UnknownNif: return "UnknownNif";
    case ErrorCode::UnknownInstance: return "UnknownInstance";
    case ErrorCode::UnknownNode: return "UnknownNode";
    case ErrorCode::UnknownService: return "UnknownService";
    case ErrorCode::UnknownSource: return "UnknownSource";
    case ErrorCode::UnknownReservation: return "UnknownReservation";
    case ErrorCode::AlreadyCommitted: return "AlreadyCommitted";
    case ErrorCode::UnknownPolicy: return "UnknownPolicy";
    case ErrorCode::UnknownRun: return "UnknownRun";
    case ErrorCode::UnknownRequest: return "UnknownRequest";
    case ErrorCode::UnknownLink: return "UnknownLink";
    case ErrorCode::DuplicatePolicy: return "DuplicatePolicy";
    case ErrorCode::DuplicateRequest: return "DuplicateRequest";
    case ErrorCode::Unauthorized: return "Unauthorized";
    case ErrorCode::InsufficientResources: return "InsufficientResources";
    case ErrorCode::ConflictUnresolvable: return "ConflictUnresolvable";
    case ErrorCode::PipelineFailed: return "PipelineFailed";
    case ErrorCode::InvalidSpec: return "InvalidSpec";
    case ErrorCode::InvalidState: return "InvalidState";
    case ErrorCode::TimeReversal: return "TimeReversal";
    case ErrorCode::OrderViolation: return "OrderViolation";
    case ErrorCode::ConfigError: return "ConfigError";
  }
  return "UnknownError";
}

namespace {

int parse_int_component(std::string_view part, const std::string& whole) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(part.data(), part.data() + part.size(), value);
  if (ec != std::errc() || ptr != part.data() + part.size() || value < 0) {
    throw NistError(ErrorCode::ParseError, "bad version string: " + whole);
  }
  return value;
}

}  // namespace

SemVer SemVer::parse(const std::string& text) {
  std::string_view sv(text);
  auto dot1 = sv.find('.');
  auto dot2 = dot1 == std::string_view::npos ? dot1 : sv.find('.', dot1 + 1);
  if (dot1 == std::string_view::npos || dot2 == std::string_view::npos ||
      sv.find('.', dot2 + 1) != std::string_view::npos) {
    throw NistError(ErrorCode::ParseError, "bad version string: " + text);
  }
  SemVer v;
  v.major = parse_int_component(sv.substr(0, dot1), text);
  v.minor = parse_int_component(sv.substr(dot1 + 1, dot2 - dot1 - 1), text);
  v.patch = parse_int_component(sv.substr(dot2 + 1), text);
  return v;
}

std::string SemVer::str() const {
  return std::to_string(major) + "." + std::to_string(minor) + "." + std::to_string(patch);
}

VersionConstraint VersionConstraint::parse(const std::string& text) {
  VersionConstraint c;
  if (text.empty() || text == "*") {
    c.op = Op::Any;
    return c;
  }
  if (text.rfind("==", 0) == 0) {
    c.op = Op::Eq;
    c.version = SemVer::parse(text.substr(2));
  } else if (text.rfind(">=", 0) == 0) {
    c.op = Op::Ge;
    c.version = SemVer::parse(text.substr(2));
  } else {
    c.op = Op::Eq;
    c.version = SemVer::parse(text);
  }
  return c;
}

bool VersionConstraint::satisfied_by(const SemVer& v) const {
  switch (op) {
    case Op::Any: return true;
    case Op::Eq: return v == version;
    case Op::Ge: return v >= version;
  }
  return false;
}

std::string VersionConstraint::str() const {
  switch (op) {
    case Op::Any: return "*";
    case Op::Eq: return "==" + version.str();
    case Op::Ge: return ">=" + version.str();
  }
  return "*";
}

std::uint64_t fnv1a64(const std::string& text) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

std::string format_id(const std::string& prefix, std::uint64_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%06llu", static_cast<unsigned long long>(n));
  return prefix + "-" + buf;
}

}  // namespace nist
