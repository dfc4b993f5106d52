#pragma once

// Content digests. SHA-256 comes from OpenSSL's libcrypto; the helpers here
// only add hex encoding and the canonical-JSON convention used for integrity
// annotations and content addressing (compact dump, keys sorted, which is
// what nlohmann::json produces by default since objects are key-ordered maps).

#include <string>

#include "json.hpp"

namespace nist {

std::string sha256_hex(const std::string& bytes);

// Compact single-line dump; object keys are already sorted by the json type.
std::string canonical_dump(const nlohmann::json& doc);

// sha256 over the canonical dump.
std::string canonical_digest(const nlohmann::json& doc);

}  // namespace nist
