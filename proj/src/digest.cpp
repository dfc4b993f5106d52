#include "nist/digest.hpp"

#include <openssl/evp.h>

#include <array>

namespace nist {

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  EVP_Digest(bytes.data(), bytes.size(), md.data(), &md_len, EVP_sha256(), nullptr);
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xf]);
  }
  return out;
}

std::string canonical_dump(const nlohmann::json& doc) {
  return doc.dump();
}

std::string canonical_digest(const nlohmann::json& doc) {
  return sha256_hex(canonical_dump(doc));
}

}  // namespace nist
