#pragma once

#include <cstdio>
#include <stdexcept>
#include <string>

#include <openssl/evp.h>

#include "mapval/io/csv.hpp"

namespace mapval::io {

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("sha256: digest failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", md[i]);
    hex += buf;
  }
  return hex;
}

inline std::string sha256_file(const std::string& path) { return sha256_hex(read_file(path)); }

}  // namespace mapval::io
