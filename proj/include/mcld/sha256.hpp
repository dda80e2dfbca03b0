#ifndef MCLD_SHA256_HPP_
#define MCLD_SHA256_HPP_

#include <cstdint>
#include <string>

namespace mcld {

// Hex digest of the SHA-256 of a byte string.
std::string sha256_hex(const std::string& data);

}  // namespace mcld

#endif  // MCLD_SHA256_HPP_
