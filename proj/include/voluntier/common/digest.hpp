#pragma once

#include <string>
#include <string_view>

namespace voluntier {

// Lowercase hex SHA-256.
std::string sha256_hex(std::string_view bytes);
// Raw 32-byte SHA-256.
std::string sha256_raw(std::string_view bytes);

std::string to_hex(std::string_view bytes);
// Throws std::invalid_argument on odd length or non-hex characters.
std::string from_hex(std::string_view hex);

std::string base64_encode(std::string_view bytes);
// Throws std::invalid_argument on malformed input.
std::string base64_decode(std::string_view text);

} // namespace voluntier
