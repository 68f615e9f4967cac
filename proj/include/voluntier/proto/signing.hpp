#pragma once

#include <string>
#include <string_view>

namespace voluntier::proto {

/// Ed25519 key pair. Both halves are raw bytes.
struct KeyPair {
    std::string public_key; // 32 bytes
    std::string secret_key; // 64 bytes
};

KeyPair generate_keypair();
// Hex encodings as stored in key files and configs.
std::string encode_key(std::string_view raw);
std::string decode_key(std::string_view hex, std::size_t expected_size);

// First 16 hex digits of SHA-256(public key).
std::string key_id(std::string_view public_key);

struct SignedPayload {
    std::string name;
    std::string bytes;
    std::string digest;    // sha256 hex of bytes
    std::string signature; // raw Ed25519 signature over the raw digest
    std::string key_id;

    friend bool operator==(const SignedPayload&, const SignedPayload&) = default;
};

SignedPayload sign(std::string name, std::string bytes, const KeyPair& keys);

/// False on any mismatch: altered bytes, digest or signature, a key id that
/// does not belong to public_key, or a malformed key. Never throws.
bool verify(const SignedPayload& payload, std::string_view public_key);

} // namespace voluntier::proto
