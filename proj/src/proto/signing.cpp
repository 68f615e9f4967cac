#include "voluntier/proto/signing.hpp"

#include <sodium.h>

#include <stdexcept>

#include "voluntier/common/digest.hpp"
#include "voluntier/errors.hpp"

namespace voluntier::proto {

namespace {

const unsigned char* bytes_of(std::string_view s) { return reinterpret_cast<const unsigned char*>(s.data()); }

void init()
{
    if (sodium_init() < 0) {
        throw std::runtime_error("libsodium failed to initialize");
    }
}

} // namespace

KeyPair generate_keypair()
{
    init();
    KeyPair k;
    k.public_key.resize(crypto_sign_PUBLICKEYBYTES);
    k.secret_key.resize(crypto_sign_SECRETKEYBYTES);
    crypto_sign_keypair(reinterpret_cast<unsigned char*>(k.public_key.data()),
                        reinterpret_cast<unsigned char*>(k.secret_key.data()));
    return k;
}

std::string encode_key(std::string_view raw) { return to_hex(raw); }

std::string decode_key(std::string_view hex, std::size_t expected_size)
{
    std::string raw;
    try {
        raw = from_hex(hex);
    } catch (const std::invalid_argument&) {
        throw ConfigError("key is not valid hex");
    }
    if (raw.size() != expected_size) {
        throw ConfigError("key has wrong length");
    }
    return raw;
}

std::string key_id(std::string_view public_key) { return sha256_hex(public_key).substr(0, 16); }

SignedPayload sign(std::string name, std::string bytes, const KeyPair& keys)
{
    init();
    if (keys.secret_key.size() != crypto_sign_SECRETKEYBYTES || keys.public_key.size() != crypto_sign_PUBLICKEYBYTES) {
        throw ConfigError("signing key has wrong length");
    }
    SignedPayload p;
    p.name = std::move(name);
    p.bytes = std::move(bytes);
    const std::string raw_digest = sha256_raw(p.bytes);
    p.digest = to_hex(raw_digest);
    p.signature.resize(crypto_sign_BYTES);
    crypto_sign_detached(reinterpret_cast<unsigned char*>(p.signature.data()), nullptr, bytes_of(raw_digest),
                         raw_digest.size(), bytes_of(keys.secret_key));
    p.key_id = key_id(keys.public_key);
    return p;
}

bool verify(const SignedPayload& payload, std::string_view public_key)
{
    if (sodium_init() < 0 || public_key.size() != crypto_sign_PUBLICKEYBYTES ||
        payload.signature.size() != crypto_sign_BYTES) {
        return false;
    }
    if (payload.key_id != key_id(public_key)) {
        return false;
    }
    const std::string raw_digest = sha256_raw(payload.bytes);
    if (to_hex(raw_digest) != payload.digest) {
        return false;
    }
    return crypto_sign_verify_detached(bytes_of(payload.signature), bytes_of(raw_digest), raw_digest.size(),
                                       bytes_of(public_key)) == 0;
}

} // namespace voluntier::proto
