#include "helia/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/rand.h>

#include <algorithm>
#include <cstring>
#include <memory>
#include <stdexcept>

#include "helia/bytes.hpp"

namespace helia::crypto {
namespace {

thread_local OpCounters t_counters;

struct CtxDeleter {
    void operator()(EVP_CIPHER_CTX* ctx) const { EVP_CIPHER_CTX_free(ctx); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

// Single-block AES-128 encryption with a per-thread context.
class BlockCipher {
public:
    BlockCipher() : ctx_(EVP_CIPHER_CTX_new()) {
        if (!ctx_ || EVP_EncryptInit_ex(ctx_.get(), EVP_aes_128_ecb(), nullptr, nullptr, nullptr) != 1) {
            throw std::runtime_error("AES-128 context initialization failed");
        }
        EVP_CIPHER_CTX_set_padding(ctx_.get(), 0);
    }

    bool keyed_with(std::span<const std::uint8_t, 16> key) const {
        return keyed_ && std::memcmp(key.data(), key_.data(), 16) == 0;
    }

    void rekey(std::span<const std::uint8_t, 16> key) {
        if (EVP_EncryptInit_ex(ctx_.get(), nullptr, nullptr, key.data(), nullptr) != 1) {
            throw std::runtime_error("AES-128 key setup failed");
        }
        std::memcpy(key_.data(), key.data(), 16);
        keyed_ = true;
    }

    void encrypt(const std::uint8_t* in, std::uint8_t* out) {
        int len = 0;
        if (EVP_EncryptUpdate(ctx_.get(), out, &len, in, 16) != 1 || len != 16) {
            throw std::runtime_error("AES-128 encryption failed");
        }
    }

private:
    CtxPtr ctx_;
    std::array<std::uint8_t, 16> key_{};
    bool keyed_ = false;
};

// A router alternates between its secret and per-reservation authenticators,
// so a few keyed contexts are kept and replaced round-robin.
class CipherCache {
public:
    BlockCipher& get(std::span<const std::uint8_t, 16> key) {
        for (auto& c : slots_) {
            if (c.keyed_with(key)) return c;
        }
        auto& c = slots_[next_];
        next_ = (next_ + 1) % slots_.size();
        c.rekey(key);
        return c;
    }

    void encrypt(std::span<const std::uint8_t, 16> key, const std::uint8_t* in, std::uint8_t* out) {
        get(key).encrypt(in, out);
    }

private:
    std::array<BlockCipher, 4> slots_;
    std::size_t next_ = 0;
};

CipherCache& block_cipher() {
    thread_local CipherCache cache;
    return cache;
}

std::array<std::uint8_t, 32> aead_key(const DrKey& key) {
    std::array<std::uint8_t, 32> out{};
    std::array<std::uint8_t, 16> counter{};
    counter[15] = 0x01;
    block_cipher().encrypt(key.bytes, counter.data(), out.data());
    counter[15] = 0x02;
    block_cipher().encrypt(key.bytes, counter.data(), out.data() + 16);
    return out;
}

std::array<std::uint8_t, 16> grant_ad(Bps bw, TimeNs ts_exp) {
    std::array<std::uint8_t, 16> ad{};
    store_be64(ad.data(), bw);
    store_be64(ad.data() + 8, ts_exp);
    return ad;
}

}  // namespace

Mac cbc_mac(std::span<const std::uint8_t, 16> key, std::span<const std::uint8_t> msg) {
    ++t_counters.mac;
    Mac state{};
    auto& cipher = block_cipher().get(key);
    std::size_t off = 0;
    do {
        std::array<std::uint8_t, 16> block{};
        const std::size_t n = std::min<std::size_t>(16, msg.size() - off);
        std::memcpy(block.data(), msg.data() + off, n);
        for (std::size_t i = 0; i < 16; ++i) block[i] ^= state.bytes[i];
        cipher.encrypt(block.data(), state.bytes.data());
        off += n;
    } while (off < msg.size());
    return state;
}

DrKey derive_drkey(const SecretKey& secret, AsId remote_as) {
    std::array<std::uint8_t, 8> msg{};
    store_be64(msg.data(), remote_as);
    return DrKey{cbc_mac(secret.bytes, msg).bytes};
}

Authenticator compute_authenticator(const SecretKey& secret, AsId src, IfId ingress, IfId egress) {
    std::array<std::uint8_t, 12> msg{};
    store_be64(msg.data(), src);
    store_be16(msg.data() + 8, ingress);
    store_be16(msg.data() + 10, egress);
    return Authenticator{cbc_mac(secret.bytes, msg).bytes};
}

Mac compute_validation_mac(const Authenticator& auth, TimeNs ts, std::uint16_t len) {
    std::array<std::uint8_t, 10> msg{};
    store_be64(msg.data(), ts);
    store_be16(msg.data() + 8, len);
    return cbc_mac(auth.bytes, msg);
}

ValidationField compute_validation_field(const Authenticator& auth, TimeNs ts, std::uint16_t len) {
    const Mac full = compute_validation_mac(auth, ts, len);
    ValidationField vf;
    std::memcpy(vf.bytes.data(), full.bytes.data(), kValidationFieldLen);
    return vf;
}

Mac compute_setup_auth(const DrKey& key, TimeNs ts_req, bool flag_r, bool flag_b,
                       const std::optional<SetupDemand>& demand) {
    std::array<std::uint8_t, 26> msg{};
    store_be64(msg.data(), ts_req);
    msg[8] = flag_r ? 1 : 0;
    msg[9] = flag_b ? 1 : 0;
    std::size_t len = 10;
    if (demand) {
        store_be64(msg.data() + 10, demand->bw_dem);
        store_be64(msg.data() + 18, demand->bw_min);
        len = 26;
    }
    return cbc_mac(key.bytes, std::span<const std::uint8_t>(msg.data(), len));
}

SealedGrant seal_grant(const DrKey& key, const Authenticator& auth, Bps bw, TimeNs ts_exp,
                       const Nonce& nonce) {
    ++t_counters.aead;
    const auto k = aead_key(key);
    const auto ad = grant_ad(bw, ts_exp);
    CtxPtr ctx(EVP_CIPHER_CTX_new());
    SealedGrant out;
    int len = 0;
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, k.data(), nonce.bytes.data()) != 1 ||
        EVP_EncryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) != 1 ||
        EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &len, auth.bytes.data(), 16) != 1 ||
        EVP_EncryptFinal_ex(ctx.get(), out.ciphertext.data() + len, &len) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_GET_TAG, 16, out.tag.bytes.data()) != 1) {
        throw std::runtime_error("ChaCha20-Poly1305 sealing failed");
    }
    return out;
}

std::optional<Authenticator> unseal_grant(const DrKey& key, const SealedGrant& sealed, Bps bw,
                                          TimeNs ts_exp, const Nonce& nonce) {
    ++t_counters.aead;
    const auto k = aead_key(key);
    const auto ad = grant_ad(bw, ts_exp);
    CtxPtr ctx(EVP_CIPHER_CTX_new());
    if (!ctx) throw std::runtime_error("ChaCha20-Poly1305 context allocation failed");
    Authenticator auth;
    AeadTag tag = sealed.tag;
    int len = 0;
    if (EVP_DecryptInit_ex(ctx.get(), EVP_chacha20_poly1305(), nullptr, k.data(), nonce.bytes.data()) != 1 ||
        EVP_DecryptUpdate(ctx.get(), nullptr, &len, ad.data(), static_cast<int>(ad.size())) != 1 ||
        EVP_DecryptUpdate(ctx.get(), auth.bytes.data(), &len, sealed.ciphertext.data(), 16) != 1 ||
        EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_AEAD_SET_TAG, 16, tag.bytes.data()) != 1) {
        throw std::runtime_error("ChaCha20-Poly1305 opening failed");
    }
    if (EVP_DecryptFinal_ex(ctx.get(), auth.bytes.data() + len, &len) != 1) {
        return std::nullopt;
    }
    return auth;
}

Nonce random_nonce() {
    Nonce n;
    if (RAND_bytes(n.bytes.data(), static_cast<int>(n.bytes.size())) != 1) {
        throw std::runtime_error("RAND_bytes failed");
    }
    return n;
}

bool equal_ct(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b) {
    return a.size() == b.size() && CRYPTO_memcmp(a.data(), b.data(), a.size()) == 0;
}

OpCounters op_counters() noexcept { return t_counters; }

void reset_op_counters() noexcept { t_counters = {}; }

}  // namespace helia::crypto
