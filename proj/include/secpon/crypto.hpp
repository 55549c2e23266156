#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <set>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include <openssl/evp.h>

#include "secpon/bits.hpp"

namespace secpon {

using AesKey = std::array<std::uint8_t, 32>;
using AesBlock = std::array<std::uint8_t, 16>;

enum class KeyState : std::uint8_t { pending, active, retired };

inline std::string to_string(KeyState s)
{
    switch (s) {
    case KeyState::pending: return "pending";
    case KeyState::active: return "active";
    case KeyState::retired: return "retired";
    }
    return "unknown";
}

struct SessionKey {
    AesKey key{};
    std::uint32_t seq = 0;
    KeyState state = KeyState::pending;

    std::string hex() const { return to_hex(key); }
    friend bool operator==(const SessionKey&, const SessionKey&) = default;
};

namespace detail {

struct EvpCtxDeleter {
    void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using EvpCtx = std::unique_ptr<EVP_CIPHER_CTX, EvpCtxDeleter>;

inline EvpCtx make_ecb_ctx(const AesKey& key)
{
    EvpCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_EncryptInit_ex(ctx.get(), EVP_aes_256_ecb(), nullptr, key.data(), nullptr) != 1)
        throw std::runtime_error("aes256: cipher initialisation failed");
    EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
    return ctx;
}

} // namespace detail

/// Single-block AES-256 encryption (the raw block cipher).
inline AesBlock aes256_encrypt_block(const AesKey& key, const AesBlock& in)
{
    auto ctx = detail::make_ecb_ctx(key);
    AesBlock out{};
    int len = 0;
    if (EVP_EncryptUpdate(ctx.get(), out.data(), &len, in.data(), static_cast<int>(in.size())) != 1 || len != 16)
        throw std::runtime_error("aes256_encrypt_block: encryption failed");
    return out;
}

inline AesBlock aes256_decrypt_block(const AesKey& key, const AesBlock& in)
{
    detail::EvpCtx ctx(EVP_CIPHER_CTX_new());
    if (!ctx || EVP_DecryptInit_ex(ctx.get(), EVP_aes_256_ecb(), nullptr, key.data(), nullptr) != 1)
        throw std::runtime_error("aes256_decrypt_block: cipher initialisation failed");
    EVP_CIPHER_CTX_set_padding(ctx.get(), 0);
    AesBlock out{};
    int len = 0;
    if (EVP_DecryptUpdate(ctx.get(), out.data(), &len, in.data(), static_cast<int>(in.size())) != 1 ||
        len != 16)
        throw std::runtime_error("aes256_decrypt_block: decryption failed");
    return out;
}

/// Counter-mode keystream for one codeword. The 128-bit counter block is
/// [codeword_index, 64-bit big endian][block index, 64-bit big endian].
inline std::vector<std::uint8_t> aes256_ctr_keystream(const AesKey& key, std::uint64_t codeword_index,
                                                      std::size_t n_bytes)
{
    const std::size_t n_blocks = (n_bytes + 15) / 16;
    std::vector<std::uint8_t> counters(n_blocks * 16);
    for (std::size_t b = 0; b < n_blocks; ++b) {
        for (int i = 0; i < 8; ++i) {
            counters[16 * b + static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(codeword_index >> (56 - 8 * i));
            counters[16 * b + 8 + static_cast<std::size_t>(i)] =
                static_cast<std::uint8_t>(static_cast<std::uint64_t>(b) >> (56 - 8 * i));
        }
    }
    std::vector<std::uint8_t> ks(counters.size());
    if (!counters.empty()) {
        auto ctx = detail::make_ecb_ctx(key);
        int len = 0;
        if (EVP_EncryptUpdate(ctx.get(), ks.data(), &len, counters.data(), static_cast<int>(counters.size())) !=
                1 ||
            static_cast<std::size_t>(len) != counters.size())
            throw std::runtime_error("aes256_ctr_keystream: encryption failed");
    }
    ks.resize(n_bytes);
    return ks;
}

/// XORs the counter-mode keystream of (key, codeword_index) onto a bit sequence.
/// The key must be active. Decryption is the same operation.
inline BitVec aes256_encrypt(std::span<const std::uint8_t> plain, const SessionKey& key, std::uint64_t codeword_index)
{
    if (key.state != KeyState::active)
        throw std::logic_error("aes256_encrypt: key is not active");
    const auto ks = aes256_ctr_keystream(key.key, codeword_index, (plain.size() + 7) / 8);
    BitVec out(plain.size());
    for (std::size_t i = 0; i < plain.size(); ++i)
        out[i] = static_cast<std::uint8_t>((plain[i] & 1u) ^ ((ks[i / 8] >> (7 - i % 8)) & 1u));
    return out;
}

inline BitVec aes256_decrypt(std::span<const std::uint8_t> cipher, const SessionKey& key, std::uint64_t codeword_index)
{
    return aes256_encrypt(cipher, key, codeword_index);
}

/// Per-codeword subkey for the every-codeword rotation cadence:
/// AES_K([c][0...0]) || AES_K([c][0...1]) under the active session key K.
inline SessionKey derive_codeword_key(const SessionKey& base, std::uint64_t codeword_index)
{
    const auto ks = aes256_ctr_keystream(base.key, codeword_index, 32);
    SessionKey k = base;
    std::copy(ks.begin(), ks.end(), k.key.begin());
    return k;
}

// ---------------------------------------------------------------------------
// Key fragments carried by one polar codeword payload (245 bits):
// [seq:8][fragment_index:1][fragment:128][zero padding:108]

struct KeyFragmentMessage {
    static constexpr std::size_t kSeqBits = 8;
    static constexpr std::size_t kFragmentBits = 128;
    static constexpr std::size_t kTotalBits = 245;
    static constexpr std::size_t kPaddingBits = kTotalBits - kSeqBits - 1 - kFragmentBits;

    std::uint8_t seq = 0;
    std::uint8_t fragment_index = 0;
    std::array<std::uint8_t, 16> fragment{};

    BitVec to_bits() const
    {
        if (fragment_index > 1)
            throw std::invalid_argument("KeyFragmentMessage: fragment index must be 0 or 1");
        BitVec bits;
        bits.reserve(kTotalBits);
        for (int i = 7; i >= 0; --i)
            bits.push_back((seq >> i) & 1u);
        bits.push_back(fragment_index);
        auto f = unpack_bits(fragment, kFragmentBits);
        bits.insert(bits.end(), f.begin(), f.end());
        bits.resize(kTotalBits, 0);
        return bits;
    }

    /// Parses a decoded payload; nonzero padding is rejected.
    static KeyFragmentMessage from_bits(std::span<const std::uint8_t> bits)
    {
        if (bits.size() != kTotalBits)
            throw std::length_error("KeyFragmentMessage: payload must be 245 bits");
        for (std::size_t i = kSeqBits + 1 + kFragmentBits; i < kTotalBits; ++i)
            if (bits[i] & 1u)
                throw std::invalid_argument("KeyFragmentMessage: nonzero padding");
        KeyFragmentMessage m;
        for (std::size_t i = 0; i < kSeqBits; ++i)
            m.seq = static_cast<std::uint8_t>(m.seq << 1 | (bits[i] & 1u));
        m.fragment_index = bits[kSeqBits] & 1u;
        auto bytes = pack_bits(bits.subspan(kSeqBits + 1, kFragmentBits));
        std::copy(bytes.begin(), bytes.end(), m.fragment.begin());
        return m;
    }

    friend bool operator==(const KeyFragmentMessage&, const KeyFragmentMessage&) = default;
};

/// Splits a key into its two fragment messages.
inline std::array<KeyFragmentMessage, 2> split_key(const SessionKey& key)
{
    std::array<KeyFragmentMessage, 2> f{};
    for (std::uint8_t i = 0; i < 2; ++i) {
        f[i].seq = static_cast<std::uint8_t>(key.seq & 0xFFu);
        f[i].fragment_index = i;
        std::copy_n(key.key.begin() + 16 * i, 16, f[i].fragment.begin());
    }
    return f;
}

inline SessionKey assemble_key(const KeyFragmentMessage& f0, const KeyFragmentMessage& f1)
{
    if (f0.seq != f1.seq)
        throw std::invalid_argument("assemble_key: fragment sequence numbers differ");
    if (f0.fragment_index == f1.fragment_index || f0.fragment_index > 1 || f1.fragment_index > 1)
        throw std::invalid_argument("assemble_key: need fragments 0 and 1");
    const auto& lo = f0.fragment_index == 0 ? f0 : f1;
    const auto& hi = f0.fragment_index == 0 ? f1 : f0;
    SessionKey k;
    k.seq = f0.seq;
    k.state = KeyState::pending;
    std::copy(lo.fragment.begin(), lo.fragment.end(), k.key.begin());
    std::copy(hi.fragment.begin(), hi.fragment.end(), k.key.begin() + 16);
    return k;
}

// ---------------------------------------------------------------------------

enum class Direction : std::uint8_t { upstream, downstream };

inline std::string to_string(Direction d) { return d == Direction::upstream ? "US" : "DS"; }

struct KeyEvent {
    std::uint32_t seq;
    Direction direction;
    KeyState state;
    std::uint64_t activation_codeword;
    std::string key_hex;
};

/// Key store for one (ONU, direction). Holds pending keys, exactly one active
/// key per codeword range, and the retired history. Single writer.
///
/// Activation records a codeword boundary: the new key serves every codeword
/// index >= boundary. Sequence numbers are strictly increasing and a retired
/// seq can never come back. Every (seq, codeword) keystream use is recorded
/// and a second use is rejected.
class KeyStore {
public:
    explicit KeyStore(Direction dir = Direction::downstream) : dir_(dir) {}

    /// Installs the initial key as active from codeword 0.
    void bootstrap(SessionKey initial)
    {
        if (!history_.empty())
            throw std::logic_error("KeyStore::bootstrap: store already initialised");
        initial.state = KeyState::active;
        install(initial);
        activate_at(initial.seq, 0);
    }

    void add_pending(SessionKey k)
    {
        if (k.seq <= highest_seq_ && !history_.empty())
            throw std::invalid_argument("KeyStore::add_pending: sequence numbers must increase");
        k.state = KeyState::pending;
        install(k);
    }

    bool has_pending(std::uint32_t seq) const
    {
        auto it = keys_.find(seq);
        return it != keys_.end() && it->second.state == KeyState::pending;
    }

    /// Makes pending key `seq` active for codewords >= boundary and retires the previous key.
    void activate_at(std::uint32_t seq, std::uint64_t boundary)
    {
        auto it = keys_.find(seq);
        if (it == keys_.end())
            throw std::invalid_argument("activate_key: unknown sequence number");
        if (it->second.state == KeyState::retired)
            throw std::logic_error("activate_key: sequence number already retired");
        if (it->second.state == KeyState::active && !schedule_.empty())
            throw std::logic_error("activate_key: key already active");
        if (!schedule_.empty() && boundary <= schedule_.back().first)
            throw std::logic_error("activate_key: activation boundaries must increase");
        if (!schedule_.empty()) {
            auto& prev = keys_.at(schedule_.back().second);
            prev.state = KeyState::retired;
            log_.push_back({prev.seq, dir_, KeyState::retired, boundary, prev.hex()});
        }
        it->second.state = KeyState::active;
        schedule_.emplace_back(boundary, seq);
        // Older pending keys can never be activated once a newer one is.
        for (auto& [s, k] : keys_)
            if (s < seq && k.state == KeyState::pending) {
                k.state = KeyState::retired;
                log_.push_back({s, dir_, KeyState::retired, boundary, k.hex()});
            }
        log_.push_back({seq, dir_, KeyState::active, boundary, it->second.hex()});
    }

    const SessionKey& active() const
    {
        if (schedule_.empty())
            throw std::logic_error("KeyStore: no active key");
        return keys_.at(schedule_.back().second);
    }

    std::optional<std::uint64_t> active_since() const
    {
        if (schedule_.empty())
            return std::nullopt;
        return schedule_.back().first;
    }

    /// The key serving a codeword index, as an active snapshot. Only the
    /// current key may be used for new codewords.
    SessionKey key_for(std::uint64_t codeword) const
    {
        if (schedule_.empty() || codeword < schedule_.front().first)
            throw std::logic_error("KeyStore::key_for: no key for this codeword");
        std::uint32_t seq = schedule_.front().second;
        for (const auto& [b, s] : schedule_)
            if (b <= codeword)
                seq = s;
        SessionKey k = keys_.at(seq);
        k.state = KeyState::active;
        return k;
    }

    /// Records a keystream use and returns the key. Reuse is rejected.
    SessionKey claim(std::uint64_t codeword)
    {
        SessionKey k = key_for(codeword);
        if (!used_.insert({k.seq, codeword}).second)
            throw std::logic_error("KeyStore::claim: keystream reuse");
        return k;
    }

    std::size_t active_count() const
    {
        std::size_t n = 0;
        for (const auto& [s, k] : keys_)
            n += k.state == KeyState::active;
        return n;
    }

    const std::vector<KeyEvent>& events() const { return log_; }
    Direction direction() const { return dir_; }

    /// One line per key event: seq,direction,state,activation_codeword,key_hex
    void write_log(std::ostream& os) const
    {
        for (const auto& e : log_)
            os << e.seq << ',' << to_string(e.direction) << ',' << to_string(e.state) << ','
               << e.activation_codeword << ',' << e.key_hex << '\n';
    }

private:
    void install(const SessionKey& k)
    {
        if (keys_.count(k.seq))
            throw std::invalid_argument("KeyStore: duplicate sequence number");
        keys_[k.seq] = k;
        highest_seq_ = history_.empty() ? k.seq : std::max(highest_seq_, k.seq);
        history_.push_back(k.seq);
        log_.push_back({k.seq, dir_, KeyState::pending, 0, k.hex()});
    }

    Direction dir_;
    std::map<std::uint32_t, SessionKey> keys_;
    std::vector<std::uint32_t> history_;
    std::uint32_t highest_seq_ = 0;
    std::vector<std::pair<std::uint64_t, std::uint32_t>> schedule_; // (boundary, seq)
    std::set<std::pair<std::uint32_t, std::uint64_t>> used_;
    std::vector<KeyEvent> log_;
};

} // namespace secpon
