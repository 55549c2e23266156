#include <gtest/gtest.h>

#include <sstream>

#include "secpon/crypto.hpp"
#include "secpon/rng.hpp"

using namespace secpon;

namespace {

template <std::size_t N>
std::array<std::uint8_t, N> hex_array(std::string_view h)
{
    const auto v = from_hex(h);
    std::array<std::uint8_t, N> a{};
    if (v.size() != N)
        throw std::invalid_argument("hex_array: length");
    std::copy(v.begin(), v.end(), a.begin());
    return a;
}

SessionKey active_key(std::uint64_t seed, std::uint32_t seq = 1)
{
    Rng r(seed, tag("test-key"));
    SessionKey k;
    for (auto& b : k.key)
        b = static_cast<std::uint8_t>(r() & 0xFF);
    k.seq = seq;
    k.state = KeyState::active;
    return k;
}

std::size_t agreements(const BitVec& a, const BitVec& b) { return a.size() - count_bit_errors(a, b); }

} // namespace

TEST(Aes256, Fips197KnownAnswer)
{
    const auto key = hex_array<32>("000102030405060708090a0b0c0d0e0f101112131415161718191a1b1c1d1e1f");
    const auto pt = hex_array<16>("00112233445566778899aabbccddeeff");
    const auto ct = aes256_encrypt_block(key, pt);
    EXPECT_EQ(to_hex(ct), "8ea2b7ca516745bfeafc49904b496089");
    EXPECT_EQ(aes256_decrypt_block(key, ct), pt);
}

TEST(Aes256, Sp80038aEcbVectors)
{
    const auto key = hex_array<32>("603deb1015ca71be2b73aef0857d77811f352c073b6108d72d9810a30914dff4");
    const std::pair<const char*, const char*> v[] = {
        {"6bc1bee22e409f96e93d7e117393172a", "f3eed1bdb5d2a03c064b5a7e3db181f8"},
        {"ae2d8a571e03ac9c9eb76fac45af8e51", "591ccb10d410ed26dc5ba74a31362870"},
        {"30c81c46a35ce411e5fbc1191a0a52ef", "b6ed21b99ca6f4f9f153e7b1beafed1d"},
        {"f69f2445df4f9b17ad2b417be66c3710", "23304b7a39f9f3ff067d8d8f9e24ecc7"},
    };
    for (const auto& [p, c] : v) {
        EXPECT_EQ(to_hex(aes256_encrypt_block(key, hex_array<16>(p))), c);
        EXPECT_EQ(to_hex(aes256_decrypt_block(key, hex_array<16>(c))), p);
    }
}

TEST(Aes256, CounterKeystreamIsBlockCipherOfCounterBlocks)
{
    const auto k = active_key(1);
    const std::uint64_t cw = 0x0102030405060708ull;
    const auto ks = aes256_ctr_keystream(k.key, cw, 50);
    ASSERT_EQ(ks.size(), 50u);
    for (std::uint64_t b = 0; b < 4; ++b) {
        AesBlock ctr{};
        for (int i = 0; i < 8; ++i) {
            ctr[i] = static_cast<std::uint8_t>(cw >> (56 - 8 * i));
            ctr[8 + i] = static_cast<std::uint8_t>(b >> (56 - 8 * i));
        }
        const auto blk = aes256_encrypt_block(k.key, ctr);
        for (std::size_t i = 0; i < 16 && 16 * b + i < ks.size(); ++i)
            ASSERT_EQ(ks[16 * b + i], blk[i]);
    }
}

TEST(Aes256, EncryptDecryptIdentityOnMillionBits)
{
    const auto k = active_key(2);
    Rng r(3, 3);
    const auto plain = r.bits(1'000'000);
    const auto cipher = aes256_encrypt(plain, k, 17);
    EXPECT_EQ(cipher.size(), plain.size());
    EXPECT_EQ(aes256_decrypt(cipher, k, 17), plain);
    // the ciphertext itself looks random against the plaintext
    EXPECT_NEAR(double(agreements(cipher, plain)) / 1e6, 0.5, 0.01);
    // odd lengths are preserved
    const auto odd = r.bits(13);
    EXPECT_EQ(aes256_decrypt(aes256_encrypt(odd, k, 0), k, 0), odd);
}

TEST(Aes256, WrongKeyOrCounterGivesCoinFlips)
{
    const auto k = active_key(4), wrong = active_key(5);
    Rng r(6, 6);
    const auto plain = r.bits(1'000'000);
    const auto cipher = aes256_encrypt(plain, k, 3);
    EXPECT_NEAR(double(agreements(aes256_decrypt(cipher, wrong, 3), plain)) / 1e6, 0.5, 0.01);
    EXPECT_NEAR(double(agreements(aes256_decrypt(cipher, k, 4), plain)) / 1e6, 0.5, 0.01);
}

TEST(Aes256, InactiveKeyRejected)
{
    auto k = active_key(7);
    k.state = KeyState::pending;
    EXPECT_THROW(aes256_encrypt(BitVec(8, 0), k, 0), std::logic_error);
    k.state = KeyState::retired;
    EXPECT_THROW(aes256_decrypt(BitVec(8, 0), k, 0), std::logic_error);
}

TEST(Aes256, PerCodewordKeysDiffer)
{
    const auto k = active_key(8);
    const auto a = derive_codeword_key(k, 0), b = derive_codeword_key(k, 1);
    EXPECT_NE(a.key, b.key);
    EXPECT_NE(a.key, k.key);
    EXPECT_EQ(a.seq, k.seq);
    EXPECT_EQ(derive_codeword_key(k, 1).key, b.key);
}

TEST(KeyFragments, LayoutAndRoundtrip)
{
    static_assert(KeyFragmentMessage::kPaddingBits == 108);
    const auto k = active_key(9, 0x1A5);
    const auto f = split_key(k);
    EXPECT_EQ(f[0].seq, 0xA5);
    EXPECT_EQ(f[0].fragment_index, 0);
    EXPECT_EQ(f[1].fragment_index, 1);
    for (const auto& m : f) {
        const auto bits = m.to_bits();
        ASSERT_EQ(bits.size(), 245u);
        for (std::size_t i = 137; i < 245; ++i)
            ASSERT_EQ(bits[i], 0);
        EXPECT_EQ(KeyFragmentMessage::from_bits(bits), m);
    }
    const auto back = assemble_key(f[1], f[0]);
    EXPECT_EQ(back.key, k.key);
    EXPECT_EQ(back.seq, 0xA5u);
    EXPECT_EQ(back.state, KeyState::pending);
}

TEST(KeyFragments, AssemblyRules)
{
    const KeyFragmentMessage z0{}, z1{0, 1, {}};
    const auto z = assemble_key(z0, z1);
    EXPECT_EQ(z.key, AesKey{});
    EXPECT_EQ(z.state, KeyState::pending);
    KeyFragmentMessage other = z1;
    other.seq = 1;
    EXPECT_THROW(assemble_key(z0, other), std::invalid_argument);
    EXPECT_THROW(assemble_key(z0, z0), std::invalid_argument);
    EXPECT_THROW(assemble_key(z1, z1), std::invalid_argument);
}

TEST(KeyFragments, ParseRejectsPaddingAndLength)
{
    auto bits = split_key(active_key(10)).at(0).to_bits();
    bits[200] = 1;
    EXPECT_THROW(KeyFragmentMessage::from_bits(bits), std::invalid_argument);
    EXPECT_THROW(KeyFragmentMessage::from_bits(BitVec(244, 0)), std::length_error);
}

TEST(KeyFragments, AssembledKeyEncrypts)
{
    const auto k = active_key(11, 3);
    const auto f = split_key(k);
    auto got = assemble_key(f[0], f[1]);
    got.state = KeyState::active;
    Rng r(12, 12);
    const auto plain = r.bits(4096);
    EXPECT_EQ(aes256_decrypt(aes256_encrypt(plain, k, 9), got, 9), plain);
}

TEST(KeyStore, ActivationAtBoundary)
{
    KeyStore s;
    s.bootstrap(active_key(20, 0));
    auto k1 = active_key(21, 1);
    s.add_pending(k1);
    EXPECT_TRUE(s.has_pending(1));
    s.activate_at(1, 10);
    EXPECT_EQ(s.key_for(9).seq, 0u);
    EXPECT_EQ(s.key_for(10).seq, 1u);
    EXPECT_EQ(s.key_for(1000).key, k1.key);
    EXPECT_EQ(s.active().seq, 1u);
    EXPECT_EQ(s.active_count(), 1u);
    EXPECT_EQ(s.active_since(), 10u);
    EXPECT_EQ(s.key_for(10).state, KeyState::active);
}

TEST(KeyStore, RejectsRetiredUnknownAndNonIncreasing)
{
    KeyStore s;
    s.bootstrap(active_key(30, 0));
    s.add_pending(active_key(31, 1));
    s.activate_at(1, 5);
    EXPECT_THROW(s.activate_at(0, 6), std::logic_error);       // retired
    EXPECT_THROW(s.activate_at(7, 6), std::invalid_argument);  // unknown
    EXPECT_THROW(s.add_pending(active_key(32, 1)), std::invalid_argument);
    s.add_pending(active_key(33, 2));
    EXPECT_THROW(s.activate_at(2, 5), std::logic_error); // boundary must increase
    EXPECT_THROW(s.bootstrap(active_key(34, 9)), std::logic_error);
}

TEST(KeyStore, InterleavedActivationsKeepOneActive)
{
    KeyStore s;
    s.bootstrap(active_key(40, 0));
    std::uint64_t boundary = 0;
    Rng r(41, 41);
    std::uint32_t seq = 0;
    for (int round = 0; round < 50; ++round) {
        // queue one to three keys, activate one of them, skipping older ones
        const int q = 1 + static_cast<int>(r.below(3));
        std::vector<std::uint32_t> queued;
        for (int i = 0; i < q; ++i) {
            ++seq;
            s.add_pending(active_key(100 + seq, seq));
            queued.push_back(seq);
        }
        const auto pick = queued[r.below(queued.size())];
        boundary += 1 + r.below(4);
        s.activate_at(pick, boundary);
        ASSERT_EQ(s.active_count(), 1u);
        ASSERT_EQ(s.active().seq, pick);
        for (auto old : queued)
            if (old < pick)
                ASSERT_FALSE(s.has_pending(old));
    }
}

TEST(KeyStore, KeystreamReuseRejected)
{
    KeyStore s;
    s.bootstrap(active_key(50, 0));
    EXPECT_NO_THROW(s.claim(0));
    EXPECT_NO_THROW(s.claim(1));
    EXPECT_THROW(s.claim(1), std::logic_error);
    KeyStore empty;
    EXPECT_THROW(empty.key_for(0), std::logic_error);
    EXPECT_THROW(empty.active(), std::logic_error);
}

TEST(KeyStore, LogFormat)
{
    KeyStore s(Direction::downstream);
    const auto k0 = active_key(60, 0), k1 = active_key(61, 1);
    s.bootstrap(k0);
    s.add_pending(k1);
    s.activate_at(1, 4);
    std::ostringstream os;
    s.write_log(os);
    const std::string want = "0,DS,pending,0," + k0.hex() + "\n0,DS,active,0," + k0.hex() + "\n1,DS,pending,0," +
                             k1.hex() + "\n0,DS,retired,4," + k0.hex() + "\n1,DS,active,4," + k1.hex() + "\n";
    EXPECT_EQ(os.str(), want);
    EXPECT_EQ(k0.hex().size(), 64u);
}
