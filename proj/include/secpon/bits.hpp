#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace secpon {

using cplx = std::complex<double>;

/// One bit per element, values 0 or 1.
using BitVec = std::vector<std::uint8_t>;

/// Packs bits MSB-first into bytes; a trailing partial byte is zero-padded.
inline std::vector<std::uint8_t> pack_bits(std::span<const std::uint8_t> bits)
{
    std::vector<std::uint8_t> bytes((bits.size() + 7) / 8, 0);
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i] & 1u)
            bytes[i / 8] |= static_cast<std::uint8_t>(0x80u >> (i % 8));
    return bytes;
}

inline BitVec unpack_bits(std::span<const std::uint8_t> bytes, std::size_t n_bits)
{
    if (n_bits > bytes.size() * 8)
        throw std::length_error("unpack_bits: not enough bytes");
    BitVec bits(n_bits);
    for (std::size_t i = 0; i < n_bits; ++i)
        bits[i] = (bytes[i / 8] >> (7 - i % 8)) & 1u;
    return bits;
}

inline std::size_t count_bit_errors(std::span<const std::uint8_t> a, std::span<const std::uint8_t> b)
{
    if (a.size() != b.size())
        throw std::length_error("count_bit_errors: length mismatch");
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.size(); ++i)
        n += (a[i] ^ b[i]) & 1u;
    return n;
}

inline std::string to_hex(std::span<const std::uint8_t> bytes)
{
    static constexpr char digits[] = "0123456789abcdef";
    std::string s;
    s.reserve(bytes.size() * 2);
    for (auto b : bytes) {
        s.push_back(digits[b >> 4]);
        s.push_back(digits[b & 0xF]);
    }
    return s;
}

inline std::vector<std::uint8_t> from_hex(std::string_view hex)
{
    if (hex.size() % 2 != 0)
        throw std::invalid_argument("from_hex: odd length");
    auto nibble = [](char c) -> std::uint8_t {
        if (c >= '0' && c <= '9') return static_cast<std::uint8_t>(c - '0');
        if (c >= 'a' && c <= 'f') return static_cast<std::uint8_t>(c - 'a' + 10);
        if (c >= 'A' && c <= 'F') return static_cast<std::uint8_t>(c - 'A' + 10);
        throw std::invalid_argument("from_hex: bad digit");
    };
    std::vector<std::uint8_t> out(hex.size() / 2);
    for (std::size_t i = 0; i < out.size(); ++i)
        out[i] = static_cast<std::uint8_t>(nibble(hex[2 * i]) << 4 | nibble(hex[2 * i + 1]));
    return out;
}

} // namespace secpon
