#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "secpon/bits.hpp"
#include "secpon/polar_sequence.hpp"

namespace secpon {

/// Generator of the 3GPP 11-bit CRC, x^11 + x^10 + x^9 + x^5 + 1 (leading term included).
inline constexpr std::uint32_t kCrc11Poly = 0xE21;

/// Remainder of bits(x) * x^width modulo poly, MSB first. poly includes the x^width term.
inline BitVec crc_remainder(std::span<const std::uint8_t> bits, std::uint32_t poly, unsigned width)
{
    if (width == 0 || width > 31)
        throw std::invalid_argument("crc_remainder: unsupported width");
    const std::uint32_t mask = (1u << width) - 1u;
    const std::uint32_t top = 1u << (width - 1);
    std::uint32_t reg = 0;
    for (auto b : bits) {
        const bool fb = ((reg & top) != 0) ^ ((b & 1u) != 0);
        reg = (reg << 1) & mask;
        if (fb)
            reg ^= poly & mask;
    }
    BitVec out(width);
    for (unsigned i = 0; i < width; ++i)
        out[i] = (reg >> (width - 1 - i)) & 1u;
    return out;
}

inline BitVec crc11(std::span<const std::uint8_t> bits)
{
    if (bits.empty())
        throw std::invalid_argument("crc11: empty input");
    return crc_remainder(bits, kCrc11Poly, 11);
}

/// Polar code description: frozen set, CRC and list size.
struct PolarCode {
    std::size_t n = 512;
    std::size_t k = 256; // information bits including the CRC
    std::vector<std::uint32_t> frozen;         // sorted, size n - k
    std::vector<std::uint32_t> info_positions; // sorted, size k
    std::uint32_t crc_poly = kCrc11Poly;
    unsigned crc_bits = 11;
    unsigned list_size = 8;

    std::size_t payload_bits() const { return k - crc_bits; }

    /// Code built from the NR reliability order: the k most reliable positions carry information.
    static PolarCode nr(std::size_t n = 512, std::size_t k = 256, unsigned list_size = 8)
    {
        if (n == 0 || (n & (n - 1)) != 0 || n > kNrReliability512.size())
            throw std::invalid_argument("PolarCode: block length must be a power of two no larger than 512");
        if (k == 0 || k > n)
            throw std::invalid_argument("PolarCode: invalid information length");
        std::vector<std::uint32_t> order;
        order.reserve(n);
        for (auto q : kNrReliability512)
            if (q < n)
                order.push_back(q);
        PolarCode c;
        c.n = n;
        c.k = k;
        c.list_size = list_size;
        c.frozen.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n - k));
        c.info_positions.assign(order.begin() + static_cast<std::ptrdiff_t>(n - k), order.end());
        std::sort(c.frozen.begin(), c.frozen.end());
        std::sort(c.info_positions.begin(), c.info_positions.end());
        c.validate();
        return c;
    }

    void validate() const
    {
        if (n == 0 || (n & (n - 1)) != 0)
            throw std::invalid_argument("PolarCode: block length must be a power of two");
        if (frozen.size() != n - k)
            throw std::invalid_argument("PolarCode: frozen set size must be n - k");
        if (k <= crc_bits)
            throw std::invalid_argument("PolarCode: information length must exceed the CRC length");
        if (list_size == 0)
            throw std::invalid_argument("PolarCode: list size must be positive");
        std::vector<std::uint8_t> seen(n, 0);
        for (auto f : frozen) {
            if (f >= n || seen[f])
                throw std::invalid_argument("PolarCode: frozen indices must be distinct and below n");
            seen[f] = 1;
        }
        if (!std::is_sorted(frozen.begin(), frozen.end()))
            throw std::invalid_argument("PolarCode: frozen set must be sorted");
        if (info_positions.size() != k)
            throw std::invalid_argument("PolarCode: information set inconsistent with frozen set");
        for (auto p : info_positions)
            if (p >= n || seen[p])
                throw std::invalid_argument("PolarCode: information set inconsistent with frozen set");
    }

    static PolarCode from_json(const nlohmann::json& j)
    {
        PolarCode c;
        c.n = j.at("N").get<std::size_t>();
        c.k = j.at("K").get<std::size_t>();
        c.frozen = j.at("frozen").get<std::vector<std::uint32_t>>();
        std::sort(c.frozen.begin(), c.frozen.end());
        const auto& poly = j.at("crc_poly");
        c.crc_poly = poly.is_string() ? static_cast<std::uint32_t>(std::stoul(poly.get<std::string>(), nullptr, 0))
                                      : poly.get<std::uint32_t>();
        c.crc_bits = j.value("crc_bits", 11u);
        c.list_size = j.value("L", 8u);
        std::vector<std::uint8_t> is_frozen(c.n, 0);
        for (auto f : c.frozen)
            if (f < c.n)
                is_frozen[f] = 1;
        for (std::uint32_t i = 0; i < c.n; ++i)
            if (!is_frozen[i])
                c.info_positions.push_back(i);
        c.validate();
        return c;
    }

    nlohmann::json to_json() const
    {
        char poly[16];
        std::snprintf(poly, sizeof poly, "0x%X", crc_poly);
        return {{"N", n}, {"K", k}, {"frozen", frozen}, {"crc_poly", poly}, {"crc_bits", crc_bits}, {"L", list_size}};
    }
};

/// x = u * F^{(x)m} with F = [[1,0],[1,1]], in natural (non bit-reversed) order.
inline void polar_transform_inplace(std::span<std::uint8_t> x)
{
    const std::size_t n = x.size();
    for (std::size_t half = 1; half < n; half <<= 1)
        for (std::size_t base = 0; base < n; base += 2 * half)
            for (std::size_t j = base; j < base + half; ++j)
                x[j] ^= x[j + half];
}

/// Encodes k information bits (payload followed by CRC) into n coded bits.
inline BitVec polar_encode(std::span<const std::uint8_t> info, const PolarCode& code)
{
    if (info.size() != code.k)
        throw std::length_error("polar_encode: information length must equal K");
    BitVec u(code.n, 0);
    for (std::size_t i = 0; i < code.k; ++i)
        u[code.info_positions[i]] = info[i] & 1u;
    polar_transform_inplace(u);
    return u;
}

/// Appends the CRC to a payload of K - crc_bits bits and encodes it.
inline BitVec polar_encode_payload(std::span<const std::uint8_t> payload, const PolarCode& code)
{
    if (payload.size() != code.payload_bits())
        throw std::length_error("polar_encode_payload: payload length must equal K - crc_bits");
    BitVec info(payload.begin(), payload.end());
    const auto crc = crc_remainder(payload, code.crc_poly, code.crc_bits);
    info.insert(info.end(), crc.begin(), crc.end());
    return polar_encode(info, code);
}

struct PolarDecodeResult {
    BitVec payload;
    bool crc_ok = false;
};

/// CRC-aided successive-cancellation list decoder in the LLR domain.
///
/// LLRs are positive when bit 0 is more likely. Path arrays are shared between
/// list members and only made private when a path writes to them, so cloning
/// a path costs an index copy per tree depth.
class PolarListDecoder {
public:
    explicit PolarListDecoder(PolarCode code) : code_(std::move(code))
    {
        code_.validate();
        m_ = static_cast<unsigned>(std::countr_zero(code_.n));
        frozen_mask_.assign(code_.n, 1);
        for (auto p : code_.info_positions)
            frozen_mask_[p] = 0;
        const unsigned L = code_.list_size;
        llr_pool_.resize(m_ + 1);
        cw_pool_.resize(m_ + 1);
        llr_ref_.resize(m_ + 1);
        cw_ref_.resize(m_ + 1);
        llr_free_.resize(m_ + 1);
        cw_free_.resize(m_ + 1);
        for (unsigned t = 1; t <= m_; ++t) {
            const std::size_t size = code_.n >> t;
            llr_pool_[t].assign(L, std::vector<double>(size));
            cw_pool_[t].assign(L, BitVec(size));
            llr_ref_[t].assign(L, 0);
            cw_ref_[t].assign(L, 0);
        }
        path_llr_.assign(L, std::vector<int>(m_ + 1, -1));
        path_cw_.assign(L, std::vector<int>(m_ + 1, -1));
        path_u_.assign(L, BitVec(code_.n));
        metric_.assign(L, 0.0);
        active_.assign(L, 0);
        scratch_a_.resize(code_.n);
        scratch_b_.resize(code_.n);
    }

    const PolarCode& code() const { return code_; }

    PolarDecodeResult decode(std::span<const double> llr)
    {
        if (llr.size() != code_.n)
            throw std::length_error("polar_decode_scl: LLR length must equal N");
        reset();
        channel_.assign(llr.begin(), llr.end());
        for (auto& v : channel_)
            if (!std::isfinite(v))
                throw std::invalid_argument("polar_decode_scl: LLRs must be finite");

        const unsigned L = code_.list_size;
        struct Candidate {
            double metric;
            unsigned path;
            std::uint8_t bit;
        };
        std::vector<Candidate> cand;
        cand.reserve(2 * L);
        std::vector<double> leaf(L);

        for (std::size_t phi = 0; phi < code_.n; ++phi) {
            for (unsigned p = 0; p < L; ++p)
                if (active_[p])
                    leaf[p] = compute_leaf_llr(p, phi);

            if (frozen_mask_[phi]) {
                for (unsigned p = 0; p < L; ++p)
                    if (active_[p]) {
                        metric_[p] += penalty(leaf[p], 0);
                        path_u_[p][phi] = 0;
                    }
            } else {
                cand.clear();
                for (unsigned p = 0; p < L; ++p)
                    if (active_[p]) {
                        cand.push_back({metric_[p] + penalty(leaf[p], 0), p, 0});
                        cand.push_back({metric_[p] + penalty(leaf[p], 1), p, 1});
                    }
                std::stable_sort(cand.begin(), cand.end(),
                                 [](const Candidate& x, const Candidate& y) { return x.metric < y.metric; });
                const std::size_t keep = std::min<std::size_t>(L, cand.size());
                std::vector<std::uint8_t> keep0(L, 0), keep1(L, 0);
                std::vector<double> m0(L), m1(L);
                for (std::size_t i = 0; i < keep; ++i) {
                    auto& c = cand[i];
                    (c.bit ? keep1 : keep0)[c.path] = 1;
                    (c.bit ? m1 : m0)[c.path] = c.metric;
                }
                for (unsigned p = 0; p < L; ++p)
                    if (active_[p] && !keep0[p] && !keep1[p])
                        kill_path(p);
                for (unsigned p = 0; p < L; ++p) {
                    if (!active_[p] || (!keep0[p] && !keep1[p]))
                        continue;
                    if (keep0[p] && keep1[p]) {
                        const unsigned q = clone_path(p);
                        path_u_[q][phi] = 1;
                        metric_[q] = m1[p];
                        leaf[q] = leaf[p];
                        path_u_[p][phi] = 0;
                        metric_[p] = m0[p];
                    } else {
                        const std::uint8_t b = keep1[p] ? 1 : 0;
                        path_u_[p][phi] = b;
                        metric_[p] = b ? m1[p] : m0[p];
                    }
                }
            }
            for (unsigned p = 0; p < L; ++p)
                if (active_[p])
                    propagate_codeword(p, phi, path_u_[p][phi]);
        }

        std::vector<unsigned> order;
        for (unsigned p = 0; p < L; ++p)
            if (active_[p])
                order.push_back(p);
        std::stable_sort(order.begin(), order.end(), [&](unsigned x, unsigned y) { return metric_[x] < metric_[y]; });

        PolarDecodeResult best;
        BitVec info(code_.k);
        for (std::size_t idx = 0; idx < order.size(); ++idx) {
            const unsigned p = order[idx];
            for (std::size_t i = 0; i < code_.k; ++i)
                info[i] = path_u_[p][code_.info_positions[i]];
            const std::size_t np = code_.payload_bits();
            std::span<const std::uint8_t> payload(info.data(), np);
            const auto crc = crc_remainder(payload, code_.crc_poly, code_.crc_bits);
            const bool ok = std::equal(crc.begin(), crc.end(), info.begin() + static_cast<std::ptrdiff_t>(np));
            if (idx == 0 || ok) {
                best.payload.assign(payload.begin(), payload.end());
                best.crc_ok = ok;
            }
            if (ok)
                break;
        }
        return best;
    }

private:
    static double penalty(double llr, std::uint8_t bit)
    {
        // log(1 + exp(-(1-2u) llr))
        const double x = bit ? llr : -llr;
        return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
    }

    static double f_op(double a, double b)
    {
        const double s = ((a < 0) != (b < 0)) ? -1.0 : 1.0;
        return s * std::min(std::abs(a), std::abs(b)) + std::log1p(std::exp(-std::abs(a + b))) -
               std::log1p(std::exp(-std::abs(a - b)));
    }

    void reset()
    {
        const unsigned L = code_.list_size;
        for (unsigned t = 1; t <= m_; ++t) {
            llr_free_[t].clear();
            cw_free_[t].clear();
            for (int i = static_cast<int>(L) - 1; i >= 0; --i) {
                llr_free_[t].push_back(i);
                cw_free_[t].push_back(i);
            }
            std::fill(llr_ref_[t].begin(), llr_ref_[t].end(), 0);
            std::fill(cw_ref_[t].begin(), cw_ref_[t].end(), 0);
        }
        std::fill(active_.begin(), active_.end(), 0);
        std::fill(metric_.begin(), metric_.end(), 0.0);
        for (unsigned p = 0; p < L; ++p) {
            std::fill(path_llr_[p].begin(), path_llr_[p].end(), -1);
            std::fill(path_cw_[p].begin(), path_cw_[p].end(), -1);
        }
        active_[0] = 1;
    }

    unsigned clone_path(unsigned p)
    {
        unsigned q = 0;
        while (active_[q])
            ++q;
        active_[q] = 1;
        for (unsigned t = 1; t <= m_; ++t) {
            path_llr_[q][t] = path_llr_[p][t];
            if (path_llr_[q][t] >= 0)
                ++llr_ref_[t][path_llr_[q][t]];
            path_cw_[q][t] = path_cw_[p][t];
            if (path_cw_[q][t] >= 0)
                ++cw_ref_[t][path_cw_[q][t]];
        }
        path_u_[q] = path_u_[p];
        return q;
    }

    void kill_path(unsigned p)
    {
        active_[p] = 0;
        for (unsigned t = 1; t <= m_; ++t) {
            release(llr_ref_[t], llr_free_[t], path_llr_[p][t]);
            release(cw_ref_[t], cw_free_[t], path_cw_[p][t]);
        }
    }

    static void release(std::vector<int>& ref, std::vector<int>& free_list, int& idx)
    {
        if (idx >= 0 && --ref[idx] == 0)
            free_list.push_back(idx);
        idx = -1;
    }

    /// Private array for a full overwrite at depth t.
    static int writable(std::vector<int>& ref, std::vector<int>& free_list, int& idx)
    {
        if (idx >= 0 && ref[idx] == 1)
            return idx;
        if (idx >= 0)
            --ref[idx];
        idx = free_list.back();
        free_list.pop_back();
        ref[idx] = 1;
        return idx;
    }

    double compute_leaf_llr(unsigned p, std::size_t phi)
    {
        const unsigned start = phi == 0 ? 1u : m_ - static_cast<unsigned>(std::countr_zero(phi));
        for (unsigned t = start; t <= m_; ++t) {
            const std::size_t size = code_.n >> t;
            const double* parent = t == 1 ? channel_.data() : llr_pool_[t - 1][path_llr_[p][t - 1]].data();
            const int out_idx = writable(llr_ref_[t], llr_free_[t], path_llr_[p][t]);
            double* out = llr_pool_[t][out_idx].data();
            const bool right = ((phi >> (m_ - t)) & 1u) != 0;
            if (!right) {
                for (std::size_t j = 0; j < size; ++j)
                    out[j] = f_op(parent[j], parent[j + size]);
            } else {
                const std::uint8_t* left = cw_pool_[t][path_cw_[p][t]].data();
                for (std::size_t j = 0; j < size; ++j)
                    out[j] = parent[j + size] + (left[j] ? -parent[j] : parent[j]);
            }
        }
        return llr_pool_[m_][path_llr_[p][m_]][0];
    }

    void propagate_codeword(unsigned p, std::size_t phi, std::uint8_t bit)
    {
        std::uint8_t* cur = scratch_a_.data();
        std::uint8_t* next = scratch_b_.data();
        cur[0] = bit;
        std::size_t size = 1;
        for (unsigned t = m_; t >= 1; --t) {
            const bool right = ((phi >> (m_ - t)) & 1u) != 0;
            if (!right) {
                const int idx = writable(cw_ref_[t], cw_free_[t], path_cw_[p][t]);
                std::copy(cur, cur + size, cw_pool_[t][idx].begin());
                return;
            }
            const std::uint8_t* left = cw_pool_[t][path_cw_[p][t]].data();
            for (std::size_t j = 0; j < size; ++j) {
                next[j] = left[j] ^ cur[j];
                next[j + size] = cur[j];
            }
            std::swap(cur, next);
            size *= 2;
        }
    }

    PolarCode code_;
    unsigned m_ = 0;
    BitVec frozen_mask_;
    std::vector<double> channel_;
    std::vector<std::vector<std::vector<double>>> llr_pool_;
    std::vector<std::vector<BitVec>> cw_pool_;
    std::vector<std::vector<int>> llr_ref_, cw_ref_, llr_free_, cw_free_;
    std::vector<std::vector<int>> path_llr_, path_cw_;
    std::vector<BitVec> path_u_;
    std::vector<double> metric_;
    std::vector<std::uint8_t> active_;
    BitVec scratch_a_, scratch_b_;
};

inline PolarDecodeResult polar_decode_scl(std::span<const double> llr, const PolarCode& code)
{
    PolarListDecoder dec(code);
    return dec.decode(llr);
}

} // namespace secpon
