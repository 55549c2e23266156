#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "secpon/bits.hpp"
#include "secpon/rng.hpp"

namespace secpon {

enum class SymbolRole : std::uint8_t { training, pilot, payload };

/// Complex baseband symbols, each tagged with its role in the frame.
struct SymbolStream {
    std::vector<cplx> values;
    std::vector<SymbolRole> roles;

    SymbolStream() = default;
    SymbolStream(std::vector<cplx> v, SymbolRole role)
        : values(std::move(v)), roles(values.size(), role)
    {
    }

    std::size_t size() const { return values.size(); }
    bool empty() const { return values.empty(); }

    void append(cplx v, SymbolRole r)
    {
        values.push_back(v);
        roles.push_back(r);
    }

    /// Every value finite and one role per value.
    bool well_formed() const
    {
        if (values.size() != roles.size())
            return false;
        return std::all_of(values.begin(), values.end(),
                           [](cplx z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); });
    }
};

/// Geometrically shaped PAM4 pilot on the (1+1j) diagonal.
///
/// Points are {-3d, -ad, +ad, +3d} * (1+1j). Gray labels (phase_bit, key_bit):
/// (0,0) -> -3d, (0,1) -> -ad, (1,1) -> +ad, (1,0) -> +3d. The phase bit is the
/// sign (the CPR reference), the key bit selects the magnitude (control channel).
/// d is chosen so the average pilot energy is 1, matching the payload.
struct GcsPilotParams {
    double a = 1.7;
    double d = 1.0 / std::sqrt(9.0 + 1.7 * 1.7);
    double k = (3.0 + 1.7) / 2.0;

    static GcsPilotParams make(double a)
    {
        if (!(a > 0.0 && a <= 3.0))
            throw std::invalid_argument("GcsPilotParams: amplitude coefficient must satisfy 0 < a <= 3");
        return {a, 1.0 / std::sqrt(9.0 + a * a), (3.0 + a) / 2.0};
    }

    /// Points indexed by label (phase_bit << 1 | key_bit).
    std::array<cplx, 4> constellation() const
    {
        const cplx diag{1.0, 1.0};
        return {-3.0 * d * diag, -a * d * diag, 3.0 * d * diag, a * d * diag};
    }

    double average_energy() const { return d * d * (9.0 + a * a); }
};

inline cplx map_pilot(std::uint8_t phase_bit, std::uint8_t key_bit, const GcsPilotParams& p)
{
    const double sign = (phase_bit & 1u) ? 1.0 : -1.0;
    const double level = (key_bit & 1u) ? p.a : 3.0;
    return sign * level * p.d * cplx{1.0, 1.0};
}

struct PilotDecision {
    std::uint8_t phase_bit;
    std::uint8_t key_bit;
    /// Log-likelihood ratio of the key bit, positive means 0 (outer level) is more likely.
    double key_llr;
};

/// Projection onto the diagonal, scaled so the noiseless points land on +-ad, +-3d.
inline double diagonal_projection(cplx z) { return 0.5 * (z.real() + z.imag()); }

namespace detail {

inline double log_sum_exp(double x, double y)
{
    const double m = std::max(x, y);
    if (m == -std::numeric_limits<double>::infinity())
        return m;
    return m + std::log1p(std::exp(-std::abs(x - y)));
}

} // namespace detail

/// Threshold detector only (key_llr left at 0): sign for the phase bit,
/// |projection| against k*d for the key bit.
inline PilotDecision decide_pilot(cplx sym, const GcsPilotParams& p)
{
    const double y = diagonal_projection(sym);
    return {static_cast<std::uint8_t>(y > 0.0 ? 1 : 0), static_cast<std::uint8_t>(std::abs(y) < p.k * p.d ? 1 : 0),
            0.0};
}

/// Hard and soft demapping of a CPR-corrected pilot. noise_variance is the
/// complex noise variance E|n|^2; the projection carries a quarter of it.
inline PilotDecision demap_pilot(cplx sym, const GcsPilotParams& p, double noise_variance)
{
    const double y = diagonal_projection(sym);
    PilotDecision out = decide_pilot(sym, p);

    const double v = noise_variance / 4.0;
    if (v <= 0.0) {
        out.key_llr = out.key_bit ? -1e3 : 1e3;
        return out;
    }
    auto lg = [v](double y0, double mu) { return -(y0 - mu) * (y0 - mu) / (2.0 * v); };
    const double outer = detail::log_sum_exp(lg(y, 3.0 * p.d), lg(y, -3.0 * p.d));
    const double inner = detail::log_sum_exp(lg(y, p.a * p.d), lg(y, -p.a * p.d));
    out.key_llr = outer - inner;
    return out;
}

// ---------------------------------------------------------------------------
// 16QAM payload, Gray-coded per quadrature: bits (b0,b1) -> I, (b2,b3) -> Q,
// with PAM4 labels 00 -> -3, 01 -> -1, 11 -> +1, 10 -> +3, scaled by 1/sqrt(10).

namespace qam16 {

inline const double kScale = 1.0 / std::sqrt(10.0);

inline double level(std::uint8_t msb, std::uint8_t lsb)
{
    const double mag = (lsb & 1u) ? 1.0 : 3.0;
    return ((msb & 1u) ? mag : -mag) * kScale;
}

/// Level index 0..3 for -3,-1,1,3 nearest to x; ties go to the lower index.
inline int nearest_level_index(double x)
{
    const double t = x / kScale;
    if (t <= -2.0) return 0;
    if (t <= 0.0) return 1;
    if (t <= 2.0) return 2;
    return 3;
}

inline void level_bits(int index, std::uint8_t& msb, std::uint8_t& lsb)
{
    static constexpr std::uint8_t msb_of[4] = {0, 0, 1, 1};
    static constexpr std::uint8_t lsb_of[4] = {0, 1, 1, 0};
    msb = msb_of[index];
    lsb = lsb_of[index];
}

inline double level_value(int index)
{
    static constexpr double levels[4] = {-3.0, -1.0, 1.0, 3.0};
    return levels[index] * kScale;
}

/// Nearest constellation point.
inline cplx hard_decision(cplx z)
{
    return {level_value(nearest_level_index(z.real())), level_value(nearest_level_index(z.imag()))};
}

/// Exact per-quadrature LLRs (positive means 0) for one real observation.
inline void pam4_llrs(double y, double var_per_dim, double& llr_msb, double& llr_lsb)
{
    double lp[4];
    for (int i = 0; i < 4; ++i) {
        const double e = y - level_value(i);
        lp[i] = -e * e / (2.0 * var_per_dim);
    }
    // msb 0: levels 0,1 ; msb 1: levels 2,3 ; lsb 0: levels 0,3 ; lsb 1: levels 1,2
    llr_msb = detail::log_sum_exp(lp[0], lp[1]) - detail::log_sum_exp(lp[2], lp[3]);
    llr_lsb = detail::log_sum_exp(lp[0], lp[3]) - detail::log_sum_exp(lp[1], lp[2]);
}

} // namespace qam16

inline SymbolStream map_payload_16qam(std::span<const std::uint8_t> bits)
{
    if (bits.size() % 4 != 0)
        throw std::length_error("map_payload_16qam: bit count must be divisible by 4");
    std::vector<cplx> out(bits.size() / 4);
    for (std::size_t s = 0; s < out.size(); ++s) {
        const auto* b = bits.data() + 4 * s;
        out[s] = {qam16::level(b[0], b[1]), qam16::level(b[2], b[3])};
    }
    return SymbolStream(std::move(out), SymbolRole::payload);
}

inline BitVec demap_payload_16qam_hard(std::span<const cplx> symbols)
{
    BitVec bits(symbols.size() * 4);
    for (std::size_t s = 0; s < symbols.size(); ++s) {
        qam16::level_bits(qam16::nearest_level_index(symbols[s].real()), bits[4 * s], bits[4 * s + 1]);
        qam16::level_bits(qam16::nearest_level_index(symbols[s].imag()), bits[4 * s + 2], bits[4 * s + 3]);
    }
    return bits;
}

/// Bit LLRs (positive means 0) for Gaussian noise of complex variance noise_variance.
inline std::vector<double> demap_payload_16qam_llr(std::span<const cplx> symbols, double noise_variance)
{
    std::vector<double> llr(symbols.size() * 4);
    const double v = std::max(noise_variance, 1e-12) / 2.0;
    for (std::size_t s = 0; s < symbols.size(); ++s) {
        qam16::pam4_llrs(symbols[s].real(), v, llr[4 * s], llr[4 * s + 1]);
        qam16::pam4_llrs(symbols[s].imag(), v, llr[4 * s + 2], llr[4 * s + 3]);
    }
    return llr;
}

/// Constant-amplitude pseudo-random QPSK training sequence of unit energy.
inline SymbolStream training_sequence(std::size_t n, std::uint64_t seed)
{
    Rng rng(seed, tag("training"));
    const double s = 1.0 / std::sqrt(2.0);
    std::vector<cplx> v(n);
    for (auto& z : v)
        z = {rng.bit() ? s : -s, rng.bit() ? s : -s};
    return SymbolStream(std::move(v), SymbolRole::training);
}

// ---------------------------------------------------------------------------

/// Per-subcarrier frame: training prefix, then repeating blocks of one pilot
/// followed by K-1 payload symbols. The final block may be short.
struct FrameLayout {
    std::size_t pilot_interval = 32;
    std::size_t n_payload = 8640;
    std::size_t n_pilot = 279;
    std::size_t n_training = 416;

    static FrameLayout make(std::size_t pilot_interval, std::size_t n_payload, std::size_t n_training)
    {
        if (pilot_interval < 2)
            throw std::invalid_argument("FrameLayout: pilot interval must be at least 2");
        const std::size_t per_block = pilot_interval - 1;
        return {pilot_interval, n_payload, (n_payload + per_block - 1) / per_block, n_training};
    }

    static FrameLayout upstream_default() { return make(32, 8640, 416); }
    static FrameLayout downstream_default() { return make(32, 8640, 480); }

    std::size_t total() const { return n_training + n_pilot + n_payload; }
    std::size_t payload_per_block() const { return pilot_interval - 1; }

    void validate() const
    {
        if (pilot_interval < 2)
            throw std::invalid_argument("FrameLayout: pilot interval must be at least 2");
        const std::size_t per_block = pilot_interval - 1;
        if (n_pilot != (n_payload + per_block - 1) / per_block)
            throw std::invalid_argument("FrameLayout: n_pilot must equal ceil(n_payload / (K - 1))");
    }

    std::size_t pilot_position(std::size_t n) const { return n_training + n * pilot_interval; }

    std::size_t payload_position(std::size_t i) const
    {
        const std::size_t per_block = pilot_interval - 1;
        return n_training + (i / per_block) * pilot_interval + 1 + i % per_block;
    }

    /// Fraction of the frame occupied by payload symbols.
    double payload_fraction() const { return static_cast<double>(n_payload) / static_cast<double>(total()); }
};

inline SymbolStream assemble_frame(const SymbolStream& payload, const SymbolStream& pilots,
                                   const SymbolStream& training, const FrameLayout& layout)
{
    layout.validate();
    if (payload.size() != layout.n_payload || pilots.size() != layout.n_pilot ||
        training.size() != layout.n_training)
        throw std::invalid_argument("assemble_frame: symbol counts do not match the layout");

    SymbolStream frame;
    frame.values.reserve(layout.total());
    frame.roles.reserve(layout.total());
    for (auto z : training.values)
        frame.append(z, SymbolRole::training);
    const std::size_t per_block = layout.payload_per_block();
    std::size_t next = 0;
    for (std::size_t n = 0; n < layout.n_pilot; ++n) {
        frame.append(pilots.values[n], SymbolRole::pilot);
        for (std::size_t r = 0; r < per_block && next < payload.size(); ++r)
            frame.append(payload.values[next++], SymbolRole::payload);
    }
    return frame;
}

struct ParsedFrame {
    SymbolStream training;
    SymbolStream pilots;
    SymbolStream payload;
};

/// Splits a frame by position. The role tags, when present, must match the layout.
inline ParsedFrame parse_frame(const SymbolStream& frame, const FrameLayout& layout)
{
    layout.validate();
    if (frame.size() != layout.total())
        throw std::invalid_argument("parse_frame: frame length does not match the layout");
    const bool check_roles = frame.roles.size() == frame.values.size();

    ParsedFrame out;
    out.training.values.reserve(layout.n_training);
    out.pilots.values.reserve(layout.n_pilot);
    out.payload.values.reserve(layout.n_payload);
    auto expect = [&](std::size_t pos, SymbolRole r) {
        if (check_roles && frame.roles[pos] != r)
            throw std::invalid_argument("parse_frame: role pattern does not match the layout");
    };
    for (std::size_t i = 0; i < layout.n_training; ++i) {
        expect(i, SymbolRole::training);
        out.training.append(frame.values[i], SymbolRole::training);
    }
    for (std::size_t n = 0; n < layout.n_pilot; ++n) {
        const std::size_t pos = layout.pilot_position(n);
        expect(pos, SymbolRole::pilot);
        out.pilots.append(frame.values[pos], SymbolRole::pilot);
    }
    for (std::size_t i = 0; i < layout.n_payload; ++i) {
        const std::size_t pos = layout.payload_position(i);
        expect(pos, SymbolRole::payload);
        out.payload.append(frame.values[pos], SymbolRole::payload);
    }
    return out;
}

/// Net rate after pilot/training overhead and FEC: payload_fraction * code_rate * line_rate.
inline double net_rate(const FrameLayout& layout, double code_rate, double line_rate_gbps)
{
    if (!(code_rate > 0.0) || !(line_rate_gbps > 0.0) || layout.total() == 0)
        throw std::invalid_argument("net_rate: inputs must be positive");
    return layout.payload_fraction() * code_rate * line_rate_gbps;
}

} // namespace secpon
