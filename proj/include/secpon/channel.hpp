#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "secpon/bits.hpp"
#include "secpon/framing.hpp"
#include "secpon/rng.hpp"

namespace secpon {

/// Impairments of one link. symbol_rate is the rate of the stream the channel
/// is applied to (the sample rate when applied to an oversampled waveform).
/// snr_db = +inf disables the noise.
struct ChannelConfig {
    double snr_db = std::numeric_limits<double>::infinity();
    double linewidth_hz = 0.0;
    double symbol_rate = 8e9;
    double freq_offset_hz = 0.0;
    std::uint64_t seed = 1;
    /// Signal power the SNR refers to; unit-energy streams use 1.
    double reference_power = 1.0;

    void validate() const
    {
        if (!(symbol_rate > 0.0))
            throw std::invalid_argument("ChannelConfig: symbol_rate must be positive");
        if (!(linewidth_hz >= 0.0))
            throw std::invalid_argument("ChannelConfig: linewidth must be non-negative");
        if (std::isnan(snr_db) || snr_db == -std::numeric_limits<double>::infinity())
            throw std::invalid_argument("ChannelConfig: snr_db must be a number or +inf");
        if (!std::isfinite(freq_offset_hz))
            throw std::invalid_argument("ChannelConfig: frequency offset must be finite");
        if (!(reference_power > 0.0))
            throw std::invalid_argument("ChannelConfig: reference power must be positive");
    }

    /// Complex noise variance E|n|^2.
    double noise_variance() const
    {
        if (snr_db == std::numeric_limits<double>::infinity())
            return 0.0;
        return reference_power / std::pow(10.0, snr_db / 10.0);
    }

    /// Per-sample variance of the Wiener phase increment, 2 pi linewidth / Rs.
    double phase_increment_variance() const { return 2.0 * std::numbers::pi * linewidth_hz / symbol_rate; }
};

/// Wiener phase walk starting at 0, one value per symbol.
inline std::vector<double> wiener_phase(std::size_t n, const ChannelConfig& cfg)
{
    cfg.validate();
    std::vector<double> theta(n, 0.0);
    const double sigma = std::sqrt(cfg.phase_increment_variance());
    if (sigma == 0.0)
        return theta;
    Rng rng(cfg.seed, tag("phase"));
    double acc = 0.0;
    for (std::size_t l = 0; l < n; ++l) {
        if (l > 0)
            acc += sigma * rng.gaussian();
        theta[l] = acc;
    }
    return theta;
}

/// Total phase (Wiener walk plus frequency-offset ramp) applied to symbol l.
inline std::vector<double> channel_phase(std::size_t n, const ChannelConfig& cfg)
{
    auto theta = wiener_phase(n, cfg);
    const double w = 2.0 * std::numbers::pi * cfg.freq_offset_hz / cfg.symbol_rate;
    if (w != 0.0)
        for (std::size_t l = 0; l < n; ++l)
            theta[l] += w * static_cast<double>(l);
    return theta;
}

/// Adds circular complex Gaussian noise of variance reference_power / snr in place.
inline void add_awgn(std::span<cplx> x, const ChannelConfig& cfg)
{
    cfg.validate();
    const double var = cfg.noise_variance();
    if (var == 0.0)
        return;
    Rng rng(cfg.seed, tag("awgn"));
    for (auto& z : x)
        z += rng.complex_gaussian(var);
}

inline void apply_phase(std::span<cplx> x, std::span<const double> theta)
{
    if (x.size() != theta.size())
        throw std::length_error("apply_phase: length mismatch");
    for (std::size_t l = 0; l < x.size(); ++l)
        if (theta[l] != 0.0)
            x[l] *= std::polar(1.0, theta[l]);
}

/// Channel output together with the phase that was applied.
struct ChannelOutput {
    SymbolStream rx;
    std::vector<double> phase;
};

/// y(l) = x(l) exp(j(theta(l) + 2 pi df l / Rs)) + n(l). Phase noise and noise
/// use separate named streams of the seed, so runs at different SNR share the
/// same phase and the same normalized noise realisation.
inline ChannelOutput apply_channel_with_truth(const SymbolStream& tx, const ChannelConfig& cfg)
{
    ChannelOutput out{tx, channel_phase(tx.size(), cfg)};
    apply_phase(out.rx.values, out.phase);
    add_awgn(out.rx.values, cfg);
    return out;
}

inline SymbolStream apply_channel(const SymbolStream& tx, const ChannelConfig& cfg)
{
    return apply_channel_with_truth(tx, cfg).rx;
}

inline std::vector<cplx> apply_channel(std::span<const cplx> tx, const ChannelConfig& cfg)
{
    std::vector<cplx> y(tx.begin(), tx.end());
    const auto theta = channel_phase(y.size(), cfg);
    apply_phase(y, theta);
    add_awgn(y, cfg);
    return y;
}

/// Seed of the eavesdropper's own, independent channel realisation.
inline std::uint64_t eavesdropper_seed(std::uint64_t seed) { return derive_stream({seed, tag("eavesdropper")}); }

/// A passive tap on the broadcast: same statistics as the legitimate path,
/// independent randomness.
inline SymbolStream eavesdrop_tap(const SymbolStream& tx, const ChannelConfig& cfg)
{
    ChannelConfig tap = cfg;
    tap.seed = eavesdropper_seed(cfg.seed);
    return apply_channel(tx, tap);
}

inline std::vector<cplx> eavesdrop_tap(std::span<const cplx> tx, const ChannelConfig& cfg)
{
    ChannelConfig tap = cfg;
    tap.seed = eavesdropper_seed(cfg.seed);
    return apply_channel(tx, tap);
}

/// Measured SNR in dB of rx against the known tx (power of tx over power of rx - tx).
inline double measure_snr_db(std::span<const cplx> tx, std::span<const cplx> rx)
{
    if (tx.size() != rx.size() || tx.empty())
        throw std::length_error("measure_snr_db: length mismatch");
    double ps = 0.0, pn = 0.0;
    for (std::size_t i = 0; i < tx.size(); ++i) {
        ps += std::norm(tx[i]);
        pn += std::norm(rx[i] - tx[i]);
    }
    return 10.0 * std::log10(ps / pn);
}

/// Illustrative affine map from received optical power to electrical SNR, used
/// only to label plots. The default slope and intercept carry no physical meaning.
struct RopToSnrMap {
    double slope_db_per_dbm = 1.0;
    double snr_at_0dbm = 30.0;

    double snr_db(double rop_dbm) const { return snr_at_0dbm + slope_db_per_dbm * rop_dbm; }
    double rop_dbm(double snr_db) const { return (snr_db - snr_at_0dbm) / slope_db_per_dbm; }
};

} // namespace secpon
