#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numbers>
#include <span>
#include <stdexcept>
#include <vector>

#include "secpon/bits.hpp"
#include "secpon/framing.hpp"

namespace secpon {

enum class Interpolation { linear, hold };

struct CprConfig {
    /// Half-length Q of the residual averaging window (2Q+1 symbols).
    std::size_t half_window = 11;
    Interpolation interpolation = Interpolation::linear;
    bool unwrap = true;
    /// Residual stage on or off (off leaves only the pilot stage).
    bool residual = true;
    /// Residual passes; each later pass re-decides on the previous output.
    std::size_t residual_passes = 1;
};

struct PilotPhaseEstimates {
    std::vector<double> phase;
    /// Consecutive estimates more than pi/2 apart; likely cycle slips, not corrected.
    std::size_t suspected_slips = 0;
};

/// Phase-only pilot references: the sign bit places the pilot on the +-(1+1j) diagonal.
inline std::vector<cplx> pilot_phase_reference(std::span<const std::uint8_t> phase_bits)
{
    std::vector<cplx> ref(phase_bits.size());
    const double s = 1.0 / std::sqrt(2.0);
    for (std::size_t i = 0; i < ref.size(); ++i)
        ref[i] = (phase_bits[i] & 1u) ? cplx{s, s} : cplx{-s, -s};
    return ref;
}

/// psi(n) = arg e(n) - arg p(n), unwrapped with threshold pi.
inline PilotPhaseEstimates pilot_phase_estimates(std::span<const cplx> rx_pilots, std::span<const cplx> tx_pilots,
                                                 bool unwrap = true)
{
    if (rx_pilots.size() != tx_pilots.size())
        throw std::length_error("pilot_phase_estimates: received and reference pilots differ in length");
    PilotPhaseEstimates est;
    est.phase.resize(rx_pilots.size());
    const double pi = std::numbers::pi;
    for (std::size_t n = 0; n < rx_pilots.size(); ++n) {
        double psi = std::arg(rx_pilots[n]) - std::arg(tx_pilots[n]);
        psi = std::remainder(psi, 2.0 * pi);
        if (unwrap && n > 0) {
            const double prev = est.phase[n - 1];
            psi = prev + std::remainder(psi - prev, 2.0 * pi);
        }
        if (n > 0 && std::abs(psi - est.phase[n - 1]) > pi / 2.0)
            ++est.suspected_slips;
        est.phase[n] = psi;
    }
    return est;
}

inline PilotPhaseEstimates pilot_phase_estimates(const SymbolStream& rx_pilots, const SymbolStream& tx_pilots,
                                                 bool unwrap = true)
{
    return pilot_phase_estimates(std::span<const cplx>(rx_pilots.values), std::span<const cplx>(tx_pilots.values),
                                 unwrap);
}

/// Pilot-stage phase for every payload symbol. Linear interpolation runs
/// between the pilots that bracket a block; the final block has no following
/// pilot and holds its leading estimate.
inline std::vector<double> interpolate_pilot_phase(std::span<const double> estimates, const FrameLayout& layout,
                                                   Interpolation mode)
{
    layout.validate();
    if (estimates.size() != layout.n_pilot)
        throw std::invalid_argument("apply_pilot_phase: one estimate per pilot required");
    const std::size_t per_block = layout.payload_per_block();
    const double k = static_cast<double>(layout.pilot_interval);
    std::vector<double> phi(layout.n_payload);
    for (std::size_t i = 0; i < layout.n_payload; ++i) {
        const std::size_t n = i / per_block;
        const std::size_t r = i % per_block;
        if (mode == Interpolation::hold || n + 1 >= estimates.size()) {
            phi[i] = estimates[n];
        } else {
            const double frac = static_cast<double>(r + 1) / k;
            phi[i] = estimates[n] + frac * (estimates[n + 1] - estimates[n]);
        }
    }
    return phi;
}

inline void rotate(std::span<cplx> x, std::span<const double> phase)
{
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] *= std::polar(1.0, -phase[i]);
}

inline SymbolStream apply_pilot_phase(const SymbolStream& payload, std::span<const double> estimates,
                                      const FrameLayout& layout, const CprConfig& cfg)
{
    if (payload.size() != layout.n_payload)
        throw std::invalid_argument("apply_pilot_phase: payload length does not match the layout");
    const auto phi = interpolate_pilot_phase(estimates, layout, cfg.interpolation);
    SymbolStream out = payload;
    rotate(out.values, phi);
    return out;
}

/// psi_res(j) = mean of arg(q(l) conj(qhat(l))) over l in [j-h, j+h], with
/// h = min(Q, j, n-1-j) so the window stays symmetric at the edges.
inline std::vector<double> residual_phase(std::span<const cplx> q, std::size_t half_window)
{
    const std::size_t n = q.size();
    std::vector<double> prefix(n + 1, 0.0);
    for (std::size_t l = 0; l < n; ++l)
        prefix[l + 1] = prefix[l] + std::arg(q[l] * std::conj(qam16::hard_decision(q[l])));
    std::vector<double> psi(n);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t h = std::min({half_window, j, n - 1 - j});
        psi[j] = (prefix[j + h + 1] - prefix[j - h]) / static_cast<double>(2 * h + 1);
    }
    return psi;
}

inline SymbolStream residual_cpr(const SymbolStream& payload, const CprConfig& cfg)
{
    const auto psi = residual_phase(payload.values, cfg.half_window);
    SymbolStream out = payload;
    rotate(out.values, psi);
    return out;
}

/// Output of the full receiver phase recovery on one parsed frame.
struct FrameCprResult {
    std::vector<cplx> payload;
    /// Pilots rotated by the decision-directed phase of the neighbouring
    /// payload, ready for key-bit demapping.
    std::vector<cplx> pilots;
    /// Total phase removed from every payload symbol.
    std::vector<double> payload_phase;
    PilotPhaseEstimates estimates;
};

/// Pilot stage from the pre-shared sign bits, then the residual stage. The
/// pilot correction for key demapping is the mean total payload phase over
/// the Q payload symbols on each side of the pilot, so it does not reuse the
/// pilot's own noise.
inline FrameCprResult recover_frame_phase(std::span<const cplx> rx_pilots, std::span<const cplx> rx_payload,
                                          std::span<const std::uint8_t> phase_bits, const FrameLayout& layout,
                                          const CprConfig& cfg)
{
    if (rx_pilots.size() != layout.n_pilot || rx_payload.size() != layout.n_payload ||
        phase_bits.size() != layout.n_pilot)
        throw std::invalid_argument("recover_frame_phase: inputs do not match the layout");
    FrameCprResult out;
    const auto ref = pilot_phase_reference(phase_bits);
    out.estimates = pilot_phase_estimates(rx_pilots, ref, cfg.unwrap);
    out.payload_phase = interpolate_pilot_phase(out.estimates.phase, layout, cfg.interpolation);
    out.payload.assign(rx_payload.begin(), rx_payload.end());
    rotate(out.payload, out.payload_phase);
    for (std::size_t pass = 0; cfg.residual && pass < std::max<std::size_t>(cfg.residual_passes, 1); ++pass) {
        const auto psi = residual_phase(out.payload, cfg.half_window);
        rotate(out.payload, psi);
        for (std::size_t i = 0; i < psi.size(); ++i)
            out.payload_phase[i] += psi[i];
    }
    // Decision-directed phase seen by each payload symbol after correction.
    std::vector<double> prefix(layout.n_payload + 1, 0.0);
    for (std::size_t i = 0; i < layout.n_payload; ++i) {
        const cplx z = out.payload[i];
        prefix[i + 1] = prefix[i] + out.payload_phase[i] + std::arg(z * std::conj(qam16::hard_decision(z)));
    }
    const std::size_t per_block = layout.payload_per_block();
    const std::size_t q = std::max<std::size_t>(cfg.half_window, 1);
    out.pilots.resize(layout.n_pilot);
    for (std::size_t n = 0; n < layout.n_pilot; ++n) {
        // pilot n precedes payload index n * (K - 1)
        const std::size_t centre = n * per_block;
        const std::size_t lo = centre >= q ? centre - q : 0;
        const std::size_t hi = std::min(layout.n_payload, centre + q);
        double phi = out.estimates.phase[n];
        if (hi > lo) {
            phi = (prefix[hi] - prefix[lo]) / static_cast<double>(hi - lo);
            // keep the branch of the pilot estimate
            phi = out.estimates.phase[n] + std::remainder(phi - out.estimates.phase[n], 2.0 * std::numbers::pi);
        }
        out.pilots[n] = rx_pilots[n] * std::polar(1.0, -phi);
    }
    return out;
}

} // namespace secpon
