#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <numbers>
#include <span>
#include <stdexcept>
#include <tuple>
#include <vector>

#include "secpon/bits.hpp"
#include "secpon/framing.hpp"

namespace secpon {

/// Root-raised-cosine taps spanning span_symbols symbols at sps samples per
/// symbol (span * sps + 1 taps), normalized to unit energy.
inline std::vector<double> rrc_taps(double rolloff, std::size_t sps, std::size_t span_symbols)
{
    if (!(rolloff > 0.0 && rolloff <= 1.0) || sps == 0 || span_symbols == 0)
        throw std::invalid_argument("rrc_taps: invalid filter parameters");
    const std::size_t n = span_symbols * sps + 1;
    const double b = rolloff;
    const double pi = std::numbers::pi;
    std::vector<double> h(n);
    const double mid = static_cast<double>(n - 1) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = (static_cast<double>(i) - mid) / static_cast<double>(sps);
        double v;
        if (std::abs(t) < 1e-12) {
            v = 1.0 + b * (4.0 / pi - 1.0);
        } else if (std::abs(std::abs(t) - 1.0 / (4.0 * b)) < 1e-9) {
            v = b / std::sqrt(2.0) * ((1.0 + 2.0 / pi) * std::sin(pi / (4.0 * b)) + (1.0 - 2.0 / pi) * std::cos(pi / (4.0 * b)));
        } else {
            const double num = std::sin(pi * t * (1.0 - b)) + 4.0 * b * t * std::cos(pi * t * (1.0 + b));
            const double den = pi * t * (1.0 - 16.0 * b * b * t * t);
            v = num / den;
        }
        h[i] = v;
    }
    double e = 0.0;
    for (double v : h)
        e += v * v;
    const double s = 1.0 / std::sqrt(e);
    for (double& v : h)
        v *= s;
    return h;
}

namespace detail {

/// Solves A x = b in place for symmetric positive definite A (row-major m x m).
inline void solve_spd(std::vector<double>& a, std::vector<double>& b, std::size_t m)
{
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = a[i * m + j];
            for (std::size_t q = 0; q < j; ++q)
                acc -= a[i * m + q] * a[j * m + q];
            if (i == j) {
                if (!(acc > 0.0))
                    throw std::runtime_error("solve_spd: matrix not positive definite");
                a[i * m + i] = std::sqrt(acc);
            } else {
                a[i * m + j] = acc / a[j * m + j];
            }
        }
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t q = 0; q < i; ++q)
            b[i] -= a[i * m + q] * b[q];
        b[i] /= a[i * m + i];
    }
    for (std::size_t i = m; i-- > 0;) {
        for (std::size_t q = i + 1; q < m; ++q)
            b[i] -= a[q * m + i] * b[q];
        b[i] /= a[i * m + i];
    }
}

} // namespace detail

/// Receiver filter for a truncated pulse h: h followed by a symbol-spaced
/// zero-forcing correction c over +-2 span symbols, so (h * f) sampled at
/// multiples of sps is delta_k to rounding. Truncating the RRC at 64 symbols
/// leaves about -65 dB of ISI on a plain matched filter; moving the correction
/// to the receiver keeps the transmit spectrum untouched.
struct ReceiveFilter {
    std::vector<double> taps;
    /// taps[t] weights sample (k * sps + t - offset) for symbol k.
    std::size_t offset = 0;
};

inline ReceiveFilter nyquist_receive_filter(const std::vector<double>& h, std::size_t sps, std::size_t span_symbols)
{
    const auto n = static_cast<long>(h.size());
    const auto step = static_cast<long>(sps);
    const auto span = static_cast<long>(span_symbols);
    std::vector<double> g(static_cast<std::size_t>(span + 1));
    for (long k = 0; k <= span; ++k)
        for (long t = 0; t + k * step < n; ++t)
            g[static_cast<std::size_t>(k)] += h[static_cast<std::size_t>(t)] * h[static_cast<std::size_t>(t + k * step)];
    const long l = 2 * span;
    const auto m = static_cast<std::size_t>(2 * l + 1);
    std::vector<double> a(m * m, 0.0), c(m, 0.0);
    for (long i = -l; i <= l; ++i)
        for (long j = -l; j <= l; ++j) {
            const long d = std::abs(i - j);
            if (d <= span)
                a[static_cast<std::size_t>((i + l) * static_cast<long>(m) + (j + l))] = g[static_cast<std::size_t>(d)];
        }
    c[static_cast<std::size_t>(l)] = 1.0;
    detail::solve_spd(a, c, m);
    ReceiveFilter f;
    f.offset = static_cast<std::size_t>(l * step);
    f.taps.assign(h.size() + 2 * f.offset, 0.0);
    for (long j = -l; j <= l; ++j)
        for (long t = 0; t < n; ++t)
            f.taps[static_cast<std::size_t>(t + (j + l) * step)] += c[static_cast<std::size_t>(j + l)] * h[static_cast<std::size_t>(t)];
    return f;
}

/// Subcarrier plan. Frequencies are relative to the optical carrier.
struct DscmPlan {
    std::size_t n_subcarriers = 4;
    double baud_per_sc = 8e9;
    double rolloff = 0.1;
    std::vector<double> center_hz{-13.2e9, -4.4e9, 4.4e9, 13.2e9};
    std::size_t samples_per_symbol = 8;
    std::vector<double> weights{1.0, 1.0, 1.0, 1.0};
    std::size_t filter_span_symbols = 64;

    /// Evenly spaced plan centred on the carrier, spacing baud * (1 + rolloff).
    static DscmPlan uniform(std::size_t n_sc, double baud, double rolloff, std::size_t sps)
    {
        DscmPlan p;
        p.n_subcarriers = n_sc;
        p.baud_per_sc = baud;
        p.rolloff = rolloff;
        p.samples_per_symbol = sps;
        p.center_hz.resize(n_sc);
        const double spacing = baud * (1.0 + rolloff);
        for (std::size_t i = 0; i < n_sc; ++i)
            p.center_hz[i] = (static_cast<double>(i) - (static_cast<double>(n_sc) - 1.0) / 2.0) * spacing;
        p.weights.assign(n_sc, 1.0);
        return p;
    }

    double sample_rate() const { return baud_per_sc * static_cast<double>(samples_per_symbol); }
    std::size_t filter_delay() const { return filter_span_symbols * samples_per_symbol / 2; }

    /// Transmit shaping taps.
    std::vector<double> pulse() const { return rrc_taps(rolloff, samples_per_symbol, filter_span_symbols); }

    /// Matched filter with the truncation ISI removed; cached per thread.
    const ReceiveFilter& receive_filter() const
    {
        thread_local std::map<std::tuple<double, std::size_t, std::size_t>, ReceiveFilter> cache;
        const auto key = std::make_tuple(rolloff, samples_per_symbol, filter_span_symbols);
        auto it = cache.find(key);
        if (it == cache.end())
            it = cache.emplace(key, nyquist_receive_filter(pulse(), samples_per_symbol, filter_span_symbols)).first;
        return it->second;
    }

    void validate() const
    {
        if (n_subcarriers == 0 || center_hz.size() != n_subcarriers || weights.size() != n_subcarriers)
            throw std::invalid_argument("DscmPlan: one center frequency and weight per subcarrier required");
        if (!(baud_per_sc > 0.0) || samples_per_symbol < 2 || !(rolloff > 0.0 && rolloff <= 1.0))
            throw std::invalid_argument("DscmPlan: invalid symbol rate, oversampling or rolloff");
        for (double w : weights)
            if (!(w > 0.0))
                throw std::invalid_argument("DscmPlan: weights must be positive");
        const double occupied = baud_per_sc * (1.0 + rolloff);
        std::vector<double> c(center_hz);
        std::sort(c.begin(), c.end());
        for (std::size_t i = 1; i < c.size(); ++i)
            if (c[i] - c[i - 1] < occupied * (1.0 - 1e-9))
                throw std::invalid_argument("DscmPlan: subcarrier spectra overlap");
        const double fs = sample_rate();
        if (c.front() - occupied / 2.0 < -fs / 2.0 || c.back() + occupied / 2.0 > fs / 2.0)
            throw std::invalid_argument("DscmPlan: subcarriers exceed the sampled bandwidth");
    }

    /// Aggregate samples for n symbols per subcarrier.
    std::size_t waveform_length(std::size_t n_symbols) const
    {
        return n_symbols == 0 ? 0 : (n_symbols - 1) * samples_per_symbol + filter_span_symbols * samples_per_symbol + 1;
    }
};

namespace detail {

inline std::vector<cplx> mixer(std::size_t n, double f_hz, double fs)
{
    std::vector<cplx> m(n);
    const double w = 2.0 * std::numbers::pi * f_hz / fs;
    for (std::size_t i = 0; i < n; ++i) {
        // reduce the argument so long waveforms keep full precision
        const double ph = std::fmod(w * static_cast<double>(i), 2.0 * std::numbers::pi);
        m[i] = std::polar(1.0, ph);
    }
    return m;
}

} // namespace detail

/// Adds one shaped, shifted, weighted subcarrier onto an aggregate waveform.
inline void mux_add(std::vector<cplx>& out, std::span<const cplx> symbols, std::size_t sc, const DscmPlan& plan,
                    const std::vector<double>& taps)
{
    const std::size_t sps = plan.samples_per_symbol;
    const std::size_t len = plan.waveform_length(symbols.size());
    if (out.size() < len)
        out.resize(len, cplx{});
    std::vector<cplx> shaped(len, cplx{});
    for (std::size_t k = 0; k < symbols.size(); ++k) {
        const cplx s = symbols[k];
        cplx* dst = shaped.data() + k * sps;
        for (std::size_t t = 0; t < taps.size(); ++t)
            dst[t] += s * taps[t];
    }
    const auto mix = detail::mixer(len, plan.center_hz[sc], plan.sample_rate());
    const double g = std::sqrt(plan.weights[sc]);
    for (std::size_t i = 0; i < len; ++i)
        out[i] += g * shaped[i] * mix[i];
}

/// Aggregate DSCM waveform. Symbol k of every subcarrier is centred on sample
/// k * sps + filter_delay. All streams must have the same length.
inline std::vector<cplx> mux(const std::vector<SymbolStream>& streams, const DscmPlan& plan)
{
    plan.validate();
    if (streams.size() != plan.n_subcarriers)
        throw std::invalid_argument("mux: one stream per subcarrier required");
    const std::size_t n = streams.front().size();
    for (const auto& s : streams)
        if (s.size() != n)
            throw std::invalid_argument("mux: subcarrier streams must have equal length");
    const auto taps = plan.pulse();
    std::vector<cplx> out(plan.waveform_length(n), cplx{});
    for (std::size_t sc = 0; sc < streams.size(); ++sc)
        mux_add(out, streams[sc].values, sc, plan, taps);
    return out;
}

/// Down-conversion by the subcarrier centre, matched RRC filter evaluated at
/// the symbol instants, and removal of the power weight. Returns symbols
/// [first, first + count) of the subcarrier.
inline std::vector<cplx> demux_symbols(std::span<const cplx> samples, std::size_t sc, const DscmPlan& plan,
                                       std::size_t first, std::size_t count)
{
    plan.validate();
    if (sc >= plan.n_subcarriers)
        throw std::out_of_range("demux_select: subcarrier index out of range");
    const std::size_t sps = plan.samples_per_symbol;
    const std::size_t pulse_len = plan.filter_span_symbols * sps + 1;
    const std::size_t need = count == 0 ? 0 : (first + count - 1) * sps + pulse_len;
    if (samples.size() < need)
        throw std::length_error("demux_select: waveform shorter than the requested symbols");
    std::vector<cplx> out(count);
    if (count == 0)
        return out;
    const auto& rf = plan.receive_filter();
    const double w = 2.0 * std::numbers::pi * plan.center_hz[sc] / plan.sample_rate();
    const double g = 1.0 / std::sqrt(plan.weights[sc]);
    // mixed-down window; samples outside the waveform are zero
    const long lo = static_cast<long>(first * sps) - static_cast<long>(rf.offset);
    const std::size_t len = (count - 1) * sps + rf.taps.size();
    std::vector<cplx> y(len, cplx{});
    for (std::size_t i = 0; i < len; ++i) {
        const long idx = lo + static_cast<long>(i);
        if (idx >= 0 && idx < static_cast<long>(samples.size()))
            y[i] = samples[static_cast<std::size_t>(idx)] *
                   std::polar(1.0, std::fmod(-w * static_cast<double>(idx), 2.0 * std::numbers::pi));
    }
    for (std::size_t k = 0; k < count; ++k) {
        const cplx* seg = y.data() + k * sps;
        double re = 0.0, im = 0.0;
        for (std::size_t t = 0; t < rf.taps.size(); ++t) {
            re += seg[t].real() * rf.taps[t];
            im += seg[t].imag() * rf.taps[t];
        }
        out[k] = g * cplx{re, im};
    }
    return out;
}

inline SymbolStream demux_select(std::span<const cplx> samples, std::size_t sc, const DscmPlan& plan,
                                 std::size_t n_symbols)
{
    return SymbolStream(demux_symbols(samples, sc, plan, 0, n_symbols), SymbolRole::payload);
}

/// Rotates a waveform by exp(-j 2 pi f n / fs).
inline void derotate(std::span<cplx> samples, double f_hz, double fs)
{
    if (f_hz == 0.0)
        return;
    const double w = -2.0 * std::numbers::pi * f_hz / fs;
    for (std::size_t i = 0; i < samples.size(); ++i)
        samples[i] *= std::polar(1.0, std::fmod(w * static_cast<double>(i), 2.0 * std::numbers::pi));
}

/// Data-aided frequency-offset estimate: maximizes the periodogram of
/// rx * conj(training) over |f| < max_offset. Coarse grid, then golden
/// section refinement around the best bin.
inline double estimate_frequency_offset(std::span<const cplx> rx, std::span<const cplx> training, double symbol_rate,
                                        double max_offset_hz)
{
    if (rx.size() != training.size() || rx.size() < 2)
        throw std::length_error("estimate_frequency_offset: need matching training and received symbols");
    if (!(max_offset_hz > 0.0) || max_offset_hz > symbol_rate / 2.0)
        throw std::invalid_argument("estimate_frequency_offset: search range must be in (0, Rs/2]");
    const std::size_t n = rx.size();
    std::vector<cplx> z(n);
    for (std::size_t i = 0; i < n; ++i)
        z[i] = rx[i] * std::conj(training[i]);
    auto power = [&](double f) {
        const double w = -2.0 * std::numbers::pi * f / symbol_rate;
        const cplx step = std::polar(1.0, w);
        cplx rot{1.0, 0.0}, acc{};
        for (std::size_t i = 0; i < n; ++i) {
            acc += z[i] * rot;
            rot *= step;
        }
        return std::norm(acc);
    };
    // 4x zero-padded bin spacing over the search range
    const double bin = symbol_rate / (4.0 * static_cast<double>(n));
    const auto half = static_cast<long>(std::ceil(max_offset_hz / bin));
    double best_f = 0.0, best_p = -1.0;
    for (long b = -half; b <= half; ++b) {
        const double f = static_cast<double>(b) * bin;
        const double p = power(f);
        if (p > best_p) {
            best_p = p;
            best_f = f;
        }
    }
    double lo = best_f - bin, hi = best_f + bin;
    const double gr = (std::sqrt(5.0) - 1.0) / 2.0;
    double x1 = hi - gr * (hi - lo), x2 = lo + gr * (hi - lo);
    double p1 = power(x1), p2 = power(x2);
    for (int it = 0; it < 60; ++it) {
        if (p1 > p2) {
            hi = x2;
            x2 = x1;
            p2 = p1;
            x1 = hi - gr * (hi - lo);
            p1 = power(x1);
        } else {
            lo = x1;
            x1 = x2;
            p1 = p2;
            x2 = lo + gr * (hi - lo);
            p2 = power(x2);
        }
    }
    return 0.5 * (lo + hi);
}

} // namespace secpon
