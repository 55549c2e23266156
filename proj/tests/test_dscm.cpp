#include <gtest/gtest.h>

#include <cmath>

#include "oracles.hpp"
#include "secpon/dscm.hpp"
#include "secpon/rng.hpp"
#include "secpon/theory.hpp"

using namespace secpon;

namespace {

SymbolStream qam(std::size_t n, std::uint64_t seed)
{
    Rng r(seed, tag("dscm-test"));
    return map_payload_16qam(r.bits(4 * n));
}

// Scales a stream to exactly unit mean power.
SymbolStream unit_power(SymbolStream s)
{
    double p = 0.0;
    for (auto z : s.values)
        p += std::norm(z);
    const double g = 1.0 / std::sqrt(p / static_cast<double>(s.size()));
    for (auto& z : s.values)
        z *= g;
    return s;
}

double evm(const std::vector<cplx>& got, const std::vector<cplx>& want)
{
    double e = 0.0, p = 0.0;
    for (std::size_t i = 0; i < want.size(); ++i) {
        e += std::norm(got[i] - want[i]);
        p += std::norm(want[i]);
    }
    return std::sqrt(e / p);
}

double mean_power(const std::vector<cplx>& x)
{
    double p = 0.0;
    for (auto z : x)
        p += std::norm(z);
    return p / static_cast<double>(x.size());
}

std::vector<SymbolStream> silent(std::size_t n_sc, std::size_t n)
{
    return std::vector<SymbolStream>(n_sc, SymbolStream(std::vector<cplx>(n), SymbolRole::payload));
}

} // namespace

TEST(Dscm, PulseIsUnitEnergyAndSymmetric)
{
    const auto h = DscmPlan{}.pulse();
    ASSERT_EQ(h.size(), 64u * 8u + 1u);
    double e = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        e += h[i] * h[i];
        ASSERT_DOUBLE_EQ(h[i], h[h.size() - 1 - i]);
    }
    EXPECT_NEAR(e, 1.0, 1e-12);
}

TEST(Dscm, ReceiveFilterMakesTheChainNyquist)
{
    DscmPlan plan;
    const auto h = plan.pulse();
    const auto& f = plan.receive_filter();
    // full cascade h * f, sampled at symbol spacing around the peak
    std::vector<double> c(h.size() + f.taps.size() - 1, 0.0);
    for (std::size_t i = 0; i < h.size(); ++i)
        for (std::size_t j = 0; j < f.taps.size(); ++j)
            c[i + j] += h[i] * f.taps[j];
    // f is symmetric, so the demux correlation is this convolution shifted by the filter offset
    const std::size_t peak = h.size() - 1 + f.offset;
    double worst = 0.0;
    for (long k = -static_cast<long>(peak / 8); k <= static_cast<long>(peak / 8); ++k) {
        const double v = c[static_cast<std::size_t>(static_cast<long>(peak) + 8 * k)];
        worst = std::max(worst, std::abs(k == 0 ? v - 1.0 : v));
    }
    EXPECT_LT(worst, 1e-10);
}

TEST(Dscm, SingleCarrierBasebandMatchesDirectShaping)
{
    const auto plan = DscmPlan::uniform(1, 8e9, 0.1, 8);
    EXPECT_DOUBLE_EQ(plan.center_hz[0], 0.0);
    const auto s = qam(500, 1);
    const auto w = mux({s}, plan);
    const auto h = plan.pulse();
    ASSERT_EQ(w.size(), plan.waveform_length(s.size()));
    std::vector<cplx> ref(w.size());
    for (std::size_t k = 0; k < s.size(); ++k)
        for (std::size_t t = 0; t < h.size(); ++t)
            ref[k * 8 + t] += s.values[k] * h[t];
    for (std::size_t i = 0; i < w.size(); ++i)
        ASSERT_NEAR(std::abs(w[i] - ref[i]), 0.0, 1e-12);
}

TEST(Dscm, SingleCarrierRoundtripEvm)
{
    const auto plan = DscmPlan::uniform(1, 8e9, 0.1, 8);
    const auto s = qam(4000, 2);
    EXPECT_LT(evm(demux_select(mux({s}, plan), 0, plan, s.size()).values, s.values), 1e-6);
    // a single subcarrier off centre behaves the same
    DscmPlan p4;
    auto streams = silent(4, 4000);
    for (std::size_t sc = 0; sc < 4; ++sc) {
        streams[sc] = s;
        EXPECT_LT(evm(demux_select(mux(streams, p4), sc, p4, s.size()).values, s.values), 1e-6) << sc;
        streams[sc] = silent(1, 4000)[0];
    }
}

TEST(Dscm, FourCarrierRoundtripLimitedByLeakageOnly)
{
    DscmPlan plan;
    const std::size_t n = 4000;
    std::vector<SymbolStream> s;
    for (std::uint64_t i = 0; i < 4; ++i)
        s.push_back(qam(n, 10 + i));
    const auto w = mux(s, plan);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto got = demux_select(w, i, plan, n).values;
        // error equals the sum of what the other subcarriers leak into i
        std::vector<cplx> leak(n);
        for (std::size_t j = 0; j < 4; ++j) {
            if (j == i)
                continue;
            auto only = silent(4, n);
            only[j] = s[j];
            const auto l = demux_select(mux(only, plan), i, plan, n).values;
            for (std::size_t k = 0; k < n; ++k)
                leak[k] += l[k];
        }
        std::vector<cplx> err(n);
        for (std::size_t k = 0; k < n; ++k)
            err[k] = got[k] - s[i].values[k];
        EXPECT_LT(evm(err, leak), 1e-6) << i;
        EXPECT_LT(evm(got, s[i].values), 1e-3) << i;
    }
}

TEST(Dscm, AdjacentLeakageBelowMinus30dB)
{
    DscmPlan plan;
    const std::size_t n = 8000;
    for (std::size_t src = 0; src < 4; ++src) {
        auto streams = silent(4, n);
        streams[src] = qam(n, 20 + src);
        const auto w = mux(streams, plan);
        const double p_src = mean_power(demux_select(w, src, plan, n).values);
        for (std::size_t dst : {src - 1, src + 1}) {
            if (dst >= 4)
                continue;
            const double p = mean_power(demux_select(w, dst, plan, n).values);
            EXPECT_LT(10.0 * std::log10(p / p_src), -30.0) << src << "->" << dst;
        }
    }
}

TEST(Dscm, AggregatePowerIsSumOfSubcarriers)
{
    DscmPlan plan;
    const std::size_t n = 20000;
    std::vector<SymbolStream> s;
    for (std::uint64_t i = 0; i < 4; ++i)
        s.push_back(unit_power(qam(n, 30 + i)));
    const double total = mean_power(mux(s, plan));
    double sum = 0.0, first = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        auto only = silent(4, n);
        only[i] = s[i];
        const double p = mean_power(mux(only, plan));
        sum += p;
        if (i == 0)
            first = p;
    }
    EXPECT_NEAR(10.0 * std::log10(total / sum), 0.0, 0.01);
    EXPECT_NEAR(10.0 * std::log10(total / (4.0 * first)), 0.0, 0.01);
}

TEST(Dscm, SpectralOccupancyAtMinus40dB)
{
    const auto plan = DscmPlan::uniform(1, 8e9, 0.1, 8);
    const auto w = mux({qam(1 << 15, 40)}, plan);
    const std::size_t seg = 4096;
    const auto psd = oracle::welch_psd(w, seg);
    const double fs = plan.sample_rate(), df = fs / static_cast<double>(seg);
    auto freq = [&](std::size_t i) { return (i < seg / 2 ? static_cast<double>(i) : static_cast<double>(i) - seg) * df; };
    double ref = 0.0;
    std::size_t cnt = 0;
    for (std::size_t i = 0; i < seg; ++i)
        if (std::abs(freq(i)) < 0.4 * plan.baud_per_sc) {
            ref += psd[i];
            ++cnt;
        }
    ref /= static_cast<double>(cnt);
    double lo = 0.0, hi = 0.0;
    for (std::size_t i = 0; i < seg; ++i)
        if (psd[i] > 1e-4 * ref) {
            lo = std::min(lo, freq(i));
            hi = std::max(hi, freq(i));
        }
    const double occupied = hi - lo;
    EXPECT_NEAR(occupied / (plan.baud_per_sc * (1.0 + plan.rolloff)), 1.0, 0.03) << occupied;
}

TEST(Dscm, Linearity)
{
    DscmPlan plan;
    const std::size_t n = 1000;
    std::vector<SymbolStream> x, y, z;
    const cplx a{0.7, -0.2}, b{-1.3, 0.4};
    for (std::uint64_t i = 0; i < 4; ++i) {
        x.push_back(qam(n, 50 + i));
        y.push_back(qam(n, 60 + i));
        SymbolStream c = x.back();
        for (std::size_t k = 0; k < n; ++k)
            c.values[k] = a * x.back().values[k] + b * y.back().values[k];
        z.push_back(c);
    }
    const auto wx = mux(x, plan), wy = mux(y, plan), wz = mux(z, plan);
    for (std::size_t i = 0; i < wz.size(); ++i)
        ASSERT_LT(std::abs(wz[i] - (a * wx[i] + b * wy[i])), 1e-12);
    for (std::size_t sc = 0; sc < 4; ++sc) {
        const auto dx = demux_select(wx, sc, plan, n).values, dy = demux_select(wy, sc, plan, n).values,
                   dz = demux_select(wz, sc, plan, n).values;
        for (std::size_t k = 0; k < n; ++k)
            ASSERT_LT(std::abs(dz[k] - (a * dx[k] + b * dy[k])), 1e-12);
    }
}

TEST(Dscm, PartialDemuxMatchesFullDemux)
{
    DscmPlan plan;
    std::vector<SymbolStream> s;
    for (std::uint64_t i = 0; i < 4; ++i)
        s.push_back(qam(600, 70 + i));
    const auto w = mux(s, plan);
    const auto full = demux_select(w, 2, plan, 600).values;
    const auto part = demux_symbols(w, 2, plan, 250, 100);
    for (std::size_t k = 0; k < 100; ++k)
        ASSERT_LT(std::abs(part[k] - full[250 + k]), 1e-13);
}

TEST(Dscm, PowerWeightsScaleSubcarrierSnr)
{
    DscmPlan plan;
    plan.weights = {1.0, 2.0, 0.5, 4.0};
    const std::size_t n = 100000;
    std::vector<SymbolStream> s;
    for (std::uint64_t i = 0; i < 4; ++i)
        s.push_back(qam(n, 80 + i));
    auto w = mux(s, plan);
    Rng r(90, tag("noise"));
    for (auto& v : w)
        v += r.complex_gaussian(0.05);
    std::array<double, 4> snr{};
    for (std::size_t i = 0; i < 4; ++i) {
        // demux removes the weight, so the noise shrinks by it instead
        const auto got = demux_select(w, i, plan, n).values;
        snr[i] = -20.0 * std::log10(evm(got, s[i].values));
    }
    for (std::size_t i = 1; i < 4; ++i)
        EXPECT_NEAR(snr[i] - snr[0], 10.0 * std::log10(plan.weights[i] / plan.weights[0]), 0.1) << i;
}

TEST(Dscm, PerSubcarrierBerEqualsSingleCarrierBer)
{
    // sample-rate noise of variance 1/x puts Es/N0 = x on every unit-weight subcarrier
    DscmPlan plan;
    const double x_db = 12.0;
    const std::size_t n = 250000;
    std::vector<BitVec> bits;
    std::vector<SymbolStream> s;
    for (std::uint64_t i = 0; i < 4; ++i) {
        Rng r(100 + i, tag("bits"));
        bits.push_back(r.bits(4 * n));
        s.push_back(map_payload_16qam(bits.back()));
    }
    auto w = mux(s, plan);
    Rng r(110, tag("noise"));
    const double var = std::pow(10.0, -x_db / 10.0);
    for (auto& v : w)
        v += r.complex_gaussian(var);
    for (std::size_t i = 0; i < 4; ++i) {
        const auto got = demux_select(w, i, plan, n).values;
        const double ber = double(count_bit_errors(demap_payload_16qam_hard(got), bits[i])) / double(4 * n);
        const double equiv = snr_db_for_ber(ber_16qam_reference, ber);
        EXPECT_NEAR(equiv, x_db, 0.1) << "sc " << i << " ber " << ber;
    }
}

TEST(Dscm, RejectsBadInput)
{
    DscmPlan plan;
    auto four = silent(4, 10);
    const auto w = mux(four, plan);
    EXPECT_THROW(demux_select(w, 4, plan, 10), std::out_of_range);
    EXPECT_THROW(mux(silent(3, 10), plan), std::invalid_argument);
    auto ragged = four;
    ragged[2] = SymbolStream(std::vector<cplx>(11), SymbolRole::payload);
    EXPECT_THROW(mux(ragged, plan), std::invalid_argument);
    EXPECT_THROW(demux_select(w, 0, plan, 11), std::length_error);

    auto overlap = plan;
    overlap.center_hz = {-13.2e9, -4.4e9, 4.0e9, 13.2e9};
    EXPECT_THROW(overlap.validate(), std::invalid_argument);
    auto wide = plan;
    wide.samples_per_symbol = 2;
    EXPECT_THROW(wide.validate(), std::invalid_argument);
    auto weights = plan;
    weights.weights[1] = 0.0;
    EXPECT_THROW(weights.validate(), std::invalid_argument);
    EXPECT_NO_THROW(DscmPlan::uniform(4, 8e9, 0.1, 8).validate());
    EXPECT_THROW(rrc_taps(0.0, 8, 64), std::invalid_argument);
}

TEST(Dscm, UniformPlanMatchesDefault)
{
    const auto u = DscmPlan::uniform(4, 8e9, 0.1, 8);
    const DscmPlan d;
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_NEAR(u.center_hz[i], d.center_hz[i], 1e-3);
    EXPECT_DOUBLE_EQ(d.sample_rate(), 64e9);
}

TEST(FrequencyOffset, EstimatorAccuracy)
{
    const auto t = training_sequence(416, 5);
    const double rs = 8e9;
    for (double f : {-700e6, -3e6, 0.0, 250e6, 900e6}) {
        std::vector<cplx> rx(t.size());
        for (std::size_t l = 0; l < rx.size(); ++l)
            rx[l] = t.values[l] * std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(l) / rs);
        EXPECT_NEAR(estimate_frequency_offset(rx, t.values, rs, 1e9), f, 1e3) << f;
        Rng r(6, tag("foe"));
        for (auto& z : rx)
            z += r.complex_gaussian(0.1);
        // about eight times the Cramer-Rao standard deviation at 10 dB and 416 symbols
        EXPECT_NEAR(estimate_frequency_offset(rx, t.values, rs, 1e9), f, 1e6) << f;
    }
    EXPECT_THROW(estimate_frequency_offset(t.values, std::vector<cplx>(3), rs, 1e9), std::length_error);
    EXPECT_THROW(estimate_frequency_offset(t.values, t.values, rs, 5e9), std::invalid_argument);
}

TEST(FrequencyOffset, DerotateUndoesShift)
{
    const auto s = qam(1000, 7);
    std::vector<cplx> x = s.values;
    const double f = 123e6, fs = 8e9;
    for (std::size_t i = 0; i < x.size(); ++i)
        x[i] *= std::polar(1.0, 2.0 * std::numbers::pi * f * static_cast<double>(i) / fs);
    derotate(x, f, fs);
    EXPECT_LT(evm(x, s.values), 1e-12);
}
