#pragma once

// Independent reference computations used as test oracles. Nothing here calls
// into the library under test.

#include <cmath>
#include <complex>
#include <cstdint>
#include <functional>
#include <numbers>
#include <vector>

namespace oracle {

/// Adaptive Simpson quadrature of f on [a, b] to absolute tolerance eps.
inline double adaptive_simpson(const std::function<double(double)>& f, double a, double b, double eps, int depth = 60)
{
    auto simpson = [&](double l, double r, double fl, double fm, double fr) {
        return (r - l) / 6.0 * (fl + 4.0 * fm + fr);
    };
    std::function<double(double, double, double, double, double, double, double, int)> rec =
        [&](double l, double r, double fl, double fm, double fr, double whole, double tol, int d) {
            const double m = 0.5 * (l + r);
            const double lm = 0.5 * (l + m), rm = 0.5 * (m + r);
            const double flm = f(lm), frm = f(rm);
            const double left = simpson(l, m, fl, flm, fm), right = simpson(m, r, fm, frm, fr);
            if (d <= 0 || std::abs(left + right - whole) <= 15.0 * tol)
                return left + right + (left + right - whole) / 15.0;
            return rec(l, m, fl, flm, fm, left, tol / 2.0, d - 1) + rec(m, r, fm, frm, fr, right, tol / 2.0, d - 1);
        };
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return rec(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), eps, depth);
}

/// erfc(x) = 2/sqrt(pi) * exp(-x^2) * integral_0^inf exp(-2xu - u^2) du. Factoring
/// out exp(-x^2) keeps the integrand O(1), so the tolerance is effectively relative.
inline double erfc_quadrature(double x, double eps = 1e-16)
{
    const double c = 2.0 / std::sqrt(std::numbers::pi);
    if (x < 0.0)
        return 2.0 - erfc_quadrature(-x, eps);
    const double edges[] = {0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 40.0};
    double sum = 0.0;
    for (std::size_t i = 0; i + 1 < std::size(edges); ++i)
        sum += adaptive_simpson([x](double u) { return std::exp(-2.0 * x * u - u * u); }, edges[i], edges[i + 1], eps);
    return c * std::exp(-x * x) * sum;
}

/// P(N(mu, sigma^2) in [lo, hi]) by quadrature of the density; infinite ends allowed.
inline double gaussian_mass(double mu, double sigma, double lo, double hi)
{
    const double span = 40.0 * sigma;
    lo = std::max(lo, mu - span);
    hi = std::min(hi, mu + span);
    if (!(hi > lo))
        return 0.0;
    const double k = 1.0 / (sigma * std::sqrt(2.0 * std::numbers::pi));
    return adaptive_simpson([&](double y) { return k * std::exp(-(y - mu) * (y - mu) / (2.0 * sigma * sigma)); }, lo,
                            hi, 1e-14);
}

/// GF(2) polynomial long division: remainder of msg(x) * x^width modulo poly.
/// msg is MSB first; poly includes the leading x^width term.
inline std::vector<std::uint8_t> gf2_remainder(const std::vector<std::uint8_t>& msg, std::uint32_t poly, unsigned width)
{
    std::vector<std::uint8_t> r(msg);
    r.resize(msg.size() + width, 0);
    std::vector<std::uint8_t> g(width + 1);
    for (unsigned i = 0; i <= width; ++i)
        g[i] = (poly >> (width - i)) & 1u;
    for (std::size_t i = 0; i < msg.size(); ++i)
        if (r[i])
            for (unsigned j = 0; j <= width; ++j)
                r[i + j] ^= g[j];
    return {r.end() - width, r.end()};
}

/// Iterative radix-2 DFT, X[k] = sum x[n] exp(-2 pi j k n / N). N must be a power of two.
inline void fft(std::vector<std::complex<double>>& x)
{
    const std::size_t n = x.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1)
            j ^= bit;
        j ^= bit;
        if (i < j)
            std::swap(x[i], x[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < len / 2; ++k) {
                const auto w = std::polar(1.0, ang * static_cast<double>(k));
                const auto u = x[i + k], v = x[i + k + len / 2] * w;
                x[i + k] = u + v;
                x[i + k + len / 2] = u - v;
            }
    }
}

/// Welch periodogram with a Hann window and 50% overlap, bins in FFT order.
inline std::vector<double> welch_psd(const std::vector<std::complex<double>>& x, std::size_t seg)
{
    std::vector<double> psd(seg, 0.0), win(seg);
    for (std::size_t i = 0; i < seg; ++i)
        win[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(seg));
    std::size_t count = 0;
    for (std::size_t start = 0; start + seg <= x.size(); start += seg / 2, ++count) {
        std::vector<std::complex<double>> b(seg);
        for (std::size_t i = 0; i < seg; ++i)
            b[i] = x[start + i] * win[i];
        fft(b);
        for (std::size_t i = 0; i < seg; ++i)
            psd[i] += std::norm(b[i]);
    }
    for (double& v : psd)
        v /= static_cast<double>(count);
    return psd;
}

} // namespace oracle
