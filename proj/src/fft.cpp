#include "spoofloc/fft.hpp"

#include <cmath>

#include "spoofloc/common.hpp"

namespace spoofloc {
namespace {

using cd = std::complex<double>;

bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

std::size_t next_pow2(std::size_t n) {
    std::size_t p = 1;
    while (p < n) p <<= 1;
    return p;
}

void fft_radix2(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * M_PI / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const cd wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            cd w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const cd u = a[i + k];
                const cd v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
    if (inverse) {
        for (cd& x : a) x /= static_cast<double>(n);
    }
}

// Bluestein: DFT of arbitrary length as a convolution, evaluated with a
// power-of-two FFT of size >= 2n-1.
void fft_bluestein(std::vector<cd>& a, bool inverse) {
    const std::size_t n = a.size();
    const std::size_t m = next_pow2(2 * n - 1);
    const double sign = inverse ? 1.0 : -1.0;

    std::vector<cd> chirp(n);
    for (std::size_t k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the angle argument small for long inputs.
        const std::size_t k2 = (k * k) % (2 * n);
        const double ang = M_PI * static_cast<double>(k2) / static_cast<double>(n);
        chirp[k] = cd(std::cos(ang), sign * std::sin(ang));
    }

    std::vector<cd> x(m, cd(0.0, 0.0));
    std::vector<cd> y(m, cd(0.0, 0.0));
    for (std::size_t k = 0; k < n; ++k) x[k] = a[k] * chirp[k];
    y[0] = std::conj(chirp[0]);
    for (std::size_t k = 1; k < n; ++k) {
        y[k] = std::conj(chirp[k]);
        y[m - k] = std::conj(chirp[k]);
    }

    fft_radix2(x, false);
    fft_radix2(y, false);
    for (std::size_t k = 0; k < m; ++k) x[k] *= y[k];
    fft_radix2(x, true);

    for (std::size_t k = 0; k < n; ++k) a[k] = x[k] * chirp[k];
    if (inverse) {
        for (cd& v : a) v /= static_cast<double>(n);
    }
}

} // namespace

void fft(std::vector<cd>& data, bool inverse) {
    if (data.empty()) fail_validation("fft: empty input");
    if (data.size() == 1) return;
    if (is_pow2(data.size())) {
        fft_radix2(data, inverse);
    } else {
        fft_bluestein(data, inverse);
    }
}

std::vector<cd> real_fft(const std::vector<double>& frame) {
    if (frame.empty()) fail_validation("real_fft: empty input");
    std::vector<cd> buf(frame.size());
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = cd(frame[i], 0.0);
    fft(buf, false);
    buf.resize(frame.size() / 2 + 1);
    return buf;
}

} // namespace spoofloc
