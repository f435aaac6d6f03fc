#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace spoofloc {

/// In-place complex FFT. Length may be any positive integer: power-of-two
/// sizes run radix-2 Cooley-Tukey, everything else goes through Bluestein's
/// chirp-z transform. Inverse applies the 1/n scale.
void fft(std::vector<std::complex<double>>& data, bool inverse = false);

/// One-sided spectrum of a real frame: bins 0..n/2 inclusive.
std::vector<std::complex<double>> real_fft(const std::vector<double>& frame);

} // namespace spoofloc
