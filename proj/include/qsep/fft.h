#pragma once

#include <complex>
#include <vector>

namespace qsep::fft {

bool is_power_of_two(int n);

// In-place radix-2 Cooley-Tukey transform. Size must be a power of two.
void forward(std::vector<std::complex<double>>& a);

// Inverse transform including the 1/n normalization.
void inverse(std::vector<std::complex<double>>& a);

// Forward transform of a real signal; returns the n/2 + 1 nonnegative
// frequency bins (the rest is redundant by Hermitian symmetry).
std::vector<std::complex<double>> real_forward(const std::vector<double>& x);

// Inverse of real_forward: expands n/2 + 1 bins by Hermitian symmetry and
// returns the n real samples.
std::vector<double> real_inverse(const std::vector<std::complex<double>>& half, int n);

} // namespace qsep::fft
