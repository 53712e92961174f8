#include "qsep/fft.h"

#include <cmath>
#include <numbers>

#include "qsep/error.h"

namespace qsep::fft {

namespace {

void transform(std::vector<std::complex<double>>& a, bool invert) {
    const size_t n = a.size();
    if (n == 0) throw_usage("fft: empty input");
    if ((n & (n - 1)) != 0) throw_usage("fft: size must be a power of two");

    // Bit-reversal permutation.
    for (size_t i = 1, j = 0; i < n; ++i) {
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }

    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * std::numbers::pi / double(len) * (invert ? 1.0 : -1.0);
        const std::complex<double> wlen(std::cos(ang), std::sin(ang));
        for (size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (size_t j = 0; j < len / 2; ++j) {
                std::complex<double> u = a[i + j];
                std::complex<double> v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }

    if (invert) {
        const double inv_n = 1.0 / double(n);
        for (auto& x : a) x *= inv_n;
    }
}

} // namespace

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

void forward(std::vector<std::complex<double>>& a) { transform(a, false); }

void inverse(std::vector<std::complex<double>>& a) { transform(a, true); }

std::vector<std::complex<double>> real_forward(const std::vector<double>& x) {
    const size_t n = x.size();
    std::vector<std::complex<double>> a(n);
    for (size_t i = 0; i < n; ++i) a[i] = {x[i], 0.0};
    forward(a);
    a.resize(n / 2 + 1);
    return a;
}

std::vector<double> real_inverse(const std::vector<std::complex<double>>& half, int n) {
    if (!is_power_of_two(n)) throw_usage("fft: size must be a power of two");
    if (half.size() != size_t(n / 2 + 1)) throw_usage("fft: bin count does not match signal size");
    std::vector<std::complex<double>> a(static_cast<size_t>(n));
    for (int k = 0; k <= n / 2; ++k) a[size_t(k)] = half[size_t(k)];
    for (int k = 1; k < n / 2; ++k) a[size_t(n - k)] = std::conj(half[size_t(k)]);
    inverse(a);
    std::vector<double> out(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) out[size_t(i)] = a[size_t(i)].real();
    return out;
}

} // namespace qsep::fft
