#pragma once

#include <cstddef>

// Data-parallel inner loops shared by the DSP, model and metric code.
// Each kernel has a scalar reference implementation plus SIMD variants
// (AVX2 on x86-64, NEON on aarch64) selected once at runtime. The scalar
// path is the semantic reference; SIMD variants are equivalence-tested
// against it. Transcendental loops (log, exp) stay scalar.
namespace qsep::kernels {

enum class Backend {
    Scalar,
    Avx2,
    Neon,
};

// Backend in effect for subsequent kernel calls. Detection runs once;
// the QSEP_KERNELS environment variable ("scalar", "avx2", "neon")
// overrides it before first use.
Backend active_backend();
const char* backend_name(Backend b);

// Force a backend (tests use this to compare variants). Throws if the
// requested backend is not supported by the running CPU.
void force_backend(Backend b);

// sum_i a[i] * b[i]
double dot(const double* a, const double* b, size_t n);

// sum_i x[i]
double sum(const double* x, size_t n);

// sum_i x[i]^2
double sum_squares(const double* x, size_t n);

// y[i] += alpha * x[i]
void axpy(double alpha, const double* x, double* y, size_t n);

// x[i] *= alpha
void scale(double alpha, double* x, size_t n);

// out[i] = a[i] + b[i]
void add(const double* a, const double* b, double* out, size_t n);

// out[i] = a[i] - b[i]
void sub(const double* a, const double* b, double* out, size_t n);

// out[i] = a[i] * b[i]
void mul(const double* a, const double* b, double* out, size_t n);

// out[i] = sqrt(xy[2i]^2 + xy[2i+1]^2); xy holds n interleaved (re, im) pairs,
// the layout of a std::complex<double> array.
void complex_magnitude(const double* xy, double* out, size_t n);

// One Adam step over a parameter tensor. c1 and c2 are the precomputed
// bias-correction factors 1/(1-beta1^t) and 1/(1-beta2^t).
void adam_update(double* param, const double* grad, double* m, double* v, size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2);

} // namespace qsep::kernels
