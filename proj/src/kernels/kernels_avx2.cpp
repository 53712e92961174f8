// AVX2/FMA kernel variants. This translation unit is compiled with
// -mavx2 -mfma and must only be reached through the runtime dispatcher.

#include "kernel_table.h"

#if defined(QSEP_HAVE_AVX2)

#include <cmath>
#include <immintrin.h>

namespace qsep::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d shuf = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, shuf));
}

double dot_avx2(const double* a, const double* b, size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4)
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_avx2(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double sum_squares_avx2(const double* x, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double r = hsum(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

void axpy_avx2(double alpha, const double* x, double* y, size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d r = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i));
        _mm256_storeu_pd(y + i, r);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(double alpha, double* x, size_t n) {
    __m256d va = _mm256_set1_pd(alpha);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(x + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void add_avx2(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_avx2(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_avx2(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void complex_magnitude_avx2(const double* xy, double* out, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d lo = _mm256_loadu_pd(xy + 2 * i);      // re0 im0 re1 im1
        __m256d hi = _mm256_loadu_pd(xy + 2 * i + 4);  // re2 im2 re3 im3
        __m256d s = _mm256_hadd_pd(_mm256_mul_pd(lo, lo), _mm256_mul_pd(hi, hi));
        // hadd interleaves lanes as [m0 m2 m1 m3]; restore order.
        s = _mm256_permute4x64_pd(s, 0xD8);
        _mm256_storeu_pd(out + i, _mm256_sqrt_pd(s));
    }
    for (; i < n; ++i) {
        double re = xy[2 * i], im = xy[2 * i + 1];
        out[i] = std::sqrt(re * re + im * im);
    }
}

void adam_update_avx2(double* param, const double* grad, double* m, double* v, size_t n,
                      double lr, double beta1, double beta2, double eps, double c1, double c2) {
    __m256d vb1 = _mm256_set1_pd(beta1);
    __m256d vb2 = _mm256_set1_pd(beta2);
    __m256d vone_b1 = _mm256_set1_pd(1.0 - beta1);
    __m256d vone_b2 = _mm256_set1_pd(1.0 - beta2);
    __m256d vc1 = _mm256_set1_pd(c1);
    __m256d vc2 = _mm256_set1_pd(c2);
    __m256d vlr = _mm256_set1_pd(lr);
    __m256d veps = _mm256_set1_pd(eps);
    size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d g = _mm256_loadu_pd(grad + i);
        __m256d mi = _mm256_fmadd_pd(vb1, _mm256_loadu_pd(m + i), _mm256_mul_pd(vone_b1, g));
        __m256d vi = _mm256_fmadd_pd(vb2, _mm256_loadu_pd(v + i),
                                     _mm256_mul_pd(vone_b2, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        __m256d mhat = _mm256_mul_pd(mi, vc1);
        __m256d vhat = _mm256_mul_pd(vi, vc2);
        __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
        double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        param[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
}

const KernelTable kAvx2Table = {
    dot_avx2,    sum_avx2, sum_squares_avx2,       axpy_avx2,        scale_avx2,
    add_avx2,    sub_avx2, mul_avx2,               complex_magnitude_avx2,
    adam_update_avx2,
};

} // namespace

const KernelTable* avx2_table() { return &kAvx2Table; }

} // namespace qsep::kernels

#endif // QSEP_HAVE_AVX2
