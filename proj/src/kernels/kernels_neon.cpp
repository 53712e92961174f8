// NEON kernel variants for aarch64 (float64x2 lanes).

#include "kernel_table.h"

#if defined(QSEP_HAVE_NEON)

#include <arm_neon.h>
#include <cmath>

namespace qsep::kernels {
namespace {

double dot_neon(const double* a, const double* b, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vfmaq_f64(acc, vld1q_f64(a + i), vld1q_f64(b + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += a[i] * b[i];
    return r;
}

double sum_neon(const double* x, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) acc = vaddq_f64(acc, vld1q_f64(x + i));
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i];
    return r;
}

double sum_squares_neon(const double* x, size_t n) {
    float64x2_t acc = vdupq_n_f64(0.0);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t v = vld1q_f64(x + i);
        acc = vfmaq_f64(acc, v, v);
    }
    double r = vaddvq_f64(acc);
    for (; i < n; ++i) r += x[i] * x[i];
    return r;
}

void axpy_neon(double alpha, const double* x, double* y, size_t n) {
    float64x2_t va = vdupq_n_f64(alpha);
    size_t i = 0;
    for (; i + 2 <= n; i += 2)
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    for (; i < n; ++i) y[i] += alpha * x[i];
}

void scale_neon(double alpha, double* x, size_t n) {
    float64x2_t va = vdupq_n_f64(alpha);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(x + i, vmulq_f64(va, vld1q_f64(x + i)));
    for (; i < n; ++i) x[i] *= alpha;
}

void add_neon(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vaddq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_neon(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vsubq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_neon(const double* a, const double* b, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) vst1q_f64(out + i, vmulq_f64(vld1q_f64(a + i), vld1q_f64(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void complex_magnitude_neon(const double* xy, double* out, size_t n) {
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t lo = vld1q_f64(xy + 2 * i);      // re0 im0
        float64x2_t hi = vld1q_f64(xy + 2 * i + 2);  // re1 im1
        vst1q_f64(out + i, vsqrtq_f64(vpaddq_f64(vmulq_f64(lo, lo), vmulq_f64(hi, hi))));
    }
    for (; i < n; ++i) {
        double re = xy[2 * i], im = xy[2 * i + 1];
        out[i] = std::sqrt(re * re + im * im);
    }
}

void adam_update_neon(double* param, const double* grad, double* m, double* v, size_t n,
                      double lr, double beta1, double beta2, double eps, double c1, double c2) {
    float64x2_t vb1 = vdupq_n_f64(beta1);
    float64x2_t vb2 = vdupq_n_f64(beta2);
    float64x2_t vone_b1 = vdupq_n_f64(1.0 - beta1);
    float64x2_t vone_b2 = vdupq_n_f64(1.0 - beta2);
    float64x2_t vc1 = vdupq_n_f64(c1);
    float64x2_t vc2 = vdupq_n_f64(c2);
    float64x2_t vlr = vdupq_n_f64(lr);
    float64x2_t veps = vdupq_n_f64(eps);
    size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        float64x2_t g = vld1q_f64(grad + i);
        float64x2_t mi = vfmaq_f64(vmulq_f64(vone_b1, g), vb1, vld1q_f64(m + i));
        float64x2_t vi = vfmaq_f64(vmulq_f64(vone_b2, vmulq_f64(g, g)), vb2, vld1q_f64(v + i));
        vst1q_f64(m + i, mi);
        vst1q_f64(v + i, vi);
        float64x2_t mhat = vmulq_f64(mi, vc1);
        float64x2_t vhat = vmulq_f64(vi, vc2);
        float64x2_t denom = vaddq_f64(vsqrtq_f64(vhat), veps);
        float64x2_t step = vdivq_f64(vmulq_f64(vlr, mhat), denom);
        vst1q_f64(param + i, vsubq_f64(vld1q_f64(param + i), step));
    }
    for (; i < n; ++i) {
        double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        param[i] -= lr * (m[i] * c1) / (std::sqrt(v[i] * c2) + eps);
    }
}

const KernelTable kNeonTable = {
    dot_neon,    sum_neon, sum_squares_neon,       axpy_neon,        scale_neon,
    add_neon,    sub_neon, mul_neon,               complex_magnitude_neon,
    adam_update_neon,
};

} // namespace

const KernelTable* neon_table() { return &kNeonTable; }

} // namespace qsep::kernels

#endif // QSEP_HAVE_NEON
