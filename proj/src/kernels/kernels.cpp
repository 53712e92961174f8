#include "qsep/kernels.h"

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "qsep/error.h"
#include "kernel_table.h"

namespace qsep::kernels {

// ---------------------------------------------------------------------------
// Scalar reference kernels. These define the semantics; SIMD variants must
// agree with them within reassociation tolerance.
// ---------------------------------------------------------------------------

namespace {

double dot_scalar(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_scalar(const double* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double sum_squares_scalar(const double* x, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += x[i] * x[i];
    return acc;
}

void axpy_scalar(double alpha, const double* x, double* y, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(double alpha, double* x, size_t n) {
    for (size_t i = 0; i < n; ++i) x[i] *= alpha;
}

void add_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_scalar(const double* a, const double* b, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void complex_magnitude_scalar(const double* xy, double* out, size_t n) {
    for (size_t i = 0; i < n; ++i) {
        double re = xy[2 * i], im = xy[2 * i + 1];
        out[i] = std::sqrt(re * re + im * im);
    }
}

void adam_update_scalar(double* param, const double* grad, double* m, double* v, size_t n,
                        double lr, double beta1, double beta2, double eps, double c1, double c2) {
    for (size_t i = 0; i < n; ++i) {
        double g = grad[i];
        m[i] = beta1 * m[i] + (1.0 - beta1) * g;
        v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
        double mhat = m[i] * c1;
        double vhat = v[i] * c2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

const KernelTable kScalarTable = {
    dot_scalar,    sum_scalar, sum_squares_scalar,       axpy_scalar,        scale_scalar,
    add_scalar,    sub_scalar, mul_scalar,               complex_magnitude_scalar,
    adam_update_scalar,
};

} // namespace

const KernelTable* scalar_table() { return &kScalarTable; }

// ---------------------------------------------------------------------------
// Runtime backend selection.
// ---------------------------------------------------------------------------

namespace {

bool backend_supported(Backend b) {
    switch (b) {
        case Backend::Scalar:
            return true;
        case Backend::Avx2:
#if defined(QSEP_HAVE_AVX2)
            return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
            return false;
#endif
        case Backend::Neon:
#if defined(QSEP_HAVE_NEON)
            return true; // baseline on aarch64
#else
            return false;
#endif
    }
    return false;
}

const KernelTable* table_for(Backend b) {
    switch (b) {
#if defined(QSEP_HAVE_AVX2)
        case Backend::Avx2:
            return avx2_table();
#endif
#if defined(QSEP_HAVE_NEON)
        case Backend::Neon:
            return neon_table();
#endif
        default:
            return scalar_table();
    }
}

Backend detect_backend() {
    if (const char* env = std::getenv("QSEP_KERNELS")) {
        std::string want(env);
        if (want == "scalar") return Backend::Scalar;
        if (want == "avx2" && backend_supported(Backend::Avx2)) return Backend::Avx2;
        if (want == "neon" && backend_supported(Backend::Neon)) return Backend::Neon;
        // Unknown or unsupported request falls through to detection.
    }
    if (backend_supported(Backend::Avx2)) return Backend::Avx2;
    if (backend_supported(Backend::Neon)) return Backend::Neon;
    return Backend::Scalar;
}

struct Dispatch {
    Backend backend;
    const KernelTable* table;
    Dispatch() : backend(detect_backend()), table(table_for(backend)) {}
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

} // namespace

Backend active_backend() { return dispatch().backend; }

const char* backend_name(Backend b) {
    switch (b) {
        case Backend::Scalar: return "scalar";
        case Backend::Avx2: return "avx2";
        case Backend::Neon: return "neon";
    }
    return "?";
}

void force_backend(Backend b) {
    if (!backend_supported(b))
        throw_usage(std::string("kernel backend not supported on this CPU: ") + backend_name(b));
    dispatch().backend = b;
    dispatch().table = table_for(b);
}

// ---------------------------------------------------------------------------
// Public entry points.
// ---------------------------------------------------------------------------

double dot(const double* a, const double* b, size_t n) { return dispatch().table->dot(a, b, n); }
double sum(const double* x, size_t n) { return dispatch().table->sum(x, n); }
double sum_squares(const double* x, size_t n) { return dispatch().table->sum_squares(x, n); }
void axpy(double alpha, const double* x, double* y, size_t n) { dispatch().table->axpy(alpha, x, y, n); }
void scale(double alpha, double* x, size_t n) { dispatch().table->scale(alpha, x, n); }
void add(const double* a, const double* b, double* out, size_t n) { dispatch().table->add(a, b, out, n); }
void sub(const double* a, const double* b, double* out, size_t n) { dispatch().table->sub(a, b, out, n); }
void mul(const double* a, const double* b, double* out, size_t n) { dispatch().table->mul(a, b, out, n); }
void complex_magnitude(const double* xy, double* out, size_t n) {
    dispatch().table->complex_magnitude(xy, out, n);
}
void adam_update(double* param, const double* grad, double* m, double* v, size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2) {
    dispatch().table->adam_update(param, grad, m, v, n, lr, beta1, beta2, eps, c1, c2);
}

} // namespace qsep::kernels
