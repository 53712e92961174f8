#pragma once

#include <cstddef>

namespace qsep::kernels {

// One function pointer per kernel; each backend fills a table.
struct KernelTable {
    double (*dot)(const double*, const double*, size_t);
    double (*sum)(const double*, size_t);
    double (*sum_squares)(const double*, size_t);
    void (*axpy)(double, const double*, double*, size_t);
    void (*scale)(double, double*, size_t);
    void (*add)(const double*, const double*, double*, size_t);
    void (*sub)(const double*, const double*, double*, size_t);
    void (*mul)(const double*, const double*, double*, size_t);
    void (*complex_magnitude)(const double*, double*, size_t);
    void (*adam_update)(double*, const double*, double*, double*, size_t,
                        double, double, double, double, double, double);
};

const KernelTable* scalar_table();
#ifdef QSEP_HAVE_AVX2
const KernelTable* avx2_table();
#endif
#ifdef QSEP_HAVE_NEON
const KernelTable* neon_table();
#endif

} // namespace qsep::kernels
