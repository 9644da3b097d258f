/* Vectorisable element-wise maps for the compiled kernels.
 *
 * With OpenMP SIMD enabled, GCC + glibc route these loops to libmvec's
 * vector exp. Other compilers get a plain scalar loop with the same results
 * up to libm rounding.
 */
#ifndef GREATSCORE_SIMD_H
#define GREATSCORE_SIMD_H

#include <math.h>
#include <stddef.h>

#if defined(__GNUC__) && !defined(__clang__) && defined(__x86_64__) && defined(_OPENMP)
#pragma omp declare simd notinbranch
extern double exp(double);
#define GS_SIMD _Pragma("omp simd")
#else
#define GS_SIMD
#endif

/* out[j] = exp(x[j] / t) */
static inline void gs_exp_div(const double *restrict x, double t, double *restrict out, ptrdiff_t len)
{
    GS_SIMD
    for (ptrdiff_t j = 0; j < len; j++)
        out[j] = exp(x[j] / t);
}

/* out[j] = sigmoid(x[j] / t), evaluated without overflow on either side */
static inline void gs_sigmoid_div(const double *restrict x, double t, double *restrict out, ptrdiff_t len)
{
    GS_SIMD
    for (ptrdiff_t j = 0; j < len; j++) {
        double z = x[j] / t;
        double e = exp(-fabs(z));
        out[j] = z >= 0.0 ? 1.0 / (1.0 + e) : e / (1.0 + e);
    }
}

#endif
