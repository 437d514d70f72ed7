#include "robkit/kernels.hpp"

// This translation unit is the only one built with -mavx2 -mfma. Callers must
// gate on supported_at_runtime() before entering any kernel here.

#include <limits>

#if defined(ROBKIT_HAVE_AVX2)
#include <immintrin.h>
#endif

namespace robkit::kernels::avx2 {

bool compiled_in() {
#if defined(ROBKIT_HAVE_AVX2)
    return true;
#else
    return false;
#endif
}

bool supported_at_runtime() {
#if defined(ROBKIT_HAVE_AVX2) && defined(__GNUC__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

#if defined(ROBKIT_HAVE_AVX2)

namespace {
inline double hsum256(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}
}  // namespace

double dot(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double acc = hsum256(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(double a, const double* x, double* y, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d yv = _mm256_loadu_pd(y + i);
        yv = _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), yv);
        _mm256_storeu_pd(y + i, yv);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale(double* x, double a, std::size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), av));
    }
    for (; i < n; ++i) x[i] *= a;
}

double sum(const double* x, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double acc = hsum256(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) acc += x[i];
    return acc;
}

double l2_norm_sq(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        acc = _mm256_fmadd_pd(v, v, acc);
    }
    double s = hsum256(acc);
    for (; i < n; ++i) s += x[i] * x[i];
    return s;
}

double max_value(const double* x, std::size_t n) {
    if (n == 0) return -std::numeric_limits<double>::infinity();
    std::size_t i = 0;
    double m = -std::numeric_limits<double>::infinity();
    if (n >= 4) {
        __m256d mv = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) mv = _mm256_max_pd(mv, _mm256_loadu_pd(x + i));
        __m128d lo = _mm256_castpd256_pd128(mv);
        __m128d hi = _mm256_extractf128_pd(mv, 1);
        lo = _mm_max_pd(lo, hi);
        __m128d swapped = _mm_unpackhi_pd(lo, lo);
        m = _mm_cvtsd_f64(_mm_max_sd(lo, swapped));
    }
    for (; i < n; ++i)
        if (x[i] > m) m = x[i];
    return m;
}

#else  // !ROBKIT_HAVE_AVX2: keep the symbols, forward to scalar.

double dot(const double* a, const double* b, std::size_t n) { return scalar::dot(a, b, n); }
void axpy(double a, const double* x, double* y, std::size_t n) { scalar::axpy(a, x, y, n); }
void scale(double* x, double a, std::size_t n) { scalar::scale(x, a, n); }
double sum(const double* x, std::size_t n) { return scalar::sum(x, n); }
double l2_norm_sq(const double* x, std::size_t n) { return scalar::l2_norm_sq(x, n); }
double max_value(const double* x, std::size_t n) { return scalar::max_value(x, n); }

#endif

}  // namespace robkit::kernels::avx2
