#pragma once

#include <cstddef>
#include <span>
#include <string>

// Dense double-precision vector kernels used by the tf-idf index, the linear
// baselines and the tiny neural models. Every kernel has a scalar reference
// implementation and (on x86-64) an AVX2/FMA variant. The backend is picked
// once at startup from CPUID and can be forced with ROBKIT_SIMD=scalar|avx2.
// SIMD variants reorder floating-point sums, so results may differ from the
// scalar reference by rounding noise; the equivalence tests bound that drift.

namespace robkit::kernels {

enum class Backend { Scalar, Avx2 };

Backend active_backend();
std::string backend_name(Backend b);

// Dispatching entry points, resolved on first use.
double dot(std::span<const double> a, std::span<const double> b);
void axpy(double a, std::span<const double> x, std::span<double> y);  // y += a*x
void scale(std::span<double> x, double a);                            // x *= a
double sum(std::span<const double> x);
double l2_norm_sq(std::span<const double> x);
double max_value(std::span<const double> x);  // -inf for empty input

namespace scalar {
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double* x, double a, std::size_t n);
double sum(const double* x, std::size_t n);
double l2_norm_sq(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
}  // namespace scalar

namespace avx2 {
bool compiled_in();
bool supported_at_runtime();
double dot(const double* a, const double* b, std::size_t n);
void axpy(double a, const double* x, double* y, std::size_t n);
void scale(double* x, double a, std::size_t n);
double sum(const double* x, std::size_t n);
double l2_norm_sq(const double* x, std::size_t n);
double max_value(const double* x, std::size_t n);
}  // namespace avx2

}  // namespace robkit::kernels
