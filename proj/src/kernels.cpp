#include "robkit/kernels.hpp"

#include <cstdlib>
#include <cstring>

namespace robkit::kernels {

namespace {

Backend resolve_backend() {
    if (const char* env = std::getenv("ROBKIT_SIMD")) {
        if (std::strcmp(env, "scalar") == 0) return Backend::Scalar;
        if (std::strcmp(env, "avx2") == 0 && avx2::supported_at_runtime()) return Backend::Avx2;
        // Unknown or unsupported value falls through to auto-detection.
    }
    return avx2::supported_at_runtime() ? Backend::Avx2 : Backend::Scalar;
}

struct Table {
    double (*dot)(const double*, const double*, std::size_t);
    void (*axpy)(double, const double*, double*, std::size_t);
    void (*scale)(double*, double, std::size_t);
    double (*sum)(const double*, std::size_t);
    double (*l2_norm_sq)(const double*, std::size_t);
    double (*max_value)(const double*, std::size_t);
};

const Table& table() {
    static const Table t = [] {
        if (resolve_backend() == Backend::Avx2) {
            return Table{avx2::dot, avx2::axpy, avx2::scale,
                         avx2::sum, avx2::l2_norm_sq, avx2::max_value};
        }
        return Table{scalar::dot, scalar::axpy, scalar::scale,
                     scalar::sum, scalar::l2_norm_sq, scalar::max_value};
    }();
    return t;
}

}  // namespace

Backend active_backend() {
    static const Backend b = resolve_backend();
    return b;
}

std::string backend_name(Backend b) {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

double dot(std::span<const double> a, std::span<const double> b) {
    return table().dot(a.data(), b.data(), a.size() < b.size() ? a.size() : b.size());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
    table().axpy(a, x.data(), y.data(), x.size() < y.size() ? x.size() : y.size());
}

void scale(std::span<double> x, double a) { table().scale(x.data(), a, x.size()); }

double sum(std::span<const double> x) { return table().sum(x.data(), x.size()); }

double l2_norm_sq(std::span<const double> x) { return table().l2_norm_sq(x.data(), x.size()); }

double max_value(std::span<const double> x) { return table().max_value(x.data(), x.size()); }

}  // namespace robkit::kernels
