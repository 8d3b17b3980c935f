#include "ablatron/kernels.hpp"

#include <cmath>

namespace ablatron::kernels::detail {
namespace {

void gemm_scalar(std::size_t m, std::size_t n, std::size_t k,
                 const float* a, std::size_t lda,
                 const float* b, std::size_t ldb,
                 float* c, std::size_t ldc, bool accumulate)
{
    for (std::size_t i = 0; i < m; ++i) {
        float* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0f;
        }
        const float* arow = a + i * lda;
        for (std::size_t p = 0; p < k; ++p) {
            const float av = arow[p];
            const float* brow = b + p * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] = std::fmaf(av, brow[j], crow[j]);
        }
    }
}

void axpy_scalar(std::size_t n, float alpha, const float* x, float* y)
{
    for (std::size_t i = 0; i < n; ++i) y[i] = std::fmaf(alpha, x[i], y[i]);
}

double squared_distance_scalar(const float* a, const float* b, std::size_t n)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

void tsne_row_scalar(std::size_t n, std::size_t i, const double* y0, const double* y1,
                     const double* p_row, bool with_kl, TsneRowTerms& out)
{
    out = TsneRowTerms{};
    const double xi = y0[i];
    const double yi = y1[i];
    for (std::size_t j = 0; j < n; ++j) {
        if (j == i) continue;
        const double dx = xi - y0[j];
        const double dy = yi - y1[j];
        const double d2 = dx * dx + dy * dy;
        const double q = 1.0 / (1.0 + d2);
        const double pq = p_row[j] * q;
        const double qq = q * q;
        out.z += q;
        out.attr[0] += pq * dx;
        out.attr[1] += pq * dy;
        out.rep[0] += qq * dx;
        out.rep[1] += qq * dy;
        if (with_kl && p_row[j] > 0.0) out.p_log_q -= p_row[j] * std::log1p(d2);
    }
}

constexpr KernelTable kScalar{Isa::scalar, gemm_scalar, axpy_scalar, squared_distance_scalar,
                              tsne_row_scalar};

}  // namespace

const KernelTable& scalar_table() noexcept { return kScalar; }

}  // namespace ablatron::kernels::detail
