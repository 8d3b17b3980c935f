#include "ablatron/kernels.hpp"

#include <immintrin.h>

#include <cmath>

namespace ablatron::kernels::detail {
namespace {

inline __m256i tail_mask(std::size_t remaining)
{
    alignas(32) static const int kLanes[16] = {-1, -1, -1, -1, -1, -1, -1, -1, 0, 0, 0, 0, 0, 0, 0, 0};
    return _mm256_loadu_si256(reinterpret_cast<const __m256i*>(kLanes + 8 - remaining));
}

// R rows of C, 16 columns starting at j.
template <int R>
inline void block16(std::size_t k, const float* a, std::size_t lda, const float* b, std::size_t ldb,
                    float* c, std::size_t ldc, bool accumulate)
{
    __m256 acc[R][2];
    for (int r = 0; r < R; ++r) {
        acc[r][0] = accumulate ? _mm256_loadu_ps(c + r * ldc) : _mm256_setzero_ps();
        acc[r][1] = accumulate ? _mm256_loadu_ps(c + r * ldc + 8) : _mm256_setzero_ps();
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_loadu_ps(b + p * ldb);
        const __m256 b1 = _mm256_loadu_ps(b + p * ldb + 8);
        for (int r = 0; r < R; ++r) {
            const __m256 av = _mm256_broadcast_ss(a + r * lda + p);
            acc[r][0] = _mm256_fmadd_ps(av, b0, acc[r][0]);
            acc[r][1] = _mm256_fmadd_ps(av, b1, acc[r][1]);
        }
    }
    for (int r = 0; r < R; ++r) {
        _mm256_storeu_ps(c + r * ldc, acc[r][0]);
        _mm256_storeu_ps(c + r * ldc + 8, acc[r][1]);
    }
}

// R rows of C, up to 8 columns starting at j (masked when width < 8).
template <int R>
inline void block8(std::size_t k, std::size_t width, const float* a, std::size_t lda, const float* b,
                   std::size_t ldb, float* c, std::size_t ldc, bool accumulate)
{
    const __m256i mask = tail_mask(width);
    __m256 acc[R];
    for (int r = 0; r < R; ++r) {
        acc[r] = accumulate ? _mm256_maskload_ps(c + r * ldc, mask) : _mm256_setzero_ps();
    }
    for (std::size_t p = 0; p < k; ++p) {
        const __m256 b0 = _mm256_maskload_ps(b + p * ldb, mask);
        for (int r = 0; r < R; ++r) {
            acc[r] = _mm256_fmadd_ps(_mm256_broadcast_ss(a + r * lda + p), b0, acc[r]);
        }
    }
    for (int r = 0; r < R; ++r) _mm256_maskstore_ps(c + r * ldc, mask, acc[r]);
}

template <int R>
inline void row_panel(std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
                      std::size_t ldb, float* c, std::size_t ldc, bool accumulate)
{
    std::size_t j = 0;
    for (; j + 16 <= n; j += 16) block16<R>(k, a, lda, b + j, ldb, c + j, ldc, accumulate);
    for (; j < n; j += 8) {
        const std::size_t width = n - j < 8 ? n - j : 8;
        block8<R>(k, width, a, lda, b + j, ldb, c + j, ldc, accumulate);
    }
}

void gemm_avx2(std::size_t m, std::size_t n, std::size_t k,
               const float* a, std::size_t lda,
               const float* b, std::size_t ldb,
               float* c, std::size_t ldc, bool accumulate)
{
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) row_panel<4>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
    for (; i < m; ++i) row_panel<1>(n, k, a + i * lda, lda, b, ldb, c + i * ldc, ldc, accumulate);
}

void axpy_avx2(std::size_t n, float alpha, const float* x, float* y)
{
    const __m256 av = _mm256_set1_ps(alpha);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(av, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    }
    for (; i < n; ++i) y[i] = std::fmaf(alpha, x[i], y[i]);
}

inline double hsum(__m256d v)
{
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

double squared_distance_avx2(const float* a, const float* b, std::size_t n)
{
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        const __m256d d0 = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i)),
                                         _mm256_cvtps_pd(_mm_loadu_ps(b + i)));
        const __m256d d1 = _mm256_sub_pd(_mm256_cvtps_pd(_mm_loadu_ps(a + i + 4)),
                                         _mm256_cvtps_pd(_mm_loadu_ps(b + i + 4)));
        acc0 = _mm256_fmadd_pd(d0, d0, acc0);
        acc1 = _mm256_fmadd_pd(d1, d1, acc1);
    }
    double acc = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        acc += d * d;
    }
    return acc;
}

void tsne_row_avx2(std::size_t n, std::size_t i, const double* y0, const double* y1,
                   const double* p_row, bool with_kl, TsneRowTerms& out)
{
    out = TsneRowTerms{};
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d xi = _mm256_set1_pd(y0[i]);
    const __m256d yi = _mm256_set1_pd(y1[i]);
    __m256d z = _mm256_setzero_pd();
    __m256d ax = _mm256_setzero_pd();
    __m256d ay = _mm256_setzero_pd();
    __m256d rx = _mm256_setzero_pd();
    __m256d ry = _mm256_setzero_pd();

    // j == i contributes q = 1 and zero displacement; removed from z below.
    std::size_t j = 0;
    for (; j + 4 <= n; j += 4) {
        const __m256d dx = _mm256_sub_pd(xi, _mm256_loadu_pd(y0 + j));
        const __m256d dy = _mm256_sub_pd(yi, _mm256_loadu_pd(y1 + j));
        const __m256d d2 = _mm256_add_pd(_mm256_mul_pd(dx, dx), _mm256_mul_pd(dy, dy));
        const __m256d q = _mm256_div_pd(one, _mm256_add_pd(one, d2));
        const __m256d pq = _mm256_mul_pd(_mm256_loadu_pd(p_row + j), q);
        const __m256d qq = _mm256_mul_pd(q, q);
        z = _mm256_add_pd(z, q);
        ax = _mm256_fmadd_pd(pq, dx, ax);
        ay = _mm256_fmadd_pd(pq, dy, ay);
        rx = _mm256_fmadd_pd(qq, dx, rx);
        ry = _mm256_fmadd_pd(qq, dy, ry);
    }
    out.z = hsum(z);
    out.attr[0] = hsum(ax);
    out.attr[1] = hsum(ay);
    out.rep[0] = hsum(rx);
    out.rep[1] = hsum(ry);
    if (i < j) out.z -= 1.0;
    for (; j < n; ++j) {
        if (j == i) continue;
        const double dx = y0[i] - y0[j];
        const double dy = y1[i] - y1[j];
        const double q = 1.0 / (1.0 + dx * dx + dy * dy);
        const double pq = p_row[j] * q;
        out.z += q;
        out.attr[0] += pq * dx;
        out.attr[1] += pq * dy;
        out.rep[0] += q * q * dx;
        out.rep[1] += q * q * dy;
    }
    if (with_kl) {
        for (std::size_t t = 0; t < n; ++t) {
            if (t == i || p_row[t] <= 0.0) continue;
            const double dx = y0[i] - y0[t];
            const double dy = y1[i] - y1[t];
            out.p_log_q -= p_row[t] * std::log1p(dx * dx + dy * dy);
        }
    }
}

constexpr KernelTable kAvx2{Isa::avx2, gemm_avx2, axpy_avx2, squared_distance_avx2, tsne_row_avx2};

}  // namespace

const KernelTable& avx2_table() noexcept { return kAvx2; }

}  // namespace ablatron::kernels::detail
