#pragma once

// Arithmetic inner loops with a scalar reference implementation and an
// AVX2/FMA variant selected at runtime.
//
// gemm and axpy are bit-identical across variants: every output element is a
// chain of fused multiply-adds taken in ascending k order, so the vector lanes
// and the scalar reference round identically. The distance and t-SNE kernels
// reduce in a variant-specific order and agree only within tolerance.

#include <cstddef>
#include <string_view>

namespace ablatron::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa) noexcept;
bool isa_available(Isa isa) noexcept;

/// The variant used by the free functions below. Defaults to the widest
/// available ISA, overridable with ABLATRON_ISA=scalar|avx2.
Isa active_isa() noexcept;
void set_isa(Isa isa);

class ScopedIsa {
public:
    explicit ScopedIsa(Isa isa) : previous_(active_isa()) { set_isa(isa); }
    ~ScopedIsa() { set_isa(previous_); }
    ScopedIsa(const ScopedIsa&) = delete;
    ScopedIsa& operator=(const ScopedIsa&) = delete;

private:
    Isa previous_;
};

/// Per-row partial sums of the exact t-SNE gradient for point i.
struct TsneRowTerms {
    double z = 0.0;         // sum over j != i of 1 / (1 + |y_i - y_j|^2)
    double attr[2] = {};    // sum_j p_ij q_ij (y_i - y_j), q unnormalised
    double rep[2] = {};     // sum_j q_ij^2 (y_i - y_j)
    double p_log_q = 0.0;   // sum_j p_ij log q_ij, only when requested
};

// Row-major C(m x n) = A(m x k) * B(k x n), or C += A * B when accumulate.
void gemm(std::size_t m, std::size_t n, std::size_t k,
          const float* a, std::size_t lda,
          const float* b, std::size_t ldb,
          float* c, std::size_t ldc, bool accumulate);

// y[i] = fma(alpha, x[i], y[i])
void axpy(std::size_t n, float alpha, const float* x, float* y);

double squared_distance(const float* a, const float* b, std::size_t n);

void tsne_row(std::size_t n, std::size_t i, const double* y0, const double* y1,
              const double* p_row, bool with_kl, TsneRowTerms& out);

namespace detail {

struct KernelTable {
    Isa isa;
    void (*gemm)(std::size_t, std::size_t, std::size_t, const float*, std::size_t,
                 const float*, std::size_t, float*, std::size_t, bool);
    void (*axpy)(std::size_t, float, const float*, float*);
    double (*squared_distance)(const float*, const float*, std::size_t);
    void (*tsne_row)(std::size_t, std::size_t, const double*, const double*,
                     const double*, bool, TsneRowTerms&);
};

const KernelTable& scalar_table() noexcept;
#if defined(ABLATRON_HAVE_AVX2)
const KernelTable& avx2_table() noexcept;
#endif

}  // namespace detail

}  // namespace ablatron::kernels
