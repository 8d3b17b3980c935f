#include "ablatron/kernels.hpp"

#include "ablatron/error.hpp"

#include <atomic>
#include <cstdlib>
#include <string>

namespace ablatron::kernels {
namespace {

const detail::KernelTable* table_for(Isa isa) noexcept
{
#if defined(ABLATRON_HAVE_AVX2)
    if (isa == Isa::avx2) return &detail::avx2_table();
#endif
    (void)isa;
    return &detail::scalar_table();
}

const detail::KernelTable* initial_table() noexcept
{
    if (const char* env = std::getenv("ABLATRON_ISA")) {
        if (std::string(env) == "scalar") return table_for(Isa::scalar);
    }
    return table_for(isa_available(Isa::avx2) ? Isa::avx2 : Isa::scalar);
}

std::atomic<const detail::KernelTable*>& active_table() noexcept
{
    static std::atomic<const detail::KernelTable*> table{initial_table()};
    return table;
}

}  // namespace

std::string_view isa_name(Isa isa) noexcept
{
    switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    }
    return "unknown";
}

bool isa_available(Isa isa) noexcept
{
    if (isa == Isa::scalar) return true;
#if defined(ABLATRON_HAVE_AVX2)
    __builtin_cpu_init();
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

Isa active_isa() noexcept { return active_table().load(std::memory_order_relaxed)->isa; }

void set_isa(Isa isa)
{
    if (!isa_available(isa)) {
        throw ConfigError("instruction set " + std::string(isa_name(isa)) + " is not available on this CPU");
    }
    active_table().store(table_for(isa), std::memory_order_relaxed);
}

void gemm(std::size_t m, std::size_t n, std::size_t k, const float* a, std::size_t lda, const float* b,
          std::size_t ldb, float* c, std::size_t ldc, bool accumulate)
{
    if (m == 0 || n == 0) return;
    active_table().load(std::memory_order_relaxed)->gemm(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}

void axpy(std::size_t n, float alpha, const float* x, float* y)
{
    active_table().load(std::memory_order_relaxed)->axpy(n, alpha, x, y);
}

double squared_distance(const float* a, const float* b, std::size_t n)
{
    return active_table().load(std::memory_order_relaxed)->squared_distance(a, b, n);
}

void tsne_row(std::size_t n, std::size_t i, const double* y0, const double* y1, const double* p_row,
              bool with_kl, TsneRowTerms& out)
{
    active_table().load(std::memory_order_relaxed)->tsne_row(n, i, y0, y1, p_row, with_kl, out);
}

}  // namespace ablatron::kernels
