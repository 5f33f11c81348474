#include <cstdlib>
#include <string_view>

#include "legit/simd/kernels.hpp"

namespace legit::simd {

#if defined(LEGIT_HAVE_AVX2)
const KernelTable& avx2_table_unchecked() noexcept;
#endif
#if defined(LEGIT_HAVE_NEON)
const KernelTable& neon_table_unchecked() noexcept;
#endif

std::string_view isa_name(Isa isa) noexcept {
    switch (isa) {
        case Isa::kScalar: return "scalar";
        case Isa::kAvx2: return "avx2";
        case Isa::kNeon: return "neon";
    }
    return "unknown";
}

const KernelTable* avx2_kernels() noexcept {
#if defined(LEGIT_HAVE_AVX2)
    static const bool ok = __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
    return ok ? &avx2_table_unchecked() : nullptr;
#else
    return nullptr;
#endif
}

const KernelTable* neon_kernels() noexcept {
#if defined(LEGIT_HAVE_NEON)
    return &neon_table_unchecked();
#else
    return nullptr;
#endif
}

namespace {

const KernelTable& select() noexcept {
    std::string_view want;
    if (const char* env = std::getenv("LEGIT_SIMD")) want = env;
    if (want == "scalar") return scalar_kernels();
    if (want.empty() || want == "avx2")
        if (const auto* t = avx2_kernels()) return *t;
    if (want.empty() || want == "neon")
        if (const auto* t = neon_kernels()) return *t;
    return scalar_kernels();
}

}  // namespace

const KernelTable& kernels() noexcept {
    static const KernelTable& table = select();
    return table;
}

}  // namespace legit::simd
