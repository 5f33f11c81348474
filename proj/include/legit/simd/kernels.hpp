#pragma once

#include <cstddef>
#include <string_view>

namespace legit::simd {

enum class Isa { kScalar, kAvx2, kNeon };

std::string_view isa_name(Isa isa) noexcept;

struct AdamStep {
    float lr;
    float beta1;
    float beta2;
    float eps;
    float weight_decay;  // L2 term folded into the gradient
    float bias1;         // 1 - beta1^t
    float bias2;         // 1 - beta2^t
};

/// Float kernels used by the conditional-model inner loops. Every variant
/// must agree with the scalar table to within float rounding.
struct KernelTable {
    Isa isa;
    // dst[i] += src[i]
    void (*add)(float* dst, const float* src, std::size_t n);
    // out[i] = in[i] > 0 ? in[i] : slope * in[i]
    void (*leaky_relu)(float* out, const float* in, std::size_t n, float slope);
    // grad[i] *= pre[i] > 0 ? 1 : slope
    void (*leaky_relu_backward)(float* grad, const float* pre, std::size_t n, float slope);
    float (*dot)(const float* a, const float* b, std::size_t n);
    // y[i] += a * x[i]
    void (*axpy)(float* y, float a, const float* x, std::size_t n);
    // y[i] *= a
    void (*scale)(float* y, float a, std::size_t n);
    void (*adam_update)(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamStep& step);
    // param[i] -= lr * (grad[i] + weight_decay * param[i])
    void (*sgd_update)(float* param, const float* grad, std::size_t n, float lr, float weight_decay);
};

const KernelTable& scalar_kernels() noexcept;
/// nullptr when the variant was not compiled in or the CPU lacks the ISA.
const KernelTable* avx2_kernels() noexcept;
const KernelTable* neon_kernels() noexcept;

/// Best table for this CPU, chosen once. LEGIT_SIMD=scalar|avx2|neon overrides.
const KernelTable& kernels() noexcept;

}  // namespace legit::simd
