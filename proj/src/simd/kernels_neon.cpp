// AArch64 only; NEON is part of the base ISA there, so no runtime check is needed.
#include <arm_neon.h>

#include <cmath>

#include "legit/simd/kernels.hpp"

namespace legit::simd {
namespace {

void add(float* dst, const float* src, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(dst + i, vaddq_f32(vld1q_f32(dst + i), vld1q_f32(src + i)));
    for (; i < n; ++i) dst[i] += src[i];
}

void leaky_relu(float* out, const float* in, std::size_t n, float slope) {
    const float32x4_t vs = vdupq_n_f32(slope);
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t x = vld1q_f32(in + i);
        uint32x4_t pos = vcgtq_f32(x, zero);
        vst1q_f32(out + i, vbslq_f32(pos, x, vmulq_f32(x, vs)));
    }
    for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : slope * in[i];
}

void leaky_relu_backward(float* grad, const float* pre, std::size_t n, float slope) {
    const float32x4_t vs = vdupq_n_f32(slope);
    const float32x4_t one = vdupq_n_f32(1.0f);
    const float32x4_t zero = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        uint32x4_t pos = vcgtq_f32(vld1q_f32(pre + i), zero);
        vst1q_f32(grad + i, vmulq_f32(vld1q_f32(grad + i), vbslq_f32(pos, one, vs)));
    }
    for (; i < n; ++i)
        if (!(pre[i] > 0.0f)) grad[i] *= slope;
}

float dot(const float* a, const float* b, std::size_t n) {
    float32x4_t acc = vdupq_n_f32(0.0f);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = vfmaq_f32(acc, vld1q_f32(a + i), vld1q_f32(b + i));
    float s = vaddvq_f32(acc);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy(float* y, float a, const float* x, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vfmaq_n_f32(vld1q_f32(y + i), vld1q_f32(x + i), a));
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale(float* y, float a, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) vst1q_f32(y + i, vmulq_n_f32(vld1q_f32(y + i), a));
    for (; i < n; ++i) y[i] *= a;
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamStep& s) {
    const float inv_b1 = 1.0f / s.bias1;
    const float inv_b2 = 1.0f / s.bias2;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t p = vld1q_f32(param + i);
        float32x4_t g = vfmaq_n_f32(vld1q_f32(grad + i), p, s.weight_decay);
        float32x4_t mi = vfmaq_n_f32(vmulq_n_f32(g, 1.0f - s.beta1), vld1q_f32(m + i), s.beta1);
        float32x4_t vi = vfmaq_n_f32(vmulq_n_f32(vmulq_f32(g, g), 1.0f - s.beta2), vld1q_f32(v + i), s.beta2);
        vst1q_f32(m + i, mi);
        vst1q_f32(v + i, vi);
        float32x4_t denom = vaddq_f32(vsqrtq_f32(vmulq_n_f32(vi, inv_b2)), vdupq_n_f32(s.eps));
        float32x4_t stepv = vdivq_f32(vmulq_n_f32(mi, inv_b1), denom);
        vst1q_f32(param + i, vfmsq_n_f32(p, stepv, s.lr));
    }
    for (; i < n; ++i) {
        float g = grad[i] + s.weight_decay * param[i];
        m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g * g;
        param[i] -= s.lr * (m[i] * inv_b1) / (std::sqrt(v[i] * inv_b2) + s.eps);
    }
}

void sgd_update(float* param, const float* grad, std::size_t n, float lr, float weight_decay) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        float32x4_t p = vld1q_f32(param + i);
        float32x4_t g = vfmaq_n_f32(vld1q_f32(grad + i), p, weight_decay);
        vst1q_f32(param + i, vfmsq_n_f32(p, g, lr));
    }
    for (; i < n; ++i) param[i] -= lr * (grad[i] + weight_decay * param[i]);
}

constexpr KernelTable kNeon{
    Isa::kNeon, add, leaky_relu, leaky_relu_backward, dot, axpy, scale, adam_update, sgd_update,
};

}  // namespace

const KernelTable& neon_table_unchecked() noexcept { return kNeon; }

}  // namespace legit::simd
