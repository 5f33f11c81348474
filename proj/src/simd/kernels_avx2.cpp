// Compiled with -mavx2 -mfma. Only reached after a runtime CPU check.
#include <immintrin.h>

#include <cmath>

#include "legit/simd/kernels.hpp"

namespace legit::simd {
namespace {

inline float hsum(__m256 v) {
    __m128 lo = _mm256_castps256_ps128(v);
    __m128 hi = _mm256_extractf128_ps(v, 1);
    lo = _mm_add_ps(lo, hi);
    __m128 shuf = _mm_movehdup_ps(lo);
    __m128 sums = _mm_add_ps(lo, shuf);
    shuf = _mm_movehl_ps(shuf, sums);
    sums = _mm_add_ss(sums, shuf);
    return _mm_cvtss_f32(sums);
}

void add(float* dst, const float* src, std::size_t n) {
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(dst + i, _mm256_add_ps(_mm256_loadu_ps(dst + i), _mm256_loadu_ps(src + i)));
    for (; i < n; ++i) dst[i] += src[i];
}

void leaky_relu(float* out, const float* in, std::size_t n, float slope) {
    const __m256 vs = _mm256_set1_ps(slope);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 x = _mm256_loadu_ps(in + i);
        __m256 pos = _mm256_cmp_ps(x, zero, _CMP_GT_OQ);
        _mm256_storeu_ps(out + i, _mm256_blendv_ps(_mm256_mul_ps(x, vs), x, pos));
    }
    for (; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : slope * in[i];
}

void leaky_relu_backward(float* grad, const float* pre, std::size_t n, float slope) {
    const __m256 vs = _mm256_set1_ps(slope);
    const __m256 one = _mm256_set1_ps(1.0f);
    const __m256 zero = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 pos = _mm256_cmp_ps(_mm256_loadu_ps(pre + i), zero, _CMP_GT_OQ);
        __m256 factor = _mm256_blendv_ps(vs, one, pos);
        _mm256_storeu_ps(grad + i, _mm256_mul_ps(_mm256_loadu_ps(grad + i), factor));
    }
    for (; i < n; ++i)
        if (!(pre[i] > 0.0f)) grad[i] *= slope;
}

float dot(const float* a, const float* b, std::size_t n) {
    __m256 acc0 = _mm256_setzero_ps();
    __m256 acc1 = _mm256_setzero_ps();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
        acc1 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i + 8), _mm256_loadu_ps(b + i + 8), acc1);
    }
    for (; i + 8 <= n; i += 8) acc0 = _mm256_fmadd_ps(_mm256_loadu_ps(a + i), _mm256_loadu_ps(b + i), acc0);
    float acc = hsum(_mm256_add_ps(acc0, acc1));
    for (; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(float* y, float a, const float* x, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8)
        _mm256_storeu_ps(y + i, _mm256_fmadd_ps(va, _mm256_loadu_ps(x + i), _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

void scale(float* y, float a, std::size_t n) {
    const __m256 va = _mm256_set1_ps(a);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) _mm256_storeu_ps(y + i, _mm256_mul_ps(va, _mm256_loadu_ps(y + i)));
    for (; i < n; ++i) y[i] *= a;
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamStep& s) {
    const __m256 b1 = _mm256_set1_ps(s.beta1);
    const __m256 b2 = _mm256_set1_ps(s.beta2);
    const __m256 c1 = _mm256_set1_ps(1.0f - s.beta1);
    const __m256 c2 = _mm256_set1_ps(1.0f - s.beta2);
    const __m256 wd = _mm256_set1_ps(s.weight_decay);
    const __m256 inv_bias1 = _mm256_set1_ps(1.0f / s.bias1);
    const __m256 inv_bias2 = _mm256_set1_ps(1.0f / s.bias2);
    const __m256 lr = _mm256_set1_ps(s.lr);
    const __m256 eps = _mm256_set1_ps(s.eps);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 p = _mm256_loadu_ps(param + i);
        __m256 g = _mm256_fmadd_ps(wd, p, _mm256_loadu_ps(grad + i));
        __m256 mi = _mm256_fmadd_ps(b1, _mm256_loadu_ps(m + i), _mm256_mul_ps(c1, g));
        __m256 vi = _mm256_fmadd_ps(b2, _mm256_loadu_ps(v + i), _mm256_mul_ps(c2, _mm256_mul_ps(g, g)));
        _mm256_storeu_ps(m + i, mi);
        _mm256_storeu_ps(v + i, vi);
        __m256 denom = _mm256_add_ps(_mm256_sqrt_ps(_mm256_mul_ps(vi, inv_bias2)), eps);
        __m256 stepv = _mm256_div_ps(_mm256_mul_ps(mi, inv_bias1), denom);
        _mm256_storeu_ps(param + i, _mm256_fnmadd_ps(lr, stepv, p));
    }
    for (; i < n; ++i) {
        float g = grad[i] + s.weight_decay * param[i];
        m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g * g;
        param[i] -= s.lr * (m[i] / s.bias1) / (std::sqrt(v[i] / s.bias2) + s.eps);
    }
}

void sgd_update(float* param, const float* grad, std::size_t n, float lr, float weight_decay) {
    const __m256 vlr = _mm256_set1_ps(lr);
    const __m256 wd = _mm256_set1_ps(weight_decay);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        __m256 p = _mm256_loadu_ps(param + i);
        __m256 g = _mm256_fmadd_ps(wd, p, _mm256_loadu_ps(grad + i));
        _mm256_storeu_ps(param + i, _mm256_fnmadd_ps(vlr, g, p));
    }
    for (; i < n; ++i) param[i] -= lr * (grad[i] + weight_decay * param[i]);
}

constexpr KernelTable kAvx2{
    Isa::kAvx2, add, leaky_relu, leaky_relu_backward, dot, axpy, scale, adam_update, sgd_update,
};

}  // namespace

const KernelTable& avx2_table_unchecked() noexcept { return kAvx2; }

}  // namespace legit::simd
