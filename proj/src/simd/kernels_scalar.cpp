#include <cmath>

#include "legit/simd/kernels.hpp"

namespace legit::simd {
namespace {

void add(float* dst, const float* src, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] += src[i];
}

void leaky_relu(float* out, const float* in, std::size_t n, float slope) {
    for (std::size_t i = 0; i < n; ++i) out[i] = in[i] > 0.0f ? in[i] : slope * in[i];
}

void leaky_relu_backward(float* grad, const float* pre, std::size_t n, float slope) {
    for (std::size_t i = 0; i < n; ++i)
        if (!(pre[i] > 0.0f)) grad[i] *= slope;
}

float dot(const float* a, const float* b, std::size_t n) {
    float acc = 0.0f;
    for (std::size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

void axpy(float* y, float a, const float* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void scale(float* y, float a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] *= a;
}

void adam_update(float* param, const float* grad, float* m, float* v, std::size_t n, const AdamStep& s) {
    for (std::size_t i = 0; i < n; ++i) {
        float g = grad[i] + s.weight_decay * param[i];
        m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * g;
        v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * g * g;
        float mhat = m[i] / s.bias1;
        float vhat = v[i] / s.bias2;
        param[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
}

void sgd_update(float* param, const float* grad, std::size_t n, float lr, float weight_decay) {
    for (std::size_t i = 0; i < n; ++i) param[i] -= lr * (grad[i] + weight_decay * param[i]);
}

constexpr KernelTable kScalar{
    Isa::kScalar, add, leaky_relu, leaky_relu_backward, dot, axpy, scale, adam_update, sgd_update,
};

}  // namespace

const KernelTable& scalar_kernels() noexcept { return kScalar; }

}  // namespace legit::simd
