#pragma once

// Element-wise and reduction kernels shared by the filters, the optimizers and
// the trajectory analysis. Every kernel exists twice: an OpenMP version used by
// the library and a plain serial reference used by the tests and benchmarks.
// Both versions perform the same floating point operations in the same order
// per element, so element-wise kernels agree bit-for-bit.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace grokforge::kernels {

namespace serial {

template <typename T>
void axpy(T a, std::span<const T> x, std::span<T> y)
{
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] += a * x[i];
}

template <typename T>
void scale_into(T a, std::span<const T> x, std::span<T> y)
{
    for (std::size_t i = 0; i < y.size(); ++i)
        y[i] = a * x[i];
}

// mu <- alpha * mu + (1 - alpha) * g
template <typename T>
void ema_update(T alpha, std::span<const T> g, std::span<T> mu)
{
    const T beta = T(1) - alpha;
    for (std::size_t i = 0; i < mu.size(); ++i)
        mu[i] = mu[i] * alpha + g[i] * beta;
}

// out <- sum of all slots, accumulated in slot order.
template <typename T>
void window_sum(std::span<const std::span<const T>> slots, std::span<T> out)
{
    for (std::size_t i = 0; i < out.size(); ++i) {
        T acc = T(0);
        for (const auto& s : slots)
            acc += s[i];
        out[i] = acc;
    }
}

// m <- momentum * m + (1 - dampening) * g
template <typename T>
void momentum_update(T momentum, T dampening, std::span<const T> g, std::span<T> m)
{
    const T gain = T(1) - dampening;
    for (std::size_t i = 0; i < m.size(); ++i)
        m[i] = momentum * m[i] + gain * g[i];
}

template <typename T>
void adam_moments(T beta1, T beta2, std::span<const T> g, std::span<T> m, std::span<T> v)
{
    for (std::size_t i = 0; i < m.size(); ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    }
}

// theta <- theta - step_size * m / (sqrt(v) / bias2_sqrt + eps)
template <typename T>
void adam_apply(T step_size, T bias2_sqrt, T eps, std::span<const T> m, std::span<const T> v,
                std::span<T> theta)
{
    for (std::size_t i = 0; i < theta.size(); ++i)
        theta[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + eps);
}

// Gram matrix of row vectors (row-major n x n output), 64-bit accumulation.
template <typename T>
void gram(std::span<const std::span<const T>> rows, std::span<double> out)
{
    const std::size_t n = rows.size();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < rows[i].size(); ++k)
                acc += double(rows[i][k]) * double(rows[j][k]);
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
}

} // namespace serial

namespace parallel {

// Below this length the OpenMP fork costs more than the loop.
inline constexpr std::ptrdiff_t kMinParallel = 1 << 14;

template <typename T>
void axpy(T a, std::span<const T> x, std::span<T> y)
{
    const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        y[i] += a * x[i];
}

template <typename T>
void scale_into(T a, std::span<const T> x, std::span<T> y)
{
    const auto n = static_cast<std::ptrdiff_t>(y.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        y[i] = a * x[i];
}

template <typename T>
void ema_update(T alpha, std::span<const T> g, std::span<T> mu)
{
    const T beta = T(1) - alpha;
    const auto n = static_cast<std::ptrdiff_t>(mu.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        mu[i] = mu[i] * alpha + g[i] * beta;
}

template <typename T>
void window_sum(std::span<const std::span<const T>> slots, std::span<T> out)
{
    const auto n = static_cast<std::ptrdiff_t>(out.size());
    constexpr std::ptrdiff_t kBlock = 1024;
    // Blocked so that the running sums stay in cache while the slots stream in.
#pragma omp parallel for if (n >= kMinParallel)
    for (std::ptrdiff_t b = 0; b < n; b += kBlock) {
        const std::ptrdiff_t end = std::min(n, b + kBlock);
        for (std::ptrdiff_t i = b; i < end; ++i)
            out[i] = T(0);
        for (const auto& s : slots) {
#pragma omp simd
            for (std::ptrdiff_t i = b; i < end; ++i)
                out[i] += s[i];
        }
    }
}

template <typename T>
void momentum_update(T momentum, T dampening, std::span<const T> g, std::span<T> m)
{
    const T gain = T(1) - dampening;
    const auto n = static_cast<std::ptrdiff_t>(m.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        m[i] = momentum * m[i] + gain * g[i];
}

template <typename T>
void adam_moments(T beta1, T beta2, std::span<const T> g, std::span<T> m, std::span<T> v)
{
    const auto n = static_cast<std::ptrdiff_t>(m.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (T(1) - beta1) * g[i];
        v[i] = beta2 * v[i] + (T(1) - beta2) * g[i] * g[i];
    }
}

template <typename T>
void adam_apply(T step_size, T bias2_sqrt, T eps, std::span<const T> m, std::span<const T> v,
                std::span<T> theta)
{
    const auto n = static_cast<std::ptrdiff_t>(theta.size());
#pragma omp parallel for simd if (n >= kMinParallel)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        theta[i] -= step_size * m[i] / (std::sqrt(v[i]) / bias2_sqrt + eps);
}

template <typename T>
void gram(std::span<const std::span<const T>> rows, std::span<double> out)
{
    const auto n = static_cast<std::ptrdiff_t>(rows.size());
    // Each (i, j) entry is owned by exactly one iteration, so the result does
    // not depend on the thread count.
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < n; ++i)
        for (std::ptrdiff_t j = 0; j <= i; ++j) {
            double acc = 0.0;
            const auto& a = rows[i];
            const auto& b = rows[j];
            for (std::size_t k = 0; k < a.size(); ++k)
                acc += double(a[k]) * double(b[k]);
            out[i * n + j] = acc;
            out[j * n + i] = acc;
        }
}

} // namespace parallel

// Number of OpenMP threads the parallel kernels will use.
int max_threads();

} // namespace grokforge::kernels
