#include "grokforge/spectral.hpp"

#include "grokforge/errors.hpp"
#include "grokforge/filters.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace grokforge {

namespace {

// Neumaier-compensated running sum, so that e.g. w equal taps of lamb / w add
// back up to lamb.
struct CompensatedSum {
    double sum = 0.0;
    double carry = 0.0;

    void add(double v)
    {
        const double t = sum + v;
        if (std::abs(sum) >= std::abs(v))
            carry += (sum - t) + v;
        else
            carry += (v - t) + sum;
        sum = t;
    }
    double value() const { return sum + carry; }
};

} // namespace

double ImpulseResponse::dc_gain() const
{
    CompensatedSum s;
    for (double v : taps)
        s.add(v);
    return s.value();
}

void LinearSystemCoeffs::validate() const
{
    if (!(a >= 0.0 && a < 1.0))
        throw ConfigError("linear optimizer state coefficient A must lie in [0, 1), got " + std::to_string(a));
}

ImpulseResponse ma_impulse(const MAConfig& config)
{
    config.validate();
    const double tap = config.filter_type == FilterType::mean ? config.lamb / double(config.window_size)
                                                              : config.lamb;
    return {std::vector<double>(config.window_size, tap)};
}

ImpulseResponse ema_impulse(const EMAConfig& config, std::size_t horizon)
{
    config.validate();
    ImpulseResponse h;
    h.taps.resize(horizon + 1);
    for (std::size_t t = 0; t <= horizon; ++t)
        h.taps[t] = config.lamb * std::pow(config.alpha, double(t)) * (1.0 - config.alpha);
    return h;
}

std::vector<double> frequency_grid(std::size_t points)
{
    if (points == 0)
        return {};
    if (points == 1)
        return {0.0};
    std::vector<double> omega(points);
    for (std::size_t i = 0; i < points; ++i)
        omega[i] = std::numbers::pi * double(i) / double(points - 1);
    return omega;
}

TransferFunction evaluate_dtft(std::span<const double> sequence, std::span<const double> omega)
{
    TransferFunction tf;
    tf.omega.assign(omega.begin(), omega.end());
    tf.values.resize(omega.size());
    const auto n = static_cast<std::ptrdiff_t>(omega.size());
#pragma omp parallel for
    for (std::ptrdiff_t k = 0; k < n; ++k) {
        CompensatedSum re;
        CompensatedSum im;
        for (std::size_t t = 0; t < sequence.size(); ++t) {
            const double phase = omega[k] * double(t);
            re.add(sequence[t] * std::cos(phase));
            im.add(-sequence[t] * std::sin(phase));
        }
        tf.values[k] = {re.value(), im.value()};
    }
    return tf;
}

TransferFunction amplifier_gain(const TransferFunction& tf)
{
    TransferFunction out = tf;
    for (auto& v : out.values)
        v += 1.0;
    return out;
}

double ema_magnitude_closed_form(double alpha, double lamb, double omega)
{
    return lamb * (1.0 - alpha) / std::sqrt(1.0 - 2.0 * alpha * std::cos(omega) + alpha * alpha);
}

std::vector<double> causal_convolve(std::span<const double> h, std::span<const double> x)
{
    std::vector<double> y(x.size(), 0.0);
    for (std::size_t t = 0; t < x.size(); ++t) {
        const std::size_t kmax = std::min(t + 1, h.size());
        double acc = 0.0;
        for (std::size_t k = 0; k < kmax; ++k)
            acc += h[k] * x[t - k];
        y[t] = acc;
    }
    return y;
}

std::vector<double> simulate_linear_system(const LinearSystemCoeffs& coeffs, std::span<const double> g)
{
    coeffs.validate();
    std::vector<double> u(g.size());
    double x = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t) {
        x = coeffs.a * x + coeffs.b * g[t];
        u[t] = coeffs.c * x + coeffs.d * g[t];
    }
    return u;
}

double verify_equivalence(const LinearSystemCoeffs& coeffs, std::span<const double> taps,
                          std::span<const double> g)
{
    coeffs.validate();

    // (a) filter the gradients, then run the optimizer.
    auto g_hat = causal_convolve(taps, g);
    for (std::size_t t = 0; t < g.size(); ++t)
        g_hat[t] += g[t];
    const auto u_pre = simulate_linear_system(coeffs, g_hat);

    // (b) run the optimizer, then filter its updates.
    const auto u = simulate_linear_system(coeffs, g);
    auto u_post = causal_convolve(taps, u);
    for (std::size_t t = 0; t < u.size(); ++t)
        u_post[t] += u[t];

    double worst = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t)
        worst = std::max(worst, std::abs(u_pre[t] - u_post[t]) / (std::abs(u_post[t]) + kRelativeErrorFloor));
    return worst;
}

} // namespace grokforge
