#pragma once

// Signal view of gradient filtering: impulse responses of the MA and EMA
// filters, direct DTFT evaluation, the amplifier gain 1 + H(w), and a
// numerical check that filtering before a linear optimizer equals filtering
// its output updates.

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

namespace grokforge {

struct MAConfig;
struct EMAConfig;

// Causal taps h[0], h[1], ... (h[t] = 0 for t < 0 and past the last tap).
struct ImpulseResponse {
    std::vector<double> taps;

    std::size_t horizon() const { return taps.size(); }
    double dc_gain() const;
};

// Values on a grid of frequencies in [0, pi] (radians per iteration).
struct TransferFunction {
    std::vector<double> omega;
    std::vector<std::complex<double>> values;
};

// x(t) = a x(t-1) + b g(t),  u(t) = c x(t) + d g(t).
struct LinearSystemCoeffs {
    double a = 0.0;
    double b = 1.0;
    double c = -1.0;
    double d = 0.0;

    // Rejects a outside [0, 1).
    void validate() const;
};

inline constexpr std::size_t kDefaultFrequencyPoints = 1024;
inline constexpr double kRelativeErrorFloor = 1e-12;

ImpulseResponse ma_impulse(const MAConfig& config);
// Taps t = 0..horizon inclusive: lamb * alpha^t * (1 - alpha).
ImpulseResponse ema_impulse(const EMAConfig& config, std::size_t horizon);

// `points` uniformly spaced frequencies from 0 to pi inclusive.
std::vector<double> frequency_grid(std::size_t points = kDefaultFrequencyPoints);

TransferFunction evaluate_dtft(std::span<const double> sequence, std::span<const double> omega);
TransferFunction amplifier_gain(const TransferFunction& tf);

// |H(w)| of the untruncated EMA filter.
double ema_magnitude_closed_form(double alpha, double lamb, double omega);

// y(t) = sum_{k <= t} h(k) x(t - k), truncated to the length of x.
std::vector<double> causal_convolve(std::span<const double> h, std::span<const double> x);

// Output u(t) of the linear system driven by g from zero initial state.
std::vector<double> simulate_linear_system(const LinearSystemCoeffs& coeffs, std::span<const double> g);

// Max over t of |u_pre(t) - u_post(t)| / (|u_post(t)| + 1e-12), where u_pre
// runs the system on g + h*g and u_post is u + h*u for u the system output on g.
double verify_equivalence(const LinearSystemCoeffs& coeffs, std::span<const double> taps,
                          std::span<const double> g);

} // namespace grokforge
