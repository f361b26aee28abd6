#include "grokforge/errors.hpp"
#include "grokforge/filters.hpp"
#include "grokforge/optim.hpp"
#include "grokforge/spectral.hpp"

#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace grokforge;

namespace {

std::vector<double> random_sequence(std::mt19937_64& rng, std::size_t n)
{
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v)
        x = normal(rng);
    return v;
}

} // namespace

TEST_CASE("MA DC gain equals lamb exactly")
{
    // Exact where the taps lamb/w sum without rounding (the reference
    // configuration lamb=5, w=100 among them); otherwise within one ulp.
    for (double lamb : {0.5, 2.0, 5.0})
        for (std::size_t w : {1u, 2u, 4u, 100u, 128u}) {
            CAPTURE(lamb);
            CAPTURE(w);
            const auto h = ma_impulse({w, lamb, FilterType::mean, true});
            CHECK(h.horizon() == w);
            CHECK(h.dc_gain() == lamb);
            const std::vector<double> zero = {0.0};
            CHECK(evaluate_dtft(h.taps, zero).values[0].real() == lamb);
        }
    for (double lamb : {0.1, 7.3, 1.0 / 3.0})
        for (std::size_t w : {3u, 7u, 97u}) {
            CAPTURE(lamb);
            CAPTURE(w);
            const double ulp = std::nextafter(lamb, INFINITY) - lamb;
            CHECK(std::abs(ma_impulse({w, lamb, FilterType::mean, true}).dc_gain() - lamb) <= ulp);
        }
    CHECK(ma_impulse({4, 2.0, FilterType::sum, true}).dc_gain() == 8.0);
}

TEST_CASE("truncated EMA DC gain is lamb (1 - alpha^(T+1))")
{
    for (double alpha : {0.5, 0.9, 0.98})
        for (std::size_t T : {0u, 10u, 2000u}) {
            const double lamb = 2.0;
            const auto h = ema_impulse({alpha, lamb}, T);
            CHECK(h.horizon() == T + 1);
            CHECK(std::abs(h.dc_gain() - lamb * (1 - std::pow(alpha, double(T + 1)))) <= 1e-12);
        }
}

TEST_CASE("truncated EMA magnitude matches the closed form")
{
    const double alpha = 0.9, lamb = 2.0;
    const auto h = ema_impulse({alpha, lamb}, 2000);
    const auto grid = frequency_grid();
    REQUIRE(grid.size() == 1024);
    CHECK(grid.front() == 0.0);
    CHECK(grid.back() == std::numbers::pi);
    const auto tf = evaluate_dtft(h.taps, grid);
    double worst = 0.0;
    for (std::size_t k = 0; k < grid.size(); ++k)
        worst = std::max(worst, std::abs(std::abs(tf.values[k]) - ema_magnitude_closed_form(alpha, lamb, grid[k])));
    CHECK(worst <= 1e-6);
    for (std::size_t k = 1; k < grid.size(); ++k)
        CHECK(std::abs(tf.values[k]) <= std::abs(tf.values[k - 1]));
}

TEST_CASE("DTFT oracle: a single delayed tap is a pure phase")
{
    const std::vector<double> seq = {0.0, 0.0, 3.0};
    const auto grid = frequency_grid(17);
    const auto tf = evaluate_dtft(seq, grid);
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const auto expected = 3.0 * std::polar(1.0, -2.0 * grid[k]);
        CHECK(std::abs(tf.values[k] - expected) <= 1e-14);
    }
    const auto amp = amplifier_gain(tf);
    for (std::size_t k = 0; k < grid.size(); ++k)
        CHECK(amp.values[k] == tf.values[k] + 1.0);
}

TEST_CASE("MA magnitude vanishes at multiples of 2 pi / w")
{
    const std::size_t w = 8;
    const auto h = ma_impulse({w, 5.0, FilterType::mean, true});
    const std::vector<double> nulls = {2 * std::numbers::pi / w, 4 * std::numbers::pi / w, std::numbers::pi};
    for (const auto& v : evaluate_dtft(h.taps, nulls).values)
        CHECK(std::abs(v) <= 1e-13);
    // |1 + H| >= 1 - |H| everywhere, and = 1 + lamb at DC.
    const auto amp = amplifier_gain(evaluate_dtft(h.taps, std::vector<double>{0.0}));
    CHECK(amp.values[0].real() == 6.0);
}

TEST_CASE("frequency grid edge cases")
{
    CHECK(frequency_grid(0).empty());
    CHECK(frequency_grid(1) == std::vector<double>{0.0});
    const auto g = frequency_grid(5);
    CHECK(g[2] == doctest::Approx(std::numbers::pi / 2));
}

TEST_CASE("filters convolve the gradient stream with their impulse responses")
{
    std::mt19937_64 rng(1);
    const auto g = random_sequence(rng, 60);

    // Warmup off, so the partial window ... does not match a fixed kernel;
    // compare once the window is full.
    const MAConfig ma_cfg{5, 3.0, FilterType::mean, true};
    const auto ma_h = ma_impulse(ma_cfg);
    const auto ma_conv = causal_convolve(ma_h.taps, g);
    MAState<double> ma(5);

    // EMA from a zero first sample, where initialization from g(0) and the
    // zero-state recurrence coincide.
    auto g0 = g;
    g0[0] = 0.0;
    const EMAConfig ema_cfg{0.9, 2.0};
    const auto ema_conv = causal_convolve(ema_impulse(ema_cfg, g.size()).taps, g0);
    EMAState<double> ema;

    for (std::size_t t = 0; t < g.size(); ++t) {
        const Grads<double> x = {{g[t]}}, x0 = {{g0[t]}};
        const auto y = ma_filter_step<double>(ma, ma_cfg, views_of(x));
        if (t >= 4)
            CHECK(std::abs(y[0][0] - (g[t] + ma_conv[t])) <= 1e-12);
        const auto z = ema_filter_step<double>(ema, ema_cfg, views_of(x0));
        CHECK(std::abs(z[0][0] - (g0[t] + ema_conv[t])) <= 1e-12);
    }
}

TEST_CASE("filtering commutes with linear optimizers on random instances")
{
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double mu = uni(rng) * 0.99, tau = uni(rng), lr = 1e-3 + uni(rng) * 0.1;
        const auto g = random_sequence(rng, 200);
        const auto taps = random_sequence(rng, 1 + i % 30);
        for (bool nesterov : {false, true}) {
            const auto c = sgd_linear_coeffs({lr, std::max(mu, 1e-3), tau, nesterov, 0.0, MomentumInit::zero});
            worst = std::max(worst, verify_equivalence(c, taps, g));
        }
    }
    CHECK(worst <= 1e-9);
}

TEST_CASE("a wrong output coefficient breaks the equivalence oracle's linear system")
{
    std::mt19937_64 rng(3);
    const auto g = random_sequence(rng, 200);
    const SGDConfig cfg{0.05, 0.9, 0.0, true, 0.0, MomentumInit::zero};
    auto flipped = sgd_linear_coeffs(cfg);
    flipped.c = -flipped.c;
    Sgd<double> opt(cfg);
    std::vector<double> theta = {0.0}, grad(1), updates;
    for (double x : g) {
        grad[0] = x;
        const ParamSlot<double> slot{"w", theta, grad};
        Grads<double> u;
        opt.step(std::span(&slot, 1), &u);
        updates.push_back(u[0][0]);
    }
    const auto good = simulate_linear_system(sgd_linear_coeffs(cfg), g);
    const auto bad = simulate_linear_system(flipped, g);
    double err_good = 0.0, err_bad = 0.0;
    for (std::size_t t = 0; t < g.size(); ++t) {
        err_good = std::max(err_good, std::abs(updates[t] - good[t]));
        err_bad = std::max(err_bad, std::abs(updates[t] - bad[t]));
    }
    CHECK(err_good <= 1e-12);
    CHECK(err_bad > 1e-3);
}

TEST_CASE("linear systems reject unstable state coefficients")
{
    CHECK_THROWS_AS(simulate_linear_system({1.0, 1.0, -1.0, 0.0}, std::vector<double>{1.0}), ConfigError);
    CHECK_THROWS_AS(simulate_linear_system({-0.1, 1.0, -1.0, 0.0}, std::vector<double>{1.0}), ConfigError);
}
