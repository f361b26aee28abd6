#include "grokforge/errors.hpp"
#include "grokforge/optim.hpp"

#include <doctest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace grokforge;

namespace {

// Single-parameter training loop on a fixed gradient sequence; returns the
// parameter trajectory.
template <typename Opt>
std::vector<double> drive(Opt& opt, const std::vector<double>& grads, double theta0 = 0.0,
                          std::vector<double>* updates = nullptr)
{
    std::vector<double> theta = {theta0}, g(1);
    std::vector<double> path;
    for (double x : grads) {
        g[0] = x;
        const ParamSlot<double> slot{"w", theta, g};
        Grads<double> u;
        opt.step(std::span(&slot, 1), updates ? &u : nullptr);
        if (updates)
            updates->push_back(u[0][0]);
        path.push_back(theta[0]);
    }
    return path;
}

std::vector<double> random_sequence(std::size_t n, unsigned seed)
{
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal;
    std::vector<double> v(n);
    for (auto& x : v)
        x = normal(rng);
    return v;
}

} // namespace

TEST_CASE("warmup ramps linearly and then holds the base rate")
{
    const WarmupSchedule s{1e-3, 10};
    CHECK(effective_lr(s, 0) == doctest::Approx(1e-4).epsilon(1e-15));
    CHECK(effective_lr(s, 4) == doctest::Approx(5e-4).epsilon(1e-15));
    CHECK(effective_lr(s, 9) == 1e-3);
    CHECK(effective_lr(s, 10) == 1e-3);
    CHECK(effective_lr(s, 123456) == 1e-3);
    for (std::int64_t t : {0, 1, 50})
        CHECK(effective_lr({1e-3, 0}, t) == 1e-3);
    for (std::int64_t t = 1; t < 20; ++t)
        CHECK(effective_lr(s, t) >= effective_lr(s, t - 1));
}

TEST_CASE("plain SGD steps against the gradient")
{
    Sgd<double> opt({0.1, 0.0, 0.0, false, 0.0});
    const auto path = drive(opt, {1.0, -2.0, 0.5}, 1.0);
    CHECK(path[0] == doctest::Approx(0.9));
    CHECK(path[1] == doctest::Approx(1.1));
    CHECK(path[2] == doctest::Approx(1.05));
    CHECK(opt.step_count() == 3);
}

TEST_CASE("heavy-ball and Nesterov updates follow their recurrences")
{
    const auto g = random_sequence(50, 1);
    for (bool nesterov : {false, true}) {
        for (double tau : {0.0, 0.3}) {
            CAPTURE(nesterov);
            CAPTURE(tau);
            const SGDConfig cfg{0.05, 0.9, tau, nesterov, 0.0, MomentumInit::first_gradient};
            Sgd<double> opt(cfg);
            std::vector<double> updates;
            drive(opt, g, 0.0, &updates);
            double m = 0.0;
            for (std::size_t t = 0; t < g.size(); ++t) {
                m = t == 0 ? g[0] : 0.9 * m + (1 - tau) * g[t];
                const double u = nesterov ? -0.05 * (g[t] + 0.9 * m) : -0.05 * m;
                CHECK(std::abs(updates[t] - u) <= 1e-12);
            }
        }
    }
}

TEST_CASE("zero-initialized SGD is the linear system of its coefficients")
{
    const auto g = random_sequence(200, 2);
    for (bool nesterov : {false, true}) {
        CAPTURE(nesterov);
        const SGDConfig cfg{0.01, 0.8, 0.25, nesterov, 0.0, MomentumInit::zero};
        const auto c = sgd_linear_coeffs(cfg);
        CHECK(c.a == 0.8);
        CHECK(c.b == 0.75);
        CHECK(c.c == (nesterov ? -0.01 * 0.8 : -0.01));
        CHECK(c.d == (nesterov ? -0.01 : 0.0));
        Sgd<double> opt(cfg);
        std::vector<double> updates;
        drive(opt, g, 0.0, &updates);
        const auto expected = simulate_linear_system(c, g);
        for (std::size_t t = 0; t < g.size(); ++t)
            CHECK(std::abs(updates[t] - expected[t]) <= 1e-12 * (1 + std::abs(expected[t])));
    }
}

TEST_CASE("Adam matches a scalar reference with bias correction")
{
    const auto g = random_sequence(40, 3);
    for (bool decoupled : {false, true}) {
        CAPTURE(decoupled);
        const AdamConfig cfg{1e-2, 0.9, 0.98, 1e-8, 0.1, decoupled};
        Adam<double> opt(cfg);
        const auto path = drive(opt, g, 0.7);
        double theta = 0.7, m = 0.0, v = 0.0;
        for (std::size_t t = 0; t < g.size(); ++t) {
            double grad = g[t];
            if (decoupled)
                theta *= 1 - 1e-2 * 0.1;
            else
                grad += 0.1 * theta;
            m = 0.9 * m + 0.1 * grad;
            v = 0.98 * v + 0.02 * grad * grad;
            const double mhat = m / (1 - std::pow(0.9, t + 1));
            const double vhat = v / (1 - std::pow(0.98, t + 1));
            theta -= 1e-2 * mhat / (std::sqrt(vhat) + 1e-8);
            CHECK(std::abs(path[t] - theta) <= 1e-12);
        }
    }
}

TEST_CASE("first Adam step moves each weight by about lr regardless of gradient scale")
{
    for (double scale : {1e-6, 1.0, 1e6}) {
        Adam<double> opt({1e-3, 0.9, 0.98, 0.0, 0.0, false});
        const auto path = drive(opt, {scale}, 0.0);
        CHECK(path[0] == doctest::Approx(-1e-3).epsilon(1e-12));
    }
}

TEST_CASE("AdamW decay never enters the moments; Adam decay does")
{
    // With a zero gradient, AdamW only shrinks the weight; coupled Adam
    // turns the decay into a normalized step of size ~lr.
    Adam<double> adamw({1e-2, 0.9, 0.98, 1e-8, 0.5, true});
    const auto w = drive(adamw, {0.0, 0.0}, 1.0);
    CHECK(w[0] == doctest::Approx(1.0 - 1e-2 * 0.5).epsilon(1e-15));
    CHECK(w[1] == doctest::Approx((1.0 - 1e-2 * 0.5) * (1.0 - 1e-2 * 0.5)).epsilon(1e-15));

    Adam<double> adam({1e-2, 0.9, 0.98, 1e-8, 0.5, false});
    const auto a = drive(adam, {0.0}, 1.0);
    CHECK(a[0] == doctest::Approx(1.0 - 1e-2).epsilon(1e-9));
}

TEST_CASE("optimizer state sizes")
{
    std::vector<double> a(3), b(5), ga(3), gb(5);
    const ParamSlot<double> slots[] = {{"a", a, ga}, {"b", b, gb}};
    Adam<double> adam({});
    adam.step(slots);
    CHECK(adam.state_floats() == 16);
    Sgd<double> sgd({0.1, 0.9});
    sgd.step(slots);
    CHECK(sgd.state_floats() == 8);
}

TEST_CASE("optimizers reject bad configuration, shapes and non-finite gradients")
{
    CHECK_THROWS_AS(Sgd<double>({0.0}), ConfigError);
    CHECK_THROWS_AS(Sgd<double>({0.1, 1.0}), ConfigError);
    CHECK_THROWS_AS(Sgd<double>({0.1, 0.5, 1.5}), ConfigError);
    CHECK_THROWS_AS(Sgd<double>({0.1, 0.0, 0.0, true}), ConfigError);
    CHECK_THROWS_AS(Sgd<double>({0.1, 0.0, 0.0, false, -1.0}), ConfigError);
    CHECK_THROWS_AS(Adam<double>({-1e-3}), ConfigError);
    CHECK_THROWS_AS(Adam<double>({1e-3, 1.0}), ConfigError);
    CHECK_THROWS_AS(Adam<double>({1e-3, 0.9, 0.98, -1.0}), ConfigError);

    std::vector<double> w(2), g(2), w3(3), g3(3);
    Adam<double> adam({});
    const ParamSlot<double> ok{"w", w, g};
    adam.step(std::span(&ok, 1));
    const ParamSlot<double> resized{"w", w3, g3};
    CHECK_THROWS_AS(adam.step(std::span(&resized, 1)), ShapeError);
    const ParamSlot<double> two[] = {ok, ok};
    CHECK_THROWS_AS(adam.step(two), ShapeError);

    g[1] = std::nan("");
    CHECK_THROWS_AS(adam.step(std::span(&ok, 1)), NumericError);
    Sgd<double> sgd({0.1});
    g[1] = INFINITY;
    CHECK_THROWS_AS(sgd.step(std::span(&ok, 1)), NumericError);
}
