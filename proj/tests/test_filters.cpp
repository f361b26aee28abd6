#include "grokforge/errors.hpp"
#include "grokforge/filters.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <random>
#include <vector>

using namespace grokforge;

namespace {

Grads<double> random_grads(std::mt19937_64& rng, const std::vector<std::size_t>& shape)
{
    std::normal_distribution<double> normal;
    Grads<double> g;
    for (auto n : shape) {
        g.emplace_back(n);
        for (auto& x : g.back())
            x = normal(rng);
    }
    return g;
}

Grads<double> constant_grads(const std::vector<std::size_t>& shape, double value)
{
    Grads<double> g;
    for (auto n : shape)
        g.emplace_back(n, value);
    return g;
}

bool bit_equal(const Grads<double>& a, const Grads<double>& b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t p = 0; p < a.size(); ++p) {
        if (a[p].size() != b[p].size())
            return false;
        if (std::memcmp(a[p].data(), b[p].data(), a[p].size() * sizeof(double)) != 0)
            return false;
    }
    return true;
}

std::vector<std::span<double>> mutable_views(Grads<double>& g)
{
    return {g.begin(), g.end()};
}

const std::vector<std::size_t> kShape = {3, 1, 7};

} // namespace

TEST_CASE("zero gain is a bit-exact identity, signed zeros included")
{
    std::mt19937_64 rng(1);
    MAState<double> ma(4);
    EMAState<double> ema;
    for (int t = 0; t < 12; ++t) {
        auto g = random_grads(rng, kShape);
        g[0][0] = -0.0;
        g[2][3] = 1e-310; // subnormal
        CHECK(bit_equal(ma_filter_step<double>(ma, {4, 0.0, FilterType::mean, true}, views_of(g)), g));
        CHECK(bit_equal(ma_filter_step<double>(ma, {4, 0.0, FilterType::sum, false}, views_of(g)), g));
        CHECK(bit_equal(ema_filter_step<double>(ema, {0.9, 0.0}, views_of(g)), g));
    }

    MAGradientFilter<double> fma({4, 0.0, FilterType::mean, false}, {});
    EMAGradientFilter<double> fema({0.9, 0.0}, {});
    for (int t = 0; t < 12; ++t) {
        auto g = random_grads(rng, kShape);
        g[0][0] = -0.0;
        auto a = g, b = g;
        fma.apply(mutable_views(a), t);
        fema.apply(mutable_views(b), t);
        CHECK(bit_equal(a, g));
        CHECK(bit_equal(b, g));
    }
}

TEST_CASE("warm MA on a constant gradient yields (1 + lamb) g")
{
    // Dyadic values keep every intermediate exact.
    for (double lamb : {0.5, 2.0, 5.0}) {
        for (std::size_t w : {1u, 3u, 100u}) {
            CAPTURE(lamb);
            CAPTURE(w);
            MAState<double> state(w);
            const MAConfig cfg{w, lamb, FilterType::mean, true};
            const auto g = constant_grads(kShape, 0.75);
            Grads<double> out;
            for (std::size_t t = 0; t < w + 5; ++t) {
                out = ma_filter_step<double>(state, cfg, views_of(g));
                if (t + 1 < w)
                    CHECK(bit_equal(out, g)); // warmup passes g through
            }
            for (const auto& p : out)
                for (double v : p)
                    CHECK(v == (1.0 + lamb) * 0.75);
        }
    }
}

TEST_CASE("sum-type MA scales with the number of buffered gradients")
{
    MAState<double> state(4);
    const MAConfig cfg{4, 1.0, FilterType::sum, false};
    const auto g = constant_grads({2}, 0.5);
    for (int t = 0; t < 6; ++t) {
        const auto out = ma_filter_step<double>(state, cfg, views_of(g));
        const double n = std::min(t + 1, 4);
        CHECK(out[0][0] == 0.5 + n * 0.5);
    }
}

TEST_CASE("MA without warmup averages the partial window")
{
    MAState<double> state(5);
    const MAConfig cfg{5, 1.0, FilterType::mean, false};
    const double seq[] = {1.0, 2.0, 3.0};
    double sum = 0.0;
    for (int t = 0; t < 3; ++t) {
        sum += seq[t];
        const Grads<double> g = {{seq[t]}};
        const auto out = ma_filter_step<double>(state, cfg, views_of(g));
        CHECK(out[0][0] == doctest::Approx(seq[t] + sum / (t + 1)).epsilon(1e-15));
    }
}

TEST_CASE("MA buffer holds exactly min(t + 1, w) gradients")
{
    std::mt19937_64 rng(2);
    for (std::size_t w : {1u, 2u, 7u}) {
        MAState<double> state(w);
        const MAConfig cfg{w, 1.0, FilterType::mean, true};
        std::vector<Grads<double>> history;
        for (std::size_t t = 0; t < 3 * w + 2; ++t) {
            history.push_back(random_grads(rng, kShape));
            ma_filter_step<double>(state, cfg, views_of(history.back()));
            const auto expected = std::min(t + 1, w);
            CHECK(state.max_length() == expected);
            for (std::size_t p = 0; p < kShape.size(); ++p) {
                REQUIRE(state.length(p) == expected);
                const auto slots = state.slots(p);
                // Oldest first, and exactly the last `expected` gradients.
                for (std::size_t i = 0; i < expected; ++i) {
                    const auto& src = history[t + 1 - expected + i][p];
                    CHECK(std::equal(slots[i].begin(), slots[i].end(), src.begin(), src.end()));
                }
            }
            CHECK(state.state_floats() == expected * (3 + 1 + 7));
        }
    }
}

TEST_CASE("MA output matches a direct recomputation over a random stream")
{
    std::mt19937_64 rng(3);
    const std::size_t w = 6;
    const double lamb = 1.7;
    MAState<double> state(w);
    std::vector<Grads<double>> history;
    for (int t = 0; t < 20; ++t) {
        history.push_back(random_grads(rng, kShape));
        const auto out = ma_filter_step<double>(state, {w, lamb, FilterType::mean, true}, views_of(history.back()));
        if (history.size() < w)
            continue;
        for (std::size_t p = 0; p < kShape.size(); ++p)
            for (std::size_t i = 0; i < kShape[p]; ++i) {
                double s = 0.0;
                for (std::size_t j = history.size() - w; j < history.size(); ++j)
                    s += history[j][p][i];
                CHECK(std::abs(out[p][i] - (history.back()[p][i] + lamb * s / w)) <= 1e-12);
            }
    }
}

TEST_CASE("EMA state follows its recurrence and initializes from the first gradient")
{
    std::mt19937_64 rng(4);
    EMAState<double> state;
    const double alpha = 0.9, lamb = 2.0;
    std::vector<double> mu;
    for (int t = 0; t < 30; ++t) {
        const auto g = random_grads(rng, {5});
        const auto out = ema_filter_step<double>(state, {alpha, lamb}, views_of(g));
        if (t == 0)
            mu = g[0];
        else
            for (std::size_t i = 0; i < 5; ++i)
                mu[i] = alpha * mu[i] + (1 - alpha) * g[0][i];
        for (std::size_t i = 0; i < 5; ++i) {
            CHECK(std::abs(state.mu(0)[i] - mu[i]) <= 1e-12);
            CHECK(std::abs(out[0][i] - (g[0][i] + lamb * mu[i])) <= 1e-12);
        }
    }
    CHECK(state.state_floats() == 5);
}

TEST_CASE("EMA converges geometrically to a constant gradient")
{
    // mu(0) = g0, then g(t) = c: |mu(t) - c| = alpha^t |g0 - c|.
    for (double alpha : {0.5, 0.9, 0.98}) {
        CAPTURE(alpha);
        EMAState<double> state;
        const double g0 = -3.0, c = 1.25;
        const Grads<double> first = {{g0}}, steady = {{c}};
        ema_filter_step<double>(state, {alpha, 1.0}, views_of(first));
        for (int t = 1; t <= 200; ++t) {
            ema_filter_step<double>(state, {alpha, 1.0}, views_of(steady));
            const double err = std::abs(state.mu(0)[0] - c);
            CHECK(err <= std::pow(alpha, t) * std::abs(g0 - c) + 1e-12);
        }
    }
}

TEST_CASE("in-place filters agree with the pure steps")
{
    std::mt19937_64 rng(5);
    MAState<double> ma_state(5);
    EMAState<double> ema_state;
    const MAConfig ma_cfg{5, 3.0, FilterType::mean, true};
    const EMAConfig ema_cfg{0.95, 2.0};
    MAGradientFilter<double> ma(ma_cfg, {});
    EMAGradientFilter<double> ema(ema_cfg, {});
    for (int t = 0; t < 15; ++t) {
        const auto g = random_grads(rng, kShape);
        auto a = g, b = g;
        ma.apply(mutable_views(a), t);
        ema.apply(mutable_views(b), t);
        CHECK(bit_equal(a, ma_filter_step<double>(ma_state, ma_cfg, views_of(g))));
        CHECK(bit_equal(b, ema_filter_step<double>(ema_state, ema_cfg, views_of(g))));
    }
    CHECK(ma.state_floats() == 5 * 11);
    CHECK(ma.buffer_length() == 5);
    CHECK(ema.state_floats() == 11);
}

TEST_CASE("slow-only replaces the gradient with the slow component")
{
    std::mt19937_64 rng(6);
    const FilterSchedule slow_only{ScheduleMode::always_on, 0, FilterVariant::slow_only};
    EMAGradientFilter<double> ema({0.9, 2.0}, slow_only);
    EMAState<double> ref;
    for (int t = 0; t < 5; ++t) {
        auto g = random_grads(rng, kShape);
        const auto slow = ema_slow_component<double>(ref, {0.9, 2.0}, views_of(g));
        ema.apply(mutable_views(g), t);
        CHECK(bit_equal(g, slow.values));
    }

    // MA warmup: nothing to replace the gradient with yet, so it passes through.
    MAGradientFilter<double> ma({3, 2.0, FilterType::mean, true}, slow_only);
    const auto c = constant_grads(kShape, 0.5);
    for (int t = 0; t < 4; ++t) {
        auto g = c;
        ma.apply(mutable_views(g), t);
        CHECK(g[0][0] == (t < 2 ? 0.5 : 1.0));
    }
}

TEST_CASE("staged schedule passes gradients through but keeps updating state")
{
    std::mt19937_64 rng(7);
    const FilterSchedule staged{ScheduleMode::staged, 4, FilterVariant::additive};
    EMAGradientFilter<double> ema({0.8, 2.0}, staged);
    EMAState<double> ref;
    for (int t = 0; t < 8; ++t) {
        const auto g = random_grads(rng, kShape);
        auto out = g;
        ema.apply(mutable_views(out), t);
        const auto filtered = ema_filter_step<double>(ref, {0.8, 2.0}, views_of(g));
        CHECK(bit_equal(out, t < 4 ? g : filtered));
    }

    // Start decided at run time.
    MAGradientFilter<double> ma({2, 1.0, FilterType::mean, true}, {ScheduleMode::staged, 1000, {}});
    const auto c = constant_grads({1}, 0.25);
    auto g = c;
    ma.apply(mutable_views(g), 0);
    ma.set_stage_start(1);
    g = c;
    ma.apply(mutable_views(g), 1);
    CHECK(g[0][0] == 0.5);
}

TEST_CASE("filters reject invalid configuration and mismatched shapes")
{
    CHECK_THROWS_AS(MAConfig({0, 1.0, FilterType::mean, true}).validate(), ConfigError);
    CHECK_THROWS_AS(MAConfig({3, -1.0, FilterType::mean, true}).validate(), ConfigError);
    CHECK_THROWS_AS(EMAConfig({0.0, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(EMAConfig({1.0, 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(EMAConfig({0.5, -0.1}).validate(), ConfigError);
    CHECK_THROWS_AS(EMAConfig({std::nan(""), 1.0}).validate(), ConfigError);
    CHECK_THROWS_AS(parse_filter_type("median"), ConfigError);
    CHECK_THROWS_AS(parse_schedule_mode("sometimes"), ConfigError);
    CHECK_THROWS_AS(parse_filter_variant("fast_only"), ConfigError);
    CHECK(parse_filter_type(to_string(FilterType::sum)) == FilterType::sum);

    std::mt19937_64 rng(8);
    MAState<double> ma(3);
    EMAState<double> ema;
    const MAConfig ma_cfg{3, 1.0, FilterType::mean, true};
    const auto g = random_grads(rng, kShape);
    ma_filter_step<double>(ma, ma_cfg, views_of(g));
    ema_filter_step<double>(ema, {0.9, 1.0}, views_of(g));
    const auto fewer = random_grads(rng, {3, 1});
    const auto resized = random_grads(rng, {3, 2, 7});
    CHECK_THROWS_AS(ma_filter_step<double>(ma, ma_cfg, views_of(fewer)), ShapeError);
    CHECK_THROWS_AS(ma_filter_step<double>(ma, ma_cfg, views_of(resized)), ShapeError);
    CHECK_THROWS_AS(ema_filter_step<double>(ema, {0.9, 1.0}, views_of(fewer)), ShapeError);
    CHECK_THROWS_AS(ema_filter_step<double>(ema, {0.9, 1.0}, views_of(resized)), ShapeError);
    CHECK_THROWS_AS(ma_filter_step<double>(ma, {4, 1.0, FilterType::mean, true}, views_of(g)), ConfigError);
}
