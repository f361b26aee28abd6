#include "grokforge/kernels.hpp"

#include <doctest.h>

#include <random>
#include <vector>

namespace k = grokforge::kernels;

namespace {

std::vector<float> random_vec(std::size_t n, unsigned seed)
{
    std::mt19937 rng(seed);
    std::normal_distribution<float> normal;
    std::vector<float> v(n);
    for (auto& x : v)
        x = normal(rng);
    return v;
}

// Sizes on both sides of the parallel cutoff.
const std::size_t kSizes[] = {0, 1, 17, std::size_t(k::parallel::kMinParallel) - 1,
                              std::size_t(k::parallel::kMinParallel) * 3 + 5};

} // namespace

TEST_CASE("element-wise kernels agree bit-for-bit with the serial reference")
{
    for (auto n : kSizes) {
        CAPTURE(n);
        const auto x = random_vec(n, 1), g = random_vec(n, 2);
        auto y1 = random_vec(n, 3), y2 = y1;
        k::serial::axpy<float>(0.37f, x, y1);
        k::parallel::axpy<float>(0.37f, x, y2);
        CHECK(y1 == y2);

        k::serial::scale_into<float>(-1.5f, x, y1);
        k::parallel::scale_into<float>(-1.5f, x, y2);
        CHECK(y1 == y2);

        auto mu1 = random_vec(n, 4), mu2 = mu1;
        k::serial::ema_update<float>(0.98f, g, mu1);
        k::parallel::ema_update<float>(0.98f, g, mu2);
        CHECK(mu1 == mu2);

        auto m1 = random_vec(n, 5), m2 = m1;
        k::serial::momentum_update<float>(0.9f, 0.1f, g, m1);
        k::parallel::momentum_update<float>(0.9f, 0.1f, g, m2);
        CHECK(m1 == m2);

        auto am1 = random_vec(n, 6), am2 = am1;
        std::vector<float> v1(n, 0.5f), v2(n, 0.5f);
        k::serial::adam_moments<float>(0.9f, 0.98f, g, am1, v1);
        k::parallel::adam_moments<float>(0.9f, 0.98f, g, am2, v2);
        CHECK(am1 == am2);
        CHECK(v1 == v2);

        auto th1 = random_vec(n, 7), th2 = th1;
        k::serial::adam_apply<float>(1e-3f, 0.3f, 1e-8f, am1, v1, th1);
        k::parallel::adam_apply<float>(1e-3f, 0.3f, 1e-8f, am2, v2, th2);
        CHECK(th1 == th2);
    }
}

TEST_CASE("window sum and Gram matrix agree with the serial reference")
{
    const std::size_t n = std::size_t(k::parallel::kMinParallel) + 11;
    std::vector<std::vector<float>> slots;
    for (unsigned i = 0; i < 7; ++i)
        slots.push_back(random_vec(n, 10 + i));
    std::vector<std::span<const float>> views(slots.begin(), slots.end());
    std::vector<float> s1(n), s2(n);
    k::serial::window_sum<float>(views, s1);
    k::parallel::window_sum<float>(views, s2);
    CHECK(s1 == s2);

    std::vector<double> g1(49), g2(49);
    k::serial::gram<float>(views, g1);
    k::parallel::gram<float>(views, g2);
    CHECK(g1 == g2);
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = 0; j < 7; ++j)
            CHECK(g1[i * 7 + j] == g1[j * 7 + i]);
}

TEST_CASE("at least one thread is available")
{
    CHECK(grokforge::kernels::max_threads() >= 1);
}
