#include "grokforge/verify.hpp"

#include "grokforge/errors.hpp"
#include "grokforge/filters.hpp"
#include "grokforge/nn.hpp"
#include "grokforge/optim.hpp"
#include "grokforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numbers>
#include <random>

#include <json.hpp>

namespace grokforge {

bool VerifyReport::passed() const
{
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

std::vector<const CheckResult*> VerifyReport::failures() const
{
    std::vector<const CheckResult*> out;
    for (const auto& c : checks)
        if (!c.passed)
            out.push_back(&c);
    return out;
}

std::string VerifyReport::to_json() const
{
    nlohmann::json j;
    j["passed"] = passed();
    j["checks"] = nlohmann::json::array();
    for (const auto& c : checks)
        j["checks"].push_back({{"suite", c.suite},
                               {"name", c.name},
                               {"passed", c.passed},
                               {"value", c.value},
                               {"tolerance", c.tolerance},
                               {"detail", c.detail}});
    return j.dump(2);
}

double gradient_rel_error(double analytic, double numeric)
{
    const double denom = std::max({std::abs(analytic), std::abs(numeric), kGradientErrorFloor});
    return std::abs(analytic - numeric) / denom;
}

namespace {

using Rng = std::mt19937_64;

double uniform(Rng& rng, double lo, double hi)
{
    return std::uniform_real_distribution<double>(lo, hi)(rng);
}

Grads<double> random_grads(Rng& rng, const std::vector<std::size_t>& sizes)
{
    std::normal_distribution<double> normal;
    Grads<double> g;
    for (auto n : sizes) {
        g.emplace_back(n);
        for (auto& v : g.back())
            v = normal(rng);
    }
    return g;
}

std::vector<double> random_sequence(Rng& rng, std::size_t n)
{
    std::normal_distribution<double> normal;
    std::vector<double> g(n);
    for (auto& v : g)
        v = normal(rng);
    return g;
}

bool bit_equal(const Grads<double>& a, const Grads<double>& b)
{
    if (a.size() != b.size())
        return false;
    for (std::size_t p = 0; p < a.size(); ++p)
        if (a[p].size() != b[p].size() || std::memcmp(a[p].data(), b[p].data(), a[p].size() * sizeof(double)) != 0)
            return false;
    return true;
}

class Suite {
public:
    Suite(VerifyReport& report, std::string name) : report_(report), name_(std::move(name)) {}

    // value <= tolerance
    void bound(std::string check, double value, double tolerance, std::string detail = {})
    {
        report_.checks.push_back({name_, std::move(check), value <= tolerance, value, tolerance, std::move(detail)});
    }
    void expect(std::string check, bool ok, std::string detail = {})
    {
        report_.checks.push_back({name_, std::move(check), ok, ok ? 0.0 : 1.0, 0.0, std::move(detail)});
    }

private:
    VerifyReport& report_;
    std::string name_;
};

// ---------------------------------------------------------------- filters

void filters_suite(VerifyReport& report, const VerifyOptions& opt)
{
    Suite s(report, "filters");
    Rng rng(opt.seed + 11);
    const std::vector<std::size_t> sizes{7, 3, 12};

    {
        // Zero gain: bit-for-bit identity for every filter flavour.
        bool ok = true;
        for (auto type : {FilterType::mean, FilterType::sum})
            for (bool warmup : {true, false}) {
                MAState<double> st(5);
                MAConfig cfg{5, 0.0, type, warmup};
                for (int t = 0; t < 20; ++t) {
                    const auto g = random_grads(rng, sizes);
                    ok = ok && bit_equal(ma_filter_step<double>(st, cfg, views_of(g)), g);
                }
            }
        EMAState<double> est;
        for (int t = 0; t < 20; ++t) {
            const auto g = random_grads(rng, sizes);
            ok = ok && bit_equal(ema_filter_step<double>(est, EMAConfig{0.9, 0.0}, views_of(g)), g);
        }
        s.expect("zero gain is the identity", ok);
    }
    {
        MAState<double> st(2);
        MAConfig cfg{2, 1.0, FilterType::mean, true};
        Grads<double> one{{1.0}};
        const double a = ma_filter_step<double>(st, cfg, views_of(one))[0][0];
        const double b = ma_filter_step<double>(st, cfg, views_of(one))[0][0];
        s.expect("MA w=2 lamb=1 on constant 1 gives 1 then 2", a == 1.0 && b == 2.0);
    }
    {
        MAState<double> st(3);
        MAConfig cfg{3, 2.0, FilterType::sum, false};
        double out = 0.0;
        for (int t = 0; t <= 2; ++t) {
            Grads<double> g{{double(t)}};
            out = ma_filter_step<double>(st, cfg, views_of(g))[0][0];
        }
        s.expect("MA sum w=3 lamb=2 on g(t)=t gives 8 at t=2", out == 8.0);
    }
    {
        // Constant dyadic gradients keep every intermediate exact.
        const double lamb = 5.0;
        const std::size_t w = 100;
        MAState<double> st(w);
        MAConfig cfg{w, lamb, FilterType::mean, true};
        Grads<double> g{{0.75, -1.5, 3.0, 0.0, -0.125}};
        bool ok = true;
        for (std::size_t t = 0; t < 2 * w; ++t) {
            const auto out = ma_filter_step<double>(st, cfg, views_of(g));
            for (std::size_t i = 0; i < g[0].size(); ++i) {
                const double want = t + 1 < w ? g[0][i] : (1.0 + lamb) * g[0][i];
                ok = ok && out[0][i] == want;
            }
            ok = ok && st.length(0) == std::min<std::size_t>(t + 1, w);
        }
        s.expect("MA warm steady state (1+lamb)g and buffer length min(t+1,w)", ok);
    }
    {
        EMAState<double> st;
        EMAConfig cfg{0.5, 1.0};
        Grads<double> one{{1.0}};
        const double a = ema_filter_step<double>(st, cfg, views_of(one))[0][0];
        const double b = ema_filter_step<double>(st, cfg, views_of(one))[0][0];
        s.expect("EMA alpha=0.5 lamb=1 on constant 1 gives 2, 2", a == 2.0 && b == 2.0);

        EMAState<double> st2;
        double out = 0.0;
        for (double v : {1.0, 0.0, 0.0}) {
            Grads<double> g{{v}};
            out = ema_filter_step<double>(st2, EMAConfig{0.9, 2.0}, views_of(g))[0][0];
        }
        s.bound("EMA on (1,0,0) alpha=0.9 lamb=2 gives 1.62", std::abs(out - 1.62), 1e-12);
    }
    {
        // |g_hat(t) - (1+lamb) g| <= lamb alpha^t |g - mu(0)| when g(0) differs from the rest.
        const double alpha = 0.9, lamb = 2.0, g0 = 3.0, g = -0.5;
        EMAState<double> st;
        double worst = 0.0;
        for (int t = 0; t < 200; ++t) {
            Grads<double> in{{t == 0 ? g0 : g}};
            const double out = ema_filter_step<double>(st, EMAConfig{alpha, lamb}, views_of(in))[0][0];
            if (t == 0)
                continue;
            const double bound = lamb * std::pow(alpha, t) * std::abs(g - g0);
            worst = std::max(worst, std::abs(out - (1.0 + lamb) * g) - bound);
        }
        s.bound("EMA geometric convergence to DC gain", worst, 1e-12);
    }
    {
        MAState<double> st(3);
        MAConfig cfg{3, 5.0, FilterType::mean, true};
        Grads<double> one{{1.0}};
        SlowComponent<double> slow;
        for (int t = 0; t < 3; ++t)
            slow = ma_slow_component<double>(st, cfg, views_of(one));
        FilterSchedule only{ScheduleMode::always_on, 0, FilterVariant::slow_only};
        s.expect("slow-only drops the raw gradient", apply_variant<double>(only, slow, views_of(one), 3)[0][0] == 5.0);

        FilterSchedule staged{ScheduleMode::staged, 500, FilterVariant::additive};
        s.expect("staged passes raw gradients before the start",
                 apply_variant<double>(staged, slow, views_of(one), 499)[0][0] == 1.0 &&
                     apply_variant<double>(staged, slow, views_of(one), 500)[0][0] == 6.0);
    }
    {
        // Parameter P's output must not depend on parameter Q's history.
        MAState<double> a(4), b(4);
        EMAState<double> ea, eb;
        MAConfig cfg{4, 3.0, FilterType::mean, false};
        bool ok = true;
        for (int t = 0; t < 10; ++t) {
            auto g1 = random_grads(rng, sizes);
            auto g2 = g1;
            for (auto& v : g2[1])
                v = -7.0 * v + 1.0;
            const auto o1 = ma_filter_step<double>(a, cfg, views_of(g1));
            const auto o2 = ma_filter_step<double>(b, cfg, views_of(g2));
            const auto e1 = ema_filter_step<double>(ea, EMAConfig{0.8, 1.5}, views_of(g1));
            const auto e2 = ema_filter_step<double>(eb, EMAConfig{0.8, 1.5}, views_of(g2));
            ok = ok && o1[0] == o2[0] && o1[2] == o2[2] && e1[0] == e2[0] && e1[2] == e2[2];
        }
        s.expect("per-parameter state isolation", ok);
    }
    {
        bool threw = false;
        try {
            MAState<double> st(3);
            MAConfig cfg{3, 1.0, FilterType::mean, true};
            auto g = random_grads(rng, sizes);
            ma_filter_step<double>(st, cfg, views_of(g));
            g[1].push_back(0.0);
            ma_filter_step<double>(st, cfg, views_of(g));
        } catch (const ShapeError&) {
            threw = true;
        }
        s.expect("shape mismatch is rejected", threw);
    }
}

// --------------------------------------------------------------- spectral

void spectral_suite(VerifyReport& report, const VerifyOptions& opt)
{
    Suite s(report, "spectral");
    Rng rng(opt.seed + 23);
    const auto grid = frequency_grid();

    const auto ma = ma_impulse(MAConfig{100, 5.0, FilterType::mean, true});
    s.expect("MA taps are lamb/w", ma.horizon() == 100 && std::all_of(ma.taps.begin(), ma.taps.end(), [](double v) {
                                       return v == 0.05;
                                   }));
    const double zero = 0.0;
    const auto dc = evaluate_dtft(ma.taps, std::span<const double>(&zero, 1)).values[0];
    s.expect("MA DC gain equals lamb exactly", dc.real() == 5.0 && dc.imag() == 0.0);
    s.bound("MA amplifier gain at 0 is 1+lamb", std::abs(amplifier_gain(evaluate_dtft(ma.taps, grid)).values[0].real() - 6.0),
            1e-12);

    const EMAConfig ema{0.9, 1.0};
    const std::size_t horizon = 2000;
    const auto eh = ema_impulse(ema, horizon);
    const auto etf = evaluate_dtft(eh.taps, grid);
    s.bound("truncated EMA DC gain lamb(1-alpha^(T+1))",
            std::abs(etf.values[0].real() - ema.lamb * (1.0 - std::pow(ema.alpha, double(horizon + 1)))), 1e-12);
    double worst = 0.0;
    bool monotone = true;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        worst = std::max(worst, std::abs(std::abs(etf.values[i]) - ema_magnitude_closed_form(ema.alpha, ema.lamb, grid[i])));
        if (i > 0)
            monotone = monotone && std::abs(etf.values[i]) <= std::abs(etf.values[i - 1]);
    }
    s.bound("truncated EMA magnitude matches closed form", worst, 1e-6);
    s.expect("truncated EMA magnitude non-increasing on the grid", monotone);

    const double nyquist = std::numbers::pi;
    const auto g98 = ema_impulse(EMAConfig{0.98, 2.0}, 4000);
    const auto at_pi = amplifier_gain(evaluate_dtft(g98.taps, std::span<const double>(&nyquist, 1))).values[0];
    s.bound("EMA amplifier gain at Nyquist", std::abs(std::abs(at_pi) - (1.0 + 2.0 * 0.02 / 1.98)), 1e-9);

    std::vector<double> delta(16, 0.0);
    delta[0] = 1.0;
    double impulse_err = 0.0;
    for (const auto& v : evaluate_dtft(delta, grid).values)
        impulse_err = std::max(impulse_err, std::abs(v - 1.0));
    s.bound("DTFT of the unit impulse is 1", impulse_err, 0.0);

    const auto x = random_sequence(rng, 64);
    const auto y = random_sequence(rng, 64);
    const double ca = 1.7, cb = -0.3;
    std::vector<double> z(64);
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = ca * x[i] + cb * y[i];
    const auto X = evaluate_dtft(x, grid), Y = evaluate_dtft(y, grid), Z = evaluate_dtft(z, grid);
    double lin = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i)
        lin = std::max(lin, std::abs(Z.values[i] - (ca * X.values[i] + cb * Y.values[i])));
    s.bound("DTFT linearity", lin, 1e-12);
}

// ------------------------------------------------------------ equivalence

std::vector<double> random_taps(Rng& rng)
{
    if (rng() % 2 == 0) {
        const auto w = std::size_t(1 + rng() % 50);
        return ma_impulse(MAConfig{w, uniform(rng, 0.0, 10.0), FilterType::mean, true}).taps;
    }
    return ema_impulse(EMAConfig{uniform(rng, 0.5, 0.99), uniform(rng, 0.0, 5.0)}, 199).taps;
}

// Updates of the real optimizer on one scalar parameter.
std::vector<double> optimizer_updates(const SGDConfig& cfg, std::span<const double> g)
{
    Sgd<double> opt(cfg);
    std::vector<double> value{0.0}, grad{0.0}, u;
    Grads<double> upd;
    for (double gt : g) {
        grad[0] = gt;
        const ParamSlot<double> slot{"x", value, grad};
        opt.step(std::span<const ParamSlot<double>>(&slot, 1), &upd);
        u.push_back(upd[0][0]);
    }
    return u;
}

void equivalence_suite(VerifyReport& report, const VerifyOptions& opt)
{
    Suite s(report, "equivalence");
    Rng rng(opt.seed + 37);
    for (bool nesterov : {false, true}) {
        const std::string label = nesterov ? "Nesterov" : "SGD momentum";
        double worst_commute = 0.0;
        double worst_model = 0.0;
        for (int i = 0; i < 100; ++i) {
            SGDConfig cfg;
            cfg.momentum = uniform(rng, nesterov ? 0.01 : 0.0, 0.99);
            cfg.dampening = uniform(rng, 0.0, 1.0);
            cfg.lr = uniform(rng, 1e-3, 1.0);
            cfg.nesterov = nesterov;
            cfg.init = MomentumInit::zero;
            auto coeffs = sgd_linear_coeffs(cfg);
            if (nesterov && opt.flip_nesterov_c)
                coeffs.c = -coeffs.c;
            const auto g = random_sequence(rng, 200);
            worst_commute = std::max(worst_commute, verify_equivalence(coeffs, random_taps(rng), g));

            // The linear system must describe the optimizer that actually runs.
            const auto u_opt = optimizer_updates(cfg, g);
            const auto u_sys = simulate_linear_system(coeffs, g);
            for (std::size_t t = 0; t < g.size(); ++t)
                worst_model = std::max(worst_model, std::abs(u_opt[t] - u_sys[t]) / (std::abs(u_sys[t]) + kRelativeErrorFloor));
        }
        s.bound(label + ": pre-filtering equals post-filtering (100 instances)", worst_commute, 1e-9);
        s.bound(label + ": optimizer matches its linear system", worst_model, 1e-9);
    }
    const auto g = random_sequence(rng, 200);
    const std::vector<double> none(10, 0.0);
    s.bound("zero filter gives zero error", verify_equivalence(LinearSystemCoeffs{0.5, 1.0, -0.1, 0.0}, none, g), 0.0);
}

// ------------------------------------------------------------- optimizers

double sgd_update(SGDConfig cfg, std::vector<double> gs)
{
    return optimizer_updates(cfg, gs).back();
}

void optimizers_suite(VerifyReport& report, const VerifyOptions& opt)
{
    Suite s(report, "optimizers");
    Rng rng(opt.seed + 41);
    {
        SGDConfig c;
        c.lr = 0.1;
        s.bound("plain SGD u = -lr g", std::abs(sgd_update(c, {2.0}) + 0.2), 1e-15);
        c = {};
        c.lr = 1.0;
        c.momentum = 0.9;
        s.bound("momentum m(0)=g(0): u(1) = -1.9", std::abs(sgd_update(c, {1.0, 1.0}) + 1.9), 1e-15);
        c.momentum = 0.5;
        c.nesterov = true;
        s.bound("Nesterov u(0) = -1.5", std::abs(sgd_update(c, {1.0}) + 1.5), 1e-15);
    }
    {
        // Superposition: u[a x + b y] = a u[x] + b u[y] from zero state.
        double worst = 0.0;
        for (int i = 0; i < 20; ++i) {
            SGDConfig c;
            c.momentum = uniform(rng, 0.1, 0.99);
            c.dampening = uniform(rng, 0.0, 1.0);
            c.lr = uniform(rng, 1e-3, 1.0);
            c.nesterov = i % 2 == 1;
            c.init = MomentumInit::zero;
            const auto x = random_sequence(rng, 100), y = random_sequence(rng, 100);
            const double a = uniform(rng, -2, 2), b = uniform(rng, -2, 2);
            std::vector<double> z(100);
            for (std::size_t t = 0; t < z.size(); ++t)
                z[t] = a * x[t] + b * y[t];
            const auto ux = optimizer_updates(c, x), uy = optimizer_updates(c, y), uz = optimizer_updates(c, z);
            for (std::size_t t = 0; t < z.size(); ++t) {
                const double want = a * ux[t] + b * uy[t];
                worst = std::max(worst, std::abs(uz[t] - want) / (std::abs(want) + 1e-12));
            }
        }
        s.bound("SGD family is linear from zero state", worst, 1e-9);
    }
    auto adam_run = [](AdamConfig c, const std::vector<double>& gs, double start = 0.0) {
        Adam<double> a(c);
        std::vector<double> value{start}, grad{0.0}, u;
        Grads<double> upd;
        for (double g : gs) {
            grad[0] = g;
            const ParamSlot<double> slot{"x", value, grad};
            a.step(std::span<const ParamSlot<double>>(&slot, 1), &upd);
            u.push_back(upd[0][0]);
        }
        return std::make_pair(u, value[0]);
    };
    {
        AdamConfig c;
        c.lr = 1.0;
        s.bound("first Adam step is -lr", std::abs(adam_run(c, {1.0}).first[0] + 1.0 / (1.0 + 1e-8)), 1e-15);
        const auto zero = adam_run(c, std::vector<double>(10, 0.0));
        s.expect("zero gradients leave parameters fixed",
                 std::all_of(zero.first.begin(), zero.first.end(), [](double v) { return v == 0.0; }));
        AdamConfig w;
        w.lr = 1e-3;
        w.weight_decay = 0.01;
        w.decoupled = true;
        s.bound("decoupled decay scales parameters by 1 - lr wd", std::abs(adam_run(w, {0.0}, 10.0).second - 9.9999),
                1e-12);
    }
    {
        AdamConfig c;
        c.eps = 1e-300;
        const auto g = random_sequence(rng, 50);
        auto g3 = g;
        for (auto& v : g3)
            v *= 3.7;
        const auto u1 = adam_run(c, g).first, u2 = adam_run(c, g3).first;
        double worst = 0.0;
        for (std::size_t t = 0; t < u1.size(); ++t)
            worst = std::max(worst, std::abs(u1[t] - u2[t]) / std::abs(u1[t]));
        s.bound("Adam is invariant to gradient scale", worst, 1e-9);
    }
    {
        s.bound("warmup t=0", std::abs(effective_lr({1e-3, 10}, 0) - 1e-4), 1e-18);
        s.expect("warmup t=9 reaches base", effective_lr({1e-3, 10}, 9) == 1e-3);
        s.expect("no warmup is constant", effective_lr({1e-3, 0}, 0) == 1e-3 && effective_lr({1e-3, 0}, 77) == 1e-3);
    }
}

// -------------------------------------------------------------- gradients

template <typename M>
std::vector<GradientCheck> finite_difference(M& model, BasicParamStore<double>& params, const Batch& batch)
{
    params.zero_grad();
    model.forward_backward(params, batch);
    std::vector<GradientCheck> out;
    for (auto& p : params) {
        GradientCheck gc{p.name, 0.0};
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double keep = p.value[i];
            p.value[i] = keep + kFiniteDifferenceStep;
            const double up = model.evaluate(params, batch).loss;
            p.value[i] = keep - kFiniteDifferenceStep;
            const double down = model.evaluate(params, batch).loss;
            p.value[i] = keep;
            const double numeric = (up - down) / (2.0 * kFiniteDifferenceStep);
            gc.max_rel_error = std::max(gc.max_rel_error, gradient_rel_error(p.grad[i], numeric));
        }
        out.push_back(gc);
    }
    return out;
}

void gradients_suite(VerifyReport& report, const VerifyOptions& opt)
{
    Suite s(report, "gradients");
    for (bool pre : {false, true})
        for (const auto& g : transformer_gradient_check(opt.seed + 1, pre))
            s.bound(std::string(pre ? "pre-norm " : "") + "transformer " + g.parameter, g.max_rel_error, 1e-4);
    for (const auto& g : mlp_gradient_check(opt.seed + 2))
        s.bound("mlp " + g.parameter, g.max_rel_error, 1e-4);
}

} // namespace

std::vector<GradientCheck> transformer_gradient_check(unsigned long long seed, bool pre_norm)
{
    TransformerConfig cfg;
    cfg.vocab_size = 7;
    cfg.d_model = 8;
    cfg.n_heads = 2;
    cfg.n_layers = 2;
    cfg.seq_len = 5;
    cfg.ffn_dim = 16;
    cfg.pre_norm = pre_norm;
    TransformerModel<double> model(cfg);
    auto params = model.init_params(seed);

    Rng rng(seed);
    Batch batch;
    batch.size = 6;
    batch.seq_len = cfg.seq_len;
    for (std::size_t i = 0; i < batch.size * batch.seq_len; ++i)
        batch.tokens.push_back(std::int32_t(rng() % cfg.vocab_size));
    for (std::size_t i = 0; i < batch.size; ++i) {
        batch.targets.push_back(std::int32_t(rng() % cfg.vocab_size));
        batch.example_ids.push_back(i);
    }
    return finite_difference(model, params, batch);
}

std::vector<GradientCheck> mlp_gradient_check(unsigned long long seed)
{
    MLPConfig cfg;
    cfg.widths = {6, 5, 4, 3};
    MLPModel<double> model(cfg);
    auto params = model.init_params(seed);

    Rng rng(seed);
    std::normal_distribution<double> normal;
    Batch batch;
    batch.size = 5;
    batch.feature_dim = 6;
    for (std::size_t i = 0; i < batch.size * batch.feature_dim; ++i)
        batch.features.push_back(float(normal(rng)));
    for (std::size_t i = 0; i < batch.size; ++i) {
        batch.targets.push_back(std::int32_t(rng() % 3));
        batch.example_ids.push_back(i);
    }
    return finite_difference(model, params, batch);
}

VerifyReport run_verify(std::string_view mode, const VerifyOptions& options)
{
    using SuiteFn = void (*)(VerifyReport&, const VerifyOptions&);
    const std::pair<std::string_view, SuiteFn> suites[] = {{"filters", filters_suite},
                                                           {"spectral", spectral_suite},
                                                           {"equivalence", equivalence_suite},
                                                           {"optimizers", optimizers_suite},
                                                           {"gradients", gradients_suite}};
    VerifyReport report;
    bool known = mode == "all";
    for (const auto& [name, fn] : suites)
        if (mode == "all" || mode == name) {
            known = true;
            fn(report, options);
        }
    if (!known)
        throw ConfigError("unknown verify mode '" + std::string(mode) + "' (all, filters, spectral, equivalence, "
                          "optimizers, gradients)");
    return report;
}

} // namespace grokforge
