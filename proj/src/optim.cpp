#include "grokforge/optim.hpp"

#include "grokforge/errors.hpp"
#include "grokforge/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace grokforge {

namespace k = kernels::parallel;

void SGDConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("optimizer.lr must be > 0");
    if (!(momentum >= 0.0 && momentum < 1.0))
        throw ConfigError("optimizer.momentum must lie in [0, 1)");
    if (!(dampening >= 0.0 && dampening <= 1.0))
        throw ConfigError("optimizer.dampening must lie in [0, 1]");
    if (nesterov && momentum <= 0.0)
        throw ConfigError("nesterov momentum requires optimizer.momentum > 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("optimizer.weight_decay must be >= 0");
}

void AdamConfig::validate() const
{
    if (!(lr > 0.0))
        throw ConfigError("optimizer.lr must be > 0");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw ConfigError("optimizer betas must lie in [0, 1)");
    if (!(eps >= 0.0))
        throw ConfigError("optimizer.eps must be >= 0");
    if (!(weight_decay >= 0.0))
        throw ConfigError("optimizer.weight_decay must be >= 0");
}

double effective_lr(const WarmupSchedule& schedule, std::int64_t t)
{
    if (schedule.warmup_iters <= 0)
        return schedule.base_lr;
    const double ramp = double(t + 1) / double(schedule.warmup_iters);
    return schedule.base_lr * std::min(1.0, ramp);
}

LinearSystemCoeffs sgd_linear_coeffs(const SGDConfig& config)
{
    LinearSystemCoeffs c;
    c.a = config.momentum;
    c.b = 1.0 - config.dampening;
    if (config.nesterov) {
        c.c = -config.lr * config.momentum;
        c.d = -config.lr;
    } else {
        c.c = -config.lr;
        c.d = 0.0;
    }
    return c;
}

namespace {

template <typename T>
void check_finite(const ParamSlot<T>& p)
{
    for (const T g : p.grad)
        if (!std::isfinite(g))
            throw NumericError("non-finite gradient in parameter '" + std::string(p.name) + "'");
}

template <typename T>
void check_sizes(const ParamSlot<T>& p, std::size_t expected)
{
    if (p.value.size() != p.grad.size() || p.value.size() != expected)
        throw ShapeError("optimizer state for parameter '" + std::string(p.name) + "' has " +
                         std::to_string(expected) + " elements, got value " + std::to_string(p.value.size()) +
                         " / grad " + std::to_string(p.grad.size()));
}

template <typename T>
void init_buffers(Grads<T>& buffers, std::span<const ParamSlot<T>> params)
{
    buffers.resize(params.size());
    for (std::size_t p = 0; p < params.size(); ++p)
        buffers[p].assign(params[p].value.size(), T(0));
}

template <typename T>
void check_param_count(const Grads<T>& buffers, std::span<const ParamSlot<T>> params)
{
    if (buffers.size() != params.size())
        throw ShapeError("optimizer expected " + std::to_string(buffers.size()) + " parameters, got " +
                         std::to_string(params.size()));
}

} // namespace

// -------------------------------------------------------------------- SGD

template <typename T>
Sgd<T>::Sgd(SGDConfig config) : config_(config)
{
    config_.validate();
}

template <typename T>
std::size_t Sgd<T>::state_floats() const
{
    std::size_t n = 0;
    for (const auto& m : m_)
        n += m.size();
    return n;
}

template <typename T>
void Sgd<T>::step(std::span<const ParamSlot<T>> params, double lr, Grads<T>* updates)
{
    const bool first = t_ == 0;
    if (first)
        init_buffers(m_, params);
    check_param_count(m_, params);
    if (updates)
        updates->resize(params.size());

    const T mu = T(config_.momentum);
    const T tau = T(config_.dampening);
    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& slot = params[p];
        check_sizes(slot, m_[p].size());
        check_finite(slot);

        std::span<const T> g = slot.grad;
        if (config_.weight_decay != 0.0) {
            scratch_.assign(g.begin(), g.end());
            k::axpy<T>(T(config_.weight_decay), slot.value, scratch_);
            g = scratch_;
        }

        auto& m = m_[p];
        if (first && config_.init == MomentumInit::first_gradient)
            std::copy(g.begin(), g.end(), m.begin());
        else
            k::momentum_update<T>(mu, tau, g, m);

        auto& u = updates ? (*updates)[p] : update_;
        u.assign(m.size(), T(0));
        if (config_.nesterov) {
            // u = -lr * (g + mu * m)
            std::copy(g.begin(), g.end(), u.begin());
            k::axpy<T>(mu, m, u);
            k::scale_into<T>(T(-lr), u, u);
        } else {
            k::scale_into<T>(T(-lr), m, u);
        }
        k::axpy<T>(T(1), u, slot.value);
    }
    ++t_;
}

// ------------------------------------------------------------------- Adam

template <typename T>
Adam<T>::Adam(AdamConfig config) : config_(config)
{
    config_.validate();
}

template <typename T>
std::size_t Adam<T>::state_floats() const
{
    std::size_t n = 0;
    for (std::size_t p = 0; p < m_.size(); ++p)
        n += m_[p].size() + v_[p].size();
    return n;
}

template <typename T>
void Adam<T>::step(std::span<const ParamSlot<T>> params, double lr, Grads<T>* updates)
{
    if (t_ == 0) {
        init_buffers(m_, params);
        init_buffers(v_, params);
    }
    check_param_count(m_, params);
    if (updates)
        updates->resize(params.size());

    ++t_;
    const double bias1 = 1.0 - std::pow(config_.beta1, double(t_));
    const double bias2 = 1.0 - std::pow(config_.beta2, double(t_));
    const T step_size = T(lr / bias1);
    const T bias2_sqrt = T(std::sqrt(bias2));

    for (std::size_t p = 0; p < params.size(); ++p) {
        const auto& slot = params[p];
        check_sizes(slot, m_[p].size());
        check_finite(slot);

        if (updates)
            (*updates)[p].assign(slot.value.begin(), slot.value.end());

        std::span<const T> g = slot.grad;
        if (config_.weight_decay != 0.0) {
            if (config_.decoupled) {
                k::scale_into<T>(T(1.0 - lr * config_.weight_decay), slot.value, slot.value);
            } else {
                scratch_.assign(g.begin(), g.end());
                k::axpy<T>(T(config_.weight_decay), slot.value, scratch_);
                g = scratch_;
            }
        }

        k::adam_moments<T>(T(config_.beta1), T(config_.beta2), g, m_[p], v_[p]);
        k::adam_apply<T>(step_size, bias2_sqrt, T(config_.eps), m_[p], v_[p], slot.value);

        if (updates) {
            auto& u = (*updates)[p];
            for (std::size_t i = 0; i < u.size(); ++i)
                u[i] = slot.value[i] - u[i];
        }
    }
}

template class Sgd<float>;
template class Sgd<double>;
template class Adam<float>;
template class Adam<double>;

} // namespace grokforge
