#pragma once

// First-order optimizers consuming (filtered) gradients, and the linear
// learning-rate warmup.

#include "grokforge/filters.hpp"
#include "grokforge/spectral.hpp"

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

namespace grokforge {

enum class MomentumInit {
    first_gradient, // m(0) = g(0)
    zero,           // m(-1) = 0, exactly linear time-invariant
};

struct SGDConfig {
    double lr = 1e-3;
    double momentum = 0.0;
    double dampening = 0.0;
    bool nesterov = false;
    double weight_decay = 0.0;
    MomentumInit init = MomentumInit::first_gradient;

    void validate() const;
};

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.0;
    bool decoupled = false; // AdamW

    void validate() const;
};

struct WarmupSchedule {
    double base_lr = 1e-3;
    std::int64_t warmup_iters = 0;
};

// base_lr * min(1, (t + 1) / warmup_iters), or base_lr without warmup.
double effective_lr(const WarmupSchedule& schedule, std::int64_t t);

// State-space coefficients of SGD with (Nesterov) momentum:
//   x(t) = A x(t-1) + B g(t),  u(t) = C x(t) + D g(t)
LinearSystemCoeffs sgd_linear_coeffs(const SGDConfig& config);

template <typename T>
struct ParamSlot {
    std::string_view name;
    std::span<T> value;
    std::span<const T> grad;
};

template <typename T>
class Optimizer {
public:
    virtual ~Optimizer() = default;

    // Applies one update with learning rate lr. When updates is non-null it
    // receives the applied update u(t) of every parameter.
    virtual void step(std::span<const ParamSlot<T>> params, double lr, Grads<T>* updates = nullptr) = 0;
    virtual std::int64_t step_count() const = 0;
    virtual std::size_t state_floats() const = 0;
};

template <typename T>
class Sgd final : public Optimizer<T> {
public:
    explicit Sgd(SGDConfig config);

    void step(std::span<const ParamSlot<T>> params, double lr, Grads<T>* updates = nullptr) override;
    void step(std::span<const ParamSlot<T>> params, Grads<T>* updates = nullptr)
    {
        step(params, config_.lr, updates);
    }
    std::int64_t step_count() const override { return t_; }
    std::size_t state_floats() const override;
    std::span<const T> momentum_buffer(std::size_t p) const { return m_.at(p); }

private:
    SGDConfig config_;
    std::int64_t t_ = 0;
    Grads<T> m_;
    std::vector<T> scratch_;
    std::vector<T> update_;
};

template <typename T>
class Adam final : public Optimizer<T> {
public:
    explicit Adam(AdamConfig config);

    void step(std::span<const ParamSlot<T>> params, double lr, Grads<T>* updates = nullptr) override;
    void step(std::span<const ParamSlot<T>> params, Grads<T>* updates = nullptr)
    {
        step(params, config_.lr, updates);
    }
    std::int64_t step_count() const override { return t_; }
    std::size_t state_floats() const override;

private:
    AdamConfig config_;
    std::int64_t t_ = 0;
    Grads<T> m_;
    Grads<T> v_;
    std::vector<T> scratch_;
};

extern template class Sgd<float>;
extern template class Sgd<double>;
extern template class Adam<float>;
extern template class Adam<double>;

} // namespace grokforge
