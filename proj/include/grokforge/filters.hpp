#pragma once

// Low-frequency gradient amplification.
//
// A filter keeps a per-parameter history of raw gradients g(t) and produces
// a "slow" component s(t): lamb * Avg(last w gradients) for the windowed
// moving average, or lamb * mu(t) for the exponential moving average. The
// optimizer then receives g(t) + s(t) (additive) or s(t) alone (slow-only).

#include <cstddef>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <vector>

namespace grokforge {

enum class FilterType { mean, sum };
enum class ScheduleMode { always_on, staged };
enum class FilterVariant { additive, slow_only };

FilterType parse_filter_type(std::string_view s);
ScheduleMode parse_schedule_mode(std::string_view s);
FilterVariant parse_filter_variant(std::string_view s);
std::string_view to_string(FilterType t);
std::string_view to_string(ScheduleMode m);
std::string_view to_string(FilterVariant v);

struct MAConfig {
    std::size_t window_size = 100;
    double lamb = 5.0;
    FilterType filter_type = FilterType::mean;
    bool warmup = true;

    void validate() const;
};

struct EMAConfig {
    double alpha = 0.98;
    double lamb = 2.0;

    void validate() const;
};

struct FilterSchedule {
    ScheduleMode mode = ScheduleMode::always_on;
    std::int64_t stage_start = 0;
    FilterVariant variant = FilterVariant::additive;

    void validate() const;
    // Whether the filtered gradient replaces the raw one at iteration t.
    bool filtering_at(std::int64_t t) const
    {
        return mode == ScheduleMode::always_on || t >= stage_start;
    }
};

template <typename T>
using Grads = std::vector<std::vector<T>>;

template <typename T>
using GradViews = std::span<const std::span<const T>>;

template <typename T>
std::vector<std::span<const T>> views_of(const Grads<T>& g)
{
    return {g.begin(), g.end()};
}

// Output of a filter step before it is combined with the raw gradient.
template <typename T>
struct SlowComponent {
    // False while an MA filter with warmup has a partially filled window.
    bool active = false;
    Grads<T> values;
};

// Ring buffer of the last <= w gradients of every parameter.
template <typename T>
class MAState {
public:
    explicit MAState(std::size_t window_size);

    std::size_t window_size() const { return window_; }
    std::size_t num_params() const { return rings_.size(); }
    std::size_t length(std::size_t param) const { return rings_.at(param).count; }
    std::size_t max_length() const;
    std::size_t state_floats() const;

    // Records shapes on first use, throws ShapeError on any later mismatch.
    void check_shapes(GradViews<T> grads);
    void push(std::size_t param, std::span<const T> g);
    // Buffered gradients of one parameter, oldest first.
    std::vector<std::span<const T>> slots(std::size_t param) const;

private:
    struct Ring {
        std::size_t size = 0;
        std::size_t count = 0;
        std::size_t head = 0; // oldest entry once the ring is full
        std::vector<std::vector<T>> slots;
    };
    std::size_t window_;
    std::vector<Ring> rings_;
};

template <typename T>
class EMAState {
public:
    bool initialized() const { return initialized_; }
    std::size_t num_params() const { return mu_.size(); }
    std::size_t state_floats() const;
    std::span<const T> mu(std::size_t param) const { return mu_.at(param); }

    void check_shapes(GradViews<T> grads) const;
    // First call copies g into mu, later calls run the EMA recurrence.
    void update(GradViews<T> grads, T alpha);

private:
    bool initialized_ = false;
    Grads<T> mu_;
};

// Inserts grads into the window and returns lamb * Avg(Q) (or lamb * Sum(Q)).
template <typename T>
SlowComponent<T> ma_slow_component(MAState<T>& state, const MAConfig& config, GradViews<T> grads);

template <typename T>
SlowComponent<T> ema_slow_component(EMAState<T>& state, const EMAConfig& config, GradViews<T> grads);

// g_hat = g + lamb * Avg(Q), or g unchanged during warmup.
template <typename T>
Grads<T> ma_filter_step(MAState<T>& state, const MAConfig& config, GradViews<T> grads);

// g_hat = g + lamb * mu.
template <typename T>
Grads<T> ema_filter_step(EMAState<T>& state, const EMAConfig& config, GradViews<T> grads);

// Combines raw gradients with a slow component according to the schedule.
template <typename T>
Grads<T> apply_variant(const FilterSchedule& schedule, const SlowComponent<T>& slow, GradViews<T> raw,
                       std::int64_t t);

// In-place gradient transformation used by the training loop.
template <typename T>
class GradientFilter {
public:
    virtual ~GradientFilter() = default;

    virtual void apply(std::span<const std::span<T>> grads, std::int64_t t) = 0;
    virtual std::size_t state_floats() const = 0;
    virtual std::size_t buffer_length() const = 0;
    // Staged schedules whose start is decided at run time (e.g. on overfitting).
    virtual void set_stage_start(std::int64_t) {}
};

template <typename T>
class MAGradientFilter final : public GradientFilter<T> {
public:
    MAGradientFilter(MAConfig config, FilterSchedule schedule);

    void apply(std::span<const std::span<T>> grads, std::int64_t t) override;
    std::size_t state_floats() const override { return state_.state_floats(); }
    std::size_t buffer_length() const override { return state_.max_length(); }
    void set_stage_start(std::int64_t t) override { schedule_.stage_start = t; }

    const MAState<T>& state() const { return state_; }

private:
    MAConfig config_;
    FilterSchedule schedule_;
    MAState<T> state_;
    std::vector<T> scratch_;
};

template <typename T>
class EMAGradientFilter final : public GradientFilter<T> {
public:
    EMAGradientFilter(EMAConfig config, FilterSchedule schedule);

    void apply(std::span<const std::span<T>> grads, std::int64_t t) override;
    std::size_t state_floats() const override { return state_.state_floats(); }
    std::size_t buffer_length() const override { return state_.initialized() ? 1 : 0; }
    void set_stage_start(std::int64_t t) override { schedule_.stage_start = t; }

    const EMAState<T>& state() const { return state_; }

private:
    EMAConfig config_;
    FilterSchedule schedule_;
    EMAState<T> state_;
};

extern template class MAState<float>;
extern template class MAState<double>;
extern template class EMAState<float>;
extern template class EMAState<double>;
extern template class MAGradientFilter<float>;
extern template class MAGradientFilter<double>;
extern template class EMAGradientFilter<float>;
extern template class EMAGradientFilter<double>;

} // namespace grokforge
