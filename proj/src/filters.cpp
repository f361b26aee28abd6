#include "grokforge/filters.hpp"

#include "grokforge/errors.hpp"
#include "grokforge/kernels.hpp"

#include <algorithm>
#include <string>

namespace grokforge {

namespace k = kernels::parallel;

FilterType parse_filter_type(std::string_view s)
{
    if (s == "mean")
        return FilterType::mean;
    if (s == "sum")
        return FilterType::sum;
    throw ConfigError("unrecognized filter_type '" + std::string(s) + "' (expected mean|sum)");
}

ScheduleMode parse_schedule_mode(std::string_view s)
{
    if (s == "always_on")
        return ScheduleMode::always_on;
    if (s == "staged")
        return ScheduleMode::staged;
    throw ConfigError("unrecognized schedule mode '" + std::string(s) + "' (expected always_on|staged)");
}

FilterVariant parse_filter_variant(std::string_view s)
{
    if (s == "additive")
        return FilterVariant::additive;
    if (s == "slow_only")
        return FilterVariant::slow_only;
    throw ConfigError("unrecognized filter variant '" + std::string(s) + "' (expected additive|slow_only)");
}

std::string_view to_string(FilterType t)
{
    return t == FilterType::mean ? "mean" : "sum";
}

std::string_view to_string(ScheduleMode m)
{
    return m == ScheduleMode::always_on ? "always_on" : "staged";
}

std::string_view to_string(FilterVariant v)
{
    return v == FilterVariant::additive ? "additive" : "slow_only";
}

void MAConfig::validate() const
{
    if (window_size < 1)
        throw ConfigError("filter.window must be >= 1");
    if (!(lamb >= 0.0))
        throw ConfigError("filter.lamb must be >= 0");
}

void EMAConfig::validate() const
{
    if (!(alpha > 0.0 && alpha < 1.0))
        throw ConfigError("filter.alpha must lie in (0, 1)");
    if (!(lamb >= 0.0))
        throw ConfigError("filter.lamb must be >= 0");
}

void FilterSchedule::validate() const
{
    if (stage_start < 0)
        throw ConfigError("schedule.stage_start must be >= 0");
}

// ---------------------------------------------------------------- MAState

template <typename T>
MAState<T>::MAState(std::size_t window_size) : window_(window_size)
{
    if (window_ < 1)
        throw ConfigError("moving-average window must be >= 1");
}

template <typename T>
std::size_t MAState<T>::max_length() const
{
    std::size_t n = 0;
    for (const auto& r : rings_)
        n = std::max(n, r.count);
    return n;
}

template <typename T>
std::size_t MAState<T>::state_floats() const
{
    std::size_t n = 0;
    for (const auto& r : rings_)
        n += r.count * r.size;
    return n;
}

template <typename T>
void MAState<T>::check_shapes(GradViews<T> grads)
{
    if (rings_.empty()) {
        rings_.resize(grads.size());
        for (std::size_t p = 0; p < grads.size(); ++p) {
            rings_[p].size = grads[p].size();
            rings_[p].slots.reserve(window_);
        }
        return;
    }
    if (grads.size() != rings_.size())
        throw ShapeError("filter expected " + std::to_string(rings_.size()) + " parameters, got " +
                         std::to_string(grads.size()));
    for (std::size_t p = 0; p < grads.size(); ++p)
        if (grads[p].size() != rings_[p].size)
            throw ShapeError("gradient " + std::to_string(p) + " has " + std::to_string(grads[p].size()) +
                             " elements, filter state has " + std::to_string(rings_[p].size));
}

template <typename T>
void MAState<T>::push(std::size_t param, std::span<const T> g)
{
    Ring& r = rings_.at(param);
    if (g.size() != r.size)
        throw ShapeError("gradient size does not match filter state");
    if (r.count < window_) {
        r.slots.emplace_back(g.begin(), g.end());
        ++r.count;
        return;
    }
    std::copy(g.begin(), g.end(), r.slots[r.head].begin());
    r.head = (r.head + 1) % window_;
}

template <typename T>
std::vector<std::span<const T>> MAState<T>::slots(std::size_t param) const
{
    const Ring& r = rings_.at(param);
    std::vector<std::span<const T>> out;
    out.reserve(r.count);
    for (std::size_t i = 0; i < r.count; ++i)
        out.emplace_back(r.slots[(r.head + i) % r.count]);
    return out;
}

// --------------------------------------------------------------- EMAState

template <typename T>
std::size_t EMAState<T>::state_floats() const
{
    std::size_t n = 0;
    for (const auto& m : mu_)
        n += m.size();
    return n;
}

template <typename T>
void EMAState<T>::check_shapes(GradViews<T> grads) const
{
    if (!initialized_)
        return;
    if (grads.size() != mu_.size())
        throw ShapeError("filter expected " + std::to_string(mu_.size()) + " parameters, got " +
                         std::to_string(grads.size()));
    for (std::size_t p = 0; p < grads.size(); ++p)
        if (grads[p].size() != mu_[p].size())
            throw ShapeError("gradient " + std::to_string(p) + " has " + std::to_string(grads[p].size()) +
                             " elements, filter state has " + std::to_string(mu_[p].size()));
}

template <typename T>
void EMAState<T>::update(GradViews<T> grads, T alpha)
{
    check_shapes(grads);
    if (!initialized_) {
        mu_.reserve(grads.size());
        for (const auto& g : grads)
            mu_.emplace_back(g.begin(), g.end());
        initialized_ = true;
        return;
    }
    for (std::size_t p = 0; p < grads.size(); ++p)
        k::ema_update<T>(alpha, grads[p], mu_[p]);
}

// ------------------------------------------------------------ pure steps

namespace {

// out <- lamb * Avg(slots) (mean) or lamb * Sum(slots) (sum)
template <typename T>
void reduce_window(const std::vector<std::span<const T>>& slots, const MAConfig& config, std::span<T> out)
{
    k::window_sum<T>(slots, out);
    const T lamb = T(config.lamb);
    if (config.filter_type == FilterType::sum) {
        k::scale_into<T>(lamb, out, out);
        return;
    }
    // Divide first: a window of identical values then averages exactly.
    const T count = T(slots.size());
    for (auto& v : out)
        v = lamb * (v / count);
}

template <typename T>
bool window_active(const MAState<T>& state, const MAConfig& config, std::size_t param)
{
    return !config.warmup || state.length(param) == config.window_size;
}

} // namespace

template <typename T>
SlowComponent<T> ma_slow_component(MAState<T>& state, const MAConfig& config, GradViews<T> grads)
{
    config.validate();
    if (config.window_size != state.window_size())
        throw ConfigError("MA config window does not match state window");
    state.check_shapes(grads);

    SlowComponent<T> out;
    out.values.resize(grads.size());
    out.active = true;
    for (std::size_t p = 0; p < grads.size(); ++p) {
        state.push(p, grads[p]);
        out.values[p].assign(grads[p].size(), T(0));
        if (window_active(state, config, p))
            reduce_window<T>(state.slots(p), config, out.values[p]);
        else
            out.active = false;
    }
    return out;
}

template <typename T>
SlowComponent<T> ema_slow_component(EMAState<T>& state, const EMAConfig& config, GradViews<T> grads)
{
    config.validate();
    state.update(grads, T(config.alpha));

    SlowComponent<T> out;
    out.active = true;
    out.values.resize(grads.size());
    for (std::size_t p = 0; p < grads.size(); ++p) {
        out.values[p].resize(grads[p].size());
        k::scale_into<T>(T(config.lamb), state.mu(p), out.values[p]);
    }
    return out;
}

template <typename T>
Grads<T> apply_variant(const FilterSchedule& schedule, const SlowComponent<T>& slow, GradViews<T> raw,
                       std::int64_t t)
{
    schedule.validate();
    Grads<T> out;
    out.reserve(raw.size());
    for (const auto& g : raw)
        out.emplace_back(g.begin(), g.end());
    if (!slow.active || !schedule.filtering_at(t))
        return out;
    if (slow.values.size() != raw.size())
        throw ShapeError("slow component and gradient parameter counts differ");
    for (std::size_t p = 0; p < raw.size(); ++p) {
        if (slow.values[p].size() != raw[p].size())
            throw ShapeError("slow component and gradient sizes differ");
        if (schedule.variant == FilterVariant::slow_only)
            out[p] = slow.values[p];
        else
            k::axpy<T>(T(1), slow.values[p], out[p]);
    }
    return out;
}

template <typename T>
Grads<T> ma_filter_step(MAState<T>& state, const MAConfig& config, GradViews<T> grads)
{
    const auto slow = ma_slow_component(state, config, grads);
    if (config.lamb == 0.0)
        return apply_variant<T>(FilterSchedule{}, SlowComponent<T>{}, grads, 0);
    return apply_variant<T>(FilterSchedule{}, slow, grads, 0);
}

template <typename T>
Grads<T> ema_filter_step(EMAState<T>& state, const EMAConfig& config, GradViews<T> grads)
{
    const auto slow = ema_slow_component(state, config, grads);
    if (config.lamb == 0.0)
        return apply_variant<T>(FilterSchedule{}, SlowComponent<T>{}, grads, 0);
    return apply_variant<T>(FilterSchedule{}, slow, grads, 0);
}

// --------------------------------------------------------- in-place filters

namespace {

template <typename T>
std::vector<std::span<const T>> const_views(std::span<const std::span<T>> grads)
{
    return {grads.begin(), grads.end()};
}

// Combines g with an already computed slow component s, in place.
template <typename T>
void combine(FilterVariant variant, double lamb, std::span<const T> slow, std::span<T> g)
{
    if (variant == FilterVariant::slow_only) {
        std::copy(slow.begin(), slow.end(), g.begin());
        return;
    }
    // Zero gain must be an exact identity, including signed zeros.
    if (lamb == 0.0)
        return;
    k::axpy<T>(T(1), slow, g);
}

} // namespace

template <typename T>
MAGradientFilter<T>::MAGradientFilter(MAConfig config, FilterSchedule schedule)
    : config_(config), schedule_(schedule), state_(config.window_size)
{
    config_.validate();
    schedule_.validate();
}

template <typename T>
void MAGradientFilter<T>::apply(std::span<const std::span<T>> grads, std::int64_t t)
{
    const auto views = const_views(grads);
    state_.check_shapes(views);
    const bool filtering = schedule_.filtering_at(t);
    for (std::size_t p = 0; p < grads.size(); ++p) {
        state_.push(p, views[p]);
        if (!filtering || !window_active(state_, config_, p))
            continue;
        scratch_.resize(grads[p].size());
        reduce_window<T>(state_.slots(p), config_, scratch_);
        combine<T>(schedule_.variant, config_.lamb, scratch_, grads[p]);
    }
}

template <typename T>
EMAGradientFilter<T>::EMAGradientFilter(EMAConfig config, FilterSchedule schedule)
    : config_(config), schedule_(schedule)
{
    config_.validate();
    schedule_.validate();
}

template <typename T>
void EMAGradientFilter<T>::apply(std::span<const std::span<T>> grads, std::int64_t t)
{
    state_.update(const_views(grads), T(config_.alpha));
    if (!schedule_.filtering_at(t))
        return;
    const T lamb = T(config_.lamb);
    for (std::size_t p = 0; p < grads.size(); ++p) {
        auto mu = state_.mu(p);
        if (schedule_.variant == FilterVariant::slow_only)
            k::scale_into<T>(lamb, mu, grads[p]);
        else if (config_.lamb != 0.0)
            k::axpy<T>(lamb, mu, grads[p]);
    }
}

#define GROKFORGE_INSTANTIATE_FILTERS(T)                                                                  \
    template class MAState<T>;                                                                            \
    template class EMAState<T>;                                                                           \
    template class MAGradientFilter<T>;                                                                   \
    template class EMAGradientFilter<T>;                                                                  \
    template SlowComponent<T> ma_slow_component<T>(MAState<T>&, const MAConfig&, GradViews<T>);           \
    template SlowComponent<T> ema_slow_component<T>(EMAState<T>&, const EMAConfig&, GradViews<T>);        \
    template Grads<T> ma_filter_step<T>(MAState<T>&, const MAConfig&, GradViews<T>);                      \
    template Grads<T> ema_filter_step<T>(EMAState<T>&, const EMAConfig&, GradViews<T>);                   \
    template Grads<T> apply_variant<T>(const FilterSchedule&, const SlowComponent<T>&, GradViews<T>,      \
                                       std::int64_t);

GROKFORGE_INSTANTIATE_FILTERS(float)
GROKFORGE_INSTANTIATE_FILTERS(double)

#undef GROKFORGE_INSTANTIATE_FILTERS

} // namespace grokforge
