#pragma once

#include "grokforge/optim.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace grokforge {

// Storage aligned for the widest vector unit: kernels then split every array
// the same way, so results do not depend on where an allocation landed.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <typename T>
struct Parameter {
    std::string name;
    std::vector<std::size_t> shape;
    AlignedVector<T> value;
    AlignedVector<T> grad;

    std::size_t size() const { return value.size(); }
};

// Named flat arrays holding every trainable value of a model and its gradient.
// Iteration order is insertion order.
template <typename T>
class BasicParamStore {
public:
    // Adds a zero-initialized parameter; names must be unique.
    Parameter<T>& add(std::string name, std::vector<std::size_t> shape);

    Parameter<T>& at(std::string_view name);
    const Parameter<T>& at(std::string_view name) const;
    Parameter<T>& operator[](std::size_t i) { return params_[i]; }
    const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }
    bool contains(std::string_view name) const;
    std::size_t index_of(std::string_view name) const;

    std::size_t size() const { return params_.size(); }
    std::size_t total_count() const;

    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad();
    std::vector<std::span<T>> grad_views();
    std::vector<std::span<const T>> grad_views() const;
    std::vector<ParamSlot<T>> slots();

    // Concatenation of all values in iteration order.
    std::vector<T> flatten_values() const;
    void assign_flat_values(std::span<const T> flat);

    template <typename U>
    BasicParamStore<U> cast() const
    {
        BasicParamStore<U> out;
        for (const auto& p : params_) {
            auto& q = out.add(p.name, p.shape);
            for (std::size_t i = 0; i < p.value.size(); ++i)
                q.value[i] = static_cast<U>(p.value[i]);
        }
        return out;
    }

private:
    std::vector<Parameter<T>> params_;
    std::unordered_map<std::string, std::size_t> index_;
};

using ParamStore = BasicParamStore<float>;

std::size_t shape_count(std::span<const std::size_t> shape);

extern template class BasicParamStore<float>;
extern template class BasicParamStore<double>;

} // namespace grokforge
