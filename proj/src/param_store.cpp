#include "grokforge/param_store.hpp"

#include "grokforge/errors.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

namespace grokforge {

std::size_t shape_count(std::span<const std::size_t> shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

template <typename T>
Parameter<T>& BasicParamStore<T>::add(std::string name, std::vector<std::size_t> shape)
{
    if (index_.contains(name))
        throw Error("duplicate parameter name '" + name + "'");
    const std::size_t n = shape_count(shape);
    index_.emplace(name, params_.size());
    params_.push_back({std::move(name), std::move(shape), AlignedVector<T>(n, T(0)), AlignedVector<T>(n, T(0))});
    return params_.back();
}

template <typename T>
std::size_t BasicParamStore<T>::index_of(std::string_view name) const
{
    const auto it = index_.find(std::string(name));
    if (it == index_.end())
        throw Error("unknown parameter '" + std::string(name) + "'");
    return it->second;
}

template <typename T>
Parameter<T>& BasicParamStore<T>::at(std::string_view name)
{
    return params_[index_of(name)];
}

template <typename T>
const Parameter<T>& BasicParamStore<T>::at(std::string_view name) const
{
    return params_[index_of(name)];
}

template <typename T>
bool BasicParamStore<T>::contains(std::string_view name) const
{
    return index_.contains(std::string(name));
}

template <typename T>
std::size_t BasicParamStore<T>::total_count() const
{
    std::size_t n = 0;
    for (const auto& p : params_)
        n += p.size();
    return n;
}

template <typename T>
void BasicParamStore<T>::zero_grad()
{
    for (auto& p : params_)
        std::fill(p.grad.begin(), p.grad.end(), T(0));
}

template <typename T>
std::vector<std::span<T>> BasicParamStore<T>::grad_views()
{
    std::vector<std::span<T>> out;
    out.reserve(params_.size());
    for (auto& p : params_)
        out.emplace_back(p.grad);
    return out;
}

template <typename T>
std::vector<std::span<const T>> BasicParamStore<T>::grad_views() const
{
    std::vector<std::span<const T>> out;
    out.reserve(params_.size());
    for (const auto& p : params_)
        out.emplace_back(p.grad);
    return out;
}

template <typename T>
std::vector<ParamSlot<T>> BasicParamStore<T>::slots()
{
    std::vector<ParamSlot<T>> out;
    out.reserve(params_.size());
    for (auto& p : params_)
        out.push_back({p.name, p.value, p.grad});
    return out;
}

template <typename T>
std::vector<T> BasicParamStore<T>::flatten_values() const
{
    std::vector<T> flat;
    flat.reserve(total_count());
    for (const auto& p : params_)
        flat.insert(flat.end(), p.value.begin(), p.value.end());
    return flat;
}

template <typename T>
void BasicParamStore<T>::assign_flat_values(std::span<const T> flat)
{
    if (flat.size() != total_count())
        throw ShapeError("flat parameter vector has " + std::to_string(flat.size()) + " values, store holds " +
                         std::to_string(total_count()));
    std::size_t offset = 0;
    for (auto& p : params_) {
        std::copy_n(flat.begin() + offset, p.size(), p.value.begin());
        offset += p.size();
    }
}

template class BasicParamStore<float>;
template class BasicParamStore<double>;

} // namespace grokforge
