#include "grokforge/data.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <string>

namespace grokforge {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

BatchSampler::BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed)
    : n_(n), batch_(batch_size), seed_(seed)
{
    if (n_ == 0)
        throw Error("cannot draw batches from an empty dataset");
    if (batch_ == 0 || batch_ > n_)
        throw ConfigError("batch size " + std::to_string(batch_) + " must lie in [1, " + std::to_string(n_) + "]");
}

std::vector<std::size_t> BatchSampler::indices(std::int64_t t)
{
    const auto per_epoch = static_cast<std::int64_t>(batches_per_epoch());
    const std::int64_t epoch = t / per_epoch;
    if (epoch != epoch_) {
        perm_.resize(n_);
        std::iota(perm_.begin(), perm_.end(), std::size_t{0});
        std::mt19937_64 rng(derive_seed(seed_, static_cast<std::uint64_t>(epoch)));
        std::shuffle(perm_.begin(), perm_.end(), rng);
        epoch_ = epoch;
    }
    const auto start = static_cast<std::size_t>(t % per_epoch) * batch_;
    return {perm_.begin() + std::ptrdiff_t(start), perm_.begin() + std::ptrdiff_t(start + batch_)};
}

Batch make_batch(const TaskData& data, std::size_t batch_size, std::uint64_t seed, std::int64_t t)
{
    BatchSampler sampler(data.train_ids().size(), batch_size, seed);
    const auto pos = sampler.indices(t);
    std::vector<std::size_t> ids(pos.size());
    for (std::size_t i = 0; i < pos.size(); ++i)
        ids[i] = data.train_ids()[pos[i]];
    return data.gather(ids);
}

} // namespace grokforge
