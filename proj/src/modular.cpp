#include "grokforge/data.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

namespace grokforge {

BinaryOp parse_binary_op(std::string_view s)
{
    if (s == "mul")
        return BinaryOp::mul;
    if (s == "add")
        return BinaryOp::add;
    throw ConfigError("unrecognized operation '" + std::string(s) + "' (expected mul|add)");
}

std::string_view to_string(BinaryOp op)
{
    return op == BinaryOp::mul ? "mul" : "add";
}

ModularDataset::ModularDataset(std::int32_t p, BinaryOp op, double train_fraction, std::uint64_t seed)
    : p_(p), op_(op)
{
    if (p < 2)
        throw ConfigError("task.p must be >= 2");
    if (!(train_fraction > 0.0 && train_fraction < 1.0))
        throw ConfigError("task.train_fraction must lie in (0, 1)");

    const std::size_t total = std::size_t(p) * std::size_t(p);
    const auto n_train = static_cast<std::size_t>(std::floor(train_fraction * double(total)));
    if (n_train == 0 || n_train >= total)
        throw ConfigError("task.train_fraction " + std::to_string(train_fraction) + " leaves an empty split for p=" +
                          std::to_string(p));

    examples_.reserve(total);
    for (std::int32_t x = 0; x < p; ++x)
        for (std::int32_t y = 0; y < p; ++y) {
            const std::int64_t r = op == BinaryOp::mul ? std::int64_t(x) * y : std::int64_t(x) + y;
            examples_.push_back({x, y, static_cast<std::int32_t>(r % p)});
        }

    std::vector<std::size_t> order(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    train_.assign(order.begin(), order.begin() + std::ptrdiff_t(n_train));
    val_.assign(order.begin() + std::ptrdiff_t(n_train), order.end());
}

Batch ModularDataset::gather(std::span<const std::size_t> ids) const
{
    Batch b;
    b.size = ids.size();
    b.seq_len = kModularSeqLen;
    b.tokens.reserve(ids.size() * kModularSeqLen);
    b.targets.reserve(ids.size());
    b.example_ids.assign(ids.begin(), ids.end());
    for (const auto id : ids) {
        const auto& e = examples_.at(id);
        b.tokens.insert(b.tokens.end(), {e.x, op_token(), e.y, eq_token()});
        b.targets.push_back(e.answer);
    }
    return b;
}

ModularDataset gen_modular(std::int32_t p, BinaryOp op, double train_fraction, std::uint64_t seed)
{
    return ModularDataset(p, op, train_fraction, seed);
}

} // namespace grokforge
