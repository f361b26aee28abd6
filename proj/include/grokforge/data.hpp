#pragma once

// Datasets: modular binary operations tokenized for the Transformer, and
// MNIST read from IDX files. Both expose a train/validation split of example
// ids and gather rows into a Batch.

#include "grokforge/errors.hpp"
#include "grokforge/nn.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

namespace grokforge {

class TaskData {
public:
    virtual ~TaskData() = default;

    virtual std::size_t size() const = 0;
    virtual Batch gather(std::span<const std::size_t> ids) const = 0;

    const std::vector<std::size_t>& train_ids() const { return train_; }
    const std::vector<std::size_t>& val_ids() const { return val_; }

protected:
    std::vector<std::size_t> train_;
    std::vector<std::size_t> val_;
};

// ---------------------------------------------------------------- modular

enum class BinaryOp { mul, add };

BinaryOp parse_binary_op(std::string_view s);
std::string_view to_string(BinaryOp op);

struct ModularExample {
    std::int32_t x = 0;
    std::int32_t y = 0;
    std::int32_t answer = 0;
};

// Token layout of one example: <x, op, y, =>, the answer read at "=". Values
// use ids 0..p-1, followed by the two special tokens. The positional table has
// one more slot, for the answer token of the full sequence <x, op, y, =, z>.
inline constexpr std::size_t kModularSeqLen = 4;
inline constexpr std::size_t kModularPositions = 5;
inline constexpr std::size_t modular_vocab_size(std::int32_t p) { return std::size_t(p) + 2; }

class ModularDataset final : public TaskData {
public:
    ModularDataset(std::int32_t p, BinaryOp op, double train_fraction, std::uint64_t seed);

    std::int32_t modulus() const { return p_; }
    BinaryOp op() const { return op_; }
    const std::vector<ModularExample>& examples() const { return examples_; }

    std::size_t size() const override { return examples_.size(); }
    Batch gather(std::span<const std::size_t> ids) const override;

    std::int32_t op_token() const { return p_; }
    std::int32_t eq_token() const { return p_ + 1; }

private:
    std::int32_t p_;
    BinaryOp op_;
    std::vector<ModularExample> examples_;
};

// All p^2 pairs, shuffled by seed; the first ceil(train_fraction * p^2) train.
ModularDataset gen_modular(std::int32_t p, BinaryOp op, double train_fraction, std::uint64_t seed);

// ------------------------------------------------------------------ MNIST

enum class IdxErrorKind { io, bad_magic, truncated, dimension_mismatch, bad_label };

class IdxError : public Error {
public:
    IdxError(IdxErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    IdxErrorKind kind() const { return kind_; }

private:
    IdxErrorKind kind_;
};

inline constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;

struct ImageDataset {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> pixels; // n x rows x cols, scaled to [0, 1]
    std::vector<std::int32_t> labels;

    std::size_t size() const { return labels.size(); }
    std::size_t feature_dim() const { return rows * cols; }
};

ImageDataset load_mnist_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// `count` distinct indices from [0, n), chosen by seed, in ascending order.
std::vector<std::size_t> sample_subset(std::size_t n, std::size_t count, std::uint64_t seed);

// Training rows are a fixed-size subset of the training file; the test file
// is kept whole for validation.
class MnistTask final : public TaskData {
public:
    MnistTask(ImageDataset train, ImageDataset test, std::size_t subset_size, std::uint64_t seed);

    std::size_t size() const override { return train_set_.size() + test_set_.size(); }
    Batch gather(std::span<const std::size_t> ids) const override;

private:
    ImageDataset train_set_;
    ImageDataset test_set_;
};

// --------------------------------------------------------------- batching

// Epoch-reshuffled minibatches over n items, remainder dropped. Iteration t
// reads batch (t mod batches_per_epoch) of the permutation for epoch
// t / batches_per_epoch.
class BatchSampler {
public:
    BatchSampler(std::size_t n, std::size_t batch_size, std::uint64_t seed);

    std::size_t batches_per_epoch() const { return n_ / batch_; }
    // Positions in [0, n) of the items in the batch of iteration t.
    std::vector<std::size_t> indices(std::int64_t t);

private:
    std::size_t n_;
    std::size_t batch_;
    std::uint64_t seed_;
    std::int64_t epoch_ = -1;
    std::vector<std::size_t> perm_;
};

// The training batch of iteration t for (batch_size, seed).
Batch make_batch(const TaskData& data, std::size_t batch_size, std::uint64_t seed, std::int64_t t);

// Deterministic sub-seed for one consumer of randomness (splitmix64 mixing).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace seed_stream {
inline constexpr std::uint64_t data = 1;
inline constexpr std::uint64_t init = 2;
inline constexpr std::uint64_t batches = 3;
} // namespace seed_stream

} // namespace grokforge
