#pragma once

// Models with hand-written backpropagation: a small decoder-only Transformer
// for the algorithmic tasks and a three-layer MLP for MNIST.

#include "grokforge/param_store.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <string_view>
#include <vector>

namespace grokforge {

// One minibatch. Token tasks fill `tokens` (size x seq_len), image tasks fill
// `features` (size x feature_dim). `targets` holds one class index per row.
struct Batch {
    std::size_t size = 0;
    std::size_t seq_len = 0;
    std::vector<std::int32_t> tokens;
    std::size_t feature_dim = 0;
    std::vector<float> features;
    std::vector<std::int32_t> targets;
    // Dataset indices of the rows, for provenance checks.
    std::vector<std::size_t> example_ids;
};

struct LossAccuracy {
    double loss = 0.0;
    double accuracy = 0.0;
};

struct TransformerConfig {
    std::size_t vocab_size = 99;
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t seq_len = 5;
    std::size_t ffn_dim = 512;
    // Post-norm blocks, x = LN(x + f(x)), unless set.
    bool pre_norm = false;

    void validate() const;
};

struct MLPConfig {
    std::vector<std::size_t> widths{784, 200, 200, 10};
    double init_scale = 1.0;

    void validate() const;
};

std::size_t count_params(const TransformerConfig& config);
std::size_t count_params(const MLPConfig& config);

// Linear weights ~ N(0, (init_scale / sqrt(fan_in))^2), embeddings ~
// N(0, init_scale^2), LayerNorm gains 1, every bias 0.
template <typename T>
BasicParamStore<T> init_params(const TransformerConfig& config, std::uint64_t seed, double init_scale = 1.0);

// Kaiming-normal weights for ReLU, N(0, 2 / fan_in), scaled by init_scale.
template <typename T>
BasicParamStore<T> init_params(const MLPConfig& config, std::uint64_t seed, double init_scale);

template <typename T>
class Model {
public:
    virtual ~Model() = default;

    virtual BasicParamStore<T> init_params(std::uint64_t seed) const = 0;
    // Mean loss over the batch; overwrites params' gradients.
    virtual LossAccuracy forward_backward(BasicParamStore<T>& params, const Batch& batch) = 0;
    // Forward only. Large batches are processed in chunks.
    virtual LossAccuracy evaluate(const BasicParamStore<T>& params, const Batch& batch) = 0;
};

template <typename T>
class TransformerModel final : public Model<T> {
public:
    explicit TransformerModel(TransformerConfig config, double init_scale = 1.0);
    ~TransformerModel() override;

    const TransformerConfig& config() const { return config_; }

    BasicParamStore<T> init_params(std::uint64_t seed) const override;
    // Cross-entropy of the answer predicted at the final position.
    LossAccuracy forward_backward(BasicParamStore<T>& params, const Batch& batch) override;
    LossAccuracy evaluate(const BasicParamStore<T>& params, const Batch& batch) override;

    // Logits at every position, row-major (size x seq_len x vocab).
    std::vector<T> logits_all_positions(const BasicParamStore<T>& params, const Batch& batch);
    // Attention probabilities of the last forward pass, (layer, row, head, i, j).
    std::vector<T> last_attention(std::size_t layer) const;

private:
    struct Workspace;
    TransformerConfig config_;
    double init_scale_;
    std::unique_ptr<Workspace> ws_;
};

template <typename T>
class MLPModel final : public Model<T> {
public:
    explicit MLPModel(MLPConfig config);
    ~MLPModel() override;

    const MLPConfig& config() const { return config_; }

    BasicParamStore<T> init_params(std::uint64_t seed) const override;
    // MSE between the outputs and one-hot targets, averaged over all entries.
    LossAccuracy forward_backward(BasicParamStore<T>& params, const Batch& batch) override;
    LossAccuracy evaluate(const BasicParamStore<T>& params, const Batch& batch) override;

private:
    struct Workspace;
    MLPConfig config_;
    std::unique_ptr<Workspace> ws_;
};

extern template class TransformerModel<float>;
extern template class TransformerModel<double>;
extern template class MLPModel<float>;
extern template class MLPModel<double>;

} // namespace grokforge
