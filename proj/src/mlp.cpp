#include "grokforge/errors.hpp"
#include "grokforge/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <string>

namespace grokforge {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;

constexpr std::size_t kEvalChunk = 2000;

std::string layer_name(std::size_t i, std::string_view suffix)
{
    return "fc" + std::to_string(i + 1) + "." + std::string(suffix);
}

} // namespace

void MLPConfig::validate() const
{
    if (widths.size() < 2)
        throw ConfigError("MLP needs an input and an output width");
    for (auto w : widths)
        if (w == 0)
            throw ConfigError("MLP widths must be positive");
    if (!(init_scale > 0.0))
        throw ConfigError("model.init_scale must be > 0");
}

std::size_t count_params(const MLPConfig& config)
{
    std::size_t n = 0;
    for (std::size_t i = 0; i + 1 < config.widths.size(); ++i)
        n += config.widths[i] * config.widths[i + 1] + config.widths[i + 1];
    return n;
}

template <typename T>
BasicParamStore<T> init_params(const MLPConfig& config, std::uint64_t seed, double init_scale)
{
    config.validate();
    BasicParamStore<T> ps;
    for (std::size_t i = 0; i + 1 < config.widths.size(); ++i) {
        ps.add(layer_name(i, "weight"), {config.widths[i + 1], config.widths[i]});
        ps.add(layer_name(i, "bias"), {config.widths[i + 1]});
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : ps) {
        if (p.name.ends_with(".bias"))
            continue;
        const double stddev = init_scale * std::sqrt(2.0 / double(p.shape.back()));
        for (auto& v : p.value)
            v = T(stddev * normal(rng));
    }
    return ps;
}

template <typename T>
struct MLPModel<T>::Workspace {
    std::vector<Mat<T>> acts; // acts[0] = input, acts[i] = output of layer i
    Mat<T> out;
};

template <typename T>
MLPModel<T>::MLPModel(MLPConfig config) : config_(std::move(config)), ws_(std::make_unique<Workspace>())
{
    config_.validate();
}

template <typename T>
MLPModel<T>::~MLPModel() = default;

template <typename T>
BasicParamStore<T> MLPModel<T>::init_params(std::uint64_t seed) const
{
    return grokforge::init_params<T>(config_, seed, config_.init_scale);
}

namespace {

void check_feature_batch(const MLPConfig& cfg, const Batch& batch)
{
    if (batch.size == 0)
        throw Error("empty batch");
    if (batch.feature_dim != cfg.widths.front() || batch.features.size() != batch.size * batch.feature_dim)
        throw ShapeError("feature batch does not match the MLP input width");
    if (batch.targets.size() != batch.size)
        throw ShapeError("batch has " + std::to_string(batch.targets.size()) + " targets for " +
                         std::to_string(batch.size) + " rows");
}

template <typename T, typename Workspace>
void mlp_forward(const MLPConfig& cfg, const BasicParamStore<T>& ps, const float* features, std::size_t rows,
                 Workspace& ws)
{
    const std::size_t layers = cfg.widths.size() - 1;
    ws.acts.resize(layers + 1);
    ws.acts[0] = Eigen::Map<const Mat<float>>(features, Eigen::Index(rows), Eigen::Index(cfg.widths[0]))
                     .template cast<T>();
    for (std::size_t i = 0; i < layers; ++i) {
        const auto& w = ps.at(layer_name(i, "weight"));
        const auto& b = ps.at(layer_name(i, "bias"));
        const Eigen::Map<const Mat<T>> W(w.value.data(), Eigen::Index(w.shape[0]), Eigen::Index(w.shape[1]));
        const Eigen::Map<const RowVec<T>> B(b.value.data(), Eigen::Index(b.size()));
        Mat<T> z = ws.acts[i] * W.transpose();
        z.rowwise() += B;
        if (i + 1 < layers)
            z = z.cwiseMax(T(0));
        if (!z.allFinite())
            throw NumericError("non-finite activations in " + layer_name(i, "output"));
        ws.acts[i + 1] = std::move(z);
    }
}

// Mean squared error against one-hot targets, averaged over rows and classes.
template <typename T>
LossAccuracy mse_one_hot(const Mat<T>& out, const std::int32_t* targets, Mat<T>* dout)
{
    const Eigen::Index rows = out.rows();
    const Eigen::Index classes = out.cols();
    double loss = 0.0;
    std::size_t correct = 0;
    if (dout)
        *dout = out;
    const double norm = double(rows) * double(classes);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto target = Eigen::Index(targets[r]);
        if (target < 0 || target >= classes)
            throw Error("target class " + std::to_string(target) + " out of range");
        Eigen::Index arg = 0;
        out.row(r).maxCoeff(&arg);
        correct += (arg == target);
        for (Eigen::Index c = 0; c < classes; ++c) {
            const double diff = double(out(r, c)) - (c == target ? 1.0 : 0.0);
            loss += diff * diff;
            if (dout)
                (*dout)(r, c) = T(2.0 * diff / norm);
        }
    }
    return {loss / norm, double(correct) / double(rows)};
}

} // namespace

template <typename T>
LossAccuracy MLPModel<T>::forward_backward(BasicParamStore<T>& params, const Batch& batch)
{
    check_feature_batch(config_, batch);
    auto& ws = *ws_;
    mlp_forward<T>(config_, params, batch.features.data(), batch.size, ws);
    Mat<T> delta;
    const auto result = mse_one_hot<T>(ws.acts.back(), batch.targets.data(), &delta);

    params.zero_grad();
    const std::size_t layers = config_.widths.size() - 1;
    for (std::size_t i = layers; i-- > 0;) {
        auto& w = params.at(layer_name(i, "weight"));
        auto& b = params.at(layer_name(i, "bias"));
        Eigen::Map<Mat<T>> dW(w.grad.data(), Eigen::Index(w.shape[0]), Eigen::Index(w.shape[1]));
        Eigen::Map<RowVec<T>> dB(b.grad.data(), Eigen::Index(b.size()));
        dW.noalias() += delta.transpose() * ws.acts[i];
        dB += delta.colwise().sum();
        if (i == 0)
            break;
        const Eigen::Map<const Mat<T>> W(w.value.data(), Eigen::Index(w.shape[0]), Eigen::Index(w.shape[1]));
        Mat<T> prev = delta * W;
        // ReLU derivative, taken as 0 at the kink.
        prev.array() *= (ws.acts[i].array() > T(0)).template cast<T>();
        delta = std::move(prev);
    }
    return result;
}

template <typename T>
LossAccuracy MLPModel<T>::evaluate(const BasicParamStore<T>& params, const Batch& batch)
{
    check_feature_batch(config_, batch);
    double loss = 0.0;
    double correct = 0.0;
    for (std::size_t start = 0; start < batch.size; start += kEvalChunk) {
        const std::size_t rows = std::min(kEvalChunk, batch.size - start);
        mlp_forward<T>(config_, params, batch.features.data() + start * batch.feature_dim, rows, *ws_);
        const auto part = mse_one_hot<T>(ws_->acts.back(), batch.targets.data() + start, nullptr);
        loss += part.loss * double(rows);
        correct += part.accuracy * double(rows);
    }
    return {loss / double(batch.size), correct / double(batch.size)};
}

template class MLPModel<float>;
template class MLPModel<double>;
template BasicParamStore<float> init_params<float>(const MLPConfig&, std::uint64_t, double);
template BasicParamStore<double> init_params<double>(const MLPConfig&, std::uint64_t, double);

} // namespace grokforge
