#include "grokforge/errors.hpp"
#include "grokforge/nn.hpp"

#include <Eigen/Dense>
#include <unsupported/Eigen/SpecialFunctions>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

namespace grokforge {

namespace {

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using RowVec = Eigen::Matrix<T, 1, Eigen::Dynamic>;
template <typename T>
using ColVec = Eigen::Matrix<T, Eigen::Dynamic, 1>;

constexpr double kLayerNormEps = 1e-5;
constexpr std::size_t kEvalChunk = 512;

std::string block_name(std::size_t layer, std::string_view suffix)
{
    return "blocks." + std::to_string(layer) + "." + std::string(suffix);
}

template <typename T>
Eigen::Map<const Mat<T>> cmat(const BasicParamStore<T>& ps, const std::string& name, std::size_t rows,
                              std::size_t cols)
{
    return {ps.at(name).value.data(), Eigen::Index(rows), Eigen::Index(cols)};
}

template <typename T>
Eigen::Map<const RowVec<T>> cvec(const BasicParamStore<T>& ps, const std::string& name)
{
    const auto& p = ps.at(name);
    return {p.value.data(), Eigen::Index(p.size())};
}

template <typename T>
Eigen::Map<Mat<T>> gmat(BasicParamStore<T>& ps, const std::string& name, std::size_t rows, std::size_t cols)
{
    return {ps.at(name).grad.data(), Eigen::Index(rows), Eigen::Index(cols)};
}

template <typename T>
Eigen::Map<RowVec<T>> gvec(BasicParamStore<T>& ps, const std::string& name)
{
    auto& p = ps.at(name);
    return {p.grad.data(), Eigen::Index(p.size())};
}

template <typename T>
struct LayerNormCache {
    Mat<T> xhat;
    ColVec<T> rstd;
};

template <typename T>
void layer_norm_forward(const Mat<T>& x, const Eigen::Map<const RowVec<T>>& gamma,
                        const Eigen::Map<const RowVec<T>>& beta, LayerNormCache<T>& cache, Mat<T>& y)
{
    const ColVec<T> mean = x.rowwise().mean();
    cache.xhat = x.colwise() - mean;
    const ColVec<T> var = cache.xhat.array().square().rowwise().mean();
    cache.rstd = (var.array() + T(kLayerNormEps)).rsqrt();
    cache.xhat.array().colwise() *= cache.rstd.array();
    y = (cache.xhat.array().rowwise() * gamma.array()).rowwise() + beta.array();
}

// Returns dL/dx; accumulates dL/dgamma and dL/dbeta.
template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const LayerNormCache<T>& cache, const Eigen::Map<const RowVec<T>>& gamma,
                           Eigen::Map<RowVec<T>> dgamma, Eigen::Map<RowVec<T>> dbeta)
{
    dgamma.array() += (dy.array() * cache.xhat.array()).colwise().sum();
    dbeta.array() += dy.array().colwise().sum();
    Mat<T> dxhat = dy.array().rowwise() * gamma.array();
    const ColVec<T> m1 = dxhat.rowwise().mean();
    const ColVec<T> m2 = (dxhat.array() * cache.xhat.array()).rowwise().mean();
    Mat<T> dx = (dxhat.array().colwise() - m1.array()) - (cache.xhat.array().colwise() * m2.array());
    dx.array().colwise() *= cache.rstd.array();
    return dx;
}

template <typename T>
void require_finite(const Mat<T>& m, const std::string& where)
{
    if (!m.allFinite())
        throw NumericError("non-finite activations in " + where);
}

} // namespace

void TransformerConfig::validate() const
{
    if (vocab_size < 1 || d_model < 1 || n_heads < 1 || seq_len < 1 || ffn_dim < 1)
        throw ConfigError("transformer dimensions must be positive");
    if (d_model % n_heads != 0)
        throw ConfigError("model.d_model must be divisible by model.n_heads");
}

std::size_t count_params(const TransformerConfig& c)
{
    const std::size_t d = c.d_model;
    const std::size_t per_layer = (3 * d * d + 3 * d)    // qkv projection
                                  + (d * d + d)          // output projection
                                  + 2 * d                // ln1
                                  + (c.ffn_dim * d + c.ffn_dim) + (d * c.ffn_dim + d) + 2 * d; // ffn + ln2
    return c.vocab_size * d + c.seq_len * d + c.n_layers * per_layer + 2 * d + c.vocab_size * d;
}

template <typename T>
BasicParamStore<T> init_params(const TransformerConfig& config, std::uint64_t seed, double init_scale)
{
    config.validate();
    const std::size_t d = config.d_model;
    const std::size_t ff = config.ffn_dim;
    BasicParamStore<T> ps;
    ps.add("embed.token", {config.vocab_size, d});
    ps.add("embed.position", {config.seq_len, d});
    for (std::size_t l = 0; l < config.n_layers; ++l) {
        ps.add(block_name(l, "attn.in_proj.weight"), {3 * d, d});
        ps.add(block_name(l, "attn.in_proj.bias"), {3 * d});
        ps.add(block_name(l, "attn.out_proj.weight"), {d, d});
        ps.add(block_name(l, "attn.out_proj.bias"), {d});
        ps.add(block_name(l, "ln1.weight"), {d});
        ps.add(block_name(l, "ln1.bias"), {d});
        ps.add(block_name(l, "ffn.fc1.weight"), {ff, d});
        ps.add(block_name(l, "ffn.fc1.bias"), {ff});
        ps.add(block_name(l, "ffn.fc2.weight"), {d, ff});
        ps.add(block_name(l, "ffn.fc2.bias"), {d});
        ps.add(block_name(l, "ln2.weight"), {d});
        ps.add(block_name(l, "ln2.bias"), {d});
    }
    ps.add("ln_f.weight", {d});
    ps.add("ln_f.bias", {d});
    ps.add("head.weight", {config.vocab_size, d});

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (auto& p : ps) {
        const bool is_bias = p.name.ends_with(".bias");
        const bool is_norm = p.name.find("ln") != std::string::npos && p.name.ends_with(".weight");
        if (is_bias)
            continue;
        if (is_norm) {
            std::fill(p.value.begin(), p.value.end(), T(1));
            continue;
        }
        // An embedding is a linear map from a one-hot vector, fan-in 1.
        const double fan_in = p.name.starts_with("embed.") ? 1.0 : double(p.shape.back());
        const double stddev = init_scale / std::sqrt(fan_in);
        for (auto& v : p.value)
            v = T(stddev * normal(rng));
    }
    return ps;
}

// ------------------------------------------------------------------ model

template <typename T>
struct TransformerModel<T>::Workspace {
    struct Layer {
        Mat<T> x;       // block input
        Mat<T> attn_in; // input of the qkv projection
        Mat<T> qkv;
        std::vector<T> probs; // (row, head, i, j)
        Mat<T> ctx;
        LayerNormCache<T> ln1;
        LayerNormCache<T> ln2;
        Mat<T> resid;  // x + attention (post-norm: LN1 input, pre-norm: residual stream)
        Mat<T> ffn_in; // input of fc1
        Mat<T> h_pre;
        Mat<T> cdf;
        Mat<T> h_act;
    };
    std::size_t rows = 0; // sequences in the batch
    std::size_t seq = 0;  // tokens per sequence
    std::vector<Layer> layers;
    Mat<T> x_final;
    LayerNormCache<T> ln_f;
    Mat<T> z;      // final normalized states (rows * seq_len, d)
    Mat<T> z_last; // rows at the answer position
    Mat<T> logits;
};

template <typename T>
TransformerModel<T>::TransformerModel(TransformerConfig config, double init_scale)
    : config_(config), init_scale_(init_scale), ws_(std::make_unique<Workspace>())
{
    config_.validate();
    ws_->layers.resize(config_.n_layers);
}

template <typename T>
TransformerModel<T>::~TransformerModel() = default;

template <typename T>
BasicParamStore<T> TransformerModel<T>::init_params(std::uint64_t seed) const
{
    return grokforge::init_params<T>(config_, seed, init_scale_);
}

namespace {

template <typename T>
void attention_forward(const Mat<T>& qkv, std::size_t rows, std::size_t seq, std::size_t heads, std::size_t d,
                       std::vector<T>& probs, Mat<T>& ctx)
{
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    probs.assign(rows * heads * seq * seq, T(0));
    ctx.setZero(Eigen::Index(rows * seq), Eigen::Index(d));
    const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for
    for (std::ptrdiff_t b = 0; b < n_rows; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            T* p = probs.data() + ((std::size_t(b) * heads + h) * seq * seq);
            for (std::size_t i = 0; i < seq; ++i) {
                const T* q = qkv.data() + (std::size_t(b) * seq + i) * 3 * d + h * dh;
                T maxv = -std::numeric_limits<T>::infinity();
                for (std::size_t j = 0; j <= i; ++j) {
                    const T* k = qkv.data() + (std::size_t(b) * seq + j) * 3 * d + d + h * dh;
                    T s = 0;
                    for (std::size_t c = 0; c < dh; ++c)
                        s += q[c] * k[c];
                    s *= scale;
                    p[i * seq + j] = s;
                    maxv = std::max(maxv, s);
                }
                T sum = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[i * seq + j] = std::exp(p[i * seq + j] - maxv);
                    sum += p[i * seq + j];
                }
                T* out = ctx.data() + (std::size_t(b) * seq + i) * d + h * dh;
                for (std::size_t j = 0; j <= i; ++j) {
                    p[i * seq + j] /= sum;
                    const T* v = qkv.data() + (std::size_t(b) * seq + j) * 3 * d + 2 * d + h * dh;
                    for (std::size_t c = 0; c < dh; ++c)
                        out[c] += p[i * seq + j] * v[c];
                }
            }
        }
    }
}

template <typename T>
Mat<T> attention_backward(const Mat<T>& qkv, const std::vector<T>& probs, const Mat<T>& dctx, std::size_t rows,
                          std::size_t seq, std::size_t heads, std::size_t d)
{
    const std::size_t dh = d / heads;
    const T scale = T(1) / std::sqrt(T(dh));
    Mat<T> dqkv = Mat<T>::Zero(Eigen::Index(rows * seq), Eigen::Index(3 * d));
    const auto n_rows = static_cast<std::ptrdiff_t>(rows);
#pragma omp parallel for
    for (std::ptrdiff_t b = 0; b < n_rows; ++b) {
        std::vector<T> dp(seq);
        for (std::size_t h = 0; h < heads; ++h) {
            const T* p = probs.data() + ((std::size_t(b) * heads + h) * seq * seq);
            for (std::size_t i = 0; i < seq; ++i) {
                const std::size_t ri = std::size_t(b) * seq + i;
                const T* dout = dctx.data() + ri * d + h * dh;
                const T* q = qkv.data() + ri * 3 * d + h * dh;
                T* dq = dqkv.data() + ri * 3 * d + h * dh;
                T dot = 0;
                for (std::size_t j = 0; j <= i; ++j) {
                    const std::size_t rj = std::size_t(b) * seq + j;
                    const T* v = qkv.data() + rj * 3 * d + 2 * d + h * dh;
                    T* dv = dqkv.data() + rj * 3 * d + 2 * d + h * dh;
                    const T pij = p[i * seq + j];
                    T s = 0;
                    for (std::size_t c = 0; c < dh; ++c) {
                        s += dout[c] * v[c];
                        dv[c] += pij * dout[c];
                    }
                    dp[j] = s;
                    dot += pij * s;
                }
                for (std::size_t j = 0; j <= i; ++j) {
                    const std::size_t rj = std::size_t(b) * seq + j;
                    const T ds = p[i * seq + j] * (dp[j] - dot) * scale;
                    const T* k = qkv.data() + rj * 3 * d + d + h * dh;
                    T* dk = dqkv.data() + rj * 3 * d + d + h * dh;
                    for (std::size_t c = 0; c < dh; ++c) {
                        dq[c] += ds * k[c];
                        dk[c] += ds * q[c];
                    }
                }
            }
        }
    }
    return dqkv;
}

// Cross-entropy over rows of logits; fills dlogits with the gradient of the mean loss.
template <typename T>
LossAccuracy softmax_cross_entropy(const Mat<T>& logits, const std::int32_t* targets, Mat<T>* dlogits)
{
    const Eigen::Index rows = logits.rows();
    const Eigen::Index classes = logits.cols();
    if (dlogits)
        dlogits->resize(rows, classes);
    double loss = 0.0;
    std::size_t correct = 0;
    for (Eigen::Index r = 0; r < rows; ++r) {
        const auto row = logits.row(r);
        Eigen::Index arg = 0;
        const T maxv = row.maxCoeff(&arg);
        double sum = 0.0;
        for (Eigen::Index c = 0; c < classes; ++c)
            sum += std::exp(double(row(c) - maxv));
        const auto target = Eigen::Index(targets[r]);
        if (target < 0 || target >= classes)
            throw Error("target class " + std::to_string(target) + " out of range");
        loss += std::log(sum) - double(row(target) - maxv);
        correct += (arg == target);
        if (dlogits) {
            for (Eigen::Index c = 0; c < classes; ++c)
                (*dlogits)(r, c) = T(std::exp(double(row(c) - maxv)) / sum / double(rows));
            (*dlogits)(r, target) -= T(1.0 / double(rows));
        }
    }
    return {loss / double(rows), double(correct) / double(rows)};
}

// Runs the blocks and the final LayerNorm on `rows` token sequences of length
// `seq` (at most the positional table length).
template <typename T, typename Workspace>
void transformer_forward(const TransformerConfig& cfg, const BasicParamStore<T>& ps, const std::int32_t* tokens,
                         std::size_t rows, std::size_t seq, Workspace& ws)
{
    const std::size_t d = cfg.d_model;
    const std::size_t n = rows * seq;
    const std::size_t ff = cfg.ffn_dim;
    ws.rows = rows;
    ws.seq = seq;

    const auto tok = cmat(ps, "embed.token", cfg.vocab_size, d);
    const auto pos = cmat(ps, "embed.position", seq, d);
    Mat<T> x{Eigen::Index(n), Eigen::Index(d)};
    for (std::size_t r = 0; r < n; ++r) {
        const auto id = tokens[r];
        if (id < 0 || std::size_t(id) >= cfg.vocab_size)
            throw Error("token id " + std::to_string(id) + " outside vocabulary");
        x.row(Eigen::Index(r)) = tok.row(id) + pos.row(Eigen::Index(r % seq));
    }

    for (std::size_t l = 0; l < cfg.n_layers; ++l) {
        auto& L = ws.layers[l];
        L.x = std::move(x);
        const auto w_in = cmat(ps, block_name(l, "attn.in_proj.weight"), 3 * d, d);
        const auto b_in = cvec(ps, block_name(l, "attn.in_proj.bias"));
        const auto w_out = cmat(ps, block_name(l, "attn.out_proj.weight"), d, d);
        const auto b_out = cvec(ps, block_name(l, "attn.out_proj.bias"));
        const auto g1 = cvec(ps, block_name(l, "ln1.weight"));
        const auto be1 = cvec(ps, block_name(l, "ln1.bias"));
        const auto w1 = cmat(ps, block_name(l, "ffn.fc1.weight"), ff, d);
        const auto b1 = cvec(ps, block_name(l, "ffn.fc1.bias"));
        const auto w2 = cmat(ps, block_name(l, "ffn.fc2.weight"), d, ff);
        const auto b2 = cvec(ps, block_name(l, "ffn.fc2.bias"));
        const auto g2 = cvec(ps, block_name(l, "ln2.weight"));
        const auto be2 = cvec(ps, block_name(l, "ln2.bias"));

        if (cfg.pre_norm)
            layer_norm_forward<T>(L.x, g1, be1, L.ln1, L.attn_in);
        else
            L.attn_in = L.x;
        L.qkv.noalias() = L.attn_in * w_in.transpose();
        L.qkv.rowwise() += b_in;
        attention_forward<T>(L.qkv, rows, seq, cfg.n_heads, d, L.probs, L.ctx);
        Mat<T> attn_out = L.ctx * w_out.transpose();
        attn_out.rowwise() += b_out;
        L.resid = L.x + attn_out;

        if (cfg.pre_norm)
            layer_norm_forward<T>(L.resid, g2, be2, L.ln2, L.ffn_in);
        else
            layer_norm_forward<T>(L.resid, g1, be1, L.ln1, L.ffn_in);

        L.h_pre.noalias() = L.ffn_in * w1.transpose();
        L.h_pre.rowwise() += b1;
        L.cdf = T(0.5) * ((L.h_pre.array() * T(std::numbers::sqrt2 / 2)).erf() + T(1));
        L.h_act = L.h_pre.array() * L.cdf.array();
        Mat<T> f = L.h_act * w2.transpose();
        f.rowwise() += b2;

        if (cfg.pre_norm) {
            x = L.resid + f;
        } else {
            const Mat<T> r2 = L.ffn_in + f;
            layer_norm_forward<T>(r2, g2, be2, L.ln2, x);
        }
        require_finite<T>(x, "blocks." + std::to_string(l));
    }

    ws.x_final = std::move(x);
    layer_norm_forward<T>(ws.x_final, cvec(ps, "ln_f.weight"), cvec(ps, "ln_f.bias"), ws.ln_f, ws.z);
    require_finite<T>(ws.z, "ln_f");
}

template <typename T, typename Workspace>
void transformer_backward(const TransformerConfig& cfg, BasicParamStore<T>& ps, const std::int32_t* tokens,
                          Workspace& ws, const Mat<T>& dz)
{
    const std::size_t d = cfg.d_model;
    const std::size_t seq = ws.seq;
    const std::size_t ff = cfg.ffn_dim;
    const std::size_t rows = ws.rows;
    const auto& cps = static_cast<const BasicParamStore<T>&>(ps);

    Mat<T> dx = layer_norm_backward<T>(dz, ws.ln_f, cvec(cps, "ln_f.weight"), gvec(ps, "ln_f.weight"),
                                       gvec(ps, "ln_f.bias"));

    for (std::size_t li = cfg.n_layers; li-- > 0;) {
        auto& L = ws.layers[li];
        const auto w_in = cmat(cps, block_name(li, "attn.in_proj.weight"), 3 * d, d);
        const auto w_out = cmat(cps, block_name(li, "attn.out_proj.weight"), d, d);
        const auto g1 = cvec(cps, block_name(li, "ln1.weight"));
        const auto w1 = cmat(cps, block_name(li, "ffn.fc1.weight"), ff, d);
        const auto w2 = cmat(cps, block_name(li, "ffn.fc2.weight"), d, ff);
        const auto g2 = cvec(cps, block_name(li, "ln2.weight"));
        auto dln1_g = gvec(ps, block_name(li, "ln1.weight"));
        auto dln1_b = gvec(ps, block_name(li, "ln1.bias"));
        auto dln2_g = gvec(ps, block_name(li, "ln2.weight"));
        auto dln2_b = gvec(ps, block_name(li, "ln2.bias"));

        // df: gradient at the FFN output; dresid: gradient reaching x + attention.
        Mat<T> df;
        if (cfg.pre_norm)
            df = dx;
        else
            df = layer_norm_backward<T>(dx, L.ln2, g2, dln2_g, dln2_b);

        gmat(ps, block_name(li, "ffn.fc2.weight"), d, ff).noalias() += df.transpose() * L.h_act;
        gvec(ps, block_name(li, "ffn.fc2.bias")) += df.colwise().sum();
        Mat<T> dh = df * w2;
        const T inv_sqrt_2pi = T(1.0 / std::sqrt(2.0 * std::numbers::pi));
        dh.array() *= L.cdf.array() + L.h_pre.array() * (L.h_pre.array().square() * T(-0.5)).exp() * inv_sqrt_2pi;
        gmat(ps, block_name(li, "ffn.fc1.weight"), ff, d).noalias() += dh.transpose() * L.ffn_in;
        gvec(ps, block_name(li, "ffn.fc1.bias")) += dh.colwise().sum();
        const Mat<T> dffn_in = dh * w1;

        Mat<T> dresid;
        if (cfg.pre_norm)
            dresid = dx + layer_norm_backward<T>(dffn_in, L.ln2, g2, dln2_g, dln2_b);
        else
            dresid = layer_norm_backward<T>(df + dffn_in, L.ln1, g1, dln1_g, dln1_b);

        gmat(ps, block_name(li, "attn.out_proj.weight"), d, d).noalias() += dresid.transpose() * L.ctx;
        gvec(ps, block_name(li, "attn.out_proj.bias")) += dresid.colwise().sum();
        const Mat<T> dctx = dresid * w_out;
        const Mat<T> dqkv = attention_backward<T>(L.qkv, L.probs, dctx, rows, seq, cfg.n_heads, d);
        gmat(ps, block_name(li, "attn.in_proj.weight"), 3 * d, d).noalias() += dqkv.transpose() * L.attn_in;
        gvec(ps, block_name(li, "attn.in_proj.bias")) += dqkv.colwise().sum();
        const Mat<T> dattn_in = dqkv * w_in;

        if (cfg.pre_norm)
            dx = dresid + layer_norm_backward<T>(dattn_in, L.ln1, g1, dln1_g, dln1_b);
        else
            dx = dresid + dattn_in;
    }

    auto dtok = gmat(ps, "embed.token", cfg.vocab_size, d);
    auto dpos = gmat(ps, "embed.position", seq, d);
    for (std::size_t r = 0; r < rows * seq; ++r) {
        dtok.row(tokens[r]) += dx.row(Eigen::Index(r));
        dpos.row(Eigen::Index(r % seq)) += dx.row(Eigen::Index(r));
    }
}

void check_token_batch(const TransformerConfig& cfg, const Batch& batch)
{
    if (batch.size == 0)
        throw Error("empty batch");
    if (batch.seq_len < 1 || batch.seq_len > cfg.seq_len || batch.tokens.size() != batch.size * batch.seq_len)
        throw ShapeError("token batch does not fit the model sequence length");
    if (batch.targets.size() != batch.size)
        throw ShapeError("batch has " + std::to_string(batch.targets.size()) + " targets for " +
                         std::to_string(batch.size) + " rows");
}

} // namespace

template <typename T>
LossAccuracy TransformerModel<T>::forward_backward(BasicParamStore<T>& params, const Batch& batch)
{
    check_token_batch(config_, batch);
    auto& ws = *ws_;
    const std::size_t d = config_.d_model;
    const std::size_t seq = batch.seq_len;
    transformer_forward<T>(config_, params, batch.tokens.data(), batch.size, seq, ws);

    ws.z_last.resize(Eigen::Index(batch.size), Eigen::Index(d));
    for (std::size_t b = 0; b < batch.size; ++b)
        ws.z_last.row(Eigen::Index(b)) = ws.z.row(Eigen::Index(b * seq + seq - 1));
    const auto head = cmat(params, "head.weight", config_.vocab_size, d);
    ws.logits.noalias() = ws.z_last * head.transpose();
    require_finite<T>(ws.logits, "head");

    Mat<T> dlogits;
    const auto result = softmax_cross_entropy<T>(ws.logits, batch.targets.data(), &dlogits);

    params.zero_grad();
    gmat(params, "head.weight", config_.vocab_size, d).noalias() += dlogits.transpose() * ws.z_last;
    Mat<T> dz = Mat<T>::Zero(ws.z.rows(), ws.z.cols());
    const Mat<T> dz_last = dlogits * head;
    for (std::size_t b = 0; b < batch.size; ++b)
        dz.row(Eigen::Index(b * seq + seq - 1)) = dz_last.row(Eigen::Index(b));
    transformer_backward<T>(config_, params, batch.tokens.data(), ws, dz);
    return result;
}

template <typename T>
LossAccuracy TransformerModel<T>::evaluate(const BasicParamStore<T>& params, const Batch& batch)
{
    check_token_batch(config_, batch);
    auto& ws = *ws_;
    const std::size_t d = config_.d_model;
    const std::size_t seq = batch.seq_len;
    const auto head = cmat(params, "head.weight", config_.vocab_size, d);

    double loss = 0.0;
    double correct = 0.0;
    for (std::size_t start = 0; start < batch.size; start += kEvalChunk) {
        const std::size_t rows = std::min(kEvalChunk, batch.size - start);
        transformer_forward<T>(config_, params, batch.tokens.data() + start * seq, rows, seq, ws);
        ws.z_last.resize(Eigen::Index(rows), Eigen::Index(d));
        for (std::size_t b = 0; b < rows; ++b)
            ws.z_last.row(Eigen::Index(b)) = ws.z.row(Eigen::Index(b * seq + seq - 1));
        ws.logits.noalias() = ws.z_last * head.transpose();
        require_finite<T>(ws.logits, "head");
        const auto part = softmax_cross_entropy<T>(ws.logits, batch.targets.data() + start, nullptr);
        loss += part.loss * double(rows);
        correct += part.accuracy * double(rows);
    }
    return {loss / double(batch.size), correct / double(batch.size)};
}

template <typename T>
std::vector<T> TransformerModel<T>::logits_all_positions(const BasicParamStore<T>& params, const Batch& batch)
{
    check_token_batch(config_, batch);
    auto& ws = *ws_;
    transformer_forward<T>(config_, params, batch.tokens.data(), batch.size, batch.seq_len, ws);
    const auto head = cmat(params, "head.weight", config_.vocab_size, config_.d_model);
    const Mat<T> logits = ws.z * head.transpose();
    return {logits.data(), logits.data() + logits.size()};
}

template <typename T>
std::vector<T> TransformerModel<T>::last_attention(std::size_t layer) const
{
    return ws_->layers.at(layer).probs;
}

template class TransformerModel<float>;
template class TransformerModel<double>;
template BasicParamStore<float> init_params<float>(const TransformerConfig&, std::uint64_t, double);
template BasicParamStore<double> init_params<double>(const TransformerConfig&, std::uint64_t, double);

} // namespace grokforge
