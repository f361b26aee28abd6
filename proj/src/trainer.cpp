#include "grokforge/trainer.hpp"

#include "grokforge/checkpoint.hpp"
#include "grokforge/errors.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

namespace grokforge {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point start)
{
    return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

double metric_of(const TraceRecord& r, std::string_view metric)
{
    if (metric == "train_loss")
        return r.train_loss;
    if (metric == "train_acc")
        return r.train_acc;
    if (metric == "val_loss")
        return r.val_loss;
    if (metric == "val_acc")
        return r.val_acc;
    throw Error("unknown metric '" + std::string(metric) + "'");
}

Batch gather_ids(const TaskData& data, const std::vector<std::size_t>& positions)
{
    std::vector<std::size_t> ids(positions.size());
    for (std::size_t i = 0; i < positions.size(); ++i)
        ids[i] = data.train_ids()[positions[i]];
    return data.gather(ids);
}

void write_snapshot(const std::filesystem::path& dir, std::int64_t t, const ParamStore& params,
                    const ParamStore& init, bool delta)
{
    auto flat = params.flatten_values();
    if (delta) {
        const auto base = init.flatten_values();
        for (std::size_t i = 0; i < flat.size(); ++i)
            flat[i] -= base[i];
    }
    write_checkpoint(dir / snapshot_file_name(t), manifest_of(params), flat);
}

} // namespace

std::optional<std::int64_t> iterations_to_threshold(std::span<const TraceRecord> records, std::string_view metric,
                                                    double threshold)
{
    // Validate the name even for empty traces.
    metric_of(TraceRecord{}, metric);
    for (const auto& r : records)
        if (metric_of(r, metric) >= threshold)
            return r.iteration;
    return std::nullopt;
}

std::optional<std::int64_t> iterations_to_threshold(const TrainTrace& trace, std::string_view metric,
                                                    double threshold)
{
    return iterations_to_threshold(trace.records, metric, threshold);
}

std::shared_ptr<const TaskData> make_task_data(const ExperimentConfig& config)
{
    const auto seed = derive_seed(config.run.seed, seed_stream::data);
    if (config.task.kind == TaskKind::modular)
        return std::make_shared<ModularDataset>(
            gen_modular(config.task.p, config.task.operation, config.task.train_fraction, seed));
    const std::filesystem::path dir = config.task.mnist_dir;
    auto train = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    auto test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    return std::make_shared<MnistTask>(std::move(train), std::move(test), config.task.mnist_subset, seed);
}

std::unique_ptr<Model<float>> make_model(const ExperimentConfig& config, const TaskData& data)
{
    const auto& m = config.model;
    if (config.task.kind == TaskKind::modular) {
        TransformerConfig tc;
        tc.vocab_size = modular_vocab_size(config.task.p);
        tc.d_model = m.d_model;
        tc.n_heads = m.n_heads;
        tc.n_layers = m.n_layers;
        tc.seq_len = kModularPositions;
        tc.ffn_dim = m.ffn_dim;
        tc.pre_norm = m.pre_norm;
        return std::make_unique<TransformerModel<float>>(tc, m.init_scale);
    }
    const std::size_t probe = data.train_ids().front();
    const auto features = data.gather(std::span<const std::size_t>(&probe, 1)).feature_dim;
    MLPConfig mc;
    mc.widths = {features, m.hidden, m.hidden, 10};
    mc.init_scale = m.init_scale;
    return std::make_unique<MLPModel<float>>(mc);
}

std::unique_ptr<GradientFilter<float>> make_filter(const ExperimentConfig& config)
{
    auto schedule = config.schedule.schedule();
    if (schedule.mode == ScheduleMode::staged && config.schedule.trigger == StageTrigger::train_acc)
        schedule.stage_start = std::numeric_limits<std::int64_t>::max(); // decided during training
    switch (config.filter.kind) {
    case FilterKind::none:
        return nullptr;
    case FilterKind::ma:
        return std::make_unique<MAGradientFilter<float>>(config.filter.ma(), schedule);
    case FilterKind::ema:
        return std::make_unique<EMAGradientFilter<float>>(config.filter.ema(), schedule);
    }
    return nullptr;
}

std::unique_ptr<Optimizer<float>> make_optimizer(const ExperimentConfig& config)
{
    const auto& o = config.optimizer;
    if (o.kind == OptimizerKind::sgd)
        return std::make_unique<Sgd<float>>(o.sgd());
    return std::make_unique<Adam<float>>(o.adam());
}

Trainer::Trainer(ExperimentConfig config, std::shared_ptr<const TaskData> data)
    : config_(std::move(config)), data_(std::move(data))
{
    config_.validate();
    if (!data_)
        data_ = make_task_data(config_);
    model_ = make_model(config_, *data_);
    params_ = model_->init_params(derive_seed(config_.run.seed, seed_stream::init));
    init_ = params_;
    filter_ = make_filter(config_);
    optimizer_ = make_optimizer(config_);
}

Trainer::~Trainer() = default;

void Trainer::set_filter(std::unique_ptr<GradientFilter<float>> filter)
{
    filter_ = std::move(filter);
}

TrainTrace Trainer::run()
{
    const auto& rc = config_.run;
    const bool staged_on_acc =
        config_.schedule.mode == ScheduleMode::staged && config_.schedule.trigger == StageTrigger::train_acc;

    TrainTrace trace;
    trace.param_count = params_.total_count();
    if (config_.schedule.mode == ScheduleMode::staged && !staged_on_acc && filter_)
        trace.stage_start = config_.schedule.stage_start;

    const std::filesystem::path out = rc.output_dir;
    const bool files = write_outputs_ && !rc.output_dir.empty();
    std::ofstream csv;
    if (files) {
        std::filesystem::create_directories(out);
        std::ofstream(out / kConfigFile) << serialize_config(config_);
        csv.open(out / kMetricsFile, std::ios::trunc);
        if (!csv)
            throw Error("cannot write " + (out / kMetricsFile).string());
        write_metrics_header(csv);
    }
    const bool snapshots = files && rc.snapshot_every > 0;

    const auto& train_ids = data_->train_ids();
    const std::size_t batch_size = std::min(rc.batch_size, train_ids.size());
    BatchSampler sampler(train_ids.size(), batch_size, derive_seed(rc.seed, seed_stream::batches));
    const Batch val_batch = data_->gather(data_->val_ids());
    const WarmupSchedule warmup{config_.optimizer.lr, config_.optimizer.warmup_iters};

    double total_ms = 0.0;
    auto finish = [&] {
        trace.iterations_to_train_threshold = iterations_to_threshold(trace, "train_acc", rc.train_threshold);
        trace.iterations_to_val_threshold = iterations_to_threshold(trace, "val_acc", rc.val_threshold);
        trace.filter_state_floats = filter_ ? filter_->state_floats() : 0;
        trace.mean_step_ms = trace.steps > 0 ? total_ms / double(trace.steps) : 0.0;
        if (files) {
            csv.flush();
            write_summary(out / kSummaryFile, trace, config_);
        }
    };

    try {
        for (std::int64_t t = 0; t < rc.iterations; ++t) {
            const Batch batch = gather_ids(*data_, sampler.indices(t));
            if (hooks_.on_batch)
                hooks_.on_batch(t, batch);

            auto start = Clock::now();
            params_.zero_grad();
            const LossAccuracy train = model_->forward_backward(params_, batch);
            double step_ms = ms_since(start);
            if (!std::isfinite(train.loss))
                throw NumericError("non-finite training loss at iteration " + std::to_string(t));
            if (hooks_.after_backward)
                hooks_.after_backward(t, params_);

            const bool last = t + 1 == rc.iterations;
            const bool record_due = t % rc.eval_every == 0 || last;
            TraceRecord rec;
            bool stop = false;
            if (record_due) {
                const LossAccuracy val = model_->evaluate(params_, val_batch);
                if (!std::isfinite(val.loss))
                    throw NumericError("non-finite validation loss at iteration " + std::to_string(t));
                rec = {t, train.loss, train.accuracy, val.loss, val.accuracy, 0.0,
                       filter_ ? filter_->buffer_length() : 0};
                const bool first_train = !trace.iterations_to_train_threshold && rec.train_acc >= rc.train_threshold;
                const bool first_val = !trace.iterations_to_val_threshold && rec.val_acc >= rc.val_threshold;
                if (first_train)
                    trace.iterations_to_train_threshold = t;
                if (first_val)
                    trace.iterations_to_val_threshold = t;
                stop = first_val && rc.stop_at_val_threshold;
                if (snapshots && (first_train || first_val || stop || last || t % rc.snapshot_every == 0))
                    write_snapshot(out, t, params_, init_, rc.snapshot_delta);
            } else if (snapshots && t % rc.snapshot_every == 0) {
                write_snapshot(out, t, params_, init_, rc.snapshot_delta);
            }

            if (staged_on_acc && filter_ && !trace.stage_start && train.accuracy >= rc.train_threshold) {
                filter_->set_stage_start(t);
                trace.stage_start = t;
            }

            start = Clock::now();
            if (filter_)
                filter_->apply(params_.grad_views(), t);
            step_ms += ms_since(start);
            if (hooks_.before_optimizer)
                hooks_.before_optimizer(t, params_);
            start = Clock::now();
            const auto slots = params_.slots();
            optimizer_->step(slots, effective_lr(warmup, t));
            step_ms += ms_since(start);

            total_ms += step_ms;
            trace.steps = t + 1;
            if (record_due) {
                rec.wall_ms = step_ms;
                trace.records.push_back(rec);
                if (files) {
                    write_metrics_row(csv, rec);
                    csv.flush();
                    if (!csv)
                        throw Error("failed writing " + (out / kMetricsFile).string());
                }
                if (hooks_.on_record)
                    hooks_.on_record(rec);
                if (rc.log_every > 0 && (t % rc.log_every == 0 || last || stop))
                    std::fprintf(stderr, "[%s] it %lld  train %.4f/%.3f  val %.4f/%.3f  %.1f ms\n",
                                 rc.output_dir.c_str(), static_cast<long long>(t), rec.train_loss, rec.train_acc,
                                 rec.val_loss, rec.val_acc, rec.wall_ms);
            }
            if (stop)
                break;
        }
    } catch (const std::exception& e) {
        trace.status = std::string("aborted: ") + e.what();
        try {
            finish();
        } catch (...) {
        }
        throw;
    }
    finish();
    return trace;
}

TrainTrace train(const ExperimentConfig& config)
{
    Trainer trainer(config);
    return trainer.run();
}

OverheadReport measure_overhead(const ExperimentConfig& config, int timed_steps)
{
    config.validate();
    auto data = make_task_data(config);
    auto model = make_model(config, *data);
    auto params = model->init_params(derive_seed(config.run.seed, seed_stream::init));
    auto filter = make_filter(config);
    auto optimizer = make_optimizer(config);

    const auto& train_ids = data->train_ids();
    const std::size_t batch_size = std::min(config.run.batch_size, train_ids.size());
    BatchSampler sampler(train_ids.size(), batch_size, derive_seed(config.run.seed, seed_stream::batches));

    std::int64_t t = 0;
    if (filter) {
        // Fill the filter state with copies of one real gradient.
        params.zero_grad();
        model->forward_backward(params, gather_ids(*data, sampler.indices(0)));
        Grads<float> g;
        for (const auto& p : params)
            g.emplace_back(p.grad.begin(), p.grad.end());
        const std::size_t fill = config.filter.kind == FilterKind::ma ? config.filter.window : 1;
        for (std::size_t k = 0; k < fill; ++k, ++t) {
            auto copy = g;
            std::vector<std::span<float>> views(copy.begin(), copy.end());
            filter->apply(views, t);
        }
    }

    OverheadReport report;
    report.param_count = params.total_count();
    std::vector<double> times;
    const WarmupSchedule warmup{config.optimizer.lr, config.optimizer.warmup_iters};
    for (int i = 0; i < timed_steps; ++i, ++t) {
        const Batch batch = gather_ids(*data, sampler.indices(t));
        const auto start = Clock::now();
        params.zero_grad();
        model->forward_backward(params, batch);
        if (filter)
            filter->apply(params.grad_views(), t);
        const auto slots = params.slots();
        optimizer->step(slots, effective_lr(warmup, t));
        times.push_back(ms_since(start));
    }
    report.filter_state_floats = filter ? filter->state_floats() : 0;
    report.filter_state_bytes = report.filter_state_floats * sizeof(float);
    if (!times.empty()) {
        double sum = 0.0;
        for (double v : times)
            sum += v;
        report.mean_step_ms = sum / double(times.size());
        std::sort(times.begin(), times.end());
        report.median_step_ms = times[times.size() / 2];
    }
    return report;
}

} // namespace grokforge
