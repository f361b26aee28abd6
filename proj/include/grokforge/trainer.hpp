#pragma once

// The training loop: data -> model -> gradient filter -> optimizer, with
// periodic validation, threshold detection, snapshots and timing.
//
// Conventions. "Iteration t" names the parameters after t optimizer steps.
// A record for t holds the loss/accuracy of the training batch of step t and
// of the full validation split, both measured on those parameters, plus the
// wall time of step t itself (evaluation excluded). Snapshot snap_t likewise
// holds the parameters before step t, so snap_0 is the initialization.

#include "grokforge/config.hpp"
#include "grokforge/data.hpp"
#include "grokforge/filters.hpp"
#include "grokforge/nn.hpp"
#include "grokforge/optim.hpp"
#include "grokforge/param_store.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <ostream>
#include <span>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grokforge {

struct TraceRecord {
    std::int64_t iteration = 0;
    double train_loss = 0.0;
    double train_acc = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double wall_ms = 0.0;
    std::size_t peak_filter_buffers = 0; // not part of the CSV

    bool operator==(const TraceRecord&) const = default;
};

struct TrainTrace {
    std::vector<TraceRecord> records;
    std::optional<std::int64_t> iterations_to_train_threshold;
    std::optional<std::int64_t> iterations_to_val_threshold;
    // Iteration from which a staged filter was active, if it switched on.
    std::optional<std::int64_t> stage_start;
    std::int64_t steps = 0;
    std::size_t param_count = 0;
    std::size_t filter_state_floats = 0;
    double mean_step_ms = 0.0;
    std::string status = "completed";
};

// First record whose metric is >= threshold. Metrics: train_loss, train_acc,
// val_loss, val_acc.
std::optional<std::int64_t> iterations_to_threshold(std::span<const TraceRecord> records, std::string_view metric,
                                                    double threshold);
std::optional<std::int64_t> iterations_to_threshold(const TrainTrace& trace, std::string_view metric,
                                                    double threshold);

// Observation points for tests. Gradients are those stored in the params.
struct TrainHooks {
    std::function<void(std::int64_t, const Batch&)> on_batch;
    std::function<void(std::int64_t, const ParamStore&)> after_backward;   // raw loss gradients
    std::function<void(std::int64_t, const ParamStore&)> before_optimizer; // filtered gradients
    std::function<void(const TraceRecord&)> on_record;
};

std::shared_ptr<const TaskData> make_task_data(const ExperimentConfig& config);
std::unique_ptr<Model<float>> make_model(const ExperimentConfig& config, const TaskData& data);
std::unique_ptr<GradientFilter<float>> make_filter(const ExperimentConfig& config);
std::unique_ptr<Optimizer<float>> make_optimizer(const ExperimentConfig& config);

class Trainer {
public:
    explicit Trainer(ExperimentConfig config, std::shared_ptr<const TaskData> data = nullptr);
    ~Trainer();

    // Replaces the filter built from the config (e.g. with a probe).
    void set_filter(std::unique_ptr<GradientFilter<float>> filter);
    void set_hooks(TrainHooks hooks) { hooks_ = std::move(hooks); }
    // Files go to run.output_dir unless disabled.
    void set_write_outputs(bool on) { write_outputs_ = on; }

    // Runs run.iterations steps (or fewer with early stopping). Non-finite
    // values abort the run after the partial trace has been written out.
    TrainTrace run();

    const ExperimentConfig& config() const { return config_; }
    const TaskData& data() const { return *data_; }
    const ParamStore& params() const { return params_; }
    const ParamStore& initial_params() const { return init_; }

private:
    ExperimentConfig config_;
    std::shared_ptr<const TaskData> data_;
    std::unique_ptr<Model<float>> model_;
    std::unique_ptr<GradientFilter<float>> filter_;
    std::unique_ptr<Optimizer<float>> optimizer_;
    ParamStore params_;
    ParamStore init_;
    TrainHooks hooks_;
    bool write_outputs_ = true;
};

TrainTrace train(const ExperimentConfig& config);

struct OverheadReport {
    std::size_t param_count = 0;
    std::size_t filter_state_floats = 0;
    std::size_t filter_state_bytes = 0;
    double mean_step_ms = 0.0;
    double median_step_ms = 0.0;
};

// Brings the filter to steady state (a full MA window) with synthetic
// gradients, then times `timed_steps` real training steps.
OverheadReport measure_overhead(const ExperimentConfig& config, int timed_steps = 10);

// ------------------------------------------------------------ run outputs

inline constexpr std::string_view kMetricsFile = "metrics.csv";
inline constexpr std::string_view kSummaryFile = "summary.json";
inline constexpr std::string_view kConfigFile = "config.toml";

void write_metrics_header(std::ostream& os);
void write_metrics_row(std::ostream& os, const TraceRecord& r);
std::vector<TraceRecord> read_metrics_csv(const std::filesystem::path& path);

void write_summary(const std::filesystem::path& path, const TrainTrace& trace, const ExperimentConfig& config);

struct RunSummary {
    std::string status;
    std::int64_t steps = 0;
    std::optional<std::int64_t> iterations_to_train_threshold;
    std::optional<std::int64_t> iterations_to_val_threshold;
    std::optional<std::int64_t> stage_start;
    double train_threshold = 0.0;
    double val_threshold = 0.0;
};
RunSummary read_summary(const std::filesystem::path& path);

} // namespace grokforge
