#pragma once

// Experiment configuration and its plain-text file format: `[section]`
// headers, `key = value` lines, `#` comments. Strings may be quoted. Unknown
// sections or keys are errors.

#include "grokforge/data.hpp"
#include "grokforge/filters.hpp"
#include "grokforge/nn.hpp"
#include "grokforge/optim.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace grokforge {

enum class TaskKind { modular, mnist };
enum class OptimizerKind { adam, adamw, sgd };
enum class FilterKind { none, ma, ema };
enum class StageTrigger { iteration, train_acc };

struct TaskConfig {
    TaskKind kind = TaskKind::modular;
    std::int32_t p = 97;
    BinaryOp operation = BinaryOp::mul;
    double train_fraction = 0.5;
    // Directory with train-images-idx3-ubyte, train-labels-idx1-ubyte,
    // t10k-images-idx3-ubyte and t10k-labels-idx1-ubyte.
    std::string mnist_dir;
    std::size_t mnist_subset = 1000;
};

struct ModelConfig {
    std::size_t d_model = 128;
    std::size_t n_heads = 4;
    std::size_t n_layers = 2;
    std::size_t ffn_dim = 512;
    bool pre_norm = false;
    std::size_t hidden = 200; // MLP hidden width
    double init_scale = 1.0;
};

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adamw;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-8;
    double weight_decay = 0.0;
    double momentum = 0.0;
    double dampening = 0.0;
    bool nesterov = false;
    std::int64_t warmup_iters = 10;

    SGDConfig sgd() const;
    AdamConfig adam() const;
};

struct FilterConfig {
    FilterKind kind = FilterKind::none;
    // Unset means the filter's own default: 5 for MA, 2 for EMA.
    std::optional<double> lamb;
    std::size_t window = 100;
    FilterType filter_type = FilterType::mean;
    bool warmup = true;
    double alpha = 0.98;

    MAConfig ma() const;
    EMAConfig ema() const;
};

struct ScheduleConfig {
    ScheduleMode mode = ScheduleMode::always_on;
    std::int64_t stage_start = 0;
    // With train_acc, a staged filter switches on after the first iteration
    // whose training accuracy reaches run.train_threshold.
    StageTrigger trigger = StageTrigger::iteration;
    FilterVariant variant = FilterVariant::additive;

    FilterSchedule schedule() const;
};

struct RunConfig {
    std::int64_t iterations = 5000;
    std::size_t batch_size = 512;
    std::uint64_t seed = 0;
    std::int64_t eval_every = 10;
    std::int64_t snapshot_every = 0; // 0 disables snapshots
    bool snapshot_delta = true;
    std::string output_dir = "runs/default";
    double train_threshold = 0.95;
    double val_threshold = 0.95;
    bool stop_at_val_threshold = false;
    std::int64_t log_every = 0; // progress lines on stderr, 0 = quiet
};

struct ExperimentConfig {
    TaskConfig task;
    ModelConfig model;
    OptimizerConfig optimizer;
    FilterConfig filter;
    ScheduleConfig schedule;
    RunConfig run;

    void validate() const;
};

// Error carrying the offending key or line for diagnostics.
class ConfigParseError : public ConfigError {
public:
    using ConfigError::ConfigError;
};

ExperimentConfig parse_config(std::string_view text, std::string_view source = "<config>");
ExperimentConfig load_config(const std::filesystem::path& path);
std::string serialize_config(const ExperimentConfig& config);

// Applies "section.key=value".
void apply_override(ExperimentConfig& config, std::string_view assignment);
void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const ExperimentConfig& config, std::string_view key);
std::vector<std::string> config_keys();

std::string_view to_string(TaskKind k);
std::string_view to_string(OptimizerKind k);
std::string_view to_string(FilterKind k);
std::string_view to_string(StageTrigger k);

} // namespace grokforge
