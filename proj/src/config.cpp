#include "grokforge/config.hpp"

#include "grokforge/errors.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>

namespace grokforge {

std::string_view to_string(TaskKind k)
{
    return k == TaskKind::modular ? "modular" : "mnist";
}

std::string_view to_string(OptimizerKind k)
{
    switch (k) {
    case OptimizerKind::adam:
        return "adam";
    case OptimizerKind::adamw:
        return "adamw";
    case OptimizerKind::sgd:
        return "sgd";
    }
    return "?";
}

std::string_view to_string(FilterKind k)
{
    switch (k) {
    case FilterKind::none:
        return "none";
    case FilterKind::ma:
        return "ma";
    case FilterKind::ema:
        return "ema";
    }
    return "?";
}

std::string_view to_string(StageTrigger k)
{
    return k == StageTrigger::iteration ? "iteration" : "train_acc";
}

MAConfig FilterConfig::ma() const
{
    return {window, lamb.value_or(5.0), filter_type, warmup};
}

EMAConfig FilterConfig::ema() const
{
    return {alpha, lamb.value_or(2.0)};
}

FilterSchedule ScheduleConfig::schedule() const
{
    return {mode, stage_start, variant};
}

SGDConfig OptimizerConfig::sgd() const
{
    SGDConfig c;
    c.lr = lr;
    c.momentum = momentum;
    c.dampening = dampening;
    c.nesterov = nesterov;
    c.weight_decay = weight_decay;
    return c;
}

AdamConfig OptimizerConfig::adam() const
{
    AdamConfig c;
    c.lr = lr;
    c.beta1 = beta1;
    c.beta2 = beta2;
    c.eps = eps;
    c.weight_decay = weight_decay;
    c.decoupled = kind == OptimizerKind::adamw;
    return c;
}

void ExperimentConfig::validate() const
{
    if (task.kind == TaskKind::modular) {
        if (task.p < 2)
            throw ConfigError("task.p must be >= 2");
        if (!(task.train_fraction > 0.0 && task.train_fraction < 1.0))
            throw ConfigError("task.train_fraction must lie in (0, 1)");
    } else if (task.mnist_dir.empty()) {
        throw ConfigError("task.mnist_dir is required for the mnist task");
    }
    if (model.d_model == 0 || model.n_heads == 0 || model.d_model % model.n_heads != 0)
        throw ConfigError("model.d_model must be a positive multiple of model.n_heads");
    if (!(model.init_scale > 0.0))
        throw ConfigError("model.init_scale must be > 0");
    if (!(optimizer.lr > 0.0))
        throw ConfigError("optimizer.lr must be > 0");
    if (optimizer.warmup_iters < 0)
        throw ConfigError("optimizer.warmup_iters must be >= 0");
    if (optimizer.kind == OptimizerKind::sgd)
        optimizer.sgd().validate();
    else
        optimizer.adam().validate();
    if (filter.kind == FilterKind::ma)
        filter.ma().validate();
    if (filter.kind == FilterKind::ema)
        filter.ema().validate();
    schedule.schedule().validate();
    if (run.iterations < 0)
        throw ConfigError("run.iterations must be >= 0");
    if (run.batch_size == 0)
        throw ConfigError("run.batch_size must be >= 1");
    if (run.eval_every < 1)
        throw ConfigError("run.eval_every must be >= 1");
    if (run.snapshot_every < 0)
        throw ConfigError("run.snapshot_every must be >= 0 (0 disables snapshots)");
}

namespace {

std::string_view trim(std::string_view s)
{
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos)
        return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::string unquote(std::string_view v)
{
    v = trim(v);
    if (v.size() >= 2 && ((v.front() == '"' && v.back() == '"') || (v.front() == '\'' && v.back() == '\'')))
        return std::string(v.substr(1, v.size() - 2));
    return std::string(v);
}

template <typename I>
I parse_integer(std::string_view key, std::string_view raw)
{
    const std::string v = unquote(raw);
    I out{};
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigParseError("invalid integer '" + v + "' for key " + std::string(key));
    return out;
}

double parse_real(std::string_view key, std::string_view raw)
{
    const std::string v = unquote(raw);
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
    if (ec != std::errc() || ptr != v.data() + v.size() || v.empty())
        throw ConfigParseError("invalid number '" + v + "' for key " + std::string(key));
    return out;
}

bool parse_bool(std::string_view key, std::string_view raw)
{
    const std::string v = unquote(raw);
    if (v == "true")
        return true;
    if (v == "false")
        return false;
    throw ConfigParseError("invalid boolean '" + v + "' for key " + std::string(key) + " (expected true|false)");
}

std::string fmt_real(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    std::string s(buf, ptr);
    // Keep reals recognizable as reals when re-read by other tools.
    if (s.find_first_of(".eEn") == std::string::npos)
        s += ".0";
    return s;
}

std::string quote(std::string_view s)
{
    return "\"" + std::string(s) + "\"";
}

template <typename E>
E parse_enum(std::string_view key, std::string_view raw, std::initializer_list<std::pair<std::string_view, E>> names)
{
    const std::string v = unquote(raw);
    for (const auto& [name, value] : names)
        if (v == name)
            return value;
    std::string expected;
    for (const auto& [name, value] : names)
        expected += (expected.empty() ? "" : "|") + std::string(name);
    throw ConfigParseError("invalid value '" + v + "' for key " + std::string(key) + " (expected " + expected + ")");
}

struct Field {
    std::string key;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, std::string_view)> set;
};

const std::vector<Field>& fields()
{
    using C = ExperimentConfig;
    using SV = std::string_view;
    static const std::vector<Field> table = {
        // task
        {"task.kind", [](const C& c) { return quote(to_string(c.task.kind)); },
         [](C& c, SV v) {
             c.task.kind = parse_enum<TaskKind>("task.kind", v, {{"modular", TaskKind::modular}, {"mnist", TaskKind::mnist}});
         }},
        {"task.p", [](const C& c) { return std::to_string(c.task.p); },
         [](C& c, SV v) { c.task.p = parse_integer<std::int32_t>("task.p", v); }},
        {"task.operation", [](const C& c) { return quote(to_string(c.task.operation)); },
         [](C& c, SV v) {
             c.task.operation = parse_enum<BinaryOp>("task.operation", v, {{"mul", BinaryOp::mul}, {"add", BinaryOp::add}});
         }},
        {"task.train_fraction", [](const C& c) { return fmt_real(c.task.train_fraction); },
         [](C& c, SV v) { c.task.train_fraction = parse_real("task.train_fraction", v); }},
        {"task.mnist_dir", [](const C& c) { return quote(c.task.mnist_dir); },
         [](C& c, SV v) { c.task.mnist_dir = unquote(v); }},
        {"task.mnist_subset", [](const C& c) { return std::to_string(c.task.mnist_subset); },
         [](C& c, SV v) { c.task.mnist_subset = parse_integer<std::size_t>("task.mnist_subset", v); }},
        // model
        {"model.d_model", [](const C& c) { return std::to_string(c.model.d_model); },
         [](C& c, SV v) { c.model.d_model = parse_integer<std::size_t>("model.d_model", v); }},
        {"model.n_heads", [](const C& c) { return std::to_string(c.model.n_heads); },
         [](C& c, SV v) { c.model.n_heads = parse_integer<std::size_t>("model.n_heads", v); }},
        {"model.n_layers", [](const C& c) { return std::to_string(c.model.n_layers); },
         [](C& c, SV v) { c.model.n_layers = parse_integer<std::size_t>("model.n_layers", v); }},
        {"model.ffn_dim", [](const C& c) { return std::to_string(c.model.ffn_dim); },
         [](C& c, SV v) { c.model.ffn_dim = parse_integer<std::size_t>("model.ffn_dim", v); }},
        {"model.norm", [](const C& c) { return quote(c.model.pre_norm ? "pre" : "post"); },
         [](C& c, SV v) { c.model.pre_norm = parse_enum<bool>("model.norm", v, {{"pre", true}, {"post", false}}); }},
        {"model.hidden", [](const C& c) { return std::to_string(c.model.hidden); },
         [](C& c, SV v) { c.model.hidden = parse_integer<std::size_t>("model.hidden", v); }},
        {"model.init_scale", [](const C& c) { return fmt_real(c.model.init_scale); },
         [](C& c, SV v) { c.model.init_scale = parse_real("model.init_scale", v); }},
        // optimizer
        {"optimizer.kind", [](const C& c) { return quote(to_string(c.optimizer.kind)); },
         [](C& c, SV v) {
             c.optimizer.kind = parse_enum<OptimizerKind>(
                 "optimizer.kind", v,
                 {{"adam", OptimizerKind::adam}, {"adamw", OptimizerKind::adamw}, {"sgd", OptimizerKind::sgd}});
         }},
        {"optimizer.lr", [](const C& c) { return fmt_real(c.optimizer.lr); },
         [](C& c, SV v) { c.optimizer.lr = parse_real("optimizer.lr", v); }},
        {"optimizer.beta1", [](const C& c) { return fmt_real(c.optimizer.beta1); },
         [](C& c, SV v) { c.optimizer.beta1 = parse_real("optimizer.beta1", v); }},
        {"optimizer.beta2", [](const C& c) { return fmt_real(c.optimizer.beta2); },
         [](C& c, SV v) { c.optimizer.beta2 = parse_real("optimizer.beta2", v); }},
        {"optimizer.eps", [](const C& c) { return fmt_real(c.optimizer.eps); },
         [](C& c, SV v) { c.optimizer.eps = parse_real("optimizer.eps", v); }},
        {"optimizer.weight_decay", [](const C& c) { return fmt_real(c.optimizer.weight_decay); },
         [](C& c, SV v) { c.optimizer.weight_decay = parse_real("optimizer.weight_decay", v); }},
        {"optimizer.momentum", [](const C& c) { return fmt_real(c.optimizer.momentum); },
         [](C& c, SV v) { c.optimizer.momentum = parse_real("optimizer.momentum", v); }},
        {"optimizer.dampening", [](const C& c) { return fmt_real(c.optimizer.dampening); },
         [](C& c, SV v) { c.optimizer.dampening = parse_real("optimizer.dampening", v); }},
        {"optimizer.nesterov", [](const C& c) { return std::string(c.optimizer.nesterov ? "true" : "false"); },
         [](C& c, SV v) { c.optimizer.nesterov = parse_bool("optimizer.nesterov", v); }},
        {"optimizer.warmup_iters", [](const C& c) { return std::to_string(c.optimizer.warmup_iters); },
         [](C& c, SV v) { c.optimizer.warmup_iters = parse_integer<std::int64_t>("optimizer.warmup_iters", v); }},
        // filter
        {"filter.kind", [](const C& c) { return quote(to_string(c.filter.kind)); },
         [](C& c, SV v) {
             c.filter.kind = parse_enum<FilterKind>("filter.kind", v,
                                                    {{"none", FilterKind::none}, {"ma", FilterKind::ma}, {"ema", FilterKind::ema}});
         }},
        {"filter.lamb", [](const C& c) { return c.filter.lamb ? fmt_real(*c.filter.lamb) : std::string(); },
         [](C& c, SV v) { c.filter.lamb = parse_real("filter.lamb", v); }},
        {"filter.window", [](const C& c) { return std::to_string(c.filter.window); },
         [](C& c, SV v) { c.filter.window = parse_integer<std::size_t>("filter.window", v); }},
        {"filter.filter_type", [](const C& c) { return quote(to_string(c.filter.filter_type)); },
         [](C& c, SV v) {
             c.filter.filter_type =
                 parse_enum<FilterType>("filter.filter_type", v, {{"mean", FilterType::mean}, {"sum", FilterType::sum}});
         }},
        {"filter.warmup", [](const C& c) { return std::string(c.filter.warmup ? "true" : "false"); },
         [](C& c, SV v) { c.filter.warmup = parse_bool("filter.warmup", v); }},
        {"filter.alpha", [](const C& c) { return fmt_real(c.filter.alpha); },
         [](C& c, SV v) { c.filter.alpha = parse_real("filter.alpha", v); }},
        // schedule
        {"schedule.mode", [](const C& c) { return quote(to_string(c.schedule.mode)); },
         [](C& c, SV v) {
             c.schedule.mode = parse_enum<ScheduleMode>(
                 "schedule.mode", v, {{"always_on", ScheduleMode::always_on}, {"staged", ScheduleMode::staged}});
         }},
        {"schedule.stage_start", [](const C& c) { return std::to_string(c.schedule.stage_start); },
         [](C& c, SV v) { c.schedule.stage_start = parse_integer<std::int64_t>("schedule.stage_start", v); }},
        {"schedule.trigger", [](const C& c) { return quote(to_string(c.schedule.trigger)); },
         [](C& c, SV v) {
             c.schedule.trigger = parse_enum<StageTrigger>(
                 "schedule.trigger", v, {{"iteration", StageTrigger::iteration}, {"train_acc", StageTrigger::train_acc}});
         }},
        {"schedule.variant", [](const C& c) { return quote(to_string(c.schedule.variant)); },
         [](C& c, SV v) {
             c.schedule.variant = parse_enum<FilterVariant>(
                 "schedule.variant", v, {{"additive", FilterVariant::additive}, {"slow_only", FilterVariant::slow_only}});
         }},
        // run
        {"run.iterations", [](const C& c) { return std::to_string(c.run.iterations); },
         [](C& c, SV v) { c.run.iterations = parse_integer<std::int64_t>("run.iterations", v); }},
        {"run.batch_size", [](const C& c) { return std::to_string(c.run.batch_size); },
         [](C& c, SV v) { c.run.batch_size = parse_integer<std::size_t>("run.batch_size", v); }},
        {"run.seed", [](const C& c) { return std::to_string(c.run.seed); },
         [](C& c, SV v) { c.run.seed = parse_integer<std::uint64_t>("run.seed", v); }},
        {"run.eval_every", [](const C& c) { return std::to_string(c.run.eval_every); },
         [](C& c, SV v) { c.run.eval_every = parse_integer<std::int64_t>("run.eval_every", v); }},
        {"run.snapshot_every", [](const C& c) { return std::to_string(c.run.snapshot_every); },
         [](C& c, SV v) { c.run.snapshot_every = parse_integer<std::int64_t>("run.snapshot_every", v); }},
        {"run.snapshot_delta", [](const C& c) { return std::string(c.run.snapshot_delta ? "true" : "false"); },
         [](C& c, SV v) { c.run.snapshot_delta = parse_bool("run.snapshot_delta", v); }},
        {"run.output_dir", [](const C& c) { return quote(c.run.output_dir); },
         [](C& c, SV v) { c.run.output_dir = unquote(v); }},
        {"run.train_threshold", [](const C& c) { return fmt_real(c.run.train_threshold); },
         [](C& c, SV v) { c.run.train_threshold = parse_real("run.train_threshold", v); }},
        {"run.val_threshold", [](const C& c) { return fmt_real(c.run.val_threshold); },
         [](C& c, SV v) { c.run.val_threshold = parse_real("run.val_threshold", v); }},
        {"run.stop_at_val_threshold", [](const C& c) { return std::string(c.run.stop_at_val_threshold ? "true" : "false"); },
         [](C& c, SV v) { c.run.stop_at_val_threshold = parse_bool("run.stop_at_val_threshold", v); }},
        {"run.log_every", [](const C& c) { return std::to_string(c.run.log_every); },
         [](C& c, SV v) { c.run.log_every = parse_integer<std::int64_t>("run.log_every", v); }},
    };
    return table;
}

const Field& field(std::string_view key)
{
    for (const auto& f : fields())
        if (f.key == key)
            return f;
    throw ConfigParseError("unknown config key '" + std::string(key) + "'");
}

} // namespace

std::vector<std::string> config_keys()
{
    std::vector<std::string> keys;
    for (const auto& f : fields())
        keys.push_back(f.key);
    return keys;
}

void set_config_value(ExperimentConfig& config, std::string_view key, std::string_view value)
{
    field(key).set(config, value);
}

std::string get_config_value(const ExperimentConfig& config, std::string_view key)
{
    return field(key).get(config);
}

void apply_override(ExperimentConfig& config, std::string_view assignment)
{
    const auto eq = assignment.find('=');
    if (eq == std::string_view::npos)
        throw ConfigParseError("override '" + std::string(assignment) + "' is not of the form section.key=value");
    set_config_value(config, trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

ExperimentConfig parse_config(std::string_view text, std::string_view source)
{
    ExperimentConfig config;
    std::string section;
    std::set<std::string> seen;
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto end = std::min(text.find('\n', pos), text.size());
        std::string_view line = text.substr(pos, end - pos);
        pos = end + 1;
        ++line_no;

        // Strip comments that are not inside a quoted string.
        bool quoted = false;
        for (std::size_t i = 0; i < line.size(); ++i) {
            if (line[i] == '"')
                quoted = !quoted;
            if (line[i] == '#' && !quoted) {
                line = line.substr(0, i);
                break;
            }
        }
        line = trim(line);
        if (line.empty())
            continue;

        const std::string where = std::string(source) + ":" + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']')
                throw ConfigParseError(where + "malformed section header");
            section = std::string(trim(line.substr(1, line.size() - 2)));
            const auto keys = config_keys();
            const bool known = std::any_of(keys.begin(), keys.end(),
                                           [&](const std::string& k) { return k.starts_with(section + "."); });
            if (!known)
                throw ConfigParseError(where + "unknown section [" + section + "]");
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos)
            throw ConfigParseError(where + "expected key = value");
        if (section.empty())
            throw ConfigParseError(where + "key outside of any section");
        const std::string key = section + "." + std::string(trim(line.substr(0, eq)));
        if (!seen.insert(key).second)
            throw ConfigParseError(where + "duplicate key " + key);
        try {
            set_config_value(config, key, trim(line.substr(eq + 1)));
        } catch (const ConfigError& e) {
            throw ConfigParseError(where + e.what());
        }
    }
    return config;
}

ExperimentConfig load_config(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw ConfigParseError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config(ss.str(), path.string());
}

std::string serialize_config(const ExperimentConfig& config)
{
    std::string out;
    std::string section;
    for (const auto& f : fields()) {
        const auto dot = f.key.find('.');
        const std::string sec = f.key.substr(0, dot);
        const std::string value = f.get(config);
        if (value.empty())
            continue;
        if (sec != section) {
            out += (section.empty() ? "" : "\n") + ("[" + sec + "]\n");
            section = sec;
        }
        out += f.key.substr(dot + 1) + " = " + value + "\n";
    }
    return out;
}

} // namespace grokforge
