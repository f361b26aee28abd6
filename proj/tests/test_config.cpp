#include "grokforge/config.hpp"

#include <doctest.h>

#include <string>

using namespace grokforge;

namespace {

std::string parse_error(std::string_view text)
{
    try {
        parse_config(text, "t.toml");
    } catch (const ConfigParseError& e) {
        return e.what();
    }
    return {};
}

} // namespace

TEST_CASE("defaults describe the reference algorithmic setup")
{
    const ExperimentConfig c;
    CHECK(c.task.p == 97);
    CHECK(c.task.train_fraction == 0.5);
    CHECK(c.model.d_model == 128);
    CHECK(c.model.n_heads == 4);
    CHECK(c.model.ffn_dim == 512);
    CHECK(c.optimizer.lr == 1e-3);
    CHECK(c.optimizer.beta2 == 0.98);
    CHECK(c.optimizer.warmup_iters == 10);
    CHECK(c.run.batch_size == 512);
    CHECK(c.filter.ma().lamb == 5.0);
    CHECK(c.filter.ema().lamb == 2.0);
    CHECK_NOTHROW(c.validate());
}

TEST_CASE("config text parses sections, quotes and comments")
{
    const auto c = parse_config(R"(
# experiment
[task]
p = 23          # small
operation = "add"
mnist_dir = "/data/#mnist"

[filter]
kind = ema
alpha = 0.9
lamb = 0.5

[schedule]
mode = staged
trigger = train_acc
variant = slow_only

[run]
iterations = 1200
stop_at_val_threshold = true
)");
    CHECK(c.task.p == 23);
    CHECK(c.task.operation == BinaryOp::add);
    CHECK(c.task.mnist_dir == "/data/#mnist");
    CHECK(c.filter.kind == FilterKind::ema);
    CHECK(c.filter.ema().alpha == 0.9);
    CHECK(c.filter.ema().lamb == 0.5);
    CHECK(c.schedule.mode == ScheduleMode::staged);
    CHECK(c.schedule.trigger == StageTrigger::train_acc);
    CHECK(c.schedule.variant == FilterVariant::slow_only);
    CHECK(c.run.iterations == 1200);
    CHECK(c.run.stop_at_val_threshold);
}

TEST_CASE("serialization round-trips every key")
{
    ExperimentConfig c;
    c.task.kind = TaskKind::mnist;
    c.task.mnist_dir = "data/mnist";
    c.model.pre_norm = true;
    c.model.init_scale = 8.0;
    c.optimizer.kind = OptimizerKind::sgd;
    c.optimizer.lr = 0.1 + 0.2; // not a short decimal
    c.optimizer.momentum = 0.9;
    c.optimizer.nesterov = true;
    c.filter.kind = FilterKind::ma;
    c.filter.lamb = 5.0;
    c.filter.filter_type = FilterType::sum;
    c.run.seed = 18446744073709551615ull;
    const auto text = serialize_config(c);
    const auto back = parse_config(text);
    CHECK(serialize_config(back) == text);
    for (const auto& key : config_keys()) {
        CAPTURE(key);
        CHECK(get_config_value(back, key) == get_config_value(c, key));
    }
    CHECK(back.optimizer.lr == 0.1 + 0.2);

    // An unset gain stays unset.
    ExperimentConfig d;
    CHECK(!parse_config(serialize_config(d)).filter.lamb.has_value());
}

TEST_CASE("parsing is strict and errors carry the line")
{
    CHECK(parse_error("[task]\np = 97\nbogus = 1\n").find("t.toml:3") != std::string::npos);
    CHECK(!parse_error("[nope]\n").empty());
    CHECK(!parse_error("p = 97\n").empty());
    CHECK(!parse_error("[task\n").empty());
    CHECK(!parse_error("[task]\np 97\n").empty());
    CHECK(!parse_error("[task]\np = 9x\n").empty());
    CHECK(!parse_error("[task]\np = 97\np = 98\n").empty());
    CHECK(!parse_error("[run]\nbatch_size = -1\n").empty());
    CHECK(!parse_error("[run]\nstop_at_val_threshold = yes\n").empty());
    CHECK(!parse_error("[filter]\nkind = fir\n").empty());
    CHECK(!parse_error("[optimizer]\nlr = fast\n").empty());
}

TEST_CASE("overrides set single keys and reject unknown ones")
{
    ExperimentConfig c;
    apply_override(c, "filter.lamb=5");
    apply_override(c, "filter.window = 100");
    apply_override(c, "run.output_dir=out/x");
    CHECK(c.filter.ma().lamb == 5.0);
    CHECK(c.filter.window == 100);
    CHECK(c.run.output_dir == "out/x");
    CHECK_THROWS_AS(apply_override(c, "filter.lambda=5"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "filter.lamb"), ConfigError);
    CHECK_THROWS_AS(apply_override(c, "run.iterations=ten"), ConfigError);
    CHECK_THROWS_AS(get_config_value(c, "run.nothing"), ConfigError);
}

TEST_CASE("validation rejects out-of-range values")
{
    auto invalid = [](auto mutate) {
        ExperimentConfig c;
        mutate(c);
        try {
            c.validate();
        } catch (const ConfigError&) {
            return true;
        }
        return false;
    };
    CHECK(invalid([](auto& c) { c.task.train_fraction = 1.0; }));
    CHECK(invalid([](auto& c) { c.task.p = 1; }));
    CHECK(invalid([](auto& c) { c.task.kind = TaskKind::mnist; }));
    CHECK(invalid([](auto& c) { c.model.n_heads = 3; }));
    CHECK(invalid([](auto& c) { c.optimizer.lr = 0.0; }));
    CHECK(invalid([](auto& c) { c.optimizer.beta1 = 1.0; }));
    CHECK(invalid([](auto& c) {
        c.optimizer.kind = OptimizerKind::sgd;
        c.optimizer.nesterov = true;
    }));
    CHECK(invalid([](auto& c) {
        c.filter.kind = FilterKind::ema;
        c.filter.alpha = 1.0;
    }));
    CHECK(invalid([](auto& c) {
        c.filter.kind = FilterKind::ma;
        c.filter.window = 0;
    }));
    CHECK(invalid([](auto& c) {
        c.filter.kind = FilterKind::ma;
        c.filter.lamb = -1.0;
    }));
    CHECK(invalid([](auto& c) { c.run.eval_every = 0; }));
    CHECK(invalid([](auto& c) { c.run.iterations = -1; }));
    CHECK(invalid([](auto& c) { c.schedule.stage_start = -5; }));
    // Filter fields are only checked for the selected filter.
    CHECK(!invalid([](auto& c) { c.filter.alpha = 2.0; }));
}
