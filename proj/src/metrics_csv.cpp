#include "grokforge/errors.hpp"
#include "grokforge/trainer.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace grokforge {

namespace {

constexpr std::string_view kHeader = "iteration,train_loss,train_acc,val_loss,val_acc,wall_ms";

void put_real(std::ostream& os, double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    os.write(buf, ptr - buf);
}

template <typename V>
V field(std::string_view s, const std::filesystem::path& path, std::size_t line)
{
    V v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw Error(path.string() + ":" + std::to_string(line) + ": bad field '" + std::string(s) + "'");
    return v;
}

} // namespace

void write_metrics_header(std::ostream& os)
{
    os << kHeader << '\n';
}

void write_metrics_row(std::ostream& os, const TraceRecord& r)
{
    os << r.iteration;
    for (double v : {r.train_loss, r.train_acc, r.val_loss, r.val_acc, r.wall_ms}) {
        os << ',';
        put_real(os, v);
    }
    os << '\n';
}

std::vector<TraceRecord> read_metrics_csv(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw Error("cannot read metrics file " + path.string());
    std::string line;
    if (!std::getline(is, line) || line != kHeader)
        throw Error(path.string() + ": unexpected header, want '" + std::string(kHeader) + "'");
    std::vector<TraceRecord> out;
    std::size_t line_no = 1;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty())
            continue;
        std::vector<std::string_view> cols;
        std::string_view rest = line;
        for (;;) {
            const auto comma = rest.find(',');
            cols.push_back(rest.substr(0, comma));
            if (comma == std::string_view::npos)
                break;
            rest.remove_prefix(comma + 1);
        }
        if (cols.size() != 6)
            throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 6 columns");
        TraceRecord r;
        r.iteration = field<std::int64_t>(cols[0], path, line_no);
        r.train_loss = field<double>(cols[1], path, line_no);
        r.train_acc = field<double>(cols[2], path, line_no);
        r.val_loss = field<double>(cols[3], path, line_no);
        r.val_acc = field<double>(cols[4], path, line_no);
        r.wall_ms = field<double>(cols[5], path, line_no);
        out.push_back(r);
    }
    return out;
}

void write_summary(const std::filesystem::path& path, const TrainTrace& trace, const ExperimentConfig& config)
{
    using nlohmann::json;
    auto opt = [](const std::optional<std::int64_t>& v) { return v ? json(*v) : json(nullptr); };
    json j;
    j["status"] = trace.status;
    j["steps"] = trace.steps;
    j["param_count"] = trace.param_count;
    j["filter_state_floats"] = trace.filter_state_floats;
    j["mean_step_ms"] = trace.mean_step_ms;
    j["train_threshold"] = config.run.train_threshold;
    j["val_threshold"] = config.run.val_threshold;
    j["iterations_to_train_threshold"] = opt(trace.iterations_to_train_threshold);
    j["iterations_to_val_threshold"] = opt(trace.iterations_to_val_threshold);
    j["stage_start"] = opt(trace.stage_start);
    if (!trace.records.empty()) {
        const auto& last = trace.records.back();
        j["final"] = {{"iteration", last.iteration}, {"train_loss", last.train_loss}, {"train_acc", last.train_acc},
                      {"val_loss", last.val_loss},   {"val_acc", last.val_acc}};
    }
    std::ofstream os(path, std::ios::trunc);
    os << j.dump(2) << '\n';
    if (!os.flush())
        throw Error("failed writing " + path.string());
}

RunSummary read_summary(const std::filesystem::path& path)
{
    std::ifstream is(path);
    if (!is)
        throw Error("cannot read summary " + path.string());
    nlohmann::json j;
    try {
        is >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error(path.string() + ": " + e.what());
    }
    auto opt = [&](const char* key) -> std::optional<std::int64_t> {
        if (!j.contains(key) || j[key].is_null())
            return std::nullopt;
        return j[key].get<std::int64_t>();
    };
    RunSummary s;
    s.status = j.value("status", "");
    s.steps = j.value("steps", std::int64_t{0});
    s.iterations_to_train_threshold = opt("iterations_to_train_threshold");
    s.iterations_to_val_threshold = opt("iterations_to_val_threshold");
    s.stage_start = opt("stage_start");
    s.train_threshold = j.value("train_threshold", 0.0);
    s.val_threshold = j.value("val_threshold", 0.0);
    return s;
}

} // namespace grokforge
