#include "grokforge/commands.hpp"

#include "grokforge/errors.hpp"
#include "grokforge/kernels.hpp"
#include "grokforge/spectral.hpp"
#include "grokforge/trainer.hpp"
#include "grokforge/trajectory.hpp"
#include "grokforge/verify.hpp"

#include <atomic>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <map>
#include <mutex>
#include <ostream>
#include <thread>

#include <CLI11.hpp>
#include <omp.h>

namespace grokforge {

namespace {

std::string fmt(double v)
{
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, ptr);
}

std::string opt_str(const std::optional<std::int64_t>& v)
{
    return v ? std::to_string(*v) : std::string();
}

// Keeps file names portable.
std::string sanitize(std::string s)
{
    for (char& c : s)
        if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.'))
            c = '_';
    return s;
}

void print_summary(std::ostream& out, const TrainTrace& trace, const std::string& baseline)
{
    out << "status=" << trace.status << " steps=" << trace.steps
        << " iterations_to_train_threshold=" << (trace.iterations_to_train_threshold ? opt_str(trace.iterations_to_train_threshold) : "none")
        << " iterations_to_val_threshold=" << (trace.iterations_to_val_threshold ? opt_str(trace.iterations_to_val_threshold) : "none");
    if (!baseline.empty()) {
        const auto base = read_summary(baseline);
        if (!base.iterations_to_val_threshold)
            out << " speedup=n/a(baseline did not cross)";
        else if (!trace.iterations_to_val_threshold)
            out << " speedup=n/a(run did not cross)";
        else
            out << " speedup=" << fmt(double(*base.iterations_to_val_threshold) /
                                      double(std::max<std::int64_t>(1, *trace.iterations_to_val_threshold)));
    }
    out << '\n';
}

// ------------------------------------------------------------------ run

int cmd_run(const ExperimentConfig& config, const std::string& baseline, std::ostream& out)
{
    Trainer trainer(config);
    const auto trace = trainer.run();
    print_summary(out, trace, baseline);
    return kExitOk;
}

// ---------------------------------------------------------------- sweep

struct SweepRow {
    std::string run;
    std::vector<std::string> point;
    std::string status = "pending";
    std::optional<std::int64_t> to_train;
    std::optional<std::int64_t> to_val;
    double final_val_acc = 0.0;
    double mean_step_ms = 0.0;
};

int cmd_sweep(const ExperimentConfig& base, const std::vector<std::string>& grid_specs, int jobs, std::ostream& out,
              std::ostream& err)
{
    std::vector<GridAxis> axes;
    for (const auto& spec : grid_specs)
        axes.push_back(parse_grid_axis(spec));
    const auto points = expand_grid(axes);

    // Reject bad keys or values before any run starts.
    std::vector<ExperimentConfig> configs;
    std::vector<SweepRow> rows(points.size());
    const std::filesystem::path root = base.run.output_dir;
    for (std::size_t i = 0; i < points.size(); ++i) {
        ExperimentConfig c = base;
        for (const auto& kv : points[i])
            apply_override(c, kv);
        char name[32];
        std::snprintf(name, sizeof(name), "run_%03zu", i);
        c.run.output_dir = (root / name).string();
        c.validate();
        configs.push_back(c);
        rows[i].run = name;
        rows[i].point = points[i];
    }

    jobs = std::max(1, std::min<int>(jobs, int(points.size())));
    const int threads_per_job = std::max(1, kernels::max_threads() / jobs);
    std::atomic<std::size_t> next{0};
    std::mutex log_mutex;
    auto worker = [&] {
        omp_set_num_threads(threads_per_job);
        for (std::size_t i = next++; i < points.size(); i = next++) {
            auto& row = rows[i];
            try {
                Trainer trainer(configs[i]);
                const auto trace = trainer.run();
                row.status = trace.status;
                row.to_train = trace.iterations_to_train_threshold;
                row.to_val = trace.iterations_to_val_threshold;
                row.final_val_acc = trace.records.empty() ? 0.0 : trace.records.back().val_acc;
                row.mean_step_ms = trace.mean_step_ms;
            } catch (const std::exception& e) {
                row.status = std::string("failed: ") + e.what();
                std::lock_guard lock(log_mutex);
                err << row.run << ": " << e.what() << '\n';
            }
        }
    };
    std::vector<std::thread> pool;
    for (int j = 1; j < jobs; ++j)
        pool.emplace_back(worker);
    worker();
    for (auto& t : pool)
        t.join();

    std::filesystem::create_directories(root);
    std::ofstream csv(root / "sweep.csv");
    csv << "run";
    for (const auto& a : axes)
        csv << ',' << a.key;
    csv << ",status,iterations_to_train_threshold,iterations_to_val_threshold,final_val_acc,mean_step_ms\n";
    bool all_ok = true;
    for (const auto& row : rows) {
        csv << row.run;
        for (const auto& kv : row.point)
            csv << ',' << kv.substr(kv.find('=') + 1);
        std::string status = row.status;
        for (char& c : status)
            if (c == ',' || c == '\n')
                c = ';';
        csv << ',' << status << ',' << opt_str(row.to_train) << ',' << opt_str(row.to_val) << ','
            << fmt(row.final_val_acc) << ',' << fmt(row.mean_step_ms) << '\n';
        all_ok = all_ok && row.status == "completed";
        out << row.run << ' ';
        for (const auto& kv : row.point)
            out << kv << ' ';
        out << "status=" << row.status << " iterations_to_val_threshold=" << (row.to_val ? opt_str(row.to_val) : "none")
            << '\n';
    }
    if (!csv.flush())
        throw Error("failed writing " + (root / "sweep.csv").string());
    return all_ok ? kExitOk : kExitFailure;
}

// ------------------------------------------------------- analyze-spectrum

int cmd_spectrum(const ExperimentConfig& config, std::size_t points, std::size_t horizon, const std::string& output,
                 std::ostream& out)
{
    ImpulseResponse h;
    switch (config.filter.kind) {
    case FilterKind::ma:
        h = ma_impulse(config.filter.ma());
        break;
    case FilterKind::ema:
        h = ema_impulse(config.filter.ema(), horizon);
        break;
    case FilterKind::none:
        h.taps = {0.0};
        break;
    }
    const auto tf = evaluate_dtft(h.taps, frequency_grid(points));
    const auto gain = amplifier_gain(tf);

    std::ofstream file;
    std::ostream* os = &out;
    if (!output.empty()) {
        std::filesystem::create_directories(output);
        file.open(std::filesystem::path(output) / "spectrum.csv");
        if (!file)
            throw Error("cannot write " + output + "/spectrum.csv");
        os = &file;
    }
    *os << "omega,H_re,H_im,abs_H,abs_one_plus_H\n";
    for (std::size_t i = 0; i < tf.omega.size(); ++i)
        *os << fmt(tf.omega[i]) << ',' << fmt(tf.values[i].real()) << ',' << fmt(tf.values[i].imag()) << ','
            << fmt(std::abs(tf.values[i])) << ',' << fmt(std::abs(gain.values[i])) << '\n';
    if (!os->flush())
        throw Error("failed writing spectrum");
    return kExitOk;
}

// ----------------------------------------------------- analyze-trajectory

int cmd_trajectory(const std::vector<std::string>& run_args, const std::string& fit, const std::string& output,
                   std::ostream& out, std::ostream& err)
{
    SnapshotMatrix snapshots;
    std::map<std::string, std::vector<std::string>> groups; // label -> run ids
    std::vector<std::string> order;
    for (const auto& arg : run_args) {
        const auto eq = arg.find('=');
        const std::filesystem::path dir = eq == std::string::npos ? arg : arg.substr(eq + 1);
        const std::string label = eq == std::string::npos ? dir.filename().string() : arg.substr(0, eq);
        std::string id = label + ":" + dir.filename().string();
        if (eq == std::string::npos)
            id = label;
        load_run_snapshots(snapshots, dir, id);
        if (!groups.count(label))
            order.push_back(label);
        groups[label].push_back(id);
    }

    std::vector<std::size_t> fit_rows;
    const std::string fit_group = fit.empty() ? order.front() : fit;
    if (fit_group != "joint") {
        if (!groups.count(fit_group))
            throw ConfigError("--fit names unknown run group '" + fit_group + "'");
        for (const auto& id : groups[fit_group])
            for (auto i : snapshots.rows_of(id))
                fit_rows.push_back(i);
    }
    const auto pca = pca_fit(snapshots, fit_rows);
    const auto coords = pca_coordinates(pca, snapshots);

    const std::filesystem::path dir = output;
    std::filesystem::create_directories(dir);
    std::ofstream proj(dir / "projection.csv");
    proj << "run,iteration,pc1,pc2,state\n";
    for (std::size_t i = 0; i < snapshots.rows(); ++i) {
        const auto& m = snapshots.meta(i);
        proj << m.run << ',' << m.iteration << ',' << fmt(coords[i][0]) << ',' << fmt(coords[i].size() > 1 ? coords[i][1] : 0.0)
             << ',' << m.states << '\n';
    }
    out << "pca fit on " << fit_group << ": explained variance";
    for (double v : pca.explained_variance)
        out << ' ' << fmt(v);
    out << '\n';

    for (const auto& label : order) {
        const auto& ids = groups[label];
        const auto dev = deviation_curve(snapshots, ids);
        std::ofstream dcsv(dir / ("deviation_" + sanitize(label) + ".csv"));
        dcsv << "iteration,mean,std\n";
        for (const auto& p : dev)
            dcsv << p.iteration << ',' << fmt(p.mean) << ',' << fmt(p.std) << '\n';
        try {
            const auto d = state_distances(snapshots, ids);
            std::ofstream dist(dir / ("distances_" + sanitize(label) + ".csv"));
            dist << "pair,mean,std\n";
            dist << "AB," << fmt(d.ab.mean) << ',' << fmt(d.ab.std) << '\n';
            dist << "BC," << fmt(d.bc.mean) << ',' << fmt(d.bc.std) << '\n';
            dist << "AC," << fmt(d.ac.mean) << ',' << fmt(d.ac.std) << '\n';
            out << label << ": AB=" << fmt(d.ab.mean) << " BC=" << fmt(d.bc.mean) << " AC=" << fmt(d.ac.mean) << '\n';
        } catch (const Error& e) {
            err << label << ": no state distances (" << e.what() << ")\n";
        }
    }
    if (!proj.flush())
        throw Error("failed writing " + (dir / "projection.csv").string());
    return kExitOk;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const std::string& mode, bool flip, const std::string& output, std::ostream& out)
{
    VerifyOptions opt;
    opt.flip_nesterov_c = flip;
    const auto report = run_verify(mode, opt);
    for (const auto& c : report.checks)
        out << (c.passed ? "PASS " : "FAIL ") << c.suite << ": " << c.name << " (value " << fmt(c.value) << ", tol "
            << fmt(c.tolerance) << ")\n";
    out << report.checks.size() - report.failures().size() << '/' << report.checks.size() << " checks passed\n";
    if (!output.empty()) {
        std::filesystem::create_directories(output);
        std::ofstream(std::filesystem::path(output) / "verify.json") << report.to_json() << '\n';
    }
    return report.passed() ? kExitOk : kExitFailure;
}

} // namespace

ExperimentConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides)
{
    ExperimentConfig config = path.empty() ? ExperimentConfig{} : load_config(path);
    if (const char* env = std::getenv("GROKFORGE_SEED"); env && *env) {
        try {
            set_config_value(config, "run.seed", env);
        } catch (const ConfigError&) {
            throw ConfigError(std::string("GROKFORGE_SEED is not an unsigned integer: '") + env + "'");
        }
    }
    for (const auto& o : overrides)
        apply_override(config, o);
    return config;
}

GridAxis parse_grid_axis(const std::string& spec)
{
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 == spec.size())
        throw ConfigError("grid spec '" + spec + "' must look like key=v1,v2 or key=lo:hi:n");
    GridAxis axis;
    axis.key = spec.substr(0, eq);
    get_config_value(ExperimentConfig{}, axis.key); // unknown keys fail here
    const std::string rhs = spec.substr(eq + 1);
    const auto colons = std::count(rhs.begin(), rhs.end(), ':');
    if (colons != 0 && colons != 2)
        throw ConfigError("grid range '" + spec + "' must look like key=lo:hi:n");
    if (colons == 2) {
        const auto a = rhs.find(':'), b = rhs.rfind(':');
        double lo = 0, hi = 0;
        long n = 0;
        try {
            std::size_t used = 0;
            lo = std::stod(rhs.substr(0, a), &used);
            hi = std::stod(rhs.substr(a + 1, b - a - 1));
            n = std::stol(rhs.substr(b + 1));
        } catch (const std::exception&) {
            throw ConfigError("bad range in grid spec '" + spec + "'");
        }
        if (n < 1)
            throw ConfigError("grid range needs at least one point: '" + spec + "'");
        for (long i = 0; i < n; ++i)
            axis.values.push_back(fmt(n == 1 ? lo : lo + (hi - lo) * double(i) / double(n - 1)));
    } else {
        std::size_t start = 0;
        for (;;) {
            const auto comma = rhs.find(',', start);
            axis.values.push_back(rhs.substr(start, comma - start));
            if (comma == std::string::npos)
                break;
            start = comma + 1;
        }
    }
    for (const auto& v : axis.values)
        if (v.empty())
            throw ConfigError("empty value in grid spec '" + spec + "'");
    return axis;
}

std::vector<std::vector<std::string>> expand_grid(const std::vector<GridAxis>& axes)
{
    std::vector<std::vector<std::string>> points{{}};
    for (const auto& axis : axes) {
        std::vector<std::vector<std::string>> next;
        for (const auto& p : points)
            for (const auto& v : axis.values) {
                auto q = p;
                q.push_back(axis.key + "=" + v);
                next.push_back(std::move(q));
            }
        points = std::move(next);
    }
    return points;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err)
{
    CLI::App app{"grokforge: gradient-filter training lab"};
    app.require_subcommand(1);

    std::string config_path, output, baseline, fit;
    std::vector<std::string> sets, grid, runs;
    int jobs = 1;
    std::size_t points = kDefaultFrequencyPoints, horizon = 2000;
    std::string mode = "all";
    bool flip = false;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "Experiment config file");
        sub->add_option("--set", sets, "Override KEY=VALUE (repeatable)")->allow_extra_args(false);
        sub->add_option("--output", output, "Output directory");
    };
    auto* run = app.add_subcommand("run", "Train one configuration");
    add_common(run);
    run->add_option("--baseline", baseline, "summary.json of a baseline run, for the speedup");
    auto* sweep = app.add_subcommand("sweep", "Train every point of a hyperparameter grid");
    add_common(sweep);
    sweep->add_option("--grid", grid, "KEY=v1,v2,... or KEY=lo:hi:n (repeatable)")->allow_extra_args(false);
    sweep->add_option("--jobs", jobs, "Parallel runs")->check(CLI::PositiveNumber);
    auto* spectrum = app.add_subcommand("analyze-spectrum", "Transfer function of the configured filter");
    add_common(spectrum);
    spectrum->add_option("--points", points, "Frequencies on [0, pi]")->check(CLI::PositiveNumber);
    spectrum->add_option("--horizon", horizon, "Last EMA tap index");
    auto* trajectory = app.add_subcommand("analyze-trajectory", "PCA, state distances and deviation of runs");
    trajectory->add_option("runs", runs, "Run directories, optionally LABEL=DIR")->required();
    trajectory->add_option("--fit", fit, "Run label to fit the PCA on, or 'joint'");
    trajectory->add_option("--output", output, "Output directory")->required();
    auto* verify = app.add_subcommand("verify", "Run the self-check suites");
    verify->add_option("mode", mode, "all | filters | spectral | equivalence | optimizers | gradients");
    verify->add_option("--output", output, "Directory for verify.json");
    verify->add_flag("--inject-nesterov-sign-error", flip, "Mutation check: the equivalence suite must fail")
        ->group("");

    std::vector<const char*> argv;
    for (const auto& a : args)
        argv.push_back(a.c_str());
    try {
        app.parse(int(argv.size()), argv.data());
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kExitOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << '\n';
        return e.get_exit_code() == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (verify->parsed())
            return cmd_verify(mode, flip, output, out);
        if (trajectory->parsed())
            return cmd_trajectory(runs, fit, output, out, err);

        auto config = resolve_config(config_path, sets);
        if (!output.empty())
            config.run.output_dir = output;
        if (spectrum->parsed())
            return cmd_spectrum(config, points, horizon, output, out);
        config.validate();
        if (run->parsed())
            return cmd_run(config, baseline, out);
        if (sweep->parsed())
            return cmd_sweep(config, grid, jobs, out, err);
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace grokforge
