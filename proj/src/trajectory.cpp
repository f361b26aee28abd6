#include "grokforge/trajectory.hpp"

#include "grokforge/checkpoint.hpp"
#include "grokforge/config.hpp"
#include "grokforge/errors.hpp"
#include "grokforge/kernels.hpp"
#include "grokforge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>

namespace grokforge {

void SnapshotMatrix::add(SnapshotMeta meta, std::vector<float> row)
{
    if (rows_.empty())
        cols_ = row.size();
    else if (row.size() != cols_)
        throw ShapeError("snapshot of run '" + meta.run + "' at iteration " + std::to_string(meta.iteration) +
                         " has " + std::to_string(row.size()) + " values, expected " + std::to_string(cols_));
    rows_.push_back(std::move(row));
    meta_.push_back(std::move(meta));
}

void SnapshotMatrix::mark(std::size_t i, char state)
{
    auto& m = meta_.at(i);
    if (!m.has_state(state)) {
        m.states += state;
        std::sort(m.states.begin(), m.states.end());
    }
}

std::vector<std::size_t> SnapshotMatrix::rows_of(const std::string& run) const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < meta_.size(); ++i)
        if (meta_[i].run == run)
            out.push_back(i);
    return out;
}

std::vector<std::string> SnapshotMatrix::runs() const
{
    std::vector<std::string> out;
    for (const auto& m : meta_)
        if (std::find(out.begin(), out.end(), m.run) == out.end())
            out.push_back(m.run);
    return out;
}

namespace {

template <typename R>
std::vector<double> project_row(const PcaProjection& pca, R row)
{
    if (row.size() != pca.mean.size())
        throw ShapeError("row of length " + std::to_string(row.size()) + " does not match the fitted PCA (" +
                         std::to_string(pca.mean.size()) + ")");
    std::vector<double> out(pca.components.size(), 0.0);
    for (std::size_t c = 0; c < pca.components.size(); ++c) {
        const auto& v = pca.components[c];
        double acc = 0.0;
        for (std::size_t j = 0; j < row.size(); ++j)
            acc += (double(row[j]) - pca.mean[j]) * v[j];
        out[c] = acc;
    }
    return out;
}

double norm(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v)
        s += x * x;
    return std::sqrt(s);
}

double distance(std::span<const float> a, std::span<const float> b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = double(a[i]) - double(b[i]);
        s += d * d;
    }
    return std::sqrt(s);
}

// Removes the projections onto earlier components and normalizes.
bool orthonormalize(std::vector<double>& v, const std::vector<std::vector<double>>& basis)
{
    for (const auto& u : basis) {
        double dot = 0.0;
        for (std::size_t j = 0; j < v.size(); ++j)
            dot += v[j] * u[j];
        for (std::size_t j = 0; j < v.size(); ++j)
            v[j] -= dot * u[j];
    }
    const double n = norm(v);
    if (!(n > 0.0))
        return false;
    for (double& x : v)
        x /= n;
    return true;
}

} // namespace

std::vector<double> PcaProjection::project(std::span<const float> row) const
{
    return project_row(*this, row);
}

std::vector<double> PcaProjection::project(std::span<const double> row) const
{
    return project_row(*this, row);
}

PcaProjection pca_fit(const SnapshotMatrix& snapshots, std::span<const std::size_t> fit_rows,
                      const PcaOptions& options)
{
    std::vector<std::size_t> idx(fit_rows.begin(), fit_rows.end());
    if (idx.empty()) {
        idx.resize(snapshots.rows());
        for (std::size_t i = 0; i < idx.size(); ++i)
            idx[i] = i;
    }
    const std::size_t n = idx.size();
    const std::size_t d = snapshots.cols();
    const std::size_t k = options.k;
    if (k == 0)
        throw Error("PCA needs at least one component");
    if (n < k + 1)
        throw Error("PCA with " + std::to_string(k) + " components needs at least " + std::to_string(k + 1) +
                    " snapshots, got " + std::to_string(n));
    if (k > d)
        throw Error("PCA asked for more components than parameters");

    std::vector<std::span<const float>> rows;
    for (auto i : idx)
        rows.push_back(snapshots.row(i));

    PcaProjection pca;
    pca.mean.assign(d, 0.0);
    for (const auto& r : rows)
        for (std::size_t j = 0; j < d; ++j)
            pca.mean[j] += r[j];
    for (double& m : pca.mean)
        m /= double(n);

    // Centered Gram: (x_i - m).(x_j - m) = G_ij - r_i - r_j + s.
    std::vector<double> g(n * n);
    kernels::parallel::gram<float>(rows, g);
    std::vector<double> r(n, 0.0);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            r[i] += g[i * n + j];
        r[i] /= double(n);
        s += r[i];
    }
    s /= double(n);
    std::vector<double> kc(n * n);
    double total = 0.0;
    double scale = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j)
            kc[i * n + j] = g[i * n + j] - r[i] - r[j] + s;
        total += kc[i * n + i];
        scale = std::max(scale, g[i * n + i]);
    }
    if (!(total > 1e-14 * std::max(scale, 1e-300)))
        throw Error("PCA input has zero variance (all snapshots identical)");

    std::mt19937_64 rng(0x5eed);
    std::normal_distribution<double> normal;
    std::vector<double> b(n), w(n);
    for (std::size_t c = 0; c < k; ++c) {
        for (auto& x : b)
            x = normal(rng);
        const double b0 = norm(b);
        for (auto& x : b)
            x /= b0;

        double lambda = 0.0;
        int it = 0;
        bool degenerate = false;
        for (; it < options.max_iterations; ++it) {
            for (std::size_t i = 0; i < n; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    acc += kc[i * n + j] * b[j];
                w[i] = acc;
            }
            double next = 0.0;
            for (std::size_t i = 0; i < n; ++i)
                next += b[i] * w[i];
            const double wn = norm(w);
            if (!(wn > 1e-13 * total)) {
                degenerate = true;
                lambda = 0.0;
                break;
            }
            double change = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                const double nb = w[i] / wn;
                change = std::max(change, std::abs(nb - b[i]));
                b[i] = nb;
            }
            const bool value_done = std::abs(next - lambda) < options.tolerance * std::abs(next);
            lambda = next;
            // The eigenvalue settles long before the vector; require both.
            if (it > 0 && value_done && change < 1e-12)
                break;
        }
        pca.iterations.push_back(it);

        std::vector<double> v(d, 0.0);
        if (!degenerate && lambda > 1e-12 * total) {
            double bsum = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
                bsum += b[i];
                const auto row = rows[i];
                const double bi = b[i];
                for (std::size_t j = 0; j < d; ++j)
                    v[j] += bi * row[j];
            }
            for (std::size_t j = 0; j < d; ++j)
                v[j] -= bsum * pca.mean[j];
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j)
                    kc[i * n + j] -= lambda * b[i] * b[j];
        } else {
            lambda = 0.0;
        }
        if (!orthonormalize(v, pca.components)) {
            // No variance left: any direction orthogonal to the previous ones.
            for (std::size_t j = 0; j < d; ++j) {
                std::fill(v.begin(), v.end(), 0.0);
                v[j] = 1.0;
                if (orthonormalize(v, pca.components) && norm(v) > 0.5)
                    break;
            }
        }
        std::size_t big = 0;
        for (std::size_t j = 1; j < d; ++j)
            if (std::abs(v[j]) > std::abs(v[big]))
                big = j;
        if (v[big] < 0)
            for (double& x : v)
                x = -x;
        pca.components.push_back(std::move(v));
        pca.eigenvalues.push_back(lambda);
        pca.explained_variance.push_back(std::clamp(lambda / total, 0.0, 1.0));
    }
    return pca;
}

std::vector<std::vector<double>> pca_coordinates(const PcaProjection& pca, const SnapshotMatrix& snapshots)
{
    std::vector<std::vector<double>> out(snapshots.rows());
#pragma omp parallel for schedule(dynamic)
    for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(out.size()); ++i)
        out[i] = pca.project(snapshots.row(std::size_t(i)));
    return out;
}

double mean_of(std::span<const double> v)
{
    if (v.empty())
        return 0.0;
    double s = 0.0;
    for (double x : v)
        s += x;
    return s / double(v.size());
}

double sample_std(std::span<const double> v)
{
    if (v.size() < 2)
        return 0.0;
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v)
        s += (x - m) * (x - m);
    return std::sqrt(s / double(v.size() - 1));
}

namespace {

DistanceStats stats_of(std::vector<double> values)
{
    DistanceStats s;
    s.mean = mean_of(values);
    s.std = sample_std(values);
    s.per_run = std::move(values);
    return s;
}

} // namespace

StateDistances state_distances(const SnapshotMatrix& snapshots, const std::vector<std::string>& runs)
{
    if (runs.empty())
        throw Error("state distances need at least one run");
    std::vector<double> ab, bc, ac;
    for (const auto& run : runs) {
        std::size_t at[3];
        const char names[3] = {'A', 'B', 'C'};
        for (int s = 0; s < 3; ++s) {
            const auto rows = snapshots.rows_of(run);
            const auto it = std::find_if(rows.begin(), rows.end(),
                                         [&](std::size_t i) { return snapshots.meta(i).has_state(names[s]); });
            if (it == rows.end())
                throw Error("run '" + run + "' has no snapshot marked as state " + std::string(1, names[s]));
            at[s] = *it;
        }
        ab.push_back(distance(snapshots.row(at[0]), snapshots.row(at[1])));
        bc.push_back(distance(snapshots.row(at[1]), snapshots.row(at[2])));
        ac.push_back(distance(snapshots.row(at[0]), snapshots.row(at[2])));
    }
    return {stats_of(std::move(ab)), stats_of(std::move(bc)), stats_of(std::move(ac))};
}

std::vector<DeviationPoint> deviation_curve(const SnapshotMatrix& snapshots, const std::vector<std::string>& runs)
{
    std::map<std::int64_t, std::vector<double>> by_iter;
    for (const auto& run : runs)
        for (auto i : snapshots.rows_of(run)) {
            const auto row = snapshots.row(i);
            double s = 0.0;
            for (float x : row)
                s += double(x) * double(x);
            by_iter[snapshots.meta(i).iteration].push_back(std::sqrt(s));
        }
    std::vector<DeviationPoint> out;
    for (const auto& [t, values] : by_iter)
        out.push_back({t, mean_of(values), sample_std(values), values.size()});
    return out;
}

void load_run_snapshots(SnapshotMatrix& snapshots, const std::filesystem::path& dir, const std::string& run)
{
    const auto config = load_config(dir / kConfigFile);
    const auto summary = read_summary(dir / kSummaryFile);

    std::vector<std::pair<std::int64_t, std::filesystem::path>> files;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        const auto name = entry.path().filename().string();
        if (name.size() == 17 && name.starts_with("snap_") && name.ends_with(".bin"))
            files.emplace_back(std::stoll(name.substr(5, 8)), entry.path());
    }
    if (files.empty())
        throw Error("no snapshots in " + dir.string());
    std::sort(files.begin(), files.end());
    if (files.front().first != 0)
        throw Error("run " + dir.string() + " has no snapshot at iteration 0");

    std::vector<float> init;
    const std::size_t first = snapshots.rows();
    for (const auto& [t, path] : files) {
        auto ck = read_checkpoint(path);
        if (!config.run.snapshot_delta) {
            if (t == 0)
                init = ck.values;
            for (std::size_t j = 0; j < ck.values.size(); ++j)
                ck.values[j] -= init[j];
        }
        snapshots.add({run, t, ""}, std::move(ck.values));
    }

    auto first_at_or_after = [&](std::int64_t t) -> std::optional<std::size_t> {
        for (std::size_t i = first; i < snapshots.rows(); ++i)
            if (snapshots.meta(i).iteration >= t)
                return i;
        return std::nullopt;
    };
    snapshots.mark(first, 'A');
    if (summary.iterations_to_train_threshold)
        if (auto i = first_at_or_after(*summary.iterations_to_train_threshold))
            snapshots.mark(*i, 'B');
    std::optional<std::size_t> c;
    if (summary.iterations_to_val_threshold)
        c = first_at_or_after(*summary.iterations_to_val_threshold);
    snapshots.mark(c.value_or(snapshots.rows() - 1), 'C');
}

} // namespace grokforge
