#pragma once

// Weight-trajectory analysis over parameter snapshots: PCA projections,
// distances between the initialized (A), overfitted (B) and generalized (C)
// states, and the deviation-from-initialization curve.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace grokforge {

struct SnapshotMeta {
    std::string run;
    std::int64_t iteration = 0;
    // Any of "A", "B", "C" (a row may carry several), empty if unmarked.
    std::string states;

    bool has_state(char s) const { return states.find(s) != std::string::npos; }
};

// Rows are flattened parameter vectors minus the run's initialization.
class SnapshotMatrix {
public:
    void add(SnapshotMeta meta, std::vector<float> row);

    std::size_t rows() const { return rows_.size(); }
    std::size_t cols() const { return cols_; }
    std::span<const float> row(std::size_t i) const { return rows_.at(i); }
    const SnapshotMeta& meta(std::size_t i) const { return meta_.at(i); }
    void mark(std::size_t i, char state);

    // Row indices of one run, in insertion order.
    std::vector<std::size_t> rows_of(const std::string& run) const;
    std::vector<std::string> runs() const;

private:
    std::size_t cols_ = 0;
    std::vector<std::vector<float>> rows_;
    std::vector<SnapshotMeta> meta_;
};

struct PcaOptions {
    std::size_t k = 2;
    double tolerance = 1e-10; // relative change of the eigenvalue estimate
    int max_iterations = 10000;
};

struct PcaProjection {
    std::vector<double> mean;                    // of the fitted rows
    std::vector<std::vector<double>> components; // k unit vectors
    std::vector<double> eigenvalues;             // of the centered Gram matrix
    std::vector<double> explained_variance;      // fractions of the total
    std::vector<int> iterations;                 // power iterations per component

    std::vector<double> project(std::span<const float> row) const;
    std::vector<double> project(std::span<const double> row) const;
};

// Top-k principal directions of the selected rows (all rows when empty),
// through power iteration with deflation on the n x n centered Gram matrix.
// Each component's largest-magnitude entry is positive.
PcaProjection pca_fit(const SnapshotMatrix& snapshots, std::span<const std::size_t> fit_rows = {},
                      const PcaOptions& options = {});

// Coordinates of every row of the matrix (rows x k).
std::vector<std::vector<double>> pca_coordinates(const PcaProjection& pca, const SnapshotMatrix& snapshots);

struct DistanceStats {
    double mean = 0.0;
    double std = 0.0; // sample deviation over runs, 0 for one run
    std::vector<double> per_run;
};

struct StateDistances {
    DistanceStats ab;
    DistanceStats bc;
    DistanceStats ac;
};

// L2 distances between the A, B and C rows of each listed run, in full
// parameter space. Throws if a run lacks a marker.
StateDistances state_distances(const SnapshotMatrix& snapshots, const std::vector<std::string>& runs);

struct DeviationPoint {
    std::int64_t iteration = 0;
    double mean = 0.0;
    double std = 0.0;
    std::size_t runs = 0;
};

// Per-iteration |theta(t) - theta(0)| across the listed runs; iterations
// missing from a run are averaged over the runs that have them.
std::vector<DeviationPoint> deviation_curve(const SnapshotMatrix& snapshots, const std::vector<std::string>& runs);

double mean_of(std::span<const double> v);
double sample_std(std::span<const double> v);

// ----------------------------------------------------------- run loading

// Adds every snap_*.bin of a run directory (as written by the trainer) under
// the given run id and marks A (iteration 0), B (first training-threshold
// crossing) and C (first validation-threshold crossing, else the last
// snapshot) from the run's summary.
void load_run_snapshots(SnapshotMatrix& snapshots, const std::filesystem::path& dir, const std::string& run);

} // namespace grokforge
