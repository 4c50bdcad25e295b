#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "loopsift/posegraph.hpp"
#include "loopsift/sift.hpp"
#include "loopsift/surfel.hpp"
#include "loopsift/synth.hpp"

namespace loopsift {

/// Ground-truth label per loop id.
struct LoopLabels {
    std::map<int, bool> is_true;

    bool at(int id) const;  // throws std::invalid_argument for unlabeled ids
    int true_count() const;
};

struct LabelTolerance {
    double translation = 0.1;  // meters
    double rotation_deg = 5.0;
};

/// A frame loop is true iff its measurement is within tolerance of the
/// ground-truth relative pose. Fragment loops compare reference frames.
LoopLabels derive_labels(std::span<const LoopCandidate> candidates, const Trajectory& ground_truth,
                         std::span<const Fragment> fragments = {}, LabelTolerance tolerance = {});

struct PrecisionRecall {
    double precision = 100.0;  // percent
    double recall = 0.0;       // percent
};

/// Empty accepted set gives precision 100, recall 0. Recall is 0 when no loop is true.
PrecisionRecall precision_recall(std::span<const int> accepted, const LoopLabels& labels);

struct PrPoint {
    double recall = 0.0;
    double precision = 0.0;
    int loop_id = 0;
    bool accepted = false;
};

/// One point per ranking prefix; the n-th point covers the first n+1 loops.
std::vector<PrPoint> pr_curve(std::span<const int> ranking, const LoopLabels& labels,
                              std::span<const int> accepted = {});
void write_pr_curve_csv(std::ostream& out, std::span<const PrPoint> curve);

/// Rigid transform G minimizing sum |G * estimate_i - gt_i|^2 over positions.
Pose align_trajectory(const Trajectory& estimate, const Trajectory& ground_truth);

/// Translational RMSE; throws std::invalid_argument when sizes differ.
double trajectory_rmse(const Trajectory& estimate, const Trajectory& ground_truth, bool align);

/// Mean distance from surfel positions to the analytic scene; throws on an empty model.
double surface_mean_distance(const SurfelMap& model, const Scene& scene);
/// Same, against the nearest point of a sampled ground-truth surface.
double surface_mean_distance(const SurfelMap& model, std::span<const Vector3> points);

struct MetricsReport {
    std::string label;
    std::size_t loops_before = 0;
    std::size_t loops_after = 0;
    std::optional<PrecisionRecall> loops;
    std::optional<double> rmse;
    std::optional<double> smd;
    double consistency = 0.0;
};

/// Plain-text table; missing values print as "-".
void write_metrics_table(std::ostream& out, std::span<const MetricsReport> rows);
void write_metrics_csv(std::ostream& out, std::span<const MetricsReport> rows);

}  // namespace loopsift
