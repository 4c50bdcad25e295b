#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopsift/geometry.hpp"

namespace loopsift {

using NodeId = int;

enum class EdgeKind { Odometry, Covisibility, Loop };

/// Relative-pose constraint. The measurement is the transform from `from` to `to`,
/// i.e. the expected value of T_from^-1 * T_to. Information is ordered
/// [rotation; translation] like Twist.
struct Edge {
    NodeId from = 0;
    NodeId to = 0;
    Pose measurement;
    Matrix6 information = Matrix6::Identity();
    EdgeKind kind = EdgeKind::Odometry;
};

/// Node poses indexed by node id (ids are contiguous from 0).
struct Trajectory {
    std::vector<Pose> poses;

    std::size_t size() const { return poses.size(); }
    const Pose& operator[](std::size_t i) const { return poses[i]; }
    Pose& operator[](std::size_t i) { return poses[i]; }
};

/// Rigidly pre-multiplies every pose: G * T_i.
Trajectory transform_trajectory(const Pose& g, const Trajectory& t);

struct PoseGraph {
    Trajectory initial;
    std::vector<Edge> edges;
    NodeId fixed_node = 0;

    std::size_t node_count() const { return initial.size(); }

    /// Throws std::invalid_argument naming the violated invariant.
    void validate() const;
};

/// Loop edges get this information unless the source provides one.
Matrix6 default_loop_information();

/// Consecutive odometry edges with information = scale * I, node 0 fixed.
PoseGraph graph_from_odometry(const Trajectory& poses, double information_scale = 1.0);

/// r = log(Z^-1 * T_from^-1 * T_to)
Vector6 edge_residual(const Edge& e, const Pose& from, const Pose& to);

/// Sum of r^T * Omega * r over graph edges plus extra loops.
double total_cost(const PoseGraph& graph, std::span<const Edge> loops, const Trajectory& poses);

struct OptimizerOptions {
    int max_iterations = 100;
    double relative_decrease = 1e-9;
    double initial_lambda = 1e-4;
};

struct OptimizeResult {
    Trajectory trajectory;
    bool converged = false;
    int iterations = 0;
    double initial_cost = 0.0;
    double final_cost = 0.0;
    /// Cost after every accepted step, starting with the initial cost.
    std::vector<double> cost_history;
};

/// Levenberg-Marquardt over all non-fixed node poses with right-multiplicative
/// updates T <- T * exp(dx). Throws NumericError if the graph (plus loops) is not
/// connected to the fixed node; the message lists the disconnected components.
OptimizeResult optimize(const PoseGraph& graph, std::span<const Edge> loops,
                        const OptimizerOptions& options = {});

// g2o text format (VERTEX_SE3:QUAT / EDGE_SE3:QUAT / FIX). Information blocks are
// stored in g2o's [translation; rotation] order on disk and permuted on load.
// Consecutive-id edges load as odometry, all others as covisibility.
PoseGraph read_g2o(std::istream& in, const std::string& source_name = "<stream>");
PoseGraph read_g2o_file(const std::string& path);
void write_g2o(std::ostream& out, const PoseGraph& graph, std::span<const Edge> extra = {});
void write_g2o_file(const std::string& path, const PoseGraph& graph, std::span<const Edge> extra = {});

}  // namespace loopsift
