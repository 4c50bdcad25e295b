#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopsift/consistency.hpp"
#include "loopsift/posegraph.hpp"
#include "loopsift/surfel.hpp"

namespace loopsift {

enum class LoopKind { Frame, Fragment };

/// A candidate loop closure. For frame loops `a`/`b` are frame (node) ids; for
/// fragment loops they are fragment ids and the measurement relates the two
/// fragments' reference frames (anchor_a^-1 * anchor_b).
struct LoopCandidate {
    int id = 0;
    LoopKind kind = LoopKind::Frame;
    int a = 0;
    int b = 0;
    Pose measurement;
    Matrix6 information = default_loop_information();
};

/// Frame loops from the reference frame of each fragment to every frame of the
/// other fragment, both directions. Expanded loops keep the parent id.
/// Throws std::invalid_argument for unknown fragment ids.
std::vector<LoopCandidate> expand_fragment_loop(const LoopCandidate& loop, std::span<const Fragment> fragments);

/// Pose-graph edges for one candidate (a fragment loop yields its whole group).
std::vector<Edge> loop_edges(const LoopCandidate& loop, std::span<const Fragment> fragments);

/// Everything the sifter evaluates against: the tracking graph, the depth
/// frames (frame.index = node id) and the fragments fused from tracking poses.
struct SiftInputs {
    const PoseGraph& graph;
    std::span<const DepthFrame> frames;
    std::span<const Fragment> fragments;
};

struct SiftOptions {
    int threads = 1;
    OptimizerOptions optimizer;
    /// Scorer for r(M, Z); nullptr selects DepthConsistencyScorer.
    const MapScorer* scorer = nullptr;
};

/// Fixed relative numerical guard on strict improvement. Not a quality knob.
inline constexpr double kImprovementEpsilon = 1e-9;

struct Evaluation {
    Trajectory trajectory;
    ConsistencyScore score;
    bool converged = true;
};

/// optimize(G, loops) -> assemble_model -> score.
Evaluation evaluate_loops(const SiftInputs& inputs, std::span<const Edge> loops, const SiftOptions& options,
                          int scorer_threads);

struct RankedLoop {
    int id = 0;
    double score = 0.0;  // single-loop consistency score, lower is better
    bool failed = false;
    std::string reason;
};

struct TraceEntry {
    int loop_id = 0;
    int rank = 0;
    double single_loop_score = 0.0;
    double score_before = 0.0;
    double tentative_score = 0.0;
    bool accepted = false;
    std::string reason;
};

struct SiftResult {
    std::vector<int> accepted;        // in acceptance order
    std::vector<RankedLoop> ranking;  // best first
    double baseline_score = 0.0;
    double final_score = 0.0;
    std::vector<TraceEntry> trace;
    Trajectory baseline_trajectory;
    Trajectory final_trajectory;
    ConsistencyScore baseline_detail;
    ConsistencyScore final_detail;
};

/// Throws std::invalid_argument if ids repeat, endpoints are missing or equal,
/// or a frame loop spans no more than the fragment size.
void validate_candidates(const SiftInputs& inputs, std::span<const LoopCandidate> candidates);

/// Scores each candidate alone against the initial graph and sorts best first
/// (ties by ascending id). Failed candidates are kept, ranked last.
std::vector<RankedLoop> rank_loops(const SiftInputs& inputs, std::span<const LoopCandidate> candidates,
                                   const SiftOptions& options = {});

/// Walks the ranking, keeping a loop only if the tentative set strictly
/// improves the incumbent score.
SiftResult greedy_accept(const SiftInputs& inputs, std::span<const LoopCandidate> candidates,
                         std::span<const RankedLoop> ranked, const Evaluation& baseline,
                         const SiftOptions& options = {});

/// Baseline, ranking, then greedy acceptance.
SiftResult sift(const SiftInputs& inputs, std::span<const LoopCandidate> candidates, const SiftOptions& options = {});

/// rank,loop_id,single_loop_score,status
void write_ranking_csv(std::ostream& out, const SiftResult& result);
/// loop_id,rank,single_loop_score,tentative_score,accepted
void write_trace_csv(std::ostream& out, const SiftResult& result);
void write_sift_report(std::ostream& out, const SiftResult& result, std::size_t candidate_count);

}  // namespace loopsift
