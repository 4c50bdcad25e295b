#pragma once

#include <algorithm>
#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopsift/posegraph.hpp"
#include "loopsift/surfel.hpp"

namespace loopsift {

struct RenderedDepth {
    int width = 0;
    int height = 0;
    std::vector<double> depth;  // 0 where no surfel covers the pixel

    double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
};

/// Z-buffered surfel splatting. Each front-facing surfel covers the pixels whose
/// rays hit its disk; the depth written is the ray/disk-plane intersection.
RenderedDepth render_depth(const SurfelMap& map, const Pose& pose, const Intrinsics& intrinsics);

struct FrameScore {
    int frame_index = 0;
    double value = 0.0;
    std::size_t pixels_evaluated = 0;
};

/// Map-vs-observation disagreement; lower is better.
struct ConsistencyScore {
    double value = 0.0;
    std::vector<FrameScore> frames;
    std::size_t pixels_evaluated = 0;
};

/// Axial depth noise model sigma(z) = 0.0012 + 0.0019 (z - 0.4)^2, meters.
inline double depth_sigma(double z) { return 0.0012 + 0.0019 * (z - 0.4) * (z - 0.4); }

/// Penalty truncation.
inline constexpr double kPenaltyCap = 16.0;

inline double pixel_penalty(double observed, double rendered) {
    if (rendered <= 0.0) return 0.0;
    const double e = (observed - rendered) / depth_sigma(observed);
    return std::min(e * e, kPenaltyCap);
}

/// Per frame: mean truncated penalty over pixels with valid observed depth
/// (uncovered pixels count with zero penalty). Total = sum over frames.
/// Per-frame work runs on `threads` workers; the reduction is ordered.
ConsistencyScore score_map(const SurfelMap& map, std::span<const DepthFrame> frames,
                           const Trajectory& trajectory, int threads = 1);

/// Pluggable r(M, Z). The default implementation is score_map.
class MapScorer {
public:
    virtual ~MapScorer() = default;
    virtual ConsistencyScore score(const SurfelMap& map, std::span<const DepthFrame> frames,
                                   const Trajectory& trajectory, int threads) const = 0;
};

class DepthConsistencyScorer final : public MapScorer {
public:
    ConsistencyScore score(const SurfelMap& map, std::span<const DepthFrame> frames,
                           const Trajectory& trajectory, int threads) const override {
        return score_map(map, frames, trajectory, threads);
    }
};

/// frame_index,score,pixels_evaluated
void write_score_csv(std::ostream& out, const ConsistencyScore& score);
void write_score_csv_file(const std::string& path, const ConsistencyScore& score);

}  // namespace loopsift
