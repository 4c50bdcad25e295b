#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "loopsift/geometry.hpp"
#include "loopsift/posegraph.hpp"

namespace loopsift {

/// Pinhole intrinsics plus image size. Pixel (u, v) has its center at integer
/// coordinates, so the back-projected ray is ((u - cx) / fx, (v - cy) / fy, 1).
struct Intrinsics {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;

    void validate() const;
    Vector3 ray(double u, double v) const { return {(u - cx) / fx, (v - cy) / fy, 1.0}; }
};

using Rgb = std::array<std::uint8_t, 3>;

struct DepthFrame {
    Intrinsics intrinsics;
    std::vector<float> depth;  // row-major meters, 0 = invalid
    int index = 0;
    std::vector<Rgb> color;    // optional, empty or width * height

    int width() const { return intrinsics.width; }
    int height() const { return intrinsics.height; }
    float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width() + u]; }

    /// Throws std::invalid_argument on dimension mismatch or invalid depth values.
    void validate() const;
};

struct Surfel {
    Vector3 position = Vector3::Zero();
    Vector3 normal = Vector3::UnitZ();
    Rgb color{0, 0, 0};
    double weight = 1.0;
    double radius = 0.001;
    int t0 = 0;  // frame index at creation
    int t = 0;   // frame index of last update
};

struct SurfelMap {
    std::vector<Surfel> surfels;

    std::size_t size() const { return surfels.size(); }
    double total_weight() const;
};

/// Rigidly transforms every surfel (position and normal).
SurfelMap transform_map(const Pose& g, const SurfelMap& map);

struct FusionOptions {
    int stride = 2;                   // pixel subsampling, a fidelity knob
    double depth_tolerance = 0.02;    // association: |dz| < max(tol, tol_rel * z)
    double depth_tolerance_rel = 0.02;
    double min_radius = 0.001;
    double max_radius = 0.10;
};

/// Fuses one depth frame observed from `pose` (camera-to-map) into `map`.
void fuse_frame(SurfelMap& map, const DepthFrame& frame, const Pose& pose,
                const FusionOptions& options = {});

/// k consecutive frames fused in the coordinates of their reference frame.
struct Fragment {
    int id = 0;
    int first = 0;
    int last = 0;
    int reference = 0;
    Pose anchor;                    // reference-frame pose at fusion time
    std::vector<Pose> local_poses;  // anchor^-1 * T_i for i in [first, last]
    std::vector<Surfel> surfels;    // anchor-local coordinates

    int frame_count() const { return last - first + 1; }
    bool contains(int frame) const { return frame >= first && frame <= last; }
    const Pose& local_pose(int frame) const { return local_poses[frame - first]; }
};

/// Middle frame of [first, last].
inline int fragment_reference(int first, int last) { return first + (last - first) / 2; }

std::vector<Fragment> build_fragments(std::span<const DepthFrame> frames, const Trajectory& poses,
                                      int k, const FusionOptions& options = {}, int threads = 1);

/// Places every fragment at its reference-frame pose from `trajectory`. No
/// re-fusion across fragments.
SurfelMap assemble_model(std::span<const Fragment> fragments, const Trajectory& trajectory);

/// ASCII PLY with x y z nx ny nz red green blue.
void write_ply(std::ostream& out, const SurfelMap& map);
void write_ply_file(const std::string& path, const SurfelMap& map);
/// Reads positions, normals and colors back; other surfel attributes get defaults.
SurfelMap read_ply_file(const std::string& path);

}  // namespace loopsift
